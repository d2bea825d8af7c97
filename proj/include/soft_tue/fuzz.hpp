#pragma once

// Mutation planning, fuzz campaigns over the full attach stack, the DoS
// flood scenario and per-bit vulnerability analysis.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "soft_tue/events.hpp"
#include "soft_tue/mutation.hpp"
#include "soft_tue/prng.hpp"
#include "soft_tue/protocol.hpp"
#include "soft_tue/ran_sim.hpp"
#include "soft_tue/tester_ue.hpp"

namespace soft_tue {

// ---------------------------------------------------------------------------
// Plans

inline std::vector<Mutation> plan_exhaustive() {
  std::vector<Mutation> plan;
  plan.reserve(kSetupCompleteBits);
  for (std::size_t b = 0; b < kSetupCompleteBits; ++b) plan.emplace_back(std::vector<std::size_t>{b});
  return plan;
}

// `trials` mutations of exactly k distinct bits each, drawn by a partial
// Fisher-Yates shuffle of [0, 208) driven by SplitMix64(seed).
inline std::vector<Mutation> plan_random(std::uint64_t seed, std::size_t trials, std::size_t k) {
  if (k > kSetupCompleteBits)
    throw Error(Errc::InvalidK, "bits_per_trial " + std::to_string(k) + " exceeds 208");
  SplitMix64 rng(seed);
  std::vector<Mutation> plan;
  plan.reserve(trials);
  std::array<std::size_t, kSetupCompleteBits> pool{};
  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(kSetupCompleteBits - i));
      std::swap(pool[i], pool[j]);
    }
    plan.emplace_back(std::vector<std::size_t>(pool.begin(), pool.begin() + k));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Campaign configuration

enum class CampaignMode { Exhaustive, Random };
enum class Scenario { FuzzRrc, DosFlood };

inline std::string_view to_string(CampaignMode m) { return m == CampaignMode::Exhaustive ? "Exhaustive" : "Random"; }
inline std::string_view to_string(Scenario s) { return s == Scenario::FuzzRrc ? "fuzz-rrc" : "dos-flood"; }

inline Scenario scenario_from_string(std::string_view s) {
  if (s == "fuzz-rrc") return Scenario::FuzzRrc;
  if (s == "dos-flood") return Scenario::DosFlood;
  throw Error(Errc::InvalidConfig, "unknown scenario " + std::string(s));
}

inline CampaignMode campaign_mode_from_string(std::string_view s) {
  if (s == "Exhaustive") return CampaignMode::Exhaustive;
  if (s == "Random") return CampaignMode::Random;
  throw Error(Errc::InvalidConfig, "unknown campaign mode " + std::string(s));
}

struct CampaignConfig {
  CampaignMode mode = CampaignMode::Random;
  std::size_t trials = 100;
  std::size_t bits_per_trial = 1;
  std::uint64_t seed = 0;
  bool cipher_enabled = false;
  Scenario scenario = Scenario::FuzzRrc;

  static CampaignConfig exhaustive(std::uint64_t seed = 0) {
    return {CampaignMode::Exhaustive, kSetupCompleteBits, 1, seed, false, Scenario::FuzzRrc};
  }

  void validate() const {
    if (mode == CampaignMode::Exhaustive && (trials != kSetupCompleteBits || bits_per_trial != 1))
      throw Error(Errc::InvalidConfig, "exhaustive mode requires trials == 208 and bits_per_trial == 1");
    if (bits_per_trial > kSetupCompleteBits)
      throw Error(Errc::InvalidK, "bits_per_trial " + std::to_string(bits_per_trial) + " exceeds 208");
  }

  std::vector<Mutation> plan() const {
    validate();
    return mode == CampaignMode::Exhaustive ? plan_exhaustive() : plan_random(seed, trials, bits_per_trial);
  }

  friend bool operator==(const CampaignConfig&, const CampaignConfig&) = default;
};

inline Json to_json(const CampaignConfig& c) {
  Json j;
  j["mode"] = std::string(to_string(c.mode));
  j["trials"] = c.trials;
  j["bits_per_trial"] = c.bits_per_trial;
  j["seed"] = c.seed;
  j["cipher_enabled"] = c.cipher_enabled;
  j["scenario"] = std::string(to_string(c.scenario));
  return j;
}

inline CampaignConfig campaign_config_from_json(const Json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "campaign must be an object");
  CampaignConfig c;
  if (j.contains("mode")) c.mode = campaign_mode_from_string(j["mode"].get<std::string>());
  if (c.mode == CampaignMode::Exhaustive) c = CampaignConfig::exhaustive();
  if (j.contains("trials")) c.trials = json_uint<std::size_t>(j["trials"], 10'000'000);
  if (j.contains("bits_per_trial")) c.bits_per_trial = json_uint<std::size_t>(j["bits_per_trial"], 1u << 20);
  if (j.contains("seed")) c.seed = json_u64(j["seed"]);
  if (j.contains("cipher_enabled")) c.cipher_enabled = j["cipher_enabled"].get<bool>();
  if (j.contains("scenario")) c.scenario = scenario_from_string(j["scenario"].get<std::string>());
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Vulnerability map

struct VulnerabilityMap {
  std::array<std::optional<int>, kSetupCompleteBits> scores{};
  std::array<std::size_t, kSetupCompleteBits> flipped{};
  std::array<std::size_t, kSetupCompleteBits> success{};

  std::size_t count_score(int s) const {
    return static_cast<std::size_t>(std::count(scores.begin(), scores.end(), std::optional<int>(s)));
  }

  friend bool operator==(const VulnerabilityMap&, const VulnerabilityMap&) = default;
};

// round(100 * success / flipped), half away from zero, in integers.
constexpr int survival_score(std::size_t success, std::size_t flipped) noexcept {
  return static_cast<int>((200 * success + flipped) / (2 * flipped));
}

struct TrialRecord {
  Mutation mutation;
  AttachOutcome outcome;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

inline VulnerabilityMap vulnerability_map(const std::vector<TrialRecord>& outcomes) {
  VulnerabilityMap map;
  for (const auto& t : outcomes) {
    const bool survived = t.outcome.terminal == UeState::SessionActive;
    for (auto b : t.mutation.bits()) {
      ++map.flipped[b];
      if (survived) ++map.success[b];
    }
  }
  for (std::size_t b = 0; b < kSetupCompleteBits; ++b)
    if (map.flipped[b] > 0) map.scores[b] = survival_score(map.success[b], map.flipped[b]);
  return map;
}

inline Json per_bit_json(const VulnerabilityMap& map) {
  Json arr = Json::array();
  for (std::size_t b = 0; b < kSetupCompleteBits; ++b) {
    Json e;
    e["bit"] = b;
    e["flipped"] = map.flipped[b];
    e["success"] = map.success[b];
    e["score"] = map.scores[b] ? Json(*map.scores[b]) : Json(nullptr);
    arr.push_back(std::move(e));
  }
  return arr;
}

inline VulnerabilityMap vulnerability_map_from_json(const Json& per_bit) {
  if (!per_bit.is_array() || per_bit.size() != kSetupCompleteBits)
    throw Error(Errc::ParseError, "per_bit must be an array of 208 entries");
  VulnerabilityMap map;
  for (const auto& e : per_bit) {
    const auto b = json_uint<std::size_t>(e.at("bit"), kSetupCompleteBits - 1);
    map.flipped[b] = json_u64(e.at("flipped"));
    map.success[b] = json_u64(e.at("success"));
    if (!e.at("score").is_null()) map.scores[b] = json_uint<int>(e["score"], 100);
  }
  return map;
}

// Brute-force reference: flip each bit of the frame the UE would send and
// ask the rule table directly, no UE, no gNB, no AMF.
inline VulnerabilityMap oracle_map(const RanConfig& ran, const UeConfig& ue = {}) {
  ran.validate();
  const Frame reference = encode_setup_complete(ue_setup_complete_fields(ue, ran.expected_tid));
  VulnerabilityMap map;
  for (std::size_t b = 0; b < kSetupCompleteBits; ++b) {
    Frame f = reference;
    f.flip(b);
    const bool accepted = validate_setup_complete(f, ran).accepted;
    map.flipped[b] = 1;
    map.success[b] = accepted ? 1 : 0;
    map.scores[b] = accepted ? 100 : 0;
  }
  return map;
}

// ---------------------------------------------------------------------------
// Campaign execution

// Optional hooks into a running campaign. Any may be empty.
struct CampaignObserver {
  EventSink on_event;
  CaptureSink on_capture;
  std::function<void(std::size_t index, std::size_t total, const TrialRecord&)> on_trial;
  bool white_box = true;
};

struct CampaignResult {
  CampaignConfig config;
  std::vector<TrialRecord> outcomes;
  VulnerabilityMap map;
  Tick started_tick = 0;
  Tick finished_tick = 0;
};

// The persistent instrumentation agents of one campaign.
struct CampaignAgents {
  Agent harness{"harness", Component::HARNESS};
  Agent ue{"tue", Component::UE};
  Agent gnb{"gnb", Component::GNB};
  Agent amf{"amf", Component::AMF};

  explicit CampaignAgents(const CampaignObserver* obs) {
    if (!obs || !obs->on_event) return;
    harness.connect(obs->on_event);
    ue.connect(obs->on_event);
    if (obs->white_box) {
      gnb.connect(obs->on_event);
      amf.connect(obs->on_event);
    }
  }
};

namespace detail {

inline RanSimOptions trial_ran_options(const UeConfig& ue, bool cipher, std::uint64_t seed, std::size_t index,
                                       CampaignAgents* agents) {
  RanSimOptions o;
  o.subscriber_key = ue.ue_key;
  o.cipher_enabled = cipher;
  o.seed = seed ^ mix64(index);
  if (agents) {
    o.gnb_agent = &agents->gnb;
    o.amf_agent = &agents->amf;
  }
  return o;
}

// One trial against a freshly booted RAN.
inline AttachOutcome run_trial(const RanConfig& ran, const UeConfig& ue, const CampaignConfig& config,
                               std::size_t index, const Mutation& m, CampaignAgents* agents,
                               const CaptureSink& capture, Tick start) {
  UeConfig tue = ue;
  tue.cipher_enabled = config.cipher_enabled;  // the campaign switch wins
  RanSim sim(ran, trial_ran_options(tue, config.cipher_enabled, config.seed, index, agents));
  LoopbackPort port(sim, tue.ue_id, capture, !config.cipher_enabled);
  return attach(port, tue, FuzzHook::rrc_setup_complete(m), agents ? &agents->ue : nullptr, start);
}

inline Details marker(std::string_view phase, Scenario s, std::size_t trials) {
  return {{"phase", std::string(phase)}, {"scenario", std::string(to_string(s))}, {"trials", std::to_string(trials)}};
}

}  // namespace detail

// Runs every planned mutation against a fresh RAN and tester UE. With an
// observer, trials run serially on a shared logical clock and stream
// telemetry; without one they may be spread over `workers` threads.
// Results are always assembled in plan order.
inline CampaignResult run_campaign(const CampaignConfig& config, const RanConfig& ran, const UeConfig& ue,
                                   const CampaignObserver* observer = nullptr, unsigned workers = 1) {
  config.validate();
  ran.validate();
  ue.validate();
  if (config.scenario != Scenario::FuzzRrc)
    throw Error(Errc::InvalidConfig, "run_campaign handles the fuzz-rrc scenario only");

  const auto plan = config.plan();
  CampaignResult result;
  result.config = config;
  result.outcomes.resize(plan.size());

  if (observer == nullptr && workers > 1 && plan.size() > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(workers, plan.size()); ++w)
      pool.emplace_back([&] {
        for (auto i = next++; i < plan.size(); i = next++)
          result.outcomes[i] = {plan[i], detail::run_trial(ran, ue, config, i, plan[i], nullptr, {}, 0)};
      });
    for (auto& t : pool) t.join();
  } else {
    CampaignAgents agents(observer);
    const CaptureSink capture = observer ? observer->on_capture : CaptureSink{};
    Tick clock = 0;
    agents.harness.emit(EventKind::AttackMarker, clock, detail::marker("start", config.scenario, plan.size()));
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const auto outcome = detail::run_trial(ran, ue, config, i, plan[i], &agents, capture, clock);
      clock += outcome.ticks_elapsed + 1;
      result.outcomes[i] = {plan[i], outcome};
      if (observer && observer->on_trial) observer->on_trial(i, plan.size(), result.outcomes[i]);
    }
    agents.harness.emit(EventKind::AttackMarker, clock, detail::marker("end", config.scenario, plan.size()));
    result.finished_tick = clock;
  }
  result.map = vulnerability_map(result.outcomes);
  return result;
}

struct EffectPoint {
  std::size_t k = 0;
  std::size_t trials = 0;
  double success_rate = 0;

  friend bool operator==(const EffectPoint&, const EffectPoint&) = default;
};

// Fraction of attaches that still reach SessionActive with k random bits
// flipped, for each k.
inline std::vector<EffectPoint> effect_curve(std::uint64_t seed, std::size_t trials_per_k,
                                             const std::vector<std::size_t>& ks, const RanConfig& ran = {},
                                             const UeConfig& ue = {}, unsigned workers = 1) {
  std::vector<EffectPoint> curve;
  for (auto k : ks) {
    if (k > kSetupCompleteBits) throw Error(Errc::InvalidK, "k " + std::to_string(k) + " exceeds 208");
    CampaignConfig c{CampaignMode::Random, trials_per_k, k, seed, false, Scenario::FuzzRrc};
    const auto r = run_campaign(c, ran, ue, nullptr, workers);
    const auto ok = std::count_if(r.outcomes.begin(), r.outcomes.end(),
                                  [](const TrialRecord& t) { return t.outcome.terminal == UeState::SessionActive; });
    curve.push_back({k, trials_per_k, trials_per_k ? static_cast<double>(ok) / trials_per_k : 0.0});
  }
  return curve;
}

inline Json to_json(const EffectPoint& p) {
  Json j;
  j["k"] = p.k;
  j["trials"] = p.trials;
  j["success_rate"] = p.success_rate;
  return j;
}

// ---------------------------------------------------------------------------
// DoS flood

enum class Interleave { FloodFirst, Mixed };

inline std::string_view to_string(Interleave i) { return i == Interleave::FloodFirst ? "FloodFirst" : "Mixed"; }

inline Interleave interleave_from_string(std::string_view s) {
  if (s == "FloodFirst" || s == "flood-first") return Interleave::FloodFirst;
  if (s == "Mixed" || s == "mixed") return Interleave::Mixed;
  throw Error(Errc::InvalidConfig, "unknown interleave " + std::string(s));
}

struct DosConfig {
  std::size_t flood_count = 0;
  std::size_t legit_attempts = 10;
  Interleave interleave = Interleave::FloodFirst;
  std::uint64_t seed = 0;  // orders a Mixed run

  void validate() const {
    if (legit_attempts < 1) throw Error(Errc::InvalidConfig, "legit_attempts must be >= 1");
  }

  friend bool operator==(const DosConfig&, const DosConfig&) = default;
};

inline Json to_json(const DosConfig& c) {
  Json j;
  j["flood"] = c.flood_count;
  j["legit"] = c.legit_attempts;
  j["interleave"] = std::string(to_string(c.interleave));
  j["seed"] = c.seed;
  return j;
}

inline DosConfig dos_config_from_json(const Json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "dos must be an object");
  DosConfig c;
  if (j.contains("flood")) c.flood_count = json_uint<std::size_t>(j["flood"], 10'000'000);
  if (j.contains("legit")) c.legit_attempts = json_uint<std::size_t>(j["legit"], 10'000'000);
  if (j.contains("interleave")) c.interleave = interleave_from_string(j["interleave"].get<std::string>());
  if (j.contains("seed")) c.seed = json_u64(j["seed"]);
  c.validate();
  return c;
}

struct DosResult {
  double legit_success_rate = 0;
  std::size_t rejected_flood_count = 0;
  std::vector<AttachOutcome> legit_outcomes;
  Tick finished_tick = 0;
};

inline constexpr LinkId kFloodLinkBase = 0x80000000u;

// Flood requests are RRC Setup Requests that never complete, one per tick.
// Legitimate UEs attach in full and are released once their session is up.
inline DosResult dos_flood(const DosConfig& cfg, const RanConfig& ran, const UeConfig& ue = {},
                           const CampaignObserver* observer = nullptr) {
  cfg.validate();
  ran.validate();
  ue.validate();
  CampaignAgents agents(observer);
  const CaptureSink capture = observer ? observer->on_capture : CaptureSink{};
  RanSimOptions opts;
  opts.subscriber_key = ue.ue_key;
  opts.cipher_enabled = ue.cipher_enabled;
  opts.seed = cfg.seed;
  opts.gnb_agent = &agents.gnb;
  opts.amf_agent = &agents.amf;
  RanSim sim(ran, opts);

  // true = flood request, false = legitimate attach
  std::vector<bool> order(cfg.flood_count, true);
  order.insert(order.end(), cfg.legit_attempts, false);
  if (cfg.interleave == Interleave::Mixed) {
    SplitMix64 rng(cfg.seed);
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.below(i));
      const bool tmp = order[i - 1];
      order[i - 1] = order[j];
      order[j] = tmp;
    }
  }

  DosResult result;
  Tick clock = 0;
  agents.harness.emit(EventKind::AttackMarker, clock, detail::marker("start", Scenario::DosFlood, order.size()));
  std::size_t flood_i = 0;
  std::size_t legit_i = 0;
  std::size_t successes = 0;
  for (bool flood : order) {
    if (flood) {
      const LinkId link = kFloodLinkBase + static_cast<LinkId>(flood_i++);
      sim.tick_expire(clock);
      const auto r = sim.gnb_handle(link, RrcSetupRequest{link, 0x03}, clock);
      if (!r.downlink.empty() && std::holds_alternative<RrcReject>(r.downlink.front())) ++result.rejected_flood_count;
      if (capture) {
        capture({clock, Direction::UL, encode(UplinkMessage{RrcSetupRequest{link, 0x03}}).hex(),
                 to_json(UplinkMessage{RrcSetupRequest{link, 0x03}}), std::nullopt});
        for (const auto& dl : r.downlink) capture({clock + 2, Direction::DL, encode(dl).hex(), to_json(dl), std::nullopt});
      }
      clock += 1;
    } else {
      UeConfig legit = ue;
      legit.ue_id = ue.ue_id + static_cast<std::uint32_t>(legit_i++);
      LoopbackPort port(sim, legit.ue_id, capture, !ue.cipher_enabled);
      const auto outcome = attach(port, legit, FuzzHook::none(), &agents.ue, clock);
      clock += outcome.ticks_elapsed + 1;
      if (outcome.terminal == UeState::SessionActive) {
        ++successes;
        sim.release(legit.ue_id, clock);
      }
      result.legit_outcomes.push_back(outcome);
      if (observer && observer->on_trial)
        observer->on_trial(legit_i - 1, cfg.legit_attempts, TrialRecord{Mutation{}, outcome});
    }
  }
  agents.harness.emit(EventKind::AttackMarker, clock, detail::marker("end", Scenario::DosFlood, order.size()));
  result.legit_success_rate = static_cast<double>(successes) / static_cast<double>(cfg.legit_attempts);
  result.finished_tick = clock;
  return result;
}

}  // namespace soft_tue
