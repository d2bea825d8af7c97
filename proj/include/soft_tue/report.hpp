#pragma once

// Run manifests, report.json assembly and the flat-file renderings
// (per_bit.csv, effect_curve.csv, oracle.json). The CLI and the HTTP
// service both go through run_manifest(), so one manifest gives one
// report.json whichever way it was launched.

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "soft_tue/error.hpp"
#include "soft_tue/fuzz.hpp"
#include "soft_tue/json_util.hpp"
#include "soft_tue/telemetry.hpp"

namespace soft_tue {

// Optional success-rate-vs-k sweep appended to a report.
struct SweepConfig {
  std::vector<std::size_t> ks;
  std::size_t trials_per_k = 100;

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

inline Json to_json(const SweepConfig& s) {
  Json j;
  j["ks"] = s.ks;
  j["trials_per_k"] = s.trials_per_k;
  return j;
}

inline SweepConfig sweep_config_from_json(const Json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "sweep must be an object");
  SweepConfig s;
  if (j.contains("ks")) {
    if (!j["ks"].is_array()) throw Error(Errc::InvalidConfig, "sweep.ks must be an array");
    for (const auto& k : j["ks"]) s.ks.push_back(json_uint<std::size_t>(k, kSetupCompleteBits));
  }
  if (j.contains("trials_per_k")) s.trials_per_k = json_uint<std::size_t>(j["trials_per_k"], 10'000'000);
  if (s.ks.empty()) throw Error(Errc::InvalidConfig, "sweep.ks must not be empty");
  return s;
}

struct RunManifest {
  CampaignConfig campaign;
  RanConfig ran;
  UeConfig ue;
  std::optional<DosConfig> dos;
  std::optional<SweepConfig> sweep;
  std::filesystem::path output_dir;

  // Exactly one scenario: fuzz-rrc carries no dos block, dos-flood gets
  // a default one when absent.
  void normalize_and_validate() {
    campaign.validate();
    ran.validate();
    ue.validate();
    if (campaign.scenario == Scenario::FuzzRrc && dos)
      throw Error(Errc::InvalidConfig, "dos block given for scenario fuzz-rrc");
    if (campaign.scenario == Scenario::DosFlood && !dos) dos = DosConfig{};
    if (dos) dos->validate();
  }

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

inline Json to_json(const RunManifest& m, bool with_output_dir = true) {
  Json j;
  j["campaign"] = to_json(m.campaign);
  j["ran"] = to_json(m.ran);
  j["ue"] = to_json(m.ue);
  if (m.dos) j["dos"] = to_json(*m.dos);
  if (m.sweep) j["sweep"] = to_json(*m.sweep);
  if (with_output_dir && !m.output_dir.empty()) j["output_dir"] = m.output_dir.string();
  return j;
}

// Any structural or range problem surfaces as InvalidConfig.
inline RunManifest run_manifest_from_json(const Json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "manifest must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (key != "campaign" && key != "ran" && key != "ue" && key != "dos" && key != "sweep" && key != "output_dir")
      throw Error(Errc::InvalidConfig, "unknown manifest key '" + key + "'");
  RunManifest m;
  try {
    if (j.contains("campaign")) m.campaign = campaign_config_from_json(j["campaign"]);
    if (j.contains("ran")) m.ran = ran_config_from_json(j["ran"]);
    if (j.contains("ue")) m.ue = ue_config_from_json(j["ue"]);
    if (j.contains("dos") && !j["dos"].is_null()) m.dos = dos_config_from_json(j["dos"]);
    if (j.contains("sweep") && !j["sweep"].is_null()) m.sweep = sweep_config_from_json(j["sweep"]);
    if (j.contains("output_dir")) m.output_dir = j["output_dir"].get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("manifest: ") + e.what());
  } catch (const Error& e) {
    throw Error(Errc::InvalidConfig, e.what());
  }
  m.normalize_and_validate();
  return m;
}

inline RunManifest parse_run_manifest(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("manifest is not JSON: ") + e.what());
  }
  return run_manifest_from_json(j);
}

// ---------------------------------------------------------------------------
// report.json

inline Json outcome_json(const TrialRecord& t) {
  Json j;
  j["mutation_bits"] = t.mutation.bits();
  j["terminal"] = std::string(to_string(t.outcome.terminal));
  j["cause"] = t.outcome.cause ? Json(std::string(to_string(*t.outcome.cause))) : Json(nullptr);
  j["ticks"] = t.outcome.ticks_elapsed;
  j["ul_bytes"] = t.outcome.ul_bytes;
  j["dl_bytes"] = t.outcome.dl_bytes;
  return j;
}

// Runs the manifest's scenario (and sweep, if any) and assembles the report
// object. The manifest is echoed without output_dir.
inline Json execute_manifest(RunManifest m, const CampaignObserver* observer = nullptr, unsigned workers = 1) {
  m.normalize_and_validate();
  m.ue.cipher_enabled = m.campaign.cipher_enabled;
  Json report;
  report["manifest"] = to_json(m, false);
  Json outcomes = Json::array();

  if (m.campaign.scenario == Scenario::FuzzRrc) {
    const auto result = run_campaign(m.campaign, m.ran, m.ue, observer, workers);
    for (const auto& t : result.outcomes) outcomes.push_back(outcome_json(t));
    report["outcomes"] = std::move(outcomes);
    report["per_bit"] = per_bit_json(result.map);
  } else {
    const auto result = dos_flood(*m.dos, m.ran, m.ue, observer);
    std::vector<TrialRecord> records;
    for (const auto& o : result.legit_outcomes) {
      records.push_back({Mutation{}, o});
      outcomes.push_back(outcome_json(records.back()));
    }
    report["outcomes"] = std::move(outcomes);
    report["per_bit"] = per_bit_json(vulnerability_map(records));
    Json dos = to_json(*m.dos);
    dos["capacity"] = m.ran.context_capacity;
    dos["legit_success_rate"] = result.legit_success_rate;
    dos["rejected_flood_count"] = result.rejected_flood_count;
    report["dos"] = std::move(dos);
  }

  if (m.sweep) {
    Json curve = Json::array();
    for (const auto& p : effect_curve(m.campaign.seed, m.sweep->trials_per_k, m.sweep->ks, m.ran, m.ue, workers))
      curve.push_back(to_json(p));
    report["effect_curve"] = std::move(curve);
  }
  return report;
}

inline std::string dump_report(const Json& report) { return report.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// CSV rendering

// Checks the parts of the schema the renderers rely on.
inline void check_report(const Json& report) {
  if (!report.is_object() || !report.contains("per_bit") || !report["per_bit"].is_array())
    throw Error(Errc::ParseError, "report has no per_bit array");
  if (report["per_bit"].size() != kSetupCompleteBits)
    throw Error(Errc::ParseError, "per_bit must have 208 entries");
  for (const auto& e : report["per_bit"])
    if (!e.is_object() || !e.contains("bit") || !e.contains("flipped") || !e.contains("success") ||
        !e.contains("score"))
      throw Error(Errc::ParseError, "malformed per_bit entry");
  if (report.contains("effect_curve")) {
    if (!report["effect_curve"].is_array()) throw Error(Errc::ParseError, "effect_curve must be an array");
    for (const auto& p : report["effect_curve"])
      if (!p.is_object() || !p.contains("k") || !p.contains("trials") || !p.contains("success_rate"))
        throw Error(Errc::ParseError, "malformed effect_curve entry");
  }
}

inline std::string per_bit_csv(const Json& report) {
  check_report(report);
  std::ostringstream out;
  out << "bit,byte,bit_in_byte,field_name,flipped_count,success_count,score\n";
  try {
    for (const auto& e : report["per_bit"]) {
      const auto bit = e["bit"].get<std::size_t>();
      if (bit >= kSetupCompleteBits) throw Error(Errc::ParseError, "per_bit bit out of range");
      out << bit << ',' << bit / 8 << ',' << bit % 8 << ',' << setup_complete_field_name(bit) << ','
          << e["flipped"].get<std::size_t>() << ',' << e["success"].get<std::size_t>() << ',';
      if (!e["score"].is_null()) out << e["score"].get<int>();
      out << '\n';
    }
  } catch (const Json::exception& ex) {
    throw Error(Errc::ParseError, std::string("per_bit: ") + ex.what());
  }
  return out.str();
}

inline std::optional<std::string> effect_curve_csv(const Json& report) {
  check_report(report);
  if (!report.contains("effect_curve")) return std::nullopt;
  std::ostringstream out;
  out << "k,trials,success_rate\n";
  try {
    for (const auto& p : report["effect_curve"])
      out << p["k"].get<std::size_t>() << ',' << p["trials"].get<std::size_t>() << ','
          << p["success_rate"].dump() << '\n';
  } catch (const Json::exception& ex) {
    throw Error(Errc::ParseError, std::string("effect_curve: ") + ex.what());
  }
  return out.str();
}

inline Json oracle_json(const RanConfig& ran, const UeConfig& ue = {}) {
  Json j;
  j["per_bit"] = per_bit_json(oracle_map(ran, ue));
  return j;
}

// ---------------------------------------------------------------------------
// Files

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::out | std::ios::trunc | std::ios::binary);
  if (!out) throw Error(Errc::IoFailure, "cannot open " + path.string());
  out << text;
  out.flush();
  if (!out) throw Error(Errc::IoFailure, "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error(Errc::IoFailure, "output_dir " + dir.string() + " is not writable");
  const auto probe = dir / ".write-probe";
  write_text(probe, "");
  std::filesystem::remove(probe, ec);
}

// report.json -> per_bit.csv (+ effect_curve.csv). Returns files written.
inline std::vector<std::filesystem::path> render_report_files(const Json& report,
                                                              const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written{dir / "per_bit.csv"};
  write_text(written.back(), per_bit_csv(report));
  if (const auto curve = effect_curve_csv(report)) {
    written.push_back(dir / "effect_curve.csv");
    write_text(written.back(), *curve);
  }
  return written;
}

struct RunHooks {
  EventSink on_event;  // every AgentEvent, in emission order
  std::function<void(std::size_t index, std::size_t total, const TrialRecord&)> on_trial;
  bool white_box = true;
};

struct RunArtifacts {
  Json report;
  std::filesystem::path report_path;
  std::size_t events = 0;
  std::size_t captures = 0;
};

// The whole flow for one manifest: execute, then write report.json,
// per_bit.csv, effect_curve.csv (with a sweep), events.log, capture.log.
inline RunArtifacts run_manifest(const RunManifest& manifest, const RunHooks& hooks = {}) {
  if (manifest.output_dir.empty()) throw Error(Errc::InvalidConfig, "output_dir is required");
  const auto& dir = manifest.output_dir;
  prepare_output_dir(dir);

  std::ofstream events(dir / "events.log", std::ios::out | std::ios::trunc | std::ios::binary);
  if (!events) throw Error(Errc::IoFailure, "cannot open events.log");
  CaptureBuffer capture;
  RunArtifacts art;

  CampaignObserver obs;
  obs.white_box = hooks.white_box;
  obs.on_event = [&](const AgentEvent& e) {
    events << to_line(e) << '\n';
    ++art.events;
    if (hooks.on_event) hooks.on_event(e);
  };
  obs.on_capture = capture.sink();
  obs.on_trial = hooks.on_trial;

  art.report = execute_manifest(manifest, &obs);
  events.flush();
  if (!events) throw Error(Errc::IoFailure, "write failed for events.log");
  art.captures = capture.export_capture(dir / "capture.log");
  art.report_path = dir / "report.json";
  write_text(art.report_path, dump_report(art.report));
  render_report_files(art.report, dir);
  return art;
}

}  // namespace soft_tue
