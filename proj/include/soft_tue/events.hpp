#pragma once

// Telemetry records: agent events, KPI aggregates and capture records, with
// their newline-delimited JSON encodings.

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "soft_tue/json_util.hpp"
#include "soft_tue/protocol.hpp"

namespace soft_tue {

enum class Component { UE, GNB, AMF, HARNESS };

enum class EventKind { StateTransition, MsgTx, MsgRx, ParseError, ValidationFail, Kpi, AttackMarker };

inline constexpr std::array<std::string_view, 4> kComponentNames{"UE", "GNB", "AMF", "HARNESS"};
inline constexpr std::array<std::string_view, 7> kEventKindNames{
    "StateTransition", "MsgTx", "MsgRx", "ParseError", "ValidationFail", "Kpi", "AttackMarker"};

inline std::string_view to_string(Component c) { return kComponentNames[static_cast<int>(c)]; }
inline std::string_view to_string(EventKind k) { return kEventKindNames[static_cast<int>(k)]; }

template <typename Enum, std::size_t N>
std::optional<Enum> enum_from_name(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<Enum>(i);
  return std::nullopt;
}

using Details = std::map<std::string, std::string>;

struct AgentEvent {
  std::string agent_id;
  std::uint64_t seq = 0;
  Tick tick = 0;
  Component component = Component::HARNESS;
  EventKind kind = EventKind::StateTransition;
  Details details;

  friend bool operator==(const AgentEvent&, const AgentEvent&) = default;
};

inline Json to_json(const AgentEvent& e) {
  Json j;
  j["agent_id"] = e.agent_id;
  j["seq"] = e.seq;
  j["tick"] = e.tick;
  j["component"] = std::string(to_string(e.component));
  j["kind"] = std::string(to_string(e.kind));
  j["details"] = Json::object();
  for (const auto& [k, v] : e.details) j["details"][k] = v;
  return j;
}

inline std::string to_line(const AgentEvent& e) { return to_json(e).dump(); }

// Strict schema check: exactly the six AgentEvent keys with the right types.
inline std::optional<AgentEvent> agent_event_from_json(const Json& j) {
  static constexpr std::array<std::string_view, 6> keys{"agent_id", "seq",  "tick",
                                                        "component", "kind", "details"};
  if (!j.is_object() || j.size() != keys.size()) return std::nullopt;
  for (auto k : keys)
    if (!j.contains(std::string(k))) return std::nullopt;
  if (!j["agent_id"].is_string() || !j["seq"].is_number_unsigned() ||
      !j["tick"].is_number_integer() || !j["component"].is_string() || !j["kind"].is_string() ||
      !j["details"].is_object())
    return std::nullopt;
  AgentEvent e;
  e.agent_id = j["agent_id"].get<std::string>();
  if (e.agent_id.empty()) return std::nullopt;
  e.seq = j["seq"].get<std::uint64_t>();
  e.tick = j["tick"].get<Tick>();
  if (e.tick < 0) return std::nullopt;
  auto comp = enum_from_name<Component>(kComponentNames, j["component"].get<std::string>());
  auto kind = enum_from_name<EventKind>(kEventKindNames, j["kind"].get<std::string>());
  if (!comp || !kind) return std::nullopt;
  e.component = *comp;
  e.kind = *kind;
  for (const auto& [k, v] : j["details"].items()) {
    if (!v.is_string()) return std::nullopt;
    e.details.emplace(k, v.get<std::string>());
  }
  return e;
}

inline std::optional<AgentEvent> parse_agent_event(std::string_view line) {
  const auto j = Json::parse(line, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return agent_event_from_json(j);
}

using EventSink = std::function<void(const AgentEvent&)>;

// Instrumentation point inside a component. Stamps a strictly increasing
// per-agent sequence number (starting at 1) and forwards to the sink when
// one is connected; a disconnected agent still stamps, so black-box and
// white-box runs are otherwise identical.
class Agent {
 public:
  Agent(std::string id, Component component, EventSink sink = {})
      : id_(std::move(id)), component_(component), sink_(std::move(sink)) {}

  AgentEvent emit(EventKind kind, Tick tick, Details details = {}) {
    AgentEvent e{id_, ++seq_, tick, component_, kind, std::move(details)};
    if (sink_) sink_(e);
    return e;
  }

  // Stamps a pre-built event (component and kind kept, id/seq/tick set).
  AgentEvent emit(AgentEvent e, Tick tick) {
    e.agent_id = id_;
    e.seq = ++seq_;
    e.tick = tick;
    e.component = component_;
    if (sink_) sink_(e);
    return e;
  }

  void connect(EventSink sink) { sink_ = std::move(sink); }
  void disconnect() { sink_ = {}; }
  bool connected() const noexcept { return static_cast<bool>(sink_); }

  const std::string& id() const noexcept { return id_; }
  Component component() const noexcept { return component_; }
  std::uint64_t last_seq() const noexcept { return seq_; }

 private:
  std::string id_;
  Component component_;
  EventSink sink_;
  std::uint64_t seq_ = 0;
};

// ---------------------------------------------------------------------------
// KPI

inline constexpr Tick kKpiWindowTicks = 10;
// One tick is a 10 ms radio frame.
inline constexpr Tick kLogicalSecondTicks = 100;

struct KpiRecord {
  double ul_bitrate = 0;  // bytes per tick over the last window
  double dl_bitrate = 0;
  std::string connection_status = "Idle";
  std::string attack_type;
  Tick duration = 0;
  std::uint64_t ul_bytes = 0;  // cumulative
  std::uint64_t dl_bytes = 0;

  friend bool operator==(const KpiRecord&, const KpiRecord&) = default;
};

inline Json to_json(const KpiRecord& k) {
  Json j;
  j["ul_bitrate"] = k.ul_bitrate;
  j["dl_bitrate"] = k.dl_bitrate;
  j["connection_status"] = k.connection_status;
  j["attack_type"] = k.attack_type;
  j["duration"] = k.duration;
  j["ul_bytes"] = k.ul_bytes;
  j["dl_bytes"] = k.dl_bytes;
  return j;
}

inline Details to_details(const KpiRecord& k) {
  Details d;
  d["ul_bitrate"] = Json(k.ul_bitrate).dump();
  d["dl_bitrate"] = Json(k.dl_bitrate).dump();
  d["connection_status"] = k.connection_status;
  d["attack_type"] = k.attack_type;
  d["duration"] = std::to_string(k.duration);
  d["ul_bytes"] = std::to_string(k.ul_bytes);
  d["dl_bytes"] = std::to_string(k.dl_bytes);
  return d;
}

// Folds the UE agent's view of the event stream into a KpiRecord:
// UE MsgTx bytes are uplink, UE MsgRx bytes downlink, UE StateTransition
// gives connection status, HARNESS AttackMarker start sets attack type and
// the duration origin.
class KpiAggregator {
 public:
  void observe(const AgentEvent& e) {
    latest_tick_ = std::max(latest_tick_, e.tick);
    if (e.component == Component::UE) {
      if (e.kind == EventKind::MsgTx || e.kind == EventKind::MsgRx) {
        const auto it = e.details.find("bytes");
        const std::uint64_t bytes = it == e.details.end() ? 0 : std::stoull(it->second);
        const bool ul = e.kind == EventKind::MsgTx;
        (ul ? ul_bytes_ : dl_bytes_) += bytes;
        window_.push_back({e.tick, ul, bytes});
      } else if (e.kind == EventKind::StateTransition) {
        if (auto it = e.details.find("to"); it != e.details.end()) status_ = it->second;
      }
    } else if (e.kind == EventKind::AttackMarker) {
      if (auto it = e.details.find("phase"); it != e.details.end() && it->second == "start") {
        if (auto s = e.details.find("scenario"); s != e.details.end()) attack_type_ = s->second;
        start_tick_ = e.tick;
      }
    }
    while (!window_.empty() && window_.front().tick <= latest_tick_ - kKpiWindowTicks)
      window_.pop_front();
  }

  KpiRecord snapshot() const {
    KpiRecord k;
    std::uint64_t ul = 0, dl = 0;
    for (const auto& s : window_) (s.ul ? ul : dl) += s.bytes;
    k.ul_bitrate = static_cast<double>(ul) / kKpiWindowTicks;
    k.dl_bitrate = static_cast<double>(dl) / kKpiWindowTicks;
    k.connection_status = status_;
    k.attack_type = attack_type_;
    k.duration = start_tick_ ? latest_tick_ - *start_tick_ : 0;
    k.ul_bytes = ul_bytes_;
    k.dl_bytes = dl_bytes_;
    return k;
  }

 private:
  struct Sample {
    Tick tick;
    bool ul;
    std::uint64_t bytes;
  };
  std::deque<Sample> window_;
  std::uint64_t ul_bytes_ = 0;
  std::uint64_t dl_bytes_ = 0;
  std::string status_ = "Idle";
  std::string attack_type_;
  std::optional<Tick> start_tick_;
  Tick latest_tick_ = 0;
};

// ---------------------------------------------------------------------------
// Capture

enum class Direction { UL, DL };

struct CaptureRecord {
  Tick tick = 0;
  Direction direction = Direction::UL;
  std::string frame_hex;
  std::optional<Json> decoded;
  std::optional<ValidationVerdict> verdict;
};

inline Json to_json(const CaptureRecord& r) {
  Json j;
  j["tick"] = r.tick;
  j["direction"] = r.direction == Direction::UL ? "UL" : "DL";
  j["frame_hex"] = r.frame_hex;
  j["decoded"] = r.decoded ? *r.decoded : Json(nullptr);
  j["verdict"] = r.verdict ? to_json(*r.verdict) : Json(nullptr);
  return j;
}

inline CaptureRecord capture_record_from_json(const Json& j) {
  CaptureRecord r;
  r.tick = j.at("tick").get<Tick>();
  const auto dir = j.at("direction").get<std::string>();
  if (dir != "UL" && dir != "DL") throw Error(Errc::ParseError, "bad capture direction " + dir);
  r.direction = dir == "UL" ? Direction::UL : Direction::DL;
  r.frame_hex = j.at("frame_hex").get<std::string>();
  if (r.frame_hex.size() % 2 != 0) throw Error(Errc::ParseError, "odd frame_hex length");
  if (!j.at("decoded").is_null()) r.decoded = j["decoded"];
  if (!j.at("verdict").is_null()) r.verdict = verdict_from_json(j["verdict"]);
  return r;
}

using CaptureSink = std::function<void(const CaptureRecord&)>;

}  // namespace soft_tue
