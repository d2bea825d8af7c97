#pragma once

// The soft tester UE: SA attach state machine with a fuzz hook on the
// encoded RRC Setup Complete SDU, plus the driver that runs one attach over
// a message port.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "soft_tue/events.hpp"
#include "soft_tue/mutation.hpp"
#include "soft_tue/prng.hpp"
#include "soft_tue/protocol.hpp"

namespace soft_tue {

inline constexpr std::uint64_t kDefaultSubscriberKey = 0x0123456789abcdefULL;

enum class UeState {
  Idle,
  CellSearch,
  RachSent,
  Connected,
  RegistrationPending,
  Authenticating,
  SecurityMode,
  Registered,
  PduSessionPending,
  SessionActive,
  Rejected,
  Timeout,
};

inline constexpr std::array<std::string_view, 12> kUeStateNames{
    "Idle",       "CellSearch",        "RachSent",      "Connected",
    "RegistrationPending", "Authenticating", "SecurityMode", "Registered",
    "PduSessionPending",   "SessionActive",  "Rejected",     "Timeout"};

inline std::string_view to_string(UeState s) { return kUeStateNames[static_cast<int>(s)]; }

inline UeState ue_state_from_string(std::string_view s) {
  if (auto v = enum_from_name<UeState>(kUeStateNames, s)) return *v;
  throw Error(Errc::ParseError, "unknown UE state " + std::string(s));
}

constexpr bool is_terminal(UeState s) noexcept {
  return s == UeState::SessionActive || s == UeState::Rejected || s == UeState::Timeout;
}

// States in which the UE acts on its own rather than waiting for the network.
constexpr bool is_spontaneous(UeState s) noexcept {
  return s == UeState::Idle || s == UeState::CellSearch || s == UeState::Connected ||
         s == UeState::Registered;
}

// The only uplink message (as UplinkMessage variant index) each state may
// emit; nullopt means the state never transmits.
constexpr std::optional<std::size_t> permitted_uplink(UeState from) noexcept {
  switch (from) {
    case UeState::CellSearch: return 0;           // RrcSetupRequest
    case UeState::Connected: return 1;            // RrcSetupComplete
    case UeState::RegistrationPending: return 2;  // AuthenticationResponse
    case UeState::Authenticating: return 3;       // SecurityModeComplete
    case UeState::Registered: return 4;           // PduSessionEstablishmentRequest
    default: return std::nullopt;
  }
}

// Internal continuation for spontaneous states.
struct Proceed {};
struct TimerExpiry {};
using UeEvent = std::variant<Proceed, TimerExpiry, DownlinkMessage>;

inline std::string_view event_name(const UeEvent& e) {
  if (std::holds_alternative<Proceed>(e)) return "Proceed";
  if (std::holds_alternative<TimerExpiry>(e)) return "TimerExpiry";
  return message_name(std::get<DownlinkMessage>(e));
}

enum class HookTarget { None, RrcSetupComplete };

struct FuzzHook {
  HookTarget target = HookTarget::None;
  Mutation mutation;

  static FuzzHook none() { return {}; }
  static FuzzHook rrc_setup_complete(Mutation m) { return {HookTarget::RrcSetupComplete, std::move(m)}; }

  Frame apply(const Frame& sdu) const {
    return target == HookTarget::None ? sdu : mutate(sdu, mutation);
  }
};

struct UeConfig {
  std::uint32_t ue_id = 0x00001001;
  std::uint64_t ue_key = kDefaultSubscriberKey;
  std::uint64_t suci = kDefaultSuci;
  Tick response_timeout_ticks = 10;
  bool cipher_enabled = false;

  void validate() const {
    if (response_timeout_ticks < 1) throw Error(Errc::InvalidConfig, "response_timeout_ticks must be >= 1");
  }

  friend bool operator==(const UeConfig&, const UeConfig&) = default;
};

inline Json to_json(const UeConfig& c) {
  Json j;
  j["ue_id"] = c.ue_id;
  j["ue_key"] = hex_u64(c.ue_key);
  j["suci"] = hex_u64(c.suci);
  j["response_timeout_ticks"] = c.response_timeout_ticks;
  j["cipher_enabled"] = c.cipher_enabled;
  return j;
}

inline UeConfig ue_config_from_json(const Json& j) {
  UeConfig c;
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "ue config must be an object");
  if (j.contains("ue_id")) c.ue_id = json_uint<std::uint32_t>(j["ue_id"], 0xffffffffULL);
  if (j.contains("ue_key")) c.ue_key = json_u64(j["ue_key"]);
  if (j.contains("suci")) c.suci = json_u64(j["suci"]);
  if (j.contains("response_timeout_ticks"))
    c.response_timeout_ticks = json_uint<Tick>(j["response_timeout_ticks"], 1'000'000);
  if (j.contains("cipher_enabled")) c.cipher_enabled = j["cipher_enabled"].get<bool>();
  c.validate();
  return c;
}

inline std::uint64_t auth_response(std::uint64_t rand, std::uint64_t key) noexcept {
  return mix64(rand ^ key);
}

// The RRC Setup Complete the UE sends before ciphering and fuzzing.
inline SetupCompleteFields ue_setup_complete_fields(const UeConfig& config, std::uint8_t tid) {
  SetupCompleteFields f;
  f.tid = tid & 0x0f;
  f.suci = config.suci;
  return f;
}

// What the UE has learned from the network so far.
struct UeContext {
  UeState state = UeState::Idle;
  std::uint8_t tid = 0;
  std::optional<RejectCause> cause;
};

struct UeStepResult {
  UeContext next;
  std::vector<UplinkMessage> uplink;
  std::vector<AgentEvent> events;  // unstamped; the driver's Agent stamps them
};

namespace detail {

inline AgentEvent ue_event(EventKind kind, Details d) {
  AgentEvent e;
  e.component = Component::UE;
  e.kind = kind;
  e.details = std::move(d);
  return e;
}

}  // namespace detail

// One transition of the UE state machine. An event the current state does
// not expect is a protocol violation: it is logged as an anomaly event and
// the UE moves to Rejected(ProtocolError).
inline UeStepResult ue_step(const UeContext& ctx, const UeEvent& event, const UeConfig& config,
                            const FuzzHook& hook) {
  if (is_terminal(ctx.state))
    throw Error(Errc::ProtocolViolation, "ue_step called in terminal state " + std::string(to_string(ctx.state)));

  UeStepResult r;
  r.next = ctx;
  const DownlinkMessage* dl = std::get_if<DownlinkMessage>(&event);
  if (dl)
    r.events.push_back(detail::ue_event(
        EventKind::MsgRx, {{"message", std::string(message_name(*dl))},
                           {"bytes", std::to_string(wire_size(*dl))}}));

  auto go = [&](UeState to) { r.next.state = to; };
  auto reject = [&](RejectCause c) {
    r.next.state = UeState::Rejected;
    r.next.cause = c;
  };
  auto violation = [&] {
    r.events.push_back(detail::ue_event(EventKind::ParseError,
                                        {{"anomaly", "ProtocolViolation"},
                                         {"state", std::string(to_string(ctx.state))},
                                         {"event", std::string(event_name(event))}}));
    reject(RejectCause::ProtocolError);
  };
  auto is = [&](auto tag) {
    using T = decltype(tag);
    if constexpr (std::is_same_v<T, Proceed> || std::is_same_v<T, TimerExpiry>)
      return std::holds_alternative<T>(event);
    else
      return dl != nullptr && std::holds_alternative<T>(*dl);
  };

  if (is_spontaneous(ctx.state)) {
    if (!is(Proceed{})) {
      violation();
    } else {
      switch (ctx.state) {
        case UeState::Idle: go(UeState::CellSearch); break;
        case UeState::CellSearch:
          // Single configured cell: selection always succeeds.
          r.uplink.push_back(RrcSetupRequest{config.ue_id, 0x03});
          go(UeState::RachSent);
          break;
        case UeState::Connected: {
          const Frame plain = encode_setup_complete(ue_setup_complete_fields(config, ctx.tid));
          const Frame sdu = keystream_apply(plain, config.ue_key, config.cipher_enabled);
          r.uplink.push_back(RrcSetupComplete{hook.apply(sdu)});
          go(UeState::RegistrationPending);
          break;
        }
        case UeState::Registered:
          r.uplink.push_back(PduSessionEstablishmentRequest{1});
          go(UeState::PduSessionPending);
          break;
        default: break;
      }
    }
  } else if (is(TimerExpiry{})) {
    go(UeState::Timeout);
  } else if (is(RrcRelease{})) {
    reject(RejectCause::Released);
  } else {
    switch (ctx.state) {
      case UeState::RachSent:
        if (is(RrcSetup{})) {
          r.next.tid = std::get<RrcSetup>(*dl).tid;
          go(UeState::Connected);
        } else if (is(RrcReject{})) {
          reject(std::get<RrcReject>(*dl).cause);
        } else {
          violation();
        }
        break;
      case UeState::RegistrationPending:
      case UeState::Authenticating:
      case UeState::SecurityMode:
        if (is(RegistrationReject{})) {
          reject(std::get<RegistrationReject>(*dl).cause);
        } else if (ctx.state == UeState::RegistrationPending && is(AuthenticationRequest{})) {
          r.uplink.push_back(
              AuthenticationResponse{auth_response(std::get<AuthenticationRequest>(*dl).rand, config.ue_key)});
          go(UeState::Authenticating);
        } else if (ctx.state == UeState::Authenticating && is(SecurityModeCommand{})) {
          r.uplink.push_back(SecurityModeComplete{});
          go(UeState::SecurityMode);
        } else if (ctx.state == UeState::SecurityMode && is(RegistrationAccept{})) {
          go(UeState::Registered);
        } else {
          violation();
        }
        break;
      case UeState::PduSessionPending:
        if (is(PduSessionEstablishmentAccept{}))
          go(UeState::SessionActive);
        else
          violation();
        break;
      default: violation(); break;
    }
  }

  for (const auto& ul : r.uplink)
    r.events.push_back(detail::ue_event(EventKind::MsgTx, {{"message", std::string(message_name(ul))},
                                                           {"bytes", std::to_string(wire_size(ul))},
                                                           {"state", std::string(to_string(ctx.state))}}));
  r.events.push_back(detail::ue_event(EventKind::StateTransition,
                                      {{"from", std::string(to_string(ctx.state))},
                                       {"to", std::string(to_string(r.next.state))}}));
  return r;
}

// Ordered, lossless, tick-stamped link between one UE and the network.
class UePort {
 public:
  virtual ~UePort() = default;
  virtual void send(const UplinkMessage& msg, Tick now) = 0;
  // Delivery tick of the earliest pending downlink message.
  virtual std::optional<Tick> next_delivery() const = 0;
  virtual DownlinkMessage receive() = 0;
};

struct AttachOutcome {
  UeState terminal = UeState::Idle;
  std::optional<RejectCause> cause;
  std::size_t ul_msgs = 0;
  std::size_t dl_msgs = 0;
  Tick ticks_elapsed = 0;
  std::size_t ul_bytes = 0;
  std::size_t dl_bytes = 0;

  friend bool operator==(const AttachOutcome&, const AttachOutcome&) = default;
};

// Drives ue_step to a terminal state. Rejections and timeouts are outcomes,
// not errors. Events are stamped by `agent` (if any) at campaign tick
// `start + elapsed`.
inline AttachOutcome attach(UePort& port, const UeConfig& config, const FuzzHook& hook,
                            Agent* agent = nullptr, Tick start = 0) {
  config.validate();
  AttachOutcome out;
  UeContext ctx;
  Tick now = start;
  Tick deadline = start;
  while (!is_terminal(ctx.state)) {
    UeEvent event = Proceed{};
    if (!is_spontaneous(ctx.state)) {
      const auto due = port.next_delivery();
      if (due && *due <= deadline) {
        now = std::max(now, *due);
        event = port.receive();
      } else {
        now = deadline;
        event = TimerExpiry{};
      }
    }
    if (const auto* dl = std::get_if<DownlinkMessage>(&event)) {
      ++out.dl_msgs;
      out.dl_bytes += wire_size(*dl);
    }
    auto step = ue_step(ctx, event, config, hook);
    if (agent)
      for (auto& e : step.events) agent->emit(std::move(e), now);
    for (const auto& ul : step.uplink) {
      ++out.ul_msgs;
      out.ul_bytes += wire_size(ul);
      port.send(ul, now);
    }
    ctx = step.next;
    if (!is_spontaneous(ctx.state)) deadline = now + config.response_timeout_ticks;
  }
  out.terminal = ctx.state;
  out.cause = ctx.state == UeState::SessionActive || ctx.state == UeState::Timeout
                  ? std::nullopt
                  : ctx.cause;
  out.ticks_elapsed = now - start;
  return out;
}

inline Json to_json(const AttachOutcome& o) {
  Json j;
  j["terminal"] = std::string(to_string(o.terminal));
  j["cause"] = o.cause ? Json(std::string(to_string(*o.cause))) : Json(nullptr);
  j["ticks"] = o.ticks_elapsed;
  j["ul_msgs"] = o.ul_msgs;
  j["dl_msgs"] = o.dl_msgs;
  j["ul_bytes"] = o.ul_bytes;
  j["dl_bytes"] = o.dl_bytes;
  return j;
}

}  // namespace soft_tue
