#pragma once

// The RAN under test: a gNB with a finite connection-context table and a
// minimal AMF. Registration frames are judged only by
// validate_setup_complete; gNB and AMF each carry an instrumentation agent.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "soft_tue/events.hpp"
#include "soft_tue/protocol.hpp"
#include "soft_tue/tester_ue.hpp"

namespace soft_tue {

using LinkId = std::uint32_t;

enum class ContextPhase { RrcPending, Registered, SessionActive };

inline std::string_view to_string(ContextPhase p) {
  switch (p) {
    case ContextPhase::RrcPending: return "RrcPending";
    case ContextPhase::Registered: return "Registered";
    case ContextPhase::SessionActive: return "SessionActive";
  }
  return "Unknown";
}

enum class AmfStage { AwaitSetupComplete, AwaitAuthResponse, AwaitSecurityModeComplete, AwaitPduRequest, Done };

inline std::string_view to_string(AmfStage s) {
  switch (s) {
    case AmfStage::AwaitSetupComplete: return "AwaitSetupComplete";
    case AmfStage::AwaitAuthResponse: return "AwaitAuthResponse";
    case AmfStage::AwaitSecurityModeComplete: return "AwaitSecurityModeComplete";
    case AmfStage::AwaitPduRequest: return "AwaitPduRequest";
    case AmfStage::Done: return "Done";
  }
  return "Unknown";
}

struct GnbContext {
  std::uint32_t ue_id = 0;
  std::uint8_t tid = 0;
  Tick created_tick = 0;
  ContextPhase phase = ContextPhase::RrcPending;
  AmfStage stage = AmfStage::AwaitSetupComplete;
  std::uint64_t rand = 0;
  std::uint8_t algorithms = 0;  // byte 12 of the accepted registration
};

struct RanSimOptions {
  std::uint64_t subscriber_key = kDefaultSubscriberKey;
  bool cipher_enabled = false;
  // Drop rejected registrations instead of answering RegistrationReject.
  bool silent_drop = false;
  // White-box: agent events reach `sink`. Black-box: agents disconnected.
  bool white_box = true;
  std::uint64_t seed = 0;
  EventSink sink;
  // Externally owned agents that outlive this instance (sequence numbers
  // continue across freshly booted RANs). When null the RAN owns its own.
  Agent* gnb_agent = nullptr;
  Agent* amf_agent = nullptr;
};

struct GnbResult {
  std::vector<DownlinkMessage> downlink;
  std::vector<AgentEvent> events;
  std::optional<ValidationVerdict> verdict;  // set for RRC Setup Complete
};

class RanSim {
 public:
  explicit RanSim(RanConfig config, RanSimOptions options = {})
      : config_(std::move(config)),
        options_(std::move(options)),
        own_gnb_("gnb", Component::GNB),
        own_amf_("amf", Component::AMF),
        gnb_agent_(options_.gnb_agent ? *options_.gnb_agent : own_gnb_),
        amf_agent_(options_.amf_agent ? *options_.amf_agent : own_amf_) {
    config_.validate();
    if (options_.white_box && options_.sink) {
      own_gnb_.connect(options_.sink);
      own_amf_.connect(options_.sink);
    }
  }

  RanSim(const RanSim&) = delete;
  RanSim& operator=(const RanSim&) = delete;

  const RanConfig& config() const noexcept { return config_; }
  const RanSimOptions& options() const noexcept { return options_; }
  std::size_t live_contexts() const noexcept { return contexts_.size(); }
  const GnbContext* context(LinkId link) const {
    auto it = contexts_.find(link);
    return it == contexts_.end() ? nullptr : &it->second;
  }
  const Agent& gnb_agent() const noexcept { return gnb_agent_; }
  const Agent& amf_agent() const noexcept { return amf_agent_; }

  GnbResult gnb_handle(LinkId link, const UplinkMessage& msg, Tick now) {
    GnbResult r;
    const std::string name(message_name(msg));
    const std::string link_s = std::to_string(link);

    if (const auto* req = std::get_if<RrcSetupRequest>(&msg)) {
      contexts_.erase(link);  // re-establishment replaces the old context
      if (contexts_.size() >= config_.context_capacity) {
        r.downlink.push_back(RrcReject{RejectCause::Congestion});
        r.events.push_back(gnb_agent_.emit(EventKind::MsgRx, now,
                                           {{"link", link_s}, {"message", name}, {"result", "RrcReject"}}));
        return r;
      }
      contexts_.emplace(link, GnbContext{req->ue_id, config_.expected_tid, now});
      r.downlink.push_back(RrcSetup{config_.expected_tid});
      r.events.push_back(gnb_agent_.emit(
          EventKind::StateTransition, now,
          {{"link", link_s}, {"from", "None"}, {"to", "RrcPending"}, {"message", name}}));
      return r;
    }

    auto it = contexts_.find(link);
    if (it == contexts_.end()) {
      r.downlink.push_back(RrcRelease{});
      r.events.push_back(gnb_agent_.emit(EventKind::MsgRx, now,
                                         {{"link", link_s}, {"message", name}, {"result", "NoContext"}}));
      return r;
    }

    if (const auto* complete = std::get_if<RrcSetupComplete>(&msg)) {
      if (complete->frame.size() != kSetupCompleteBytes) {
        contexts_.erase(it);
        r.downlink.push_back(RrcRelease{});
        r.events.push_back(gnb_agent_.emit(
            EventKind::ParseError, now,
            {{"link", link_s}, {"message", name}, {"bytes", std::to_string(complete->frame.size())}}));
        return r;
      }
      const Frame plain = keystream_apply(complete->frame, options_.subscriber_key, options_.cipher_enabled);
      const auto verdict = validate_setup_complete(plain, config_);
      r.verdict = verdict;
      if (!verdict.accepted) {
        contexts_.erase(it);
        if (!options_.silent_drop) r.downlink.push_back(RegistrationReject{*verdict.cause});
        r.events.push_back(gnb_agent_.emit(
            EventKind::ValidationFail, now,
            {{"link", link_s}, {"cause", std::string(to_string(*verdict.cause))}, {"frame_hex", plain.hex()}}));
        return r;
      }
      it->second.algorithms = plain[12];
      r.events.push_back(gnb_agent_.emit(EventKind::MsgRx, now,
                                         {{"link", link_s}, {"message", name}, {"verdict", "accepted"}}));
      r.downlink = amf_handle(link, msg, now, &r.events);
      return r;
    }

    r.events.push_back(gnb_agent_.emit(EventKind::MsgRx, now,
                                       {{"link", link_s}, {"message", name}, {"result", "forwarded"}}));
    r.downlink = amf_handle(link, msg, now, &r.events);
    return r;
  }

  // NAS procedure for an existing context whose registration the gNB has
  // accepted. Out-of-order messages release the context.
  std::vector<DownlinkMessage> amf_handle(LinkId link, const UplinkMessage& msg, Tick now,
                                          std::vector<AgentEvent>* events = nullptr) {
    std::vector<DownlinkMessage> out;
    auto it = contexts_.find(link);
    if (it == contexts_.end()) {
      out.push_back(RrcRelease{});
      return out;
    }
    GnbContext& ctx = it->second;
    const AmfStage before = ctx.stage;
    const ContextPhase phase_before = ctx.phase;
    bool released = false;
    std::optional<RejectCause> cause;

    if (std::holds_alternative<RrcSetupComplete>(msg) && ctx.stage == AmfStage::AwaitSetupComplete) {
      ctx.rand = mix64(options_.seed ^ (static_cast<std::uint64_t>(ctx.ue_id) << 32) ^ ++rand_counter_);
      out.push_back(AuthenticationRequest{ctx.rand});
      ctx.stage = AmfStage::AwaitAuthResponse;
    } else if (const auto* res = std::get_if<AuthenticationResponse>(&msg);
               res && ctx.stage == AmfStage::AwaitAuthResponse) {
      if (res->res == auth_response(ctx.rand, options_.subscriber_key)) {
        out.push_back(SecurityModeCommand{strongest_algorithm(ctx.algorithms >> 4),
                                          strongest_algorithm(ctx.algorithms & 0x0f)});
        ctx.stage = AmfStage::AwaitSecurityModeComplete;
      } else {
        cause = RejectCause::AuthenticationFailure;
        out.push_back(RegistrationReject{*cause});
        released = true;
      }
    } else if (std::holds_alternative<SecurityModeComplete>(msg) &&
               ctx.stage == AmfStage::AwaitSecurityModeComplete) {
      out.push_back(RegistrationAccept{});
      ctx.stage = AmfStage::AwaitPduRequest;
      ctx.phase = ContextPhase::Registered;
    } else if (const auto* pdu = std::get_if<PduSessionEstablishmentRequest>(&msg);
               pdu && ctx.stage == AmfStage::AwaitPduRequest) {
      out.push_back(PduSessionEstablishmentAccept{pdu->session_id});
      ctx.stage = AmfStage::Done;
      ctx.phase = ContextPhase::SessionActive;
    } else {
      out.push_back(RrcRelease{});
      released = true;
    }

    Details d{{"link", std::to_string(link)},
              {"message", std::string(message_name(msg))},
              {"from", std::string(to_string(before))},
              {"to", released ? std::string("Released") : std::string(to_string(ctx.stage))}};
    if (ctx.phase != phase_before) d["phase"] = std::string(to_string(ctx.phase));
    if (cause) d["cause"] = std::string(to_string(*cause));
    auto e = amf_agent_.emit(EventKind::StateTransition, now, std::move(d));
    if (events) events->push_back(std::move(e));
    if (released) contexts_.erase(it);
    return out;
  }

  // Reclaims RrcPending contexts older than context_expiry_ticks.
  std::size_t tick_expire(Tick now) {
    std::size_t reclaimed = 0;
    for (auto it = contexts_.begin(); it != contexts_.end();) {
      if (it->second.phase == ContextPhase::RrcPending &&
          now - it->second.created_tick > config_.context_expiry_ticks) {
        gnb_agent_.emit(EventKind::StateTransition, now,
                        {{"link", std::to_string(it->first)}, {"from", "RrcPending"}, {"to", "Released"},
                         {"reason", "expiry"}});
        it = contexts_.erase(it);
        ++reclaimed;
      } else {
        ++it;
      }
    }
    return reclaimed;
  }

  // Inactivity release of a link's context, whatever its phase.
  bool release(LinkId link, Tick now) {
    auto it = contexts_.find(link);
    if (it == contexts_.end()) return false;
    gnb_agent_.emit(EventKind::StateTransition, now,
                    {{"link", std::to_string(link)}, {"from", std::string(to_string(it->second.phase))},
                     {"to", "Released"}, {"reason", "inactivity"}});
    contexts_.erase(it);
    return true;
  }

 private:
  // Algorithm number of the highest advertised bit (bit 0 -> 1); 0 if none.
  static std::uint8_t strongest_algorithm(unsigned nibble) {
    for (int b = 3; b >= 0; --b)
      if (nibble & (1u << b)) return static_cast<std::uint8_t>(b + 1);
    return 0;
  }

  RanConfig config_;
  RanSimOptions options_;
  Agent own_gnb_;
  Agent own_amf_;
  Agent& gnb_agent_;
  Agent& amf_agent_;
  std::map<LinkId, GnbContext> contexts_;
  std::uint64_t rand_counter_ = 0;
};

inline constexpr Tick kLinkLatencyTicks = 1;

// In-process Uu link from one UE to a RanSim. Each direction takes one tick;
// expired contexts are reclaimed before every uplink delivery. Every frame
// crossing the link is optionally recorded as a CaptureRecord.
class LoopbackPort final : public UePort {
 public:
  LoopbackPort(RanSim& ran, LinkId link, CaptureSink capture = {}, bool plaintext_on_air = true)
      : ran_(ran), link_(link), capture_(std::move(capture)), plaintext_(plaintext_on_air) {}

  void send(const UplinkMessage& msg, Tick now) override {
    ran_.tick_expire(now);
    auto result = ran_.gnb_handle(link_, msg, now);
    if (capture_) {
      CaptureRecord rec{now, Direction::UL, encode(msg).hex(), std::nullopt, result.verdict};
      if (plaintext_ || !std::holds_alternative<RrcSetupComplete>(msg)) rec.decoded = to_json(msg);
      capture_(rec);
    }
    for (auto& dl : result.downlink) pending_.push_back({now + 2 * kLinkLatencyTicks, std::move(dl)});
  }

  std::optional<Tick> next_delivery() const override {
    if (pending_.empty()) return std::nullopt;
    return pending_.front().first;
  }

  DownlinkMessage receive() override {
    auto [tick, msg] = std::move(pending_.front());
    pending_.pop_front();
    if (capture_) capture_(CaptureRecord{tick, Direction::DL, encode(msg).hex(), to_json(msg), std::nullopt});
    return msg;
  }

 private:
  RanSim& ran_;
  LinkId link_;
  CaptureSink capture_;
  bool plaintext_;
  std::deque<std::pair<Tick, DownlinkMessage>> pending_;
};

}  // namespace soft_tue
