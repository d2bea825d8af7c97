#include <vector>

#include <gtest/gtest.h>

#include "soft_tue/fuzz.hpp"
#include "soft_tue/ran_sim.hpp"

using namespace soft_tue;

namespace {

Frame default_frame() { return encode_setup_complete(SetupCompleteFields{}); }

// Establish a context on `link` and return the AuthenticationRequest rand.
std::uint64_t register_until_auth(RanSim& sim, LinkId link, Tick now = 0) {
  sim.gnb_handle(link, RrcSetupRequest{link, 3}, now);
  auto r = sim.gnb_handle(link, RrcSetupComplete{default_frame()}, now + 1);
  return std::get<AuthenticationRequest>(r.downlink.at(0)).rand;
}

}  // namespace

TEST(Gnb, SetupRequestWithFreeCapacity) {
  RanConfig cfg;
  cfg.expected_tid = 9;
  RanSim sim(cfg);
  const auto r = sim.gnb_handle(1, RrcSetupRequest{1, 3}, 0);
  ASSERT_EQ(r.downlink.size(), 1u);
  EXPECT_EQ(std::get<RrcSetup>(r.downlink[0]).tid, 9);
  EXPECT_EQ(sim.live_contexts(), 1u);
}

TEST(Gnb, SeventeenthRequestRejected) {
  RanSim sim(RanConfig{});
  for (LinkId l = 0; l < 16; ++l)
    ASSERT_TRUE(std::holds_alternative<RrcSetup>(sim.gnb_handle(l, RrcSetupRequest{l, 3}, 0).downlink[0]));
  const auto r = sim.gnb_handle(16, RrcSetupRequest{16, 3}, 0);
  EXPECT_EQ(std::get<RrcReject>(r.downlink[0]).cause, RejectCause::Congestion);
  EXPECT_EQ(sim.live_contexts(), 16u);
}

TEST(Gnb, FuzzedNasTypeRejected) {
  RanSim sim(RanConfig{});
  sim.gnb_handle(1, RrcSetupRequest{1, 3}, 0);
  const auto r = sim.gnb_handle(1, RrcSetupComplete{mutate(default_frame(), Mutation{112})}, 1);
  ASSERT_EQ(r.downlink.size(), 1u);
  EXPECT_EQ(std::get<RegistrationReject>(r.downlink[0]).cause, RejectCause::BadNasType);
  EXPECT_EQ(r.verdict, ValidationVerdict::reject(RejectCause::BadNasType));
  EXPECT_EQ(sim.live_contexts(), 0u);
}

TEST(Gnb, WrongLengthFrameIsParseError) {
  RanSim sim(RanConfig{});
  sim.gnb_handle(1, RrcSetupRequest{1, 3}, 0);
  const auto r = sim.gnb_handle(1, RrcSetupComplete{Frame{0x43, 0x10}}, 1);
  ASSERT_EQ(r.downlink.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<RrcRelease>(r.downlink[0]));
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].kind, EventKind::ParseError);
  EXPECT_EQ(sim.live_contexts(), 0u);
}

TEST(Gnb, SilentDrop) {
  RanSimOptions opts;
  opts.silent_drop = true;
  RanSim sim(RanConfig{}, opts);
  sim.gnb_handle(1, RrcSetupRequest{1, 3}, 0);
  const auto r = sim.gnb_handle(1, RrcSetupComplete{mutate(default_frame(), Mutation{0})}, 1);
  EXPECT_TRUE(r.downlink.empty());
  EXPECT_EQ(r.verdict->cause, RejectCause::BadMsgType);
}

TEST(Amf, CorrectChainReachesSession) {
  RanSim sim(RanConfig{});
  const auto rand = register_until_auth(sim, 4);
  auto dl = sim.amf_handle(4, AuthenticationResponse{auth_response(rand, kDefaultSubscriberKey)}, 2);
  const auto smc = std::get<SecurityModeCommand>(dl.at(0));
  EXPECT_EQ(smc.ciphering_algo, 1);  // byte 12 = 0x11
  EXPECT_EQ(smc.integrity_algo, 1);
  dl = sim.amf_handle(4, SecurityModeComplete{}, 3);
  EXPECT_TRUE(std::holds_alternative<RegistrationAccept>(dl.at(0)));
  EXPECT_EQ(sim.context(4)->phase, ContextPhase::Registered);
  dl = sim.amf_handle(4, PduSessionEstablishmentRequest{7}, 4);
  EXPECT_EQ(std::get<PduSessionEstablishmentAccept>(dl.at(0)).session_id, 7);
  EXPECT_EQ(sim.context(4)->phase, ContextPhase::SessionActive);
}

TEST(Amf, WrongResponseRejected) {
  RanSim sim(RanConfig{});
  const auto rand = register_until_auth(sim, 4);
  const auto dl = sim.amf_handle(4, AuthenticationResponse{auth_response(rand, 0)}, 2);
  EXPECT_EQ(std::get<RegistrationReject>(dl.at(0)).cause, RejectCause::AuthenticationFailure);
  EXPECT_EQ(sim.context(4), nullptr);
}

TEST(Amf, OutOfOrderReleasesContext) {
  RanSim sim(RanConfig{});
  register_until_auth(sim, 4);
  const auto dl = sim.amf_handle(4, SecurityModeComplete{}, 2);
  EXPECT_TRUE(std::holds_alternative<RrcRelease>(dl.at(0)));
  EXPECT_EQ(sim.context(4), nullptr);
}

TEST(Expiry, NoContexts) {
  RanSim sim(RanConfig{});
  EXPECT_EQ(sim.tick_expire(1000), 0u);
}

TEST(Expiry, FloodContextsReclaimed) {
  RanSim sim(RanConfig{});
  for (LinkId l = 0; l < 16; ++l) sim.gnb_handle(l, RrcSetupRequest{l, 3}, 0);
  EXPECT_EQ(sim.tick_expire(50), 0u);  // strictly older than expiry
  EXPECT_EQ(sim.tick_expire(51), 16u);
  EXPECT_EQ(sim.live_contexts(), 0u);
}

TEST(Expiry, SessionActiveNeverReclaimed) {
  RanSim sim(RanConfig{});
  LoopbackPort port(sim, 1);
  ASSERT_EQ(attach(port, UeConfig{}, FuzzHook::none()).terminal, UeState::SessionActive);
  EXPECT_EQ(sim.tick_expire(1'000'000), 0u);
  EXPECT_EQ(sim.context(1)->phase, ContextPhase::SessionActive);
  EXPECT_TRUE(sim.release(1, 1'000'001));
  EXPECT_EQ(sim.live_contexts(), 0u);
}

TEST(Properties, CapacitySafetyUnderRandomInterleavings) {
  SplitMix64 rng(31337);
  for (int run = 0; run < 200; ++run) {
    RanConfig cfg;
    cfg.context_capacity = static_cast<unsigned>(rng.below(8));
    cfg.context_expiry_ticks = static_cast<Tick>(rng.below(30));
    RanSim sim(cfg);
    Tick now = 0;
    for (int op = 0; op < 300; ++op) {
      now += static_cast<Tick>(rng.below(3));
      const LinkId link = static_cast<LinkId>(rng.below(12));
      switch (rng.below(4)) {
        case 0:
        case 1: sim.gnb_handle(link, RrcSetupRequest{link, 3}, now); break;
        case 2: sim.gnb_handle(link, RrcSetupComplete{default_frame()}, now); break;
        default: sim.tick_expire(now); break;
      }
      ASSERT_LE(sim.live_contexts(), cfg.context_capacity);
    }
  }
}

TEST(Properties, VerdictFidelity) {
  SplitMix64 rng(8);
  for (int i = 0; i < 2000; ++i) {
    const auto m = plan_random(rng(), 1, 1 + rng.below(4)).front();
    const Frame f = mutate(default_frame(), m);
    RanSim sim(RanConfig{});
    sim.gnb_handle(1, RrcSetupRequest{1, 3}, 0);
    const auto r = sim.gnb_handle(1, RrcSetupComplete{f}, 1);
    const auto expected = validate_setup_complete(f, RanConfig{});
    ASSERT_EQ(r.verdict, expected);
    if (expected.accepted)
      EXPECT_TRUE(std::holds_alternative<AuthenticationRequest>(r.downlink.at(0)));
    else
      EXPECT_EQ(std::get<RegistrationReject>(r.downlink.at(0)).cause, *expected.cause);
  }
}

TEST(Properties, AgentCompleteness) {
  std::vector<AgentEvent> sunk;
  RanSimOptions opts;
  opts.sink = [&](const AgentEvent& e) { sunk.push_back(e); };
  RanSim sim(RanConfig{}, opts);

  auto r = sim.gnb_handle(1, RrcSetupRequest{1, 3}, 0);
  EXPECT_EQ(r.events.size(), 1u);  // context created
  r = sim.gnb_handle(1, RrcSetupComplete{default_frame()}, 1);
  ASSERT_EQ(r.events.size(), 2u);  // gNB verdict + AMF stage change
  EXPECT_EQ(r.events[0].component, Component::GNB);
  EXPECT_EQ(r.events[1].component, Component::AMF);
  const auto rand = std::get<AuthenticationRequest>(r.downlink[0]).rand;
  r = sim.gnb_handle(1, AuthenticationResponse{auth_response(rand, kDefaultSubscriberKey)}, 2);
  EXPECT_EQ(r.events.size(), 2u);
  r = sim.gnb_handle(2, RrcSetupRequest{2, 3}, 3);
  r = sim.gnb_handle(2, RrcSetupComplete{mutate(default_frame(), Mutation{0})}, 4);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].kind, EventKind::ValidationFail);
  EXPECT_EQ(sunk.size(), 7u);

  // Per-agent sequence numbers strictly increase.
  std::uint64_t gnb = 0, amf = 0;
  for (const auto& e : sunk) {
    auto& last = e.agent_id == "gnb" ? gnb : amf;
    EXPECT_GT(e.seq, last);
    last = e.seq;
  }
}

TEST(Properties, BlackBoxSameResponsesNoTelemetry) {
  std::vector<AgentEvent> sunk;
  RanSimOptions black;
  black.white_box = false;
  black.sink = [&](const AgentEvent& e) { sunk.push_back(e); };
  RanSim a(RanConfig{}, black);
  RanSim b(RanConfig{});
  LoopbackPort pa(a, 1), pb(b, 1);
  EXPECT_EQ(attach(pa, UeConfig{}, FuzzHook::none()), attach(pb, UeConfig{}, FuzzHook::none()));
  EXPECT_TRUE(sunk.empty());
}

TEST(LoopbackPort, CaptureOfBaselineAttach) {
  std::vector<CaptureRecord> cap;
  RanSim sim(RanConfig{});
  LoopbackPort port(sim, 1, [&](const CaptureRecord& r) { cap.push_back(r); });
  attach(port, UeConfig{}, FuzzHook::none());
  ASSERT_EQ(cap.size(), 10u);
  std::size_t ul = 0;
  for (const auto& r : cap) {
    ul += r.direction == Direction::UL;
    ASSERT_TRUE(r.decoded.has_value());
    const Frame bytes = Frame::from_hex(r.frame_hex);
    if (r.direction == Direction::UL)
      EXPECT_EQ(encode(uplink_from_json(*r.decoded)), bytes);
    else
      EXPECT_EQ(encode(downlink_from_json(*r.decoded)), bytes);
  }
  EXPECT_EQ(ul, 5u);
  EXPECT_EQ(cap[2].frame_hex, default_frame().hex());
  EXPECT_EQ(cap[2].verdict, ValidationVerdict::accept());
}
