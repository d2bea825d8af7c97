#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "soft_tue/fuzz.hpp"
#include "soft_tue/telemetry.hpp"

using namespace soft_tue;
using namespace std::chrono_literals;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "soft_tue_telemetry_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Endpoint, Parse) {
  EXPECT_EQ(parse_endpoint("127.0.0.1:9000").port, 9000);
  EXPECT_EQ(parse_endpoint(":0").port, 0);
  EXPECT_EQ(parse_endpoint("localhost:12").host, "127.0.0.1");
  EXPECT_EQ(parse_endpoint("4242").port, 4242);
  EXPECT_THROW(parse_endpoint("host:abc"), Error);
  EXPECT_THROW(parse_endpoint("host:70000"), Error);
}

TEST(Collector, ThreeAgentsFiveEventsEach) {
  const auto log = scratch("three.log");
  auto collector = Collector::start("127.0.0.1:0", {log, {}, {}});
  {
    std::vector<std::thread> agents;
    for (int a = 0; a < 3; ++a)
      agents.emplace_back([&, a] {
        AgentClient client(collector->endpoint().str());
        Agent agent("agent" + std::to_string(a), Component::UE, client.sink());
        for (int i = 0; i < 5; ++i) agent.emit(EventKind::Kpi, i);
      });
    for (auto& t : agents) t.join();
  }
  ASSERT_TRUE(collector->wait_for(15, 5s));
  collector->stop();
  const auto lines = read_lines(log);
  ASSERT_EQ(lines.size(), 15u);
  std::map<std::string, std::uint64_t> last;
  for (const auto& l : lines) {
    const auto e = parse_agent_event(l);
    ASSERT_TRUE(e.has_value()) << l;
    EXPECT_EQ(e->seq, last[e->agent_id] + 1);
    last[e->agent_id] = e->seq;
  }
  EXPECT_EQ(last.size(), 3u);
  EXPECT_TRUE(collector->anomalies().empty());
}

TEST(Collector, SequenceGapFlaggedAndPersisted) {
  const auto log = scratch("gap.log");
  const auto anomalies = scratch("gap.anomalies");
  auto collector = Collector::start(":0", {log, anomalies, {}});
  {
    AgentClient client(collector->endpoint().str());
    for (std::uint64_t seq : {1, 2, 4, 3})
      client.send(AgentEvent{"gnb", seq, 0, Component::GNB, EventKind::MsgRx, {}});
  }
  ASSERT_TRUE(collector->wait_for(4, 5s));
  collector->stop();
  EXPECT_EQ(read_lines(log).size(), 4u);
  const auto found = collector->anomalies();
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].kind, "SequenceGap");
  EXPECT_EQ(found[0].expected, 3u);
  EXPECT_EQ(found[0].got, 4u);
  EXPECT_EQ(found[1].kind, "OutOfOrder");
  EXPECT_EQ(read_lines(anomalies).size(), 2u);
}

TEST(Collector, MalformedLineCountedNotPersisted) {
  const auto log = scratch("malformed.log");
  auto collector = Collector::start(":0", {log, {}, {}});
  {
    AgentClient client(collector->endpoint().str());
    client.send_line("{not json");
    client.send_line(R"({"agent_id":"x","seq":1})");
    client.send(AgentEvent{"x", 1, 0, Component::UE, EventKind::Kpi, {}});
  }
  ASSERT_TRUE(collector->wait_for(3, 5s));
  collector->stop();
  EXPECT_EQ(collector->malformed(), 2u);
  EXPECT_EQ(collector->persisted(), 1u);
  EXPECT_EQ(read_lines(log).size(), 1u);
}

TEST(Collector, ZeroAgentsEmptyLog) {
  const auto log = scratch("empty.log");
  auto collector = Collector::start(":0", {log, {}, {}});
  std::this_thread::sleep_for(50ms);
  collector->stop();
  ASSERT_TRUE(std::filesystem::exists(log));
  EXPECT_EQ(std::filesystem::file_size(log), 0u);
  EXPECT_EQ(collector->persisted(), 0u);
}

TEST(Collector, EndpointBusy) {
  auto first = Collector::start(":0");
  try {
    Collector::start(first->endpoint().str());
    FAIL() << "second bind succeeded";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EndpointBusy);
  }
}

TEST(Collector, PartialTrailingLineDelivered) {
  auto collector = Collector::start(":0");
  {
    AgentClient client(collector->endpoint().str());
    client.send_bytes(to_line(AgentEvent{"a", 1, 0, Component::UE, EventKind::Kpi, {}}));
  }
  collector->stop();
  EXPECT_EQ(collector->persisted(), 1u);
}

TEST(Collector, KpiSnapshotBeforeAndAfterBaseline) {
  auto collector = Collector::start(":0");
  const auto before = collector->snapshot();
  EXPECT_EQ(before.ul_bytes, 0u);
  EXPECT_EQ(before.dl_bytes, 0u);
  EXPECT_EQ(before.connection_status, "Idle");

  TelemetryUplink uplink(collector->endpoint().str());
  CampaignObserver obs;
  obs.on_event = [&](const AgentEvent& e) { uplink.send(e); };
  CampaignAgents agents(&obs);
  RanSim sim(RanConfig{}, detail::trial_ran_options(UeConfig{}, false, 0, 0, &agents));
  LoopbackPort port(sim, 1);
  const auto outcome = attach(port, UeConfig{}, FuzzHook::none(), &agents.ue);
  ASSERT_EQ(outcome.terminal, UeState::SessionActive);

  const auto expected = agents.ue.last_seq() + agents.gnb.last_seq() + agents.amf.last_seq();
  ASSERT_TRUE(collector->wait_for(expected, 5s));
  const auto after = collector->snapshot();
  EXPECT_EQ(after.ul_bytes, 44u);
  EXPECT_EQ(after.dl_bytes, 16u);
  EXPECT_EQ(after.connection_status, "SessionActive");
  EXPECT_TRUE(collector->anomalies().empty());
}

TEST(Collector, LiveCallbackSeesEveryRecord) {
  std::atomic<int> seen{0};
  auto collector = Collector::start(":0", {{}, {}, [&](const AgentEvent&) { ++seen; }});
  {
    AgentClient client(collector->endpoint().str());
    Agent agent("ue", Component::UE, client.sink());
    for (int i = 0; i < 20; ++i) agent.emit(EventKind::MsgTx, i, {{"bytes", "1"}});
  }
  ASSERT_TRUE(collector->wait_for(20, 5s));
  EXPECT_EQ(seen.load(), 20);
}

TEST(Capture, BaselineExportTenRecords) {
  CaptureBuffer buf;
  RanSim sim(RanConfig{});
  LoopbackPort port(sim, 1, buf.sink());
  attach(port, UeConfig{}, FuzzHook::none());
  const auto path = scratch("baseline.capture");
  EXPECT_EQ(buf.export_capture(path), 10u);
  const auto lines = read_lines(path);
  ASSERT_EQ(lines.size(), 10u);
  for (const auto& l : lines) {
    const auto r = capture_record_from_json(Json::parse(l));
    EXPECT_TRUE(r.decoded.has_value());
  }
}

TEST(Capture, MutatedFrameShowsFlippedBits) {
  CaptureBuffer buf;
  RanSim sim(RanConfig{});
  LoopbackPort port(sim, 1, buf.sink());
  const Mutation m{0, 200};
  attach(port, UeConfig{}, FuzzHook::rrc_setup_complete(m));
  const auto path = scratch("mutated.capture");
  buf.export_capture(path);
  const auto records = buf.records();
  const Frame clean = encode_setup_complete(ue_setup_complete_fields(UeConfig{}, 1));
  const auto it = std::find_if(records.begin(), records.end(), [](const CaptureRecord& r) {
    return r.direction == Direction::UL && r.frame_hex.size() == 2 * kSetupCompleteBytes;
  });
  ASSERT_NE(it, records.end());
  const Frame seen = Frame::from_hex(it->frame_hex);
  std::vector<std::size_t> diff;
  for (std::size_t b = 0; b < kSetupCompleteBits; ++b)
    if (seen.bit(b) != clean.bit(b)) diff.push_back(b);
  EXPECT_EQ(diff, (std::vector<std::size_t>{0, 200}));
  EXPECT_EQ(it->verdict, ValidationVerdict::reject(RejectCause::BadMsgType));
}

TEST(Capture, EmptyExport) {
  CaptureBuffer buf;
  const auto path = scratch("empty.capture");
  EXPECT_EQ(buf.export_capture(path), 0u);
  EXPECT_EQ(std::filesystem::file_size(path), 0u);
}

TEST(Capture, UnwritablePath) {
  CaptureBuffer buf;
  try {
    buf.export_capture("/nonexistent-dir/x/capture.log");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IoFailure);
  }
}

TEST(Env, VariableOverridesFlag) {
  ::unsetenv(kTelemetryEnvVar);
  EXPECT_EQ(resolve_telemetry_endpoint(std::string("a:1")), "a:1");
  EXPECT_FALSE(resolve_telemetry_endpoint(std::nullopt).has_value());
  ::setenv(kTelemetryEnvVar, "b:2", 1);
  EXPECT_EQ(resolve_telemetry_endpoint(std::string("a:1")), "b:2");
  ::unsetenv(kTelemetryEnvVar);
}
