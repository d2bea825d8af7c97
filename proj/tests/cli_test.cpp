// Drives the built soft-tue binary end to end.

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "soft_tue/report.hpp"
#include "soft_tue/service.hpp"
#include "soft_tue/telemetry.hpp"

extern char** environ;

using namespace soft_tue;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result soft_tue_cli(const std::string& args) {
  const std::string cmd = std::string(SOFT_TUE_BIN) + " " + args + " 2>&1";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  while (const auto n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "soft_tue_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t count_prefix(const std::string& text, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& l : lines_of(text)) n += l.rfind(prefix, 0) == 0;
  return n;
}

Json load(const fs::path& p) { return Json::parse(read_text(p)); }

// Background soft-tue process; SIGTERM + reap on scope exit.
class Child {
 public:
  explicit Child(std::vector<std::string> args) {
    args.insert(args.begin(), SOFT_TUE_BIN);
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    if (::posix_spawn(&pid_, argv[0], nullptr, nullptr, argv.data(), environ) != 0) pid_ = -1;
  }
  ~Child() {
    if (pid_ > 0) terminate();
  }
  bool running() const { return pid_ > 0; }

  // Returns the exit code, or -1 if it did not exit normally.
  int terminate() {
    ::kill(pid_, SIGTERM);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

 private:
  pid_t pid_ = -1;
};

}  // namespace

TEST(Cli, ExhaustiveRunWritesArtifacts) {
  const auto dir = scratch("exhaustive");
  const auto r = soft_tue_cli("run --scenario fuzz-rrc --exhaustive --seed 42 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"report.json", "per_bit.csv", "events.log", "capture.log"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(count_prefix(r.out, "trial "), 208u);
  EXPECT_GE(count_prefix(r.out, "kpi t="), 1u);
  const auto report = load(dir / "report.json");
  ASSERT_EQ(report["outcomes"].size(), 208u);
  std::size_t zero = 0, hundred = 0;
  for (const auto& e : report["per_bit"]) {
    zero += e["score"] == 0;
    hundred += e["score"] == 100;
  }
  EXPECT_EQ(zero, 148u);
  EXPECT_EQ(hundred, 60u);
}

TEST(Cli, HundredTrialRandomRun) {
  const auto dir = scratch("random");
  const auto r = soft_tue_cli("run --scenario fuzz-rrc --trials 100 --bits-per-trial 1 --seed 7 --quiet --out " +
                              dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(load(dir / "report.json")["outcomes"].size(), 100u);
  EXPECT_EQ(count_prefix(r.out, "trial "), 0u);
}

TEST(Cli, DosRunReportsRate) {
  const auto dir = scratch("dos");
  const auto r = soft_tue_cli("run --scenario dos-flood --flood 64 --legit 10 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto report = load(dir / "report.json");
  ASSERT_TRUE(report["dos"].contains("legit_success_rate"));
  EXPECT_EQ(report["dos"]["flood"], 64);
  EXPECT_EQ(report["outcomes"].size(), 10u);
}

TEST(Cli, RunIsDeterministic) {
  const auto a = scratch("det-a");
  const auto b = scratch("det-b");
  const std::string flags = "run --trials 50 --bits-per-trial 2 --seed 0x2a --cipher --quiet --out ";
  ASSERT_EQ(soft_tue_cli(flags + a.string()).code, 0);
  ASSERT_EQ(soft_tue_cli(flags + b.string()).code, 0);
  for (const char* f : {"report.json", "per_bit.csv", "events.log", "capture.log"})
    EXPECT_EQ(read_text(a / f), read_text(b / f)) << f;
}

TEST(Cli, ManifestFileMatchesFlags) {
  const auto a = scratch("manifest-flags");
  const auto b = scratch("manifest-file");
  ASSERT_EQ(soft_tue_cli("run --trials 30 --seed 5 --quiet --out " + a.string()).code, 0);
  fs::create_directories(b);
  write_text(b / "m.json", R"({"campaign":{"trials":30,"seed":5}})");
  ASSERT_EQ(soft_tue_cli("run --manifest " + (b / "m.json").string() + " --quiet --out " + b.string()).code, 0);
  EXPECT_EQ(read_text(a / "report.json"), read_text(b / "report.json"));
}

TEST(Cli, InvalidFlagsExitTwo) {
  const auto dir = scratch("invalid").string();
  EXPECT_EQ(soft_tue_cli("run --scenario spoof --out " + dir).code, 2);
  EXPECT_EQ(soft_tue_cli("run --bits-per-trial 209 --out " + dir).code, 2);
  EXPECT_EQ(soft_tue_cli("run --trials 0 --out " + dir).code, 2);
  EXPECT_EQ(soft_tue_cli("run --no-such-flag").code, 2);
  EXPECT_EQ(soft_tue_cli("run --plmn-count 0 --out " + dir).code, 2);
  EXPECT_EQ(soft_tue_cli("run --flood 3 --out " + dir).code, 2);
  EXPECT_EQ(soft_tue_cli("run --seed banana --out " + dir).code, 2);
  EXPECT_EQ(soft_tue_cli("run --out /proc/cannot-write-here").code, 2);
  EXPECT_EQ(soft_tue_cli("").code, 2);
  EXPECT_EQ(soft_tue_cli("--help").code, 0);
}

TEST(Cli, OracleDefaultsAndWidenedPlmn) {
  const auto a = scratch("oracle-a");
  const auto b = scratch("oracle-b");
  const auto w = scratch("oracle-wide");
  ASSERT_EQ(soft_tue_cli("oracle --out " + a.string()).code, 0);
  ASSERT_EQ(soft_tue_cli("oracle --out " + b.string()).code, 0);
  EXPECT_EQ(read_text(a / "oracle.json"), read_text(b / "oracle.json"));
  const auto j = load(a / "oracle.json");
  ASSERT_EQ(j["per_bit"].size(), 208u);
  for (const auto& e : j["per_bit"]) EXPECT_TRUE(e["score"] == 0 || e["score"] == 100);

  ASSERT_EQ(soft_tue_cli("oracle --plmn-count 16 --out " + w.string()).code, 0);
  const auto wide = load(w / "oracle.json");
  for (std::size_t b = 12; b < 16; ++b) EXPECT_EQ(wide["per_bit"][b]["score"], 100) << b;
}

TEST(Cli, OracleUnwritableOutputExitOne) {
  EXPECT_EQ(soft_tue_cli("oracle --out /proc/cannot-write-here").code, 1);
}

TEST(Cli, ReportRendering) {
  const auto dir = scratch("render");
  ASSERT_EQ(soft_tue_cli("run --exhaustive --quiet --out " + dir.string()).code, 0);
  const auto first = read_text(dir / "per_bit.csv");
  fs::remove(dir / "per_bit.csv");
  ASSERT_EQ(soft_tue_cli("report " + (dir / "report.json").string()).code, 0);
  const auto csv = read_text(dir / "per_bit.csv");
  EXPECT_EQ(csv, first);
  const auto rows = lines_of(csv);
  ASSERT_EQ(rows.size(), 209u);
  EXPECT_EQ(rows[1], "0,0,0,msg_type,1,0,0");
  ASSERT_EQ(soft_tue_cli("report --in " + (dir / "report.json").string()).code, 0);
  EXPECT_EQ(read_text(dir / "per_bit.csv"), csv);

  EXPECT_EQ(soft_tue_cli("report " + (dir / "missing.json").string()).code, 2);
  write_text(dir / "bad.json", R"({"per_bit":[1,2,3]})");
  EXPECT_EQ(soft_tue_cli("report " + (dir / "bad.json").string()).code, 2);
  write_text(dir / "garbage.json", "not json");
  EXPECT_EQ(soft_tue_cli("report " + (dir / "garbage.json").string()).code, 2);
}

TEST(Cli, SweepWritesEffectCurve) {
  const auto dir = scratch("sweep");
  ASSERT_EQ(soft_tue_cli("run --trials 10 --sweep 0,1,208 --sweep-trials 40 --quiet --out " + dir.string()).code, 0);
  const auto rows = lines_of(read_text(dir / "effect_curve.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1], "0,40,1.0");
  EXPECT_EQ(rows[3], "208,40,0.0");
}

TEST(Cli, TelemetryStreamsToCollector) {
  auto collector = Collector::start("127.0.0.1:0");
  const auto dir = scratch("telemetry");
  const auto r = soft_tue_cli("run --trials 20 --seed 3 --quiet --telemetry " + collector->endpoint().str() +
                              " --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto local = lines_of(read_text(dir / "events.log"));
  ASSERT_TRUE(collector->wait_for(local.size(), 10s));
  collector->stop();
  EXPECT_EQ(collector->persisted(), local.size());
  EXPECT_TRUE(collector->anomalies().empty());
}

TEST(Cli, TelemetryEnvironmentOverridesFlag) {
  auto collector = Collector::start("127.0.0.1:0");
  const auto dir = scratch("telemetry-env");
  ::setenv(kTelemetryEnvVar, collector->endpoint().str().c_str(), 1);
  // The flag points nowhere; the environment wins.
  const auto r = soft_tue_cli("run --trials 5 --quiet --telemetry 127.0.0.1:1 --out " + dir.string());
  ::unsetenv(kTelemetryEnvVar);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto local = lines_of(read_text(dir / "events.log"));
  ASSERT_TRUE(collector->wait_for(local.size(), 10s));
  EXPECT_EQ(collector->persisted(), local.size());
}

TEST(Cli, UnreachableCollectorExitOne) {
  const auto dir = scratch("telemetry-down");
  EXPECT_EQ(soft_tue_cli("run --trials 5 --quiet --telemetry 127.0.0.1:1 --out " + dir.string()).code, 1);
}

TEST(Cli, ServeAnswersAndStopsOnSigterm) {
  // Find a free port, then hand it to the child.
  int port = 0;
  {
    Service probe;
    port = probe.start("127.0.0.1", 0);
  }
  const auto results = scratch("serve");
  Child child({"serve", "--port", std::to_string(port), "--out", results.string()});
  ASSERT_TRUE(child.running());

  httplib::Client client("127.0.0.1", port);
  httplib::Result health;
  for (int i = 0; i < 100 && !(health = client.Get("/api/health")); ++i) std::this_thread::sleep_for(20ms);
  ASSERT_TRUE(health);
  EXPECT_EQ(Json::parse(health->body)["status"], "ok");

  const auto posted = client.Post("/api/campaigns", R"({"campaign":{"mode":"Exhaustive"}})", "application/json");
  ASSERT_TRUE(posted);
  ASSERT_EQ(posted->status, 202);
  const auto id = Json::parse(posted->body)["id"].get<std::string>();
  Json st;
  for (int i = 0; i < 500; ++i) {
    st = Json::parse(client.Get("/api/campaigns/" + id)->body);
    if (st["phase"] == "Done") break;
    std::this_thread::sleep_for(10ms);
  }
  EXPECT_EQ(st["phase"], "Done");

  // CLI and API produce the same report.json for the same manifest.
  const auto cli_dir = scratch("serve-cli");
  ASSERT_EQ(soft_tue_cli("run --exhaustive --quiet --out " + cli_dir.string()).code, 0);
  EXPECT_EQ(read_text(st["result_path"].get<std::string>()), read_text(cli_dir / "report.json"));

  EXPECT_EQ(child.terminate(), 0);
}

TEST(Cli, CollectSubcommand) {
  int port = 0;
  {
    auto probe = Collector::start("127.0.0.1:0");
    port = probe->endpoint().port;
  }
  const auto dir = scratch("collect");
  Child child({"collect", "--listen", "127.0.0.1:" + std::to_string(port), "--out", dir.string()});
  ASSERT_TRUE(child.running());

  std::unique_ptr<AgentClient> client;
  for (int i = 0; i < 100 && !client; ++i) {
    try {
      client = std::make_unique<AgentClient>("127.0.0.1:" + std::to_string(port));
    } catch (const Error&) {
      std::this_thread::sleep_for(20ms);
    }
  }
  ASSERT_TRUE(client);
  Agent agent("ue", Component::UE, client->sink());
  for (int i = 0; i < 25; ++i) agent.emit(EventKind::MsgTx, i, {{"bytes", "2"}});
  client->send_line("garbage");
  client->close();
  std::this_thread::sleep_for(200ms);

  EXPECT_EQ(child.terminate(), 0);
  EXPECT_EQ(lines_of(read_text(dir / "events.log")).size(), 25u);
  EXPECT_EQ(lines_of(read_text(dir / "anomalies.log")).size(), 1u);
}
