// soft-tue: run | oracle | report | serve | collect

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "soft_tue/soft_tue.hpp"

using namespace soft_tue;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

void install_signal_handlers() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

struct RunFlags {
  std::optional<std::string> manifest;
  std::string scenario = "fuzz-rrc";
  std::size_t trials = 100;
  std::size_t bits_per_trial = 1;
  bool exhaustive = false;
  std::string seed = "0";
  bool cipher = false;
  std::size_t flood = 64;
  std::size_t legit = 10;
  std::string interleave = "FloodFirst";
  unsigned capacity = 16;
  unsigned plmn_count = 2;
  Tick expiry = 50;
  std::vector<std::size_t> sweep;
  std::size_t sweep_trials = 100;
  std::string out = "soft-tue-out";
  std::optional<std::string> telemetry;
  bool black_box = false;
  bool quiet = false;
};

std::uint64_t parse_seed(const std::string& s) { return json_u64(Json(s)); }

// Flags override the manifest only where given on the command line.
RunManifest build_manifest(const RunFlags& f, const CLI::App& cmd) {
  RunManifest m;
  if (f.manifest) m = parse_run_manifest(read_text(*f.manifest));
  auto given = [&](const char* name) { return cmd.count(name) > 0; };

  if (given("--scenario") || !f.manifest) m.campaign.scenario = scenario_from_string(f.scenario);
  if (f.exhaustive) {
    const auto seed = m.campaign.seed;
    const auto cipher = m.campaign.cipher_enabled;
    m.campaign = CampaignConfig::exhaustive(seed);
    m.campaign.cipher_enabled = cipher;
  } else {
    if (given("--trials") || !f.manifest) m.campaign.trials = f.trials;
    if (given("--bits-per-trial") || !f.manifest) m.campaign.bits_per_trial = f.bits_per_trial;
  }
  if (given("--seed") || !f.manifest) m.campaign.seed = parse_seed(f.seed);
  if (f.cipher) m.campaign.cipher_enabled = true;
  if (given("--capacity")) m.ran.context_capacity = f.capacity;
  if (given("--plmn-count")) m.ran.plmn_count = f.plmn_count;
  if (given("--expiry")) m.ran.context_expiry_ticks = f.expiry;

  if (m.campaign.scenario == Scenario::DosFlood) {
    DosConfig d = m.dos.value_or(DosConfig{});
    if (given("--flood") || !m.dos) d.flood_count = f.flood;
    if (given("--legit") || !m.dos) d.legit_attempts = f.legit;
    if (given("--interleave") || !m.dos) d.interleave = interleave_from_string(f.interleave);
    if (given("--seed") || !m.dos) d.seed = m.campaign.seed;
    m.dos = d;
  } else if (given("--flood") || given("--legit") || given("--interleave")) {
    throw Error(Errc::InvalidConfig, "--flood/--legit/--interleave need --scenario dos-flood");
  }
  if (!f.sweep.empty()) m.sweep = SweepConfig{f.sweep, f.sweep_trials};
  if (given("--out") || m.output_dir.empty()) m.output_dir = f.out;
  m.normalize_and_validate();
  return m;
}

std::string bits_str(const Mutation& m) {
  std::string s = "[";
  for (std::size_t i = 0; i < m.bits().size(); ++i) s += (i ? "," : "") + std::to_string(m.bits()[i]);
  return s + "]";
}

int cmd_run(const RunFlags& f, const CLI::App& cmd) {
  RunManifest m;
  try {
    m = build_manifest(f, cmd);
    prepare_output_dir(m.output_dir);
  } catch (const Error& e) {
    std::cerr << "soft-tue run: " << e.what() << "\n";
    return kExitInvalid;
  }

  std::unique_ptr<TelemetryUplink> uplink;
  if (const auto ep = resolve_telemetry_endpoint(f.telemetry)) uplink = std::make_unique<TelemetryUplink>(*ep);

  KpiAggregator kpi;
  Tick next_kpi = kLogicalSecondTicks;
  RunHooks hooks;
  hooks.white_box = !f.black_box;
  hooks.on_event = [&](const AgentEvent& e) {
    if (uplink) uplink->send(e);
    kpi.observe(e);
    while (e.tick >= next_kpi) {
      if (!f.quiet) std::cout << "kpi t=" << next_kpi << " " << to_json(kpi.snapshot()).dump() << "\n";
      next_kpi += kLogicalSecondTicks;
    }
  };
  hooks.on_trial = [&](std::size_t i, std::size_t total, const TrialRecord& t) {
    if (f.quiet) return;
    std::cout << "trial " << i + 1 << "/" << total << " bits=" << bits_str(t.mutation)
              << " terminal=" << to_string(t.outcome.terminal);
    if (t.outcome.cause) std::cout << " cause=" << to_string(*t.outcome.cause);
    std::cout << "\n";
  };

  const auto art = run_manifest(m, hooks);
  if (!f.quiet) std::cout << "kpi final " << to_json(kpi.snapshot()).dump() << "\n";
  std::size_t ok = 0;
  for (const auto& o : art.report["outcomes"]) ok += o["terminal"] == "SessionActive";
  std::cout << "done outcomes=" << art.report["outcomes"].size() << " session_active=" << ok;
  if (art.report.contains("dos")) std::cout << " legit_success_rate=" << art.report["dos"]["legit_success_rate"].dump();
  std::cout << " events=" << art.events << " captures=" << art.captures << " report=" << art.report_path.string()
            << "\n";
  return kExitOk;
}

int cmd_oracle(const std::optional<std::string>& manifest, unsigned plmn_count, bool plmn_given,
               const std::string& out) {
  RanConfig ran;
  UeConfig ue;
  try {
    if (manifest) {
      const auto m = parse_run_manifest(read_text(*manifest));
      ran = m.ran;
      ue = m.ue;
    }
    if (plmn_given) ran.plmn_count = plmn_count;
    ran.validate();
  } catch (const Error& e) {
    std::cerr << "soft-tue oracle: " << e.what() << "\n";
    return e.code() == Errc::IoFailure ? kExitFailure : kExitInvalid;
  }
  prepare_output_dir(out);
  const auto path = std::filesystem::path(out) / "oracle.json";
  write_text(path, oracle_json(ran, ue).dump(2) + "\n");
  std::cout << "oracle " << path.string() << "\n";
  return kExitOk;
}

int cmd_report(const std::string& in, const std::optional<std::string>& out) {
  Json report;
  try {
    report = Json::parse(read_text(in));
    check_report(report);
  } catch (const std::exception& e) {
    std::cerr << "soft-tue report: " << in << ": " << e.what() << "\n";
    return kExitInvalid;
  }
  const std::filesystem::path dir = out ? std::filesystem::path(*out) : std::filesystem::path(in).parent_path();
  prepare_output_dir(dir.empty() ? "." : dir);
  for (const auto& p : render_report_files(report, dir.empty() ? "." : dir)) std::cout << "wrote " << p.string() << "\n";
  return kExitOk;
}

int cmd_serve(const std::string& host, int port, const std::string& out, const std::optional<std::string>& telemetry,
              bool black_box) {
  ServiceOptions opts;
  opts.results_root = out;
  opts.white_box = !black_box;
  opts.telemetry = resolve_telemetry_endpoint(telemetry);
  Service service(opts);
  install_signal_handlers();
  const int bound = service.start(host, port);
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  return kExitOk;
}

int cmd_collect(const std::string& listen, const std::string& out, double duration) {
  prepare_output_dir(out);
  CollectorOptions opts;
  opts.event_log = std::filesystem::path(out) / "events.log";
  opts.anomaly_log = std::filesystem::path(out) / "anomalies.log";
  auto collector = Collector::start(listen, opts);
  install_signal_handlers();
  std::cout << "collecting on " << collector->endpoint().str() << std::endl;
  const auto t0 = std::chrono::steady_clock::now();
  auto last = t0;
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    const auto now = std::chrono::steady_clock::now();
    if (duration > 0 && std::chrono::duration<double>(now - t0).count() >= duration) break;
    if (now - last >= std::chrono::seconds(1)) {
      std::cout << "kpi " << to_json(collector->snapshot()).dump() << std::endl;
      last = now;
    }
  }
  collector->stop();
  std::cout << "persisted=" << collector->persisted() << " malformed=" << collector->malformed()
            << " anomalies=" << collector->anomalies().size() << std::endl;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft tester UE: bit-level RRC fuzzing and DoS campaigns against a simulated RAN"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "soft-tue 1.0.0");

  RunFlags rf;
  auto* run = app.add_subcommand("run", "execute a campaign and write report files");
  run->add_option("--manifest", rf.manifest, "RunManifest JSON file (flags override)");
  run->add_option("--scenario", rf.scenario, "fuzz-rrc | dos-flood")
      ->check(CLI::IsMember({"fuzz-rrc", "dos-flood"}));
  run->add_option("--trials", rf.trials, "random-mode trial count")->check(CLI::Range(std::size_t{1}, std::size_t{10'000'000}));
  run->add_option("--bits-per-trial", rf.bits_per_trial, "bits flipped per trial (0..208)");
  run->add_flag("--exhaustive", rf.exhaustive, "flip each of the 208 bits once");
  run->add_option("--seed", rf.seed, "64-bit seed (decimal or 0x hex)");
  run->add_flag("--cipher", rf.cipher, "enable the XOR keystream");
  run->add_option("--flood", rf.flood, "dos-flood: flood request count");
  run->add_option("--legit", rf.legit, "dos-flood: legitimate attaches")->check(CLI::PositiveNumber);
  run->add_option("--interleave", rf.interleave, "dos-flood: FloodFirst | Mixed")
      ->check(CLI::IsMember({"FloodFirst", "Mixed", "flood-first", "mixed"}));
  run->add_option("--capacity", rf.capacity, "gNB context capacity");
  run->add_option("--plmn-count", rf.plmn_count, "number of valid PLMN indices (1..16)");
  run->add_option("--expiry", rf.expiry, "gNB context expiry in ticks")->check(CLI::NonNegativeNumber);
  run->add_option("--sweep", rf.sweep, "k values for an effect curve")->delimiter(',');
  run->add_option("--sweep-trials", rf.sweep_trials, "trials per k in the sweep");
  run->add_option("--out", rf.out, "output directory");
  run->add_option("--telemetry", rf.telemetry, "stream events to a collector at host:port");
  run->add_flag("--black-box", rf.black_box, "disconnect the gNB/AMF agents");
  run->add_flag("--quiet", rf.quiet, "only print the final summary");

  std::optional<std::string> oracle_manifest;
  unsigned oracle_plmn = 2;
  std::string oracle_out = ".";
  auto* oracle = app.add_subcommand("oracle", "write the rule-table prediction as oracle.json");
  oracle->add_option("--manifest", oracle_manifest, "take RanConfig/UeConfig from a manifest");
  auto* plmn_opt = oracle->add_option("--plmn-count", oracle_plmn, "number of valid PLMN indices (1..16)");
  oracle->add_option("--out", oracle_out, "output directory");

  std::string report_in;
  std::optional<std::string> report_out;
  auto* report = app.add_subcommand("report", "render per_bit.csv / effect_curve.csv from report.json");
  report->add_option("in,--in", report_in, "report.json")->required();
  report->add_option("--out", report_out, "output directory (default: next to the report)");

  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::string serve_out = "soft-tue-results";
  std::optional<std::string> serve_telemetry;
  bool serve_black_box = false;
  auto* serve = app.add_subcommand("serve", "operator HTTP API");
  serve->add_option("--port", serve_port, "TCP port (0 = any free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", serve_host, "bind address");
  serve->add_option("--out", serve_out, "results root for campaigns without output_dir");
  serve->add_option("--telemetry", serve_telemetry, "also stream events to a collector at host:port");
  serve->add_flag("--black-box", serve_black_box, "disconnect the gNB/AMF agents");

  std::string collect_listen = "127.0.0.1:7600";
  std::string collect_out = ".";
  double collect_duration = 0;
  auto* collect = app.add_subcommand("collect", "standalone telemetry collector");
  collect->add_option("--listen", collect_listen, "host:port to listen on");
  collect->add_option("--out", collect_out, "directory for events.log and anomalies.log");
  collect->add_option("--duration", collect_duration, "seconds to run (0 = until SIGINT)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*run) return cmd_run(rf, *run);
    if (*oracle) return cmd_oracle(oracle_manifest, oracle_plmn, plmn_opt->count() > 0, oracle_out);
    if (*report) return cmd_report(report_in, report_out);
    if (*serve) return cmd_serve(serve_host, serve_port, serve_out, serve_telemetry, serve_black_box);
    if (*collect) return cmd_collect(collect_listen, collect_out, collect_duration);
  } catch (const Error& e) {
    std::cerr << "soft-tue: " << e.what() << "\n";
    return e.code() == Errc::InvalidConfig || e.code() == Errc::InvalidK ? kExitInvalid : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "soft-tue: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
