#pragma once

// Operator HTTP API. Campaigns are queued and executed one at a time on a
// background worker; handlers only read snapshots. Live AgentEvent and
// KpiRecord lines are fanned out to every /api/events subscriber as
// server-sent events tagged with the campaign id.

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "soft_tue/report.hpp"
#include "soft_tue/telemetry.hpp"

namespace soft_tue {

enum class CampaignPhase { Queued, Running, Done, Failed };

inline std::string_view to_string(CampaignPhase p) {
  switch (p) {
    case CampaignPhase::Queued: return "Queued";
    case CampaignPhase::Running: return "Running";
    case CampaignPhase::Done: return "Done";
    case CampaignPhase::Failed: return "Failed";
  }
  return "?";
}

struct CampaignStatus {
  std::string id;
  CampaignPhase phase = CampaignPhase::Queued;
  std::size_t completed = 0;
  std::size_t total = 0;
  std::optional<std::string> result_path;
  std::optional<std::string> error;
};

inline Json to_json(const CampaignStatus& s) {
  Json j;
  j["id"] = s.id;
  j["phase"] = std::string(to_string(s.phase));
  j["progress"] = {{"completed", s.completed}, {"total", s.total}};
  j["result_path"] = s.result_path ? Json(*s.result_path) : Json(nullptr);
  if (s.error) j["error"] = *s.error;
  return j;
}

// Trials a manifest will report progress over.
inline std::size_t planned_trials(const RunManifest& m) {
  if (m.campaign.scenario == Scenario::DosFlood) return m.dos ? m.dos->legit_attempts : DosConfig{}.legit_attempts;
  return m.campaign.mode == CampaignMode::Exhaustive ? kSetupCompleteBits : m.campaign.trials;
}

// One SSE message: {"campaign_id", "type", "data"}.
struct StreamMessage {
  std::string event;  // SSE event name: agent | kpi | status
  std::string data;   // single-line JSON
};

inline std::string sse_frame(const StreamMessage& m) { return "event: " + m.event + "\ndata: " + m.data + "\n\n"; }

// Fan-out of stream messages to live subscribers. A slow subscriber loses
// its oldest messages rather than stalling the campaign.
class EventBus {
 public:
  static constexpr std::size_t kMaxBacklog = 1 << 16;

  struct Subscriber {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<StreamMessage> queue;
    bool closed = false;
    std::size_t dropped = 0;
  };

  std::shared_ptr<Subscriber> subscribe() {
    auto s = std::make_shared<Subscriber>();
    std::lock_guard lock(mu_);
    if (closed_) s->closed = true;
    subs_.push_back(s);
    return s;
  }

  void unsubscribe(const std::shared_ptr<Subscriber>& s) {
    std::lock_guard lock(mu_);
    std::erase(subs_, s);
  }

  void publish(const StreamMessage& m) {
    std::lock_guard lock(mu_);
    for (const auto& s : subs_) {
      {
        std::lock_guard sl(s->mu);
        if (s->queue.size() >= kMaxBacklog) {
          s->queue.pop_front();
          ++s->dropped;
        }
        s->queue.push_back(m);
      }
      s->cv.notify_one();
    }
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    for (const auto& s : subs_) {
      {
        std::lock_guard sl(s->mu);
        s->closed = true;
      }
      s->cv.notify_all();
    }
  }

  std::size_t subscribers() const {
    std::lock_guard lock(mu_);
    return subs_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Subscriber>> subs_;
  bool closed_ = false;
};

struct ServiceOptions {
  std::filesystem::path results_root = "soft-tue-results";
  bool white_box = true;
  std::optional<std::string> telemetry;  // remote collector endpoint
  Tick kpi_period_ticks = kLogicalSecondTicks;
};

class Service {
 public:
  explicit Service(ServiceOptions options = {}) : options_(std::move(options)) {
    if (options_.telemetry) uplink_ = std::make_unique<TelemetryUplink>(*options_.telemetry);
    routes();
    worker_ = std::thread([this] { work(); });
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;
  ~Service() { stop(); }

  // Binds (port 0 picks a free one) and serves on a background thread.
  // Returns the bound port.
  int start(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::EndpointBusy, host + ":" + std::to_string(port) + " unavailable");
    port_ = bound;
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    {
      std::lock_guard lock(mu_);
      shutting_down_ = true;
    }
    cv_.notify_all();
    bus_.close();
    server_.stop();
    if (listener_.joinable()) listener_.join();
    if (worker_.joinable()) worker_.join();
  }

  int port() const noexcept { return port_; }
  EventBus& bus() noexcept { return bus_; }

  // Same validation and queuing as POST /api/campaigns.
  std::string submit(RunManifest m) {
    m.normalize_and_validate();
    std::lock_guard lock(mu_);
    const auto id = "c" + std::to_string(++next_id_);
    if (m.output_dir.empty()) m.output_dir = options_.results_root / id;
    CampaignStatus st{id, CampaignPhase::Queued, 0, planned_trials(m), std::nullopt, std::nullopt};
    entries_.emplace(id, Entry{std::move(m), st, Json()});
    queue_.push_back(id);
    cv_.notify_all();
    return id;
  }

  std::optional<CampaignStatus> status(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.status;
  }

  // Blocks until the campaign is Done or Failed (or timeout).
  std::optional<CampaignStatus> wait(const std::string& id, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    done_cv_.wait_for(lock, timeout, [&] {
      const auto it = entries_.find(id);
      return it == entries_.end() || it->second.status.phase == CampaignPhase::Done ||
             it->second.status.phase == CampaignPhase::Failed;
    });
    const auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.status;
  }

 private:
  struct Entry {
    RunManifest manifest;
    CampaignStatus status;
    Json report;  // set once Done
  };

  static void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static Json error_body(const std::string& msg) { return Json{{"error", msg}}; }

  void routes() {
    // No SO_REUSEPORT: a second server on a taken port must fail to bind.
    server_.set_socket_options([](socket_t sock) {
      int one = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    });
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                 {"Access-Control-Allow-Headers", "Content-Type"}});
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server_.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, Json{{"status", "ok"}});
    });

    server_.Post("/api/campaigns", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        auto m = parse_run_manifest(req.body);
        if (!m.output_dir.empty()) prepare_output_dir(m.output_dir);
        reply(res, 202, Json{{"id", submit(std::move(m))}});
      } catch (const Error& e) {
        reply(res, 400, error_body(e.what()));
      }
    });

    server_.Get("/api/campaigns", [this](const httplib::Request&, httplib::Response& res) {
      Json list = Json::array();
      std::lock_guard lock(mu_);
      for (std::size_t i = 1; i <= next_id_; ++i)
        if (auto it = entries_.find("c" + std::to_string(i)); it != entries_.end())
          list.push_back(to_json(it->second.status));
      reply(res, 200, list);
    });

    server_.Get(R"(/api/campaigns/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (const auto st = status(req.matches[1])) return reply(res, 200, to_json(*st));
      reply(res, 404, error_body("unknown campaign"));
    });

    server_.Get(R"(/api/campaigns/([^/]+)/per-bit)", [this](const httplib::Request& req, httplib::Response& res) {
      with_report(req.matches[1], res, [&](const std::string& id, const Json& report) {
        reply(res, 200, Json{{"id", id}, {"per_bit", report["per_bit"]}});
      });
    });

    server_.Get(R"(/api/campaigns/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
      with_report(req.matches[1], res, [&](const std::string&, const Json& report) {
        res.status = 200;
        res.set_content(dump_report(report), "application/json");
      });
    });

    server_.Get("/api/events", [this](const httplib::Request&, httplib::Response& res) {
      auto sub = bus_.subscribe();
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream",
          [sub](std::size_t, httplib::DataSink& sink) {
            std::deque<StreamMessage> batch;
            {
              std::unique_lock lock(sub->mu);
              sub->cv.wait_for(lock, std::chrono::milliseconds(250),
                               [&] { return !sub->queue.empty() || sub->closed; });
              if (sub->closed && sub->queue.empty()) return false;
              batch.swap(sub->queue);
            }
            if (batch.empty()) {
              static constexpr char kKeepAlive[] = ": keep-alive\n\n";
              return sink.write(kKeepAlive, sizeof kKeepAlive - 1);
            }
            for (const auto& m : batch) {
              const auto frame = sse_frame(m);
              if (!sink.write(frame.data(), frame.size())) return false;
            }
            return true;
          },
          [this, sub](bool) { bus_.unsubscribe(sub); });
    });
  }

  template <typename F>
  void with_report(const std::string& id, httplib::Response& res, F&& fn) {
    Json report;
    {
      std::lock_guard lock(mu_);
      const auto it = entries_.find(id);
      if (it == entries_.end()) return reply(res, 404, error_body("unknown campaign"));
      if (it->second.status.phase != CampaignPhase::Done)
        return reply(res, 409, error_body("campaign is " + std::string(to_string(it->second.status.phase))));
      report = it->second.report;
    }
    fn(id, report);
  }

  void publish(const std::string& id, std::string_view type, const Json& data) {
    Json j;
    j["campaign_id"] = id;
    j["type"] = type;
    j["data"] = data;
    std::string event = type == "AgentEvent" ? "agent" : type == "KpiRecord" ? "kpi" : "status";
    bus_.publish({std::move(event), j.dump()});
  }

  void set_status(const std::string& id, const std::function<void(CampaignStatus&)>& f) {
    CampaignStatus copy;
    {
      std::lock_guard lock(mu_);
      f(entries_.at(id).status);
      copy = entries_.at(id).status;
    }
    done_cv_.notify_all();
    publish(id, "CampaignStatus", to_json(copy));
  }

  void work() {
    while (true) {
      std::string id;
      RunManifest manifest;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return shutting_down_ || !queue_.empty(); });
        if (shutting_down_) return;
        id = queue_.front();
        queue_.pop_front();
        manifest = entries_.at(id).manifest;
      }
      set_status(id, [](CampaignStatus& s) { s.phase = CampaignPhase::Running; });
      run_one(id, manifest);
    }
  }

  void run_one(const std::string& id, const RunManifest& manifest) {
    KpiAggregator kpi;
    Tick next_kpi = 0;
    RunHooks hooks;
    hooks.white_box = options_.white_box;
    hooks.on_event = [&](const AgentEvent& e) {
      publish(id, "AgentEvent", to_json(e));
      if (uplink_) {
        try {
          uplink_->send(e);
        } catch (const Error&) {
          // remote collector gone; the local stream carries on
        }
      }
      kpi.observe(e);
      if (e.tick >= next_kpi) {
        publish(id, "KpiRecord", to_json(kpi.snapshot()));
        next_kpi = (e.tick / options_.kpi_period_ticks + 1) * options_.kpi_period_ticks;
      }
    };
    hooks.on_trial = [&](std::size_t index, std::size_t total, const TrialRecord&) {
      set_status(id, [&](CampaignStatus& s) {
        s.completed = index + 1;
        s.total = total;
      });
    };
    try {
      auto art = run_manifest(manifest, hooks);
      publish(id, "KpiRecord", to_json(kpi.snapshot()));
      {
        std::lock_guard lock(mu_);
        entries_.at(id).report = std::move(art.report);
      }
      set_status(id, [&](CampaignStatus& s) {
        s.phase = CampaignPhase::Done;
        s.result_path = art.report_path.string();
      });
    } catch (const std::exception& e) {
      set_status(id, [&](CampaignStatus& s) {
        s.phase = CampaignPhase::Failed;
        s.error = e.what();
      });
    }
  }

  ServiceOptions options_;
  httplib::Server server_;
  EventBus bus_;
  std::unique_ptr<TelemetryUplink> uplink_;
  int port_ = -1;
  std::atomic<bool> stopped_{false};

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::map<std::string, Entry> entries_;
  std::deque<std::string> queue_;
  std::size_t next_id_ = 0;
  bool shutting_down_ = false;

  std::thread worker_;
  std::thread listener_;
};

}  // namespace soft_tue
