#pragma once

// Client-server telemetry: agents stream newline-delimited AgentEvent
// records over local TCP to a collector that persists them, checks
// per-agent sequence continuity and keeps a live KPI snapshot. Also the
// capture buffer behind capture.log.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "soft_tue/error.hpp"
#include "soft_tue/events.hpp"

namespace soft_tue {

inline constexpr const char* kTelemetryEnvVar = "SOFT_TUE_TELEMETRY_ADDR";

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

// "host:port", ":port" or "port".
inline Endpoint parse_endpoint(const std::string& s) {
  Endpoint ep;
  const auto colon = s.rfind(':');
  std::string port = colon == std::string::npos ? s : s.substr(colon + 1);
  if (colon != std::string::npos && colon > 0) ep.host = s.substr(0, colon);
  if (ep.host == "localhost") ep.host = "127.0.0.1";
  try {
    std::size_t used = 0;
    const auto v = std::stoul(port, &used);
    if (used != port.size() || v > 65535) throw std::out_of_range(port);
    ep.port = static_cast<std::uint16_t>(v);
  } catch (const std::exception&) {
    throw Error(Errc::InvalidConfig, "bad telemetry endpoint '" + s + "'");
  }
  return ep;
}

// The environment variable wins over the flag value.
inline std::optional<std::string> resolve_telemetry_endpoint(const std::optional<std::string>& flag) {
  if (const char* env = std::getenv(kTelemetryEnvVar); env && *env) return std::string(env);
  return flag;
}

namespace detail {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline sockaddr_in to_sockaddr(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1)
    throw Error(Errc::InvalidConfig, "bad telemetry host " + ep.host);
  return addr;
}

inline bool send_all(int fd, const char* data, std::size_t len) {
  while (len > 0) {
    const auto n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace detail

struct Anomaly {
  std::string kind;  // SequenceGap, OutOfOrder, Malformed
  std::string agent_id;
  std::uint64_t expected = 0;
  std::uint64_t got = 0;
  std::string line;
};

inline Json to_json(const Anomaly& a) {
  Json j;
  j["kind"] = a.kind;
  j["agent_id"] = a.agent_id;
  j["expected"] = a.expected;
  j["got"] = a.got;
  if (!a.line.empty()) j["line"] = a.line;
  return j;
}

struct CollectorOptions {
  std::filesystem::path event_log;    // empty: keep nothing on disk
  std::filesystem::path anomaly_log;  // empty: anomalies kept in memory only
  EventSink on_record;                // called from the consumer thread
};

// Many producers (one connection per agent), one consumer that serializes
// to the event log in arrival order.
class Collector {
 public:
  static std::unique_ptr<Collector> start(const std::string& endpoint, CollectorOptions options = {}) {
    return std::unique_ptr<Collector>(new Collector(parse_endpoint(endpoint), std::move(options)));
  }

  Collector(const Collector&) = delete;
  Collector& operator=(const Collector&) = delete;
  ~Collector() { stop(); }

  const Endpoint& endpoint() const noexcept { return endpoint_; }

  KpiRecord snapshot() const {
    std::lock_guard lock(state_mu_);
    return kpi_.snapshot();
  }

  std::size_t received() const noexcept { return received_.load(); }
  std::size_t persisted() const noexcept { return persisted_.load(); }
  std::size_t malformed() const noexcept { return malformed_.load(); }

  std::vector<Anomaly> anomalies() const {
    std::lock_guard lock(state_mu_);
    return anomalies_;
  }

  // Blocks until at least `lines` records were processed or timeout.
  bool wait_for(std::size_t lines, std::chrono::milliseconds timeout) {
    std::unique_lock lock(state_mu_);
    return processed_cv_.wait_for(lock, timeout, [&] { return persisted_ + malformed_ >= lines; });
  }

  // Stops accepting, drains every open connection, then flushes the log.
  void stop() {
    if (stopped_.exchange(true)) return;
    stopping_ = true;
    if (acceptor_.joinable()) acceptor_.join();
    {
      std::lock_guard lock(conn_mu_);
      for (auto& t : readers_)
        if (t.joinable()) t.join();
    }
    {
      std::lock_guard lock(queue_mu_);
      queue_closed_ = true;
    }
    queue_cv_.notify_all();
    if (consumer_.joinable()) consumer_.join();
    listener_.reset();
  }

 private:
  Collector(Endpoint ep, CollectorOptions options) : endpoint_(std::move(ep)), options_(std::move(options)) {
    listener_ = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!listener_) throw Error(Errc::IoFailure, std::strerror(errno));
    int one = 1;
    ::setsockopt(listener_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    auto addr = detail::to_sockaddr(endpoint_);
    if (::bind(listener_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      const int err = errno;
      throw Error(err == EADDRINUSE ? Errc::EndpointBusy : Errc::IoFailure,
                  endpoint_.str() + ": " + std::strerror(err));
    }
    if (::listen(listener_.get(), 64) != 0) throw Error(Errc::IoFailure, std::strerror(errno));
    socklen_t len = sizeof addr;
    ::getsockname(listener_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    endpoint_.port = ntohs(addr.sin_port);

    if (!options_.event_log.empty()) {
      log_.open(options_.event_log, std::ios::out | std::ios::trunc);
      if (!log_) throw Error(Errc::IoFailure, "cannot open " + options_.event_log.string());
    }
    if (!options_.anomaly_log.empty()) {
      anomaly_log_.open(options_.anomaly_log, std::ios::out | std::ios::trunc);
      if (!anomaly_log_) throw Error(Errc::IoFailure, "cannot open " + options_.anomaly_log.string());
    }
    consumer_ = std::thread([this] { consume(); });
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  // After stop is requested, connections still queued in the backlog are
  // accepted and drained too.
  void accept_loop() {
    while (true) {
      const bool last_pass = stopping_;
      pollfd p{listener_.get(), POLLIN, 0};
      if (::poll(&p, 1, last_pass ? 0 : 20) <= 0) {
        if (last_pass) break;
        continue;
      }
      detail::Fd conn(::accept(listener_.get(), nullptr, nullptr));
      if (!conn) continue;
      std::lock_guard lock(conn_mu_);
      readers_.emplace_back([this, fd = std::move(conn)]() mutable { read_loop(std::move(fd)); });
    }
  }

  // Exits on EOF, or once stopping and the socket has gone quiet.
  void read_loop(detail::Fd fd) {
    std::string buf;
    char chunk[4096];
    while (true) {
      pollfd p{fd.get(), POLLIN, 0};
      const int ready = ::poll(&p, 1, 20);
      if (ready == 0) {
        if (stopping_) break;
        continue;
      }
      if (ready < 0) {
        if (errno == EINTR) continue;
        break;
      }
      const auto n = ::recv(fd.get(), chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0;
      for (auto nl = buf.find('\n', start); nl != std::string::npos; nl = buf.find('\n', start)) {
        push(buf.substr(start, nl - start));
        start = nl + 1;
      }
      buf.erase(0, start);
    }
    if (!buf.empty()) push(std::move(buf));
  }

  void push(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) return;
    ++received_;
    {
      std::lock_guard lock(queue_mu_);
      queue_.push_back(std::move(line));
    }
    queue_cv_.notify_one();
  }

  void consume() {
    while (true) {
      std::string line;
      {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [&] { return !queue_.empty() || queue_closed_; });
        if (queue_.empty()) break;
        line = std::move(queue_.front());
        queue_.pop_front();
      }
      process(line);
    }
    if (log_.is_open()) log_.flush();
    if (anomaly_log_.is_open()) anomaly_log_.flush();
  }

  void process(const std::string& line) {
    const auto event = parse_agent_event(line);
    std::lock_guard lock(state_mu_);
    if (!event) {
      record_anomaly({"Malformed", "", 0, 0, line});
      ++malformed_;
    } else {
      auto [it, fresh] = last_seq_.try_emplace(event->agent_id, event->seq);
      if (!fresh) {
        const auto expected = it->second + 1;
        if (event->seq < expected)
          record_anomaly({"OutOfOrder", event->agent_id, expected, event->seq, {}});
        else if (event->seq > expected)
          record_anomaly({"SequenceGap", event->agent_id, expected, event->seq, {}});
        it->second = std::max(it->second, event->seq);
      }
      if (log_.is_open()) log_ << to_line(*event) << '\n';
      kpi_.observe(*event);
      ++persisted_;
      if (options_.on_record) options_.on_record(*event);
    }
    processed_cv_.notify_all();
  }

  void record_anomaly(Anomaly a) {
    if (anomaly_log_.is_open()) anomaly_log_ << to_json(a).dump() << '\n';
    anomalies_.push_back(std::move(a));
  }

  Endpoint endpoint_;
  CollectorOptions options_;
  detail::Fd listener_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> stopped_{false};

  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<std::thread> readers_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::string> queue_;
  bool queue_closed_ = false;
  std::thread consumer_;

  mutable std::mutex state_mu_;
  std::condition_variable processed_cv_;
  std::ofstream log_;
  std::ofstream anomaly_log_;
  KpiAggregator kpi_;
  std::map<std::string, std::uint64_t> last_seq_;
  std::vector<Anomaly> anomalies_;
  std::atomic<std::size_t> received_{0};
  std::atomic<std::size_t> persisted_{0};
  std::atomic<std::size_t> malformed_{0};
};

inline std::unique_ptr<Collector> collector_start(const std::string& endpoint, CollectorOptions options = {}) {
  return Collector::start(endpoint, std::move(options));
}

// One agent's stream to a collector.
class AgentClient {
 public:
  explicit AgentClient(const std::string& endpoint) {
    const auto ep = parse_endpoint(endpoint);
    fd_ = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!fd_) throw Error(Errc::IoFailure, std::strerror(errno));
    auto addr = detail::to_sockaddr(ep);
    if (::connect(fd_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw Error(Errc::IoFailure, "connect " + ep.str() + ": " + std::strerror(errno));
  }

  void send(const AgentEvent& e) { send_line(to_line(e)); }

  void send_line(std::string line) {
    line.push_back('\n');
    send_bytes(line);
  }

  void send_bytes(std::string_view data) {
    std::lock_guard lock(mu_);
    if (!detail::send_all(fd_.get(), data.data(), data.size()))
      throw Error(Errc::IoFailure, std::string("telemetry send: ") + std::strerror(errno));
  }

  EventSink sink() {
    return [this](const AgentEvent& e) { send(e); };
  }

  void close() {
    std::lock_guard lock(mu_);
    fd_.reset();
  }

 private:
  std::mutex mu_;
  detail::Fd fd_;
};

// Routes each agent id to its own connection, as the in-process agents
// would if they were separate processes.
class TelemetryUplink {
 public:
  explicit TelemetryUplink(std::string endpoint) : endpoint_(std::move(endpoint)) {}

  void send(const AgentEvent& e) {
    std::lock_guard lock(mu_);
    auto it = clients_.find(e.agent_id);
    if (it == clients_.end()) it = clients_.emplace(e.agent_id, std::make_unique<AgentClient>(endpoint_)).first;
    it->second->send(e);
  }

 private:
  std::string endpoint_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<AgentClient>> clients_;
};

// ---------------------------------------------------------------------------
// Capture

class CaptureBuffer {
 public:
  void append(CaptureRecord r) {
    std::lock_guard lock(mu_);
    records_.push_back(std::move(r));
  }

  CaptureSink sink() {
    return [this](const CaptureRecord& r) { append(r); };
  }

  std::vector<CaptureRecord> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

  // Newline-delimited CaptureRecord objects; returns the count written.
  std::size_t export_capture(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::out | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot open " + path.string());
    std::lock_guard lock(mu_);
    for (const auto& r : records_) out << to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw Error(Errc::IoFailure, "write failed for " + path.string());
    return records_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<CaptureRecord> records_;
};

}  // namespace soft_tue
