#pragma once

// Line-oriented session protocol over the tick loop.
//
//   request  {"v":1, "type":"start"|"input"|"reset", "session":<string>, "payload":{...}}
//   reply    {"v":1, "type":"state"|"error", "session":<string>, "payload":{...}}
//
// start payload {"task": <int>, "mode": "ours"|"no_assist"|"unassisted"} (mode optional)
// input payload {"vx": <number>, "vy": <number>}
// state payload {t, s:[x,y], a_r:[vx,vy], belief:[...], epsilon, theta_star, done, outcome}
// error payload {code: "bad_state"|"bad_payload"|"no_session", message}
//
// The client's task choice is kept for the log only; the tick loop never reads it.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "convreveal/episode.hpp"
#include "convreveal/reveal.hpp"
#include "convreveal/runner.hpp"

namespace convreveal {

struct GatewaySession {
  std::mutex mu;
  int theta_true = 0;
  AssistMode mode = AssistMode::Ours;
  Session session;
  Action last_a_r;
  double last_epsilon = 0.0;
  int last_theta_star = 0;
  std::optional<int> reached;
  bool done = false;
};

class Gateway {
 public:
  /// Finished episodes are appended to `log_path` as JSON lines when set.
  explicit Gateway(std::shared_ptr<const World> world, std::optional<std::filesystem::path> log_path = {})
      : world_(std::move(world)), log_path_(std::move(log_path)) {}

  /// Exactly one reply line per request line.
  std::string handle(const std::string& line) {
    json req;
    try {
      req = json::parse(line);
    } catch (const json::parse_error& e) {
      return error("", "bad_payload", std::string("malformed request: ") + e.what());
    }
    if (!req.is_object()) return error("", "bad_payload", "request must be an object");
    std::string sid;
    if (req.contains("session") && req["session"].is_string()) sid = req["session"].get<std::string>();
    else if (req.contains("session") && req["session"].is_number_integer()) sid = req["session"].dump();
    else return error("", "bad_payload", "missing session");
    if (!req.contains("v") || req["v"] != 1) return error(sid, "bad_payload", "unsupported protocol version");
    if (!req.contains("type") || !req["type"].is_string()) return error(sid, "bad_payload", "missing type");
    const std::string type = req["type"].get<std::string>();
    const json payload = req.value("payload", json::object());
    if (!payload.is_object()) return error(sid, "bad_payload", "payload must be an object");
    if (type == "start") return start(sid, payload);
    if (type == "input") return input(sid, payload);
    if (type == "reset") return reset(sid);
    return error(sid, "bad_payload", "unknown type '" + type + "'");
  }

  /// Log of a session's current episode (live or finished, not yet reset).
  std::optional<EpisodeLog> episode_log(const std::string& sid) {
    auto s = find(sid);
    if (!s) return std::nullopt;
    std::lock_guard lk(s->mu);
    return make_log(*s);
  }

  std::size_t session_count() {
    std::lock_guard lk(mu_);
    return sessions_.size();
  }

  const World& world() const { return *world_; }

 private:
  std::shared_ptr<GatewaySession> find(const std::string& sid) {
    std::lock_guard lk(mu_);
    auto it = sessions_.find(sid);
    return it == sessions_.end() ? nullptr : it->second;
  }

  static std::string reply(const std::string& sid, const char* type, json payload) {
    return json{{"v", 1}, {"type", type}, {"session", sid}, {"payload", std::move(payload)}}.dump();
  }
  static std::string error(const std::string& sid, const char* code, const std::string& msg) {
    return reply(sid, "error", json{{"code", code}, {"message", msg}});
  }

  json snapshot(const GatewaySession& g) const {
    const Session& s = g.session;
    json outcome = nullptr;
    if (g.done) {
      const EpisodeOutcome o = summarize(s.rows, g.reached);
      outcome = {{"reached_task", o.reached_task}, {"ticks", o.ticks},
                 {"incorrect_inputs", o.incorrect_inputs}, {"inputs", o.inputs}};
    }
    return json{{"t", s.t},
                {"s", {s.s.position.x, s.s.position.y}},
                {"a_r", {g.last_a_r.velocity.x, g.last_a_r.velocity.y}},
                {"belief", s.belief.probabilities()},
                {"epsilon", g.last_epsilon},
                {"theta_star", g.last_theta_star},
                {"done", g.done},
                {"outcome", outcome}};
  }

  EpisodeLog make_log(const GatewaySession& g) const {
    EpisodeLog log;
    log.scenario_hash = world_->hash;
    log.mode = g.mode;
    log.theta_true = g.theta_true;
    log.rows = g.session.rows;
    log.outcome = summarize(log.rows, g.reached);
    return log;
  }

  void check_done(GatewaySession& g) const {
    const Scenario& sc = world_->scenario;
    g.reached = reached_any(g.session.s, sc.tasks);
    g.done = g.reached.has_value() || g.session.t >= sc.max_ticks;
  }

  std::string start(const std::string& sid, const json& p) {
    const Scenario& sc = world_->scenario;
    if (!p.contains("task") || !p["task"].is_number_integer())
      return error(sid, "bad_payload", "start requires an integer 'task'");
    const int task = p["task"].get<int>();
    if (task < 0 || static_cast<std::size_t>(task) >= sc.tasks.size())
      return error(sid, "bad_payload", "unknown task id");
    AssistMode mode = AssistMode::Ours;
    if (p.contains("mode")) {
      const auto m = p["mode"].is_string() ? parse_mode(p["mode"].get<std::string>()) : std::nullopt;
      if (!m) return error(sid, "bad_payload", "unknown mode");
      mode = *m;
    }
    auto g = std::make_shared<GatewaySession>();
    g->theta_true = task;
    g->mode = mode;
    g->session = make_session(sc, task);
    check_done(*g);
    std::lock_guard glk(g->mu);
    {
      std::lock_guard lk(mu_);
      sessions_[sid] = g;
    }
    return reply(sid, "state", snapshot(*g));
  }

  std::string input(const std::string& sid, const json& p) {
    auto g = find(sid);
    if (!g) return error(sid, "no_session", "no active session");
    if (!p.contains("vx") || !p.contains("vy") || !p["vx"].is_number() || !p["vy"].is_number())
      return error(sid, "bad_payload", "input requires numeric 'vx' and 'vy'");
    const Vec2 v{p["vx"].get<double>(), p["vy"].get<double>()};
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) return error(sid, "bad_payload", "non-finite input");
    std::lock_guard lk(g->mu);
    if (g->done) return error(sid, "bad_state", "episode finished; send reset or start");
    const TickOutput out = tick(g->session, Action{v}, world_->context(g->mode));
    g->last_a_r = out.result.a_r;
    g->last_epsilon = out.result.epsilon_used;
    g->last_theta_star = out.result.theta_star;
    check_done(*g);
    return reply(sid, "state", snapshot(*g));
  }

  std::string reset(const std::string& sid) {
    std::shared_ptr<GatewaySession> g;
    {
      std::lock_guard lk(mu_);
      auto it = sessions_.find(sid);
      if (it == sessions_.end()) return error(sid, "no_session", "no active session");
      g = it->second;
      sessions_.erase(it);
    }
    std::lock_guard lk(g->mu);
    if (log_path_) {
      std::lock_guard flk(file_mu_);
      std::ofstream o(*log_path_, std::ios::app | std::ios::binary);
      o << json{{"session", sid}, {"log", to_json(make_log(*g))}}.dump() << '\n';
    }
    json snap = snapshot(*g);
    snap["done"] = true;
    if (snap["outcome"].is_null()) {
      const EpisodeOutcome o = summarize(g->session.rows, g->reached);
      snap["outcome"] = {{"reached_task", o.reached_task}, {"ticks", o.ticks},
                         {"incorrect_inputs", o.incorrect_inputs}, {"inputs", o.inputs}};
    }
    return reply(sid, "state", snap);
  }

  std::shared_ptr<const World> world_;
  std::optional<std::filesystem::path> log_path_;
  std::mutex mu_;
  std::mutex file_mu_;
  std::map<std::string, std::shared_ptr<GatewaySession>> sessions_;
};

// ---------------------------------------------------------------------------
// TCP transport: newline-delimited requests, one thread per connection.

inline std::pair<std::string, int> parse_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ConfigError("address must be host:port");
  const std::string host = addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad port in '" + addr + "'");
  }
  if (port < 0 || port > 65535) throw ConfigError("bad port in '" + addr + "'");
  return {host.empty() ? "0.0.0.0" : host, port};
}

class LineServer {
 public:
  explicit LineServer(Gateway& gw) : gw_(gw) {}
  ~LineServer() { stop(); }

  /// Binds and listens; returns the bound port (useful with port 0).
  int listen(const std::string& addr) {
    const auto [host, port] = parse_addr(addr);
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("socket failed");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(static_cast<uint16_t>(port));
    const std::string h = host == "localhost" ? "127.0.0.1" : host;
    if (::inet_pton(AF_INET, h.c_str(), &sa.sin_addr) != 1) throw ConfigError("bad host '" + host + "'");
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0)
      throw std::runtime_error(std::string("bind failed: ") + std::strerror(errno));
    if (::listen(fd_, 16) != 0) throw std::runtime_error("listen failed");
    socklen_t len = sizeof sa;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    return ntohs(sa.sin_port);
  }

  /// Accept loop; returns after stop().
  void serve() {
    for (;;) {
      const int c = ::accept(fd_, nullptr, nullptr);
      if (c < 0) break;
      std::lock_guard lk(mu_);
      clients_.push_back(c);
      workers_.emplace_back([this, c] { connection(c); });
    }
  }

  /// Async-signal-safe: unblocks serve(); call stop() afterwards.
  void interrupt() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void stop() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
    std::vector<std::thread> ws;
    {
      std::lock_guard lk(mu_);
      for (int c : clients_) ::shutdown(c, SHUT_RDWR);
      ws.swap(workers_);
    }
    for (auto& t : ws)
      if (t.joinable()) t.join();
  }

 private:
  void connection(int c) {
    std::string buf;
    char chunk[4096];
    for (;;) {
      const ssize_t n = ::recv(c, chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = buf.find('\n')) != std::string::npos) {
        std::string line = buf.substr(0, nl);
        buf.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string out = gw_.handle(line) + "\n";
        for (std::size_t off = 0; off < out.size();) {
          const ssize_t w = ::send(c, out.data() + off, out.size() - off, MSG_NOSIGNAL);
          if (w <= 0) break;
          off += static_cast<std::size_t>(w);
        }
      }
    }
    {
      std::lock_guard lk(mu_);
      std::erase(clients_, c);
    }
    ::close(c);
  }

  Gateway& gw_;
  int fd_ = -1;
  std::mutex mu_;
  std::vector<int> clients_;
  std::vector<std::thread> workers_;
};

}  // namespace convreveal
