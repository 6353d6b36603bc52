#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "marti/agent.hpp"
#include "marti/envs.hpp"
#include "marti/runner.hpp"

namespace marti::net {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint16_t kDefaultPort = 7878;
inline constexpr const char* kPortEnv = "MARTI_PORT";

/// Port from $MARTI_PORT, else 7878.
inline std::uint16_t default_port() {
  if (const char* v = std::getenv(kPortEnv)) {
    char* end = nullptr;
    const long p = std::strtol(v, &end, 10);
    if (end != v && *end == '\0' && p >= 0 && p <= 65535) return static_cast<std::uint16_t>(p);
    throw ConfigError(std::string(kPortEnv) + " is not a valid port: " + v);
  }
  return kDefaultPort;
}

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Disconnected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The peer answered with Bye.
class PeerClosed : public std::runtime_error {
 public:
  explicit PeerClosed(std::string reason)
      : std::runtime_error("peer said bye: " + reason), reason_(std::move(reason)) {}
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
};

// ---- messages ---------------------------------------------------------------

struct Hello {
  std::size_t sensor_dim = 0;
  std::size_t actuator_dim = 0;
  std::vector<Vector> actions;  // actuator vector per action index
  int protocol_version = kProtocolVersion;
};

struct Obs {
  Vector sensor;
  Vector actuator;
  double reward = 0.0;
  bool done = false;
  std::uint64_t step = 0;
};

struct Act {
  int action_index = 0;
  Vector actuator;
};

struct Bye {
  std::string reason;
};

using Message = std::variant<Hello, Obs, Act, Bye>;

namespace detail {

using nlohmann::json;

inline double number(const json& j, const char* what) {
  if (!j.is_number()) throw ProtocolError(std::string(what) + " must be a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ProtocolError(std::string(what) + " must be finite");
  return x;
}

inline Vector numbers(const json& j, const char* what) {
  if (!j.is_array()) throw ProtocolError(std::string(what) + " must be an array");
  Vector out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(number(x, what));
  return out;
}

inline std::uint64_t count(const json& j, const char* what) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
    throw ProtocolError(std::string(what) + " must be a non-negative integer");
  return j.get<std::uint64_t>();
}

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (double x : v) {
    // Integral values go out as integers so lines stay readable.
    if (std::abs(x) < 9.0e15 && x == std::floor(x))
      a.push_back(static_cast<std::int64_t>(x));
    else
      a.push_back(x);
  }
  return a;
}

}  // namespace detail

/// One JSON line (without the trailing newline).
inline std::string encode(const Message& m) {
  using detail::json;
  json j;
  if (const auto* h = std::get_if<Hello>(&m)) {
    json actions = json::array();
    for (const auto& a : h->actions) {
      if (a.size() == 1)
        actions.push_back(detail::vector_json(a)[0]);
      else
        actions.push_back(detail::vector_json(a));
    }
    j = {{"sensor_dim", h->sensor_dim},
         {"actuator_dim", h->actuator_dim},
         {"actions", actions},
         {"protocol_version", h->protocol_version}};
  } else if (const auto* o = std::get_if<Obs>(&m)) {
    j = {{"sensor", detail::vector_json(o->sensor)},
         {"actuator", detail::vector_json(o->actuator)},
         {"reward", o->reward},
         {"done", o->done},
         {"step", o->step}};
  } else if (const auto* a = std::get_if<Act>(&m)) {
    j = {{"action_index", a->action_index}, {"actuator", detail::vector_json(a->actuator)}};
  } else {
    j = {{"reason", std::get<Bye>(m).reason}};
  }
  return j.dump();
}

/// Parses one line. Message kind is told apart by its distinguishing field.
inline Message decode(const std::string& line) {
  using detail::json;
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed line: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  try {
    if (j.contains("protocol_version")) {
      Hello h;
      h.protocol_version = static_cast<int>(detail::count(j.at("protocol_version"), "protocol_version"));
      h.sensor_dim = detail::count(j.at("sensor_dim"), "sensor_dim");
      h.actuator_dim = detail::count(j.at("actuator_dim"), "actuator_dim");
      const auto& actions = j.at("actions");
      if (!actions.is_array()) throw ProtocolError("actions must be an array");
      for (const auto& a : actions)
        h.actions.push_back(a.is_array() ? detail::numbers(a, "actions") : Vector{detail::number(a, "actions")});
      return h;
    }
    if (j.contains("sensor")) {
      Obs o;
      o.sensor = detail::numbers(j.at("sensor"), "sensor");
      o.actuator = detail::numbers(j.at("actuator"), "actuator");
      o.reward = detail::number(j.at("reward"), "reward");
      if (!j.at("done").is_boolean()) throw ProtocolError("done must be a boolean");
      o.done = j.at("done").get<bool>();
      o.step = detail::count(j.at("step"), "step");
      return o;
    }
    if (j.contains("action_index")) {
      Act a;
      const auto& idx = j.at("action_index");
      if (!idx.is_number_integer()) throw ProtocolError("action_index must be an integer");
      a.action_index = idx.get<int>();
      a.actuator = detail::numbers(j.at("actuator"), "actuator");
      return a;
    }
    if (j.contains("reason")) {
      if (!j.at("reason").is_string()) throw ProtocolError("reason must be a string");
      return Bye{j.at("reason").get<std::string>()};
    }
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("bad message: ") + e.what());
  }
  throw ProtocolError("unknown message kind");
}

// ---- sockets ----------------------------------------------------------------

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

/// Newline-framed reader/writer over a connected socket.
class LineChannel {
 public:
  explicit LineChannel(Socket sock) : sock_(std::move(sock)) {
    int one = 1;
    ::setsockopt(sock_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  /// Next line, or nullopt on timeout. Throws Disconnected on EOF/error.
  /// `stop` is polled a few times per second.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout,
                                       const std::atomic<bool>* stop = nullptr) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (buffer_.size() > kMaxLine) throw ProtocolError("line too long");
      if (stop && stop->load()) return std::nullopt;
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{sock_.fd(), POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 200)));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw Disconnected(std::string("poll: ") + std::strerror(errno));
      }
      if (r == 0) continue;
      char chunk[4096];
      const ssize_t n = ::recv(sock_.fd(), chunk, sizeof chunk, 0);
      if (n == 0) throw Disconnected("connection closed by peer");
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw Disconnected(std::string("recv: ") + std::strerror(errno));
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(sock_.fd(), data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Disconnected(std::string("send: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  void send(const Message& m) { write_line(encode(m)); }

  /// Best-effort Bye that never throws.
  void say_bye(const std::string& reason) noexcept {
    try {
      send(Bye{reason});
    } catch (...) {
    }
  }

  void close() { sock_.close(); }

 private:
  static constexpr std::size_t kMaxLine = 16u << 20;
  Socket sock_;
  std::string buffer_;
};

// ---- server -----------------------------------------------------------------

struct ServeOptions {
  std::chrono::milliseconds idle_timeout{60000};
  // Written on Bye, disconnect, timeout or stop.
  std::string snapshot_path;
  const std::atomic<bool>* stop = nullptr;
};

struct SessionResult {
  std::string end_reason;  // "bye", "disconnect", "timeout", "protocol error", "version", "stopped"
  std::uint64_t observations = 0;
  std::uint64_t episodes = 0;
  bool snapshot_saved = false;
};

/// Builds the agent for a session from the client's Hello.
using AgentFactory = std::function<std::unique_ptr<Agent>(const Hello&)>;

inline void write_snapshot(const Agent& agent, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write snapshot '" + tmp + "'");
    agent.save(os);
    os.flush();
    if (!os) throw std::runtime_error("cannot write snapshot '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move snapshot into place at '" + path + "'");
}

/// Agent-side server. Binds on construction (port 0 picks a free port) and
/// serves one client per call to serve_one().
class Server {
 public:
  explicit Server(std::uint16_t port, const std::string& host = "127.0.0.1") {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
      throw ConfigError("bad listen address '" + host + "'");
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw std::runtime_error("bind port " + std::to_string(port) + ": " + std::strerror(errno));
    if (::listen(s.fd(), 1) != 0) throw std::runtime_error(std::string("listen: ") + std::strerror(errno));
    socklen_t len = sizeof addr;
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    listener_ = std::move(s);
  }

  std::uint16_t port() const { return port_; }

  /// Waits for a client (up to accept_timeout; nullopt on timeout or stop).
  std::optional<LineChannel> accept(std::chrono::milliseconds accept_timeout,
                                    const std::atomic<bool>* stop = nullptr) {
    const auto deadline = std::chrono::steady_clock::now() + accept_timeout;
    while (true) {
      if (stop && stop->load()) return std::nullopt;
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{listener_.fd(), POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 200)));
      if (r < 0 && errno != EINTR) throw std::runtime_error(std::string("poll: ") + std::strerror(errno));
      if (r <= 0) continue;
      const int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw std::runtime_error(std::string("accept: ") + std::strerror(errno));
      }
      return LineChannel(Socket(fd));
    }
  }

  /// Runs one session: Hello, Hello-ack, then strict Obs -> Act lockstep.
  /// If `agent` holds an agent (e.g. from a snapshot) it is used after a
  /// dimension check; otherwise the factory builds one. The agent stays in
  /// `agent` afterwards.
  SessionResult serve_one(std::unique_ptr<Agent>& agent, const AgentFactory& factory,
                          const ServeOptions& opts = {}) {
    SessionResult res;
    auto ch = accept(std::chrono::hours(24 * 365), opts.stop);
    if (!ch) {
      res.end_reason = "stopped";
      return res;
    }
    run_session(*ch, agent, factory, opts, res);
    ch->close();
    if (agent && !opts.snapshot_path.empty()) {
      write_snapshot(*agent, opts.snapshot_path);
      res.snapshot_saved = true;
    }
    return res;
  }

 private:
  static void run_session(LineChannel& ch, std::unique_ptr<Agent>& agent, const AgentFactory& factory,
                          const ServeOptions& opts, SessionResult& res) {
    Hello hello;
    try {
      auto line = ch.read_line(opts.idle_timeout, opts.stop);
      if (!line) {
        res.end_reason = opts.stop && opts.stop->load() ? "stopped" : "timeout";
        ch.say_bye(res.end_reason);
        return;
      }
      auto msg = decode(*line);
      if (!std::holds_alternative<Hello>(msg)) throw ProtocolError("expected Hello");
      hello = std::get<Hello>(msg);
      if (hello.protocol_version != kProtocolVersion) {
        res.end_reason = "version";
        ch.say_bye("version");
        return;
      }
      if (hello.actions.empty()) throw ProtocolError("Hello lists no actions");
      for (const auto& a : hello.actions)
        if (a.size() != hello.actuator_dim) throw ProtocolError("action vector does not match actuator_dim");
      if (agent) {
        if (agent->thalamus().sensor_dim() != hello.sensor_dim ||
            agent->thalamus().actuator_dim() != hello.actuator_dim)
          throw ProtocolError("Hello dimensions do not match the loaded agent");
      } else {
        agent = factory(hello);
      }
      ch.send(Hello{hello.sensor_dim, hello.actuator_dim, hello.actions, kProtocolVersion});

      while (true) {
        line = ch.read_line(opts.idle_timeout, opts.stop);
        if (!line) {
          res.end_reason = opts.stop && opts.stop->load() ? "stopped" : "timeout";
          ch.say_bye(res.end_reason);
          return;
        }
        msg = decode(*line);
        if (std::holds_alternative<Bye>(msg)) {
          res.end_reason = "bye";
          return;
        }
        if (!std::holds_alternative<Obs>(msg)) throw ProtocolError("expected Obs or Bye");
        const auto& obs = std::get<Obs>(msg);
        if (obs.sensor.size() != hello.sensor_dim || obs.actuator.size() != hello.actuator_dim)
          throw ProtocolError("Obs dimensions do not match Hello");
        const auto out = agent->step(StepInput{obs.sensor, obs.actuator, obs.reward, obs.done});
        const int idx = action_index(hello.actions, out.actuator);
        ch.send(Act{idx, hello.actions[static_cast<std::size_t>(idx)]});
        ++res.observations;
        if (obs.done) ++res.episodes;
      }
    } catch (const ProtocolError&) {
      res.end_reason = "protocol error";
      ch.say_bye("protocol error");
    } catch (const DimensionError&) {
      res.end_reason = "protocol error";
      ch.say_bye("protocol error");
    } catch (const Disconnected&) {
      res.end_reason = "disconnect";
    }
  }

  Socket listener_;
  std::uint16_t port_ = 0;
};

// ---- client -----------------------------------------------------------------

/// Environment-side client: mirror of the server contract.
class Client {
 public:
  static Client connect(const std::string& host, std::uint16_t port,
                        std::chrono::milliseconds reply_timeout = std::chrono::milliseconds(60000)) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &found) != 0 || !found)
      throw Disconnected("cannot resolve '" + host + "'");
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(found, ::freeaddrinfo);
    Socket s(::socket(found->ai_family, found->ai_socktype, found->ai_protocol));
    if (!s.valid()) throw Disconnected(std::string("socket: ") + std::strerror(errno));
    if (::connect(s.fd(), found->ai_addr, found->ai_addrlen) != 0)
      throw Disconnected("connect " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
    return Client(LineChannel(std::move(s)), reply_timeout);
  }

  /// Sends Hello and returns the server's acknowledgement.
  Hello hello(const Hello& h) {
    channel_.send(h);
    auto reply = receive();
    if (!std::holds_alternative<Hello>(reply)) throw ProtocolError("expected Hello acknowledgement");
    return std::get<Hello>(reply);
  }

  Act act(const Obs& obs) {
    channel_.send(obs);
    auto reply = receive();
    if (!std::holds_alternative<Act>(reply)) throw ProtocolError("expected Act");
    return std::get<Act>(reply);
  }

  void bye(const std::string& reason = "done") {
    channel_.say_bye(reason);
    channel_.close();
  }

  /// Sends a raw line; for tests of the error paths.
  void send_raw(const std::string& line) { channel_.write_line(line); }
  Message receive() {
    auto line = channel_.read_line(timeout_);
    if (!line) throw Disconnected("timed out waiting for the server");
    auto m = decode(*line);
    if (const auto* b = std::get_if<Bye>(&m)) throw PeerClosed(b->reason);
    return m;
  }

 private:
  Client(LineChannel ch, std::chrono::milliseconds timeout) : channel_(std::move(ch)), timeout_(timeout) {}

  LineChannel channel_;
  std::chrono::milliseconds timeout_;
};

/// Hello describing an environment with 1-d index actuators.
inline Hello hello_for(const Environment& env) {
  return Hello{env.observation_dim(), 1, env.action_space(), kProtocolVersion};
}

/// Plays one episode with actions chosen remotely; mirrors run_episode.
inline EpisodeResult remote_episode(Client& client, Environment& env, int& last_action,
                                    std::uint64_t& step, bool record_actions = false) {
  const auto space = env.action_space();
  return run_episode_with(
      env,
      [&](const EnvState& s, int prev) {
        const auto act = client.act(Obs{s.observation, space[static_cast<std::size_t>(prev)], s.reward,
                                        s.done, step++});
        if (act.action_index < 0 || act.action_index >= env.action_count())
          throw ProtocolError("server chose an action outside the action set");
        return act.action_index;
      },
      last_action, record_actions);
}

}  // namespace marti::net
