#pragma once

// Websocket motion service: one runtime session per connection, stepped at a
// fixed tick rate with the latest control received between ticks.
//
// Connection lifecycle: client_hello -> server_hello, then one server_frame
// per tick while client_control messages update the mailbox. A malformed or
// unexpected message is answered with server_error and the connection closes.

#include "mcst/protocol.hpp"
#include "mcst/runtime.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace mcst::service {

struct ServiceConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  std::filesystem::path checkpoint;
  std::filesystem::path skeleton;
  std::string terrain = "flat";
  double tick_rate = 60.0;
  int session_cap = 16;
  /// Control logs of closed sessions are written here when non-empty.
  std::filesystem::path control_log_dir;
  /// Ends a session after this many frames; 0 runs until the client leaves.
  std::int64_t max_ticks = 0;
  int threads = 1;
  SessionConfig session;

  void validate() const;
  /// Overrides fields from MCST_LISTEN (host:port), MCST_CHECKPOINT,
  /// MCST_TERRAIN, MCST_TICK_RATE, MCST_SESSION_CAP and MCST_CONTROL_LOG.
  void apply_environment();
};

/// Last-write-wins slot for the control applied at the next tick.
class ControlMailbox {
 public:
  void post(const ControlInput& control);
  /// Latest control, or standing still if none arrived yet.
  ControlInput latest() const;
  std::uint64_t received() const;

 private:
  mutable std::mutex mutex_;
  ControlInput latest_;
  std::uint64_t received_ = 0;
};

/// Transport-free state of one connection: the session, its mailbox and the
/// log of controls actually applied, tick by tick.
class SessionHost {
 public:
  SessionHost(std::uint64_t id, std::shared_ptr<const Controller> controller, std::shared_ptr<const Terrain> terrain,
              SessionConfig config, double tick_rate);

  /// Warm-starts the session at the rest pose and answers the handshake.
  wire::ServerHello hello(const wire::ClientHello& request);
  void post(const ControlInput& control) { mailbox_.post(control); }
  /// Steps once with the latest control.
  wire::ServerFrame tick();

  std::uint64_t id() const { return id_; }
  std::int64_t ticks() const { return ticks_; }
  bool attention() const { return attention_; }
  /// Applied controls as a script; an entry is added whenever the control
  /// changes. Client timestamps are dropped.
  const ControlScript& control_log() const { return log_; }
  const ControlMailbox& mailbox() const { return mailbox_; }

 private:
  std::uint64_t id_;
  std::shared_ptr<const Controller> controller_;
  std::shared_ptr<const Terrain> terrain_;
  double tick_rate_;
  Session session_;
  ControlMailbox mailbox_;
  ControlScript log_;
  std::optional<ControlInput> last_applied_;
  std::int64_t ticks_ = 0;
  bool attention_ = false;
};

/// Frames a session would serve for a recorded control log.
std::vector<wire::ServerFrame> replay(std::shared_ptr<const Controller> controller,
                                      std::shared_ptr<const Terrain> terrain, const SessionConfig& config,
                                      const ControlScript& log, bool attention);

void save_control_log(const SessionHost& host, const std::filesystem::path& path);

class SessionRegistry {
 public:
  explicit SessionRegistry(int cap) : cap_(cap) {}
  /// A fresh id, or nothing when the cap is reached.
  std::optional<std::uint64_t> open();
  void close(std::uint64_t id);
  std::size_t size() const;

 private:
  int cap_;
  mutable std::mutex mutex_;
  std::uint64_t next_ = 1;
  std::set<std::uint64_t> open_;
};

/// Checkpoint plus skeleton (the built-in one when `skeleton` is empty).
/// Throws FormatError or ConfigError on a bad or mismatched checkpoint.
std::shared_ptr<const Controller> load_controller(const std::filesystem::path& checkpoint,
                                                  const std::filesystem::path& skeleton = {});

class Server {
 public:
  Server(ServiceConfig config, std::shared_ptr<const Controller> controller, std::shared_ptr<const Terrain> terrain);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts the worker threads; returns once listening.
  void start();
  /// Blocks until stop() is called from elsewhere.
  void wait();
  void stop();

  unsigned short port() const;
  const SessionRegistry& registry() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mcst::service
