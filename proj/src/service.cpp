#include "mcst/service.hpp"

#include "mcst/checkpoint.hpp"

#include <boost/asio/bind_executor.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <iostream>

namespace mcst::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

void ServiceConfig::validate() const {
  if (!(tick_rate > 0.0 && tick_rate <= 1000.0)) throw ConfigError("serve: tick rate must be in (0, 1000] Hz");
  if (session_cap < 1) throw ConfigError("serve: session cap must be >= 1");
  if (threads < 1) throw ConfigError("serve: threads must be >= 1");
  if (max_ticks < 0) throw ConfigError("serve: max ticks must be >= 0");
  session.blend.validate();
}

void ServiceConfig::apply_environment() {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
  try {
    if (auto v = env("MCST_LISTEN")) {
      const auto colon = v->rfind(':');
      if (colon == std::string::npos) throw ConfigError("MCST_LISTEN must be host:port, got '" + *v + "'");
      address = v->substr(0, colon);
      port = static_cast<unsigned short>(std::stoul(v->substr(colon + 1)));
    }
    if (auto v = env("MCST_CHECKPOINT")) checkpoint = *v;
    if (auto v = env("MCST_TERRAIN")) terrain = *v;
    if (auto v = env("MCST_TICK_RATE")) tick_rate = std::stod(*v);
    if (auto v = env("MCST_SESSION_CAP")) session_cap = std::stoi(*v);
    if (auto v = env("MCST_CONTROL_LOG")) control_log_dir = *v;
  } catch (const std::logic_error& e) {
    throw ConfigError(std::string("service environment: ") + e.what());
  }
}

void ControlMailbox::post(const ControlInput& control) {
  std::lock_guard lock(mutex_);
  latest_ = control;
  ++received_;
}

ControlInput ControlMailbox::latest() const {
  std::lock_guard lock(mutex_);
  return latest_;
}

std::uint64_t ControlMailbox::received() const {
  std::lock_guard lock(mutex_);
  return received_;
}

SessionHost::SessionHost(std::uint64_t id, std::shared_ptr<const Controller> controller,
                         std::shared_ptr<const Terrain> terrain, SessionConfig config, double tick_rate)
    : id_(id),
      controller_(controller),
      terrain_(terrain),
      tick_rate_(tick_rate),
      session_(std::move(controller), std::move(terrain), config) {}

wire::ServerHello SessionHost::hello(const wire::ClientHello& request) {
  attention_ = request.attention;
  session_.warm_start(RootTransform{});
  wire::ServerHello h;
  h.session = id_;
  h.joint_count = controller_->skeleton.joint_count;
  h.parents = controller_->skeleton.parents;
  h.fps = controller_->params.config.trajectory.fps;
  h.tick_rate = tick_rate_;
  h.terrain = terrain_->name();
  h.attention = attention_;
  return h;
}

wire::ServerFrame SessionHost::tick() {
  ControlInput control = mailbox_.latest();
  control.time = 0.0;
  if (!last_applied_ || !(*last_applied_ == control)) {
    log_.entries.push_back({static_cast<int>(ticks_), control});
    last_applied_ = control;
  }
  const std::int64_t index = session_.frame_index();
  const StepResult r = session_.step(control, attention_);
  ++ticks_;
  log_.ticks = static_cast<int>(ticks_);
  return wire::make_server_frame(index, r, attention_);
}

std::vector<wire::ServerFrame> replay(std::shared_ptr<const Controller> controller,
                                      std::shared_ptr<const Terrain> terrain, const SessionConfig& config,
                                      const ControlScript& log, bool attention) {
  log.validate();
  SessionHost host(0, std::move(controller), std::move(terrain), config, 60.0);
  host.hello({attention, "replay"});
  std::vector<wire::ServerFrame> frames;
  frames.reserve(static_cast<std::size_t>(log.ticks));
  for (int t = 0; t < log.ticks; ++t) {
    host.post(log.at(t));
    frames.push_back(host.tick());
  }
  return frames;
}

void save_control_log(const SessionHost& host, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "# session " << host.id() << " attention " << (host.attention() ? 1 : 0) << "\n"
      << format_control_script(host.control_log());
}

std::optional<std::uint64_t> SessionRegistry::open() {
  std::lock_guard lock(mutex_);
  if (static_cast<int>(open_.size()) >= cap_) return std::nullopt;
  const std::uint64_t id = next_++;
  open_.insert(id);
  return id;
}

void SessionRegistry::close(std::uint64_t id) {
  std::lock_guard lock(mutex_);
  open_.erase(id);
}

std::size_t SessionRegistry::size() const {
  std::lock_guard lock(mutex_);
  return open_.size();
}

std::shared_ptr<const Controller> load_controller(const std::filesystem::path& checkpoint,
                                                  const std::filesystem::path& skeleton) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  return Controller::from_checkpoint(ck, skeleton.empty() ? default_skeleton() : load_skeleton(skeleton));
}

namespace {

struct Shared {
  ServiceConfig config;
  std::shared_ptr<const Controller> controller;
  std::shared_ptr<const Terrain> terrain;
  SessionRegistry registry;
};

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Shared& shared)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), shared_(shared) {}

  void run() {
    ws_.text(true);
    ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
  }

 private:
  websocket::stream<beast::tcp_stream> ws_;
  asio::steady_timer timer_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  std::unique_ptr<SessionHost> host_;
  std::optional<std::uint64_t> id_;
  bool closing_ = false;
  std::chrono::steady_clock::time_point next_tick_;

  void on_accept(beast::error_code ec) {
    if (ec) return;
    ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_hello, shared_from_this()));
  }

  void on_hello(beast::error_code ec, std::size_t) {
    if (ec) return finish();
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    wire::ClientHello request;
    try {
      const wire::Message m = wire::decode_message(text);
      if (!std::holds_alternative<wire::ClientHello>(m))
        return fail("handshake", "expected client_hello, got " + std::string(wire::type_tag(m)));
      request = std::get<wire::ClientHello>(m);
    } catch (const FormatError& e) {
      return fail("bad_message", e.what());
    }
    id_ = shared_.registry.open();
    if (!id_) return fail("session_cap", "session cap of " + std::to_string(shared_.config.session_cap) + " reached");
    host_ = std::make_unique<SessionHost>(*id_, shared_.controller, shared_.terrain, shared_.config.session,
                                          shared_.config.tick_rate);
    send(wire::encode_message(host_->hello(request)));
    next_tick_ = std::chrono::steady_clock::now();
    schedule_tick();
    read();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return finish();
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      const wire::Message m = wire::decode_message(text);
      if (!std::holds_alternative<wire::ClientControl>(m))
        return fail("unexpected", "expected client_control, got " + std::string(wire::type_tag(m)));
      host_->post(wire::to_control(std::get<wire::ClientControl>(m)));
    } catch (const FormatError& e) {
      return fail("bad_message", e.what());
    } catch (const ContractError& e) {
      return fail("bad_control", e.what());
    }
    read();
  }

  void schedule_tick() {
    next_tick_ += std::chrono::nanoseconds(static_cast<std::int64_t>(1e9 / shared_.config.tick_rate));
    timer_.expires_at(next_tick_);
    timer_.async_wait(beast::bind_front_handler(&Connection::on_tick, shared_from_this()));
  }

  void on_tick(beast::error_code ec) {
    if (ec || closing_) return;
    try {
      send(wire::encode_message(host_->tick()));
    } catch (const std::exception& e) {
      return fail("step_failed", e.what());
    }
    if (shared_.config.max_ticks > 0 && host_->ticks() >= shared_.config.max_ticks) {
      closing_ = true;
      close_after_flush();
      return;
    }
    schedule_tick();
  }

  void send(std::string text) {
    outbox_.push_back(std::move(text));
    if (outbox_.size() == 1) write();
  }

  void write() {
    ws_.async_write(asio::buffer(outbox_.front()),
                    beast::bind_front_handler(&Connection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return finish();
    outbox_.pop_front();
    if (!outbox_.empty()) return write();
    if (closing_) close_after_flush();
  }

  void fail(const std::string& code, const std::string& text) {
    closing_ = true;
    timer_.cancel();
    send(wire::encode_message(wire::ServerError{code, text}));
  }

  void close_after_flush() {
    if (!outbox_.empty()) return;
    ws_.async_close(websocket::close_code::normal,
                    beast::bind_front_handler(&Connection::on_close, shared_from_this()));
  }

  void on_close(beast::error_code) { finish(); }

  void finish() {
    timer_.cancel();
    if (!id_) return;
    if (!shared_.config.control_log_dir.empty() && host_) {
      try {
        std::filesystem::create_directories(shared_.config.control_log_dir);
        save_control_log(*host_, shared_.config.control_log_dir / ("session-" + std::to_string(*id_) + ".ctl"));
      } catch (const std::exception& e) {
        std::cerr << "warning: control log for session " << *id_ << ": " << e.what() << "\n";
      }
    }
    shared_.registry.close(*id_);
    id_.reset();
  }
};

}  // namespace

struct Server::Impl {
  Shared shared;
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> threads;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;

  Impl(ServiceConfig config, std::shared_ptr<const Controller> controller, std::shared_ptr<const Terrain> terrain)
      : shared{config, std::move(controller), std::move(terrain), SessionRegistry(config.session_cap)},
        ioc(config.threads) {}

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Connection>(std::move(socket), shared)->run();
      accept();
    });
  }
};

Server::Server(ServiceConfig config, std::shared_ptr<const Controller> controller,
               std::shared_ptr<const Terrain> terrain) {
  config.validate();
  require(controller != nullptr && terrain != nullptr, "Server: controller and terrain are required");
  impl_ = std::make_unique<Impl>(std::move(config), std::move(controller), std::move(terrain));
}

Server::~Server() { stop(); }

void Server::start() {
  const auto& config = impl_->shared.config;
  beast::error_code ec;
  const auto address = asio::ip::make_address(config.address, ec);
  if (ec) throw ConfigError("serve: bad listen address '" + config.address + "'");
  const tcp::endpoint endpoint(address, config.port);
  impl_->acceptor.open(endpoint.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(endpoint, ec);
  if (!ec) impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec)
    throw ConfigError("serve: cannot listen on " + config.address + ":" + std::to_string(config.port) + ": " +
                      ec.message());
  impl_->work.emplace(impl_->ioc.get_executor());
  impl_->accept();
  for (int i = 0; i < config.threads; ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void Server::wait() {
  for (auto& t : impl_->threads)
    if (t.joinable()) t.join();
}

void Server::stop() {
  if (!impl_) return;
  impl_->work.reset();
  impl_->ioc.stop();
  wait();
  impl_->threads.clear();
}

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

const SessionRegistry& Server::registry() const { return impl_->shared.registry; }

}  // namespace mcst::service
