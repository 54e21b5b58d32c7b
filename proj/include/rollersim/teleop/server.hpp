#pragma once

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "rollersim/teleop/session.hpp"

namespace rollersim::teleop {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  double tick_rate = 60.0;     // Hz, default for new sessions
  std::size_t max_sessions = 16;
  int threads = 1;
};

using LogHook = std::function<void(const std::string&)>;

namespace detail {

inline std::string new_token() {
  static std::mutex m;
  static std::random_device rd;
  static std::mt19937_64 gen(rd());
  std::lock_guard lock(m);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(gen()),
                static_cast<unsigned long long>(gen()));
  return buf;
}

class WsConnection;

/// A session plus its tick timer. Everything touching the session runs on
/// `strand_`.
class SessionHost : public std::enable_shared_from_this<SessionHost> {
 public:
  SessionHost(net::io_context& ioc, std::string id, Scenario scenario, SessionOptions opts)
      : strand_(net::make_strand(ioc)), timer_(strand_), session_(std::move(id), std::move(scenario), opts) {}

  const std::string& id() const { return session_.id(); }
  double tick_rate() const { return session_.tick_rate(); }

  void start() {
    net::post(strand_, [self = shared_from_this()] {
      self->next_ = std::chrono::steady_clock::now();
      self->schedule();
    });
  }

  void close();

  void attach(const std::shared_ptr<WsConnection>& c);

  void on_message(const std::shared_ptr<WsConnection>& from, std::string text);

  /// Runs `fn(session)` on the strand, then `done(result)`.
  template <class Fn, class Done>
  void post(Fn fn, Done done) {
    net::post(strand_, [self = shared_from_this(), fn = std::move(fn), done = std::move(done)]() mutable {
      done(fn(self->session_));
    });
  }

  /// Only safe before start().
  json initial_state() const { return session_.state_message(); }

 private:
  void schedule() {
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / session_.tick_rate()));
    next_ += period;
    const auto now = std::chrono::steady_clock::now();
    if (next_ < now - 5 * period) next_ = now;
    timer_.expires_at(next_);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      for (const auto& m : self->session_.tick()) self->broadcast(m.dump());
      self->schedule();
    });
  }

  void broadcast(const std::string& text);

  net::strand<net::io_context::executor_type> strand_;
  net::steady_timer timer_;
  Session session_;
  std::chrono::steady_clock::time_point next_;
  std::vector<std::weak_ptr<WsConnection>> listeners_;
  bool closed_ = false;
};

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket&& socket, std::shared_ptr<SessionHost> host)
      : ws_(std::move(socket)), host_(std::move(host)) {}

  template <class Body, class Allocator>
  void accept(http::request<Body, http::basic_fields<Allocator>> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->host_->attach(self);
      self->read();
    });
  }

  void send(std::string text) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
      if (self->closing_) return;
      self->queue_.push_back(std::move(text));
      if (self->queue_.size() == 1) self->write();
    });
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->closing_) return;
      self->closing_ = true;
      self->queue_.clear();
      self->ws_.async_close(websocket::close_code::going_away, [self](beast::error_code) {});
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->host_->on_message(self, std::move(text));
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<SessionHost> host_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool closing_ = false;
};

inline void SessionHost::close() {
  net::post(strand_, [self = shared_from_this()] {
    self->closed_ = true;
    self->timer_.cancel();
    for (auto& w : self->listeners_) {
      if (auto c = w.lock()) c->close();
    }
    self->listeners_.clear();
  });
}

inline void SessionHost::attach(const std::shared_ptr<WsConnection>& c) {
  net::post(strand_, [self = shared_from_this(), c] {
    if (self->closed_) {
      c->close();
      return;
    }
    self->listeners_.push_back(c);
    c->send(self->session_.state_message().dump());
  });
}

inline void SessionHost::on_message(const std::shared_ptr<WsConnection>& from, std::string text) {
  net::post(strand_, [self = shared_from_this(), from, text = std::move(text)] {
    if (self->closed_) return;
    from->send(self->session_.handle_text(text).dump());
  });
}

inline void SessionHost::broadcast(const std::string& text) {
  std::erase_if(listeners_, [](const auto& w) { return w.expired(); });
  for (auto& w : listeners_) {
    if (auto c = w.lock()) c->send(text);
  }
}

class Registry {
 public:
  explicit Registry(std::size_t capacity) : capacity_(capacity) {}

  std::shared_ptr<SessionHost> create(net::io_context& ioc, Scenario scenario, SessionOptions opts) {
    std::lock_guard lock(m_);
    if (hosts_.size() >= capacity_)
      throw Error(ErrorCode::CapacityExceeded, "session limit of " + std::to_string(capacity_) + " reached");
    std::string id;
    do {
      id = new_token();
    } while (hosts_.contains(id));
    auto host = std::make_shared<SessionHost>(ioc, id, std::move(scenario), opts);
    hosts_.emplace(id, host);
    return host;
  }

  std::shared_ptr<SessionHost> find(const std::string& id) const {
    std::lock_guard lock(m_);
    const auto it = hosts_.find(id);
    if (it == hosts_.end()) throw Error(ErrorCode::UnknownSession, "no session \"" + id + "\"");
    return it->second;
  }

  void remove(const std::string& id) {
    std::shared_ptr<SessionHost> host;
    {
      std::lock_guard lock(m_);
      const auto it = hosts_.find(id);
      if (it == hosts_.end()) throw Error(ErrorCode::UnknownSession, "no session \"" + id + "\"");
      host = it->second;
      hosts_.erase(it);
    }
    host->close();
  }

  void clear() {
    std::map<std::string, std::shared_ptr<SessionHost>> hosts;
    {
      std::lock_guard lock(m_);
      hosts.swap(hosts_);
    }
    for (auto& [_, h] : hosts) h->close();
  }

  std::size_t size() const {
    std::lock_guard lock(m_);
    return hosts_.size();
  }

 private:
  mutable std::mutex m_;
  std::size_t capacity_;
  std::map<std::string, std::shared_ptr<SessionHost>> hosts_;
};

inline http::status status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession: return http::status::not_found;
    case ErrorCode::CapacityExceeded: return http::status::service_unavailable;
    case ErrorCode::ParseError:
    case ErrorCode::ValidationError:
    case ErrorCode::BadLength: return http::status::bad_request;
    default: return http::status::internal_server_error;
  }
}

struct Route {
  std::string session;  // id for /sessions/{id}... and /ws/session/{id}
  enum Kind { Presets, Sessions, Session, Trajectory, Socket, None } kind = None;
};

inline Route route(std::string_view target) {
  if (const auto q = target.find('?'); q != std::string_view::npos) target = target.substr(0, q);
  auto strip = [&](std::string_view prefix) -> std::optional<std::string_view> {
    if (target.substr(0, prefix.size()) != prefix) return std::nullopt;
    return target.substr(prefix.size());
  };
  if (target == "/presets") return {{}, Route::Presets};
  if (target == "/sessions") return {{}, Route::Sessions};
  if (auto rest = strip("/ws/session/"); rest && !rest->empty() && rest->find('/') == std::string_view::npos)
    return {std::string(*rest), Route::Socket};
  if (auto rest = strip("/sessions/")) {
    const auto slash = rest->find('/');
    if (slash == std::string_view::npos && !rest->empty()) return {std::string(*rest), Route::Session};
    if (slash != std::string_view::npos && rest->substr(slash) == "/trajectory.csv" && slash > 0)
      return {std::string(rest->substr(0, slash)), Route::Trajectory};
  }
  return {};
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, net::io_context& ioc, Registry& registry, const ServerOptions& opts,
                 const LogHook& log)
      : stream_(std::move(socket)), ioc_(ioc), registry_(registry), opts_(opts), log_(log) {}

  void start() {
    net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->read(); });
  }

 private:
  using Response = http::response<http::string_body>;

  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      self->dispatch();
    });
  }

  void dispatch() {
    const Route r = route(std::string_view(req_.target().data(), req_.target().size()));
    if (log_) log_(std::string(req_.method_string()) + " " + std::string(req_.target()));
    if (websocket::is_upgrade(req_)) {
      if (r.kind != Route::Socket) return reply(error(http::status::not_found, ErrorCode::ValidationError, "no such socket"));
      std::shared_ptr<SessionHost> host;
      try {
        host = registry_.find(r.session);
      } catch (const Error& e) {
        return reply(error(e));
      }
      stream_.expires_never();
      std::make_shared<WsConnection>(stream_.release_socket(), host)->accept(std::move(req_));
      return;
    }
    try {
      if (auto res = handle(r)) reply(std::move(*res));
    } catch (const Error& e) {
      reply(error(e));
    }
  }

  /// Empty when the reply is sent asynchronously.
  std::optional<Response> handle(const Route& r) {
    const auto method = req_.method();
    switch (r.kind) {
      case Route::Presets:
        if (method == http::verb::get) return presets();
        break;
      case Route::Sessions:
        if (method == http::verb::post) return create();
        break;
      case Route::Session:
        if (method == http::verb::delete_) {
          registry_.remove(r.session);
          return Response{http::status::no_content, req_.version()};
        }
        break;
      case Route::Trajectory:
        if (method == http::verb::get) {
          registry_.find(r.session)->post([](Session& s) { return io::export_trajectory(s.trajectory()); },
                                          [self = shared_from_this()](std::string csv) {
                                            net::post(self->stream_.get_executor(), [self, csv = std::move(csv)]() mutable {
                                              self->reply(self->text(http::status::ok, "text/csv", std::move(csv)));
                                            });
                                          });
          return std::nullopt;
        }
        break;
      case Route::Socket:
        return error(http::status::bad_request, ErrorCode::ValidationError, "websocket upgrade required");
      case Route::None:
        return error(http::status::not_found, ErrorCode::ValidationError, "no such endpoint");
    }
    return error(http::status::method_not_allowed, ErrorCode::ValidationError, "method not allowed");
  }

  Response presets() {
    json list = json::array();
    for (const auto& name : rollersim::presets::names())
      list.push_back({{"name", name}, {"scenario", io::scenario_to_json(rollersim::presets::by_name(name))}});
    return text(http::status::ok, "application/json", json{{"presets", list}}.dump());
  }

  /// Body: {"preset": name} or {"scenario": {...}}, optional "tick_rate".
  Response create() {
    const json body = io::detail::parse(req_.body().empty() ? std::string_view("{}") : std::string_view(req_.body()));
    if (!body.is_object()) throw Error(ErrorCode::ValidationError, "request body must be an object");
    for (const auto& [key, _] : body.items()) {
      if (key != "preset" && key != "scenario" && key != "tick_rate")
        throw Error(ErrorCode::ValidationError, "/" + key + ": unknown field");
    }
    Scenario scenario;
    if (body.contains("preset") == body.contains("scenario"))
      throw Error(ErrorCode::ValidationError, "give exactly one of \"preset\" or \"scenario\"");
    if (body.contains("preset")) {
      if (!body.at("preset").is_string()) throw Error(ErrorCode::ValidationError, "/preset: expected a string");
      scenario = rollersim::presets::by_name(body.at("preset").get<std::string>());
    } else {
      scenario = io::parse_scenario(body.at("scenario").dump()).scenario;
    }
    SessionOptions so;
    so.tick_rate = opts_.tick_rate;
    if (body.contains("tick_rate")) {
      if (!body.at("tick_rate").is_number()) throw Error(ErrorCode::ValidationError, "/tick_rate: expected a number");
      so.tick_rate = body.at("tick_rate").get<double>();
    }
    auto host = registry_.create(ioc_, std::move(scenario), so);
    const json out = {{"id", host->id()}, {"tick_rate", host->tick_rate()}, {"state", host->initial_state()}};
    host->start();
    return text(http::status::created, "application/json", out.dump());
  }

  Response text(http::status status, const char* type, std::string body) {
    Response res{status, req_.version()};
    res.set(http::field::content_type, type);
    res.set(http::field::access_control_allow_origin, "*");
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  }

  Response error(http::status status, ErrorCode code, const std::string& message) {
    return text(status, "application/json", error_message(code, message).dump());
  }

  Response error(const Error& e) { return error(status_for(e.code()), e.code(), e.message()); }

  void reply(Response res) {
    res.keep_alive(req_.keep_alive());
    auto sp = std::make_shared<Response>(std::move(res));
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
      if (ec || !sp->keep_alive()) return self->shutdown();
      self->read();
    });
  }

  void shutdown() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  net::io_context& ioc_;
  Registry& registry_;
  const ServerOptions& opts_;
  const LogHook& log_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace detail

/// HTTP + WebSocket front end for teleoperation sessions.
class Server {
 public:
  explicit Server(ServerOptions opts, LogHook log = {})
      : opts_(std::move(opts)), log_(std::move(log)), registry_(opts_.max_sessions), acceptor_(ioc_) {
    validate(SessionOptions{opts_.tick_rate});
    if (opts_.threads < 1) throw Error(ErrorCode::ValidationError, "threads must be >= 1");
    const tcp::endpoint ep(net::ip::make_address(opts_.address), opts_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen(net::socket_base::max_listen_connections);
    accept();
  }

  ~Server() { stop(); }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  /// Serves on background threads until stop().
  void start() {
    for (int i = 0; i < opts_.threads; ++i) threads_.emplace_back([this] { ioc_.run(); });
  }

  /// Serves on the calling thread (plus threads - 1 helpers) until stop().
  void run() {
    for (int i = 1; i < opts_.threads; ++i) threads_.emplace_back([this] { ioc_.run(); });
    ioc_.run();
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    registry_.clear();
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
    });
    ioc_.stop();
    for (auto& t : threads_) {
      if (t.joinable() && t.get_id() != std::this_thread::get_id()) t.join();
    }
    threads_.clear();
  }

  std::size_t session_count() const { return registry_.size(); }

  /// SIGINT / SIGTERM end run().
  void stop_on_signals() {
    signals_.emplace(ioc_, SIGINT, SIGTERM);
    signals_->async_wait([this](beast::error_code ec, int) {
      if (!ec) stop();
    });
  }

 private:
  void accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<detail::HttpConnection>(std::move(socket), ioc_, registry_, opts_, log_)->start();
      accept();
    });
  }

  ServerOptions opts_;
  LogHook log_;
  net::io_context ioc_;
  detail::Registry registry_;
  tcp::acceptor acceptor_;
  std::optional<net::signal_set> signals_;
  std::vector<std::thread> threads_;
  std::atomic<bool> stopped_{false};
};

}  // namespace rollersim::teleop
