#include "objsearch/server.hpp"

#include "objsearch/error.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <array>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

namespace objsearch {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

std::string_view content_type(const std::filesystem::path &p) {
  const std::string ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

bool looks_like_http(std::string_view head) {
  for (std::string_view m : {"GET ", "HEAD ", "POST ", "PUT ", "DELETE ", "OPTIONS "}) {
    if (head.starts_with(m)) return true;
  }
  return false;
}

class Connection : public std::enable_shared_from_this<Connection> {
public:
  Connection(tcp::socket socket, SessionHub &hub, const ServerOptions &options)
      : socket_(std::move(socket)), hub_(hub), options_(options),
        outbox_(std::make_shared<Outbox>(options.outbox_capacity)) {}

  void start() { peek(); }

private:
  enum class Mode { Unknown, Lines, WebSocket, Http };

  void peek() {
    socket_.async_read_some(net::buffer(chunk_), [self = shared_from_this()](beast::error_code ec, std::size_t n) {
      self->on_peek(ec, n);
    });
  }

  void on_peek(beast::error_code ec, std::size_t n) {
    if (ec) return finish();
    pending_.append(chunk_.data(), n);
    const bool decided = pending_.size() >= 8 || pending_.find('\n') != std::string::npos;
    if (!decided) return peek();
    if (looks_like_http(pending_)) {
      mode_ = Mode::Http;
      buffer_.commit(net::buffer_copy(buffer_.prepare(pending_.size()), net::buffer(pending_)));
      pending_.clear();
      http::async_read(socket_, buffer_, request_, [self = shared_from_this()](beast::error_code e, std::size_t) {
        self->on_request(e);
      });
      return;
    }
    mode_ = Mode::Lines;
    attach_outbox();
    drain_lines();
    read_line();
  }

  void attach_outbox() {
    std::weak_ptr<Connection> weak = shared_from_this();
    auto executor = socket_.get_executor();
    outbox_->set_notify([weak, executor] {
      net::post(executor, [weak] {
        if (auto self = weak.lock()) self->do_write();
      });
    });
  }

  // ---- newline-delimited JSON ----

  void drain_lines() {
    std::size_t pos;
    while ((pos = pending_.find('\n')) != std::string::npos) {
      std::string line = pending_.substr(0, pos);
      pending_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      hub_.handle_line(line, outbox_);
    }
  }

  void read_line() {
    net::async_read_until(socket_, net::dynamic_buffer(pending_), '\n',
                          [self = shared_from_this()](beast::error_code ec, std::size_t) {
                            if (ec) return self->finish();
                            self->drain_lines();
                            self->read_line();
                          });
  }

  // ---- HTTP / WebSocket ----

  void on_request(beast::error_code ec) {
    if (ec) return finish();
    const std::string target(request_.target());
    if (websocket::is_upgrade(request_)) {
      if (target != "/session") return respond(http::status::not_found, "no websocket endpoint here\n", "text/plain");
      mode_ = Mode::WebSocket;
      ws_ = std::make_unique<websocket::stream<tcp::socket>>(std::move(socket_));
      ws_->text(true);
      ws_->async_accept(request_, [self = shared_from_this()](beast::error_code e) {
        if (e) return self->finish();
        self->attach_outbox_ws();
        self->read_ws();
      });
      return;
    }
    if (request_.method() != http::verb::get && request_.method() != http::verb::head) {
      return respond(http::status::method_not_allowed, "method not allowed\n", "text/plain");
    }
    if (target == "/health") return respond(http::status::ok, "ok\n", "text/plain");
    serve_static(target);
  }

  void serve_static(const std::string &target) {
    std::string path = target.substr(0, target.find('?'));
    if (options_.console_dir.empty() || !(path == "/console" || path.starts_with("/console/"))) {
      return respond(http::status::not_found, "not found\n", "text/plain");
    }
    std::string rel = path == "/console" ? "" : path.substr(std::string("/console/").size());
    if (rel.empty()) rel = "index.html";
    const std::filesystem::path relative = std::filesystem::path(rel).lexically_normal();
    if (relative.is_absolute() || relative.empty() || *relative.begin() == "..") {
      return respond(http::status::forbidden, "forbidden\n", "text/plain");
    }
    std::filesystem::path file = options_.console_dir / relative;
    if (std::filesystem::is_directory(file)) file /= "index.html";
    std::ifstream in(file, std::ios::binary);
    if (!in) return respond(http::status::not_found, "not found\n", "text/plain");
    std::ostringstream body;
    body << in.rdbuf();
    respond(http::status::ok, body.str(), std::string(content_type(file)));
  }

  void respond(http::status status, std::string body, const std::string &type) {
    auto res = std::make_shared<http::response<http::string_body>>(status, request_.version());
    res->set(http::field::server, "objsearch");
    res->set(http::field::content_type, type);
    res->keep_alive(false);
    if (request_.method() != http::verb::head) res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(socket_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->socket_.shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  void attach_outbox_ws() {
    std::weak_ptr<Connection> weak = shared_from_this();
    auto executor = ws_->get_executor();
    outbox_->set_notify([weak, executor] {
      net::post(executor, [weak] {
        if (auto self = weak.lock()) self->do_write();
      });
    });
  }

  void read_ws() {
    ws_->async_read(ws_buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->finish();
      std::string text = beast::buffers_to_string(self->ws_buffer_.data());
      self->ws_buffer_.consume(self->ws_buffer_.size());
      std::size_t start = 0;
      while (start <= text.size()) {
        const auto end = text.find('\n', start);
        const std::string line = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
        self->hub_.handle_line(line, self->outbox_);
        if (end == std::string::npos) break;
        start = end + 1;
      }
      self->read_ws();
    });
  }

  // ---- outgoing ----

  void do_write() {
    if (writing_ || finished_) return;
    auto line = outbox_->pop();
    if (!line) return;
    writing_ = true;
    write_buf_ = std::move(*line);
    auto done = [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      if (ec) return self->finish();
      self->do_write();
    };
    if (mode_ == Mode::WebSocket) {
      ws_->async_write(net::buffer(write_buf_), std::move(done));
    } else {
      write_buf_ += '\n';
      net::async_write(socket_, net::buffer(write_buf_), std::move(done));
    }
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    hub_.disconnect(outbox_);
    beast::error_code ignored;
    if (ws_) ws_->next_layer().close(ignored);
    else socket_.close(ignored);
  }

  tcp::socket socket_;
  SessionHub &hub_;
  const ServerOptions &options_;
  OutboxPtr outbox_;
  Mode mode_ = Mode::Unknown;
  std::array<char, 4096> chunk_{};
  std::string pending_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  std::unique_ptr<websocket::stream<tcp::socket>> ws_;
  beast::flat_buffer ws_buffer_;
  std::string write_buf_;
  bool writing_ = false;
  bool finished_ = false;
};

} // namespace

struct Server::Impl {
  SessionHub &hub;
  ServerOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> threads;
  std::mutex mu;
  std::condition_variable stopped_cv;
  bool running = false;

  Impl(SessionHub &h, ServerOptions o) : hub(h), options(std::move(o)) {}

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec == net::error::operation_aborted) return;
      if (!ec) std::make_shared<Connection>(std::move(socket), hub, options)->start();
      accept();
    });
  }
};

Server::Server(SessionHub &hub, ServerOptions options)
    : impl_(std::make_unique<Impl>(hub, std::move(options))) {}

Server::~Server() { stop(); }

void Server::start() {
  auto &im = *impl_;
  beast::error_code ec;
  const auto address = net::ip::make_address(im.options.host, ec);
  if (ec) throw Error("invalid listen address '" + im.options.host + "'");
  const tcp::endpoint endpoint(address, im.options.port);
  im.acceptor.open(endpoint.protocol(), ec);
  if (!ec) im.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor.bind(endpoint, ec);
  if (!ec) im.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw Error("cannot listen on " + im.options.host + ":" + std::to_string(im.options.port) + ": " + ec.message());
  im.accept();
  int n = im.options.threads > 0 ? im.options.threads
                                 : static_cast<int>(std::max(2u, std::thread::hardware_concurrency()));
  {
    std::lock_guard lock(im.mu);
    im.running = true;
  }
  for (int i = 0; i < n; ++i) im.threads.emplace_back([&im] { im.ioc.run(); });
}

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::stop() {
  auto &im = *impl_;
  {
    std::lock_guard lock(im.mu);
    if (!im.running) return;
    im.running = false;
  }
  net::post(im.ioc, [&im] {
    beast::error_code ignored;
    im.acceptor.close(ignored);
  });
  im.ioc.stop();
  for (auto &t : im.threads) {
    if (t.joinable()) t.join();
  }
  im.threads.clear();
  im.stopped_cv.notify_all();
}

void Server::wait() {
  std::unique_lock lock(impl_->mu);
  impl_->stopped_cv.wait(lock, [this] { return !impl_->running; });
}

} // namespace objsearch
