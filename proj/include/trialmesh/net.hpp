// Copyright 2026 The TrialMesh Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <iterator>
#include <span>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <variant>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "trialmesh/error.hpp"
#include "trialmesh/protocol.hpp"

// Message transports. Every transport carries encoded protocol frames:
//   - pipe: in-process pair, frames go through encode/decode
//   - tcp: the length-prefixed byte stream
//   - websocket: one frame per binary message, or bare JSON per text message
namespace trialmesh::net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

class Connection {
 public:
  virtual ~Connection() = default;

  // Safe to call from any thread. Throws StreamClosed once closed.
  virtual void send(const WireMessage& msg) = 0;

  // Blocks for the next inbound message; nullopt once the peer is gone.
  // A frame that fails to decode is thrown as Error; the connection stays
  // usable unless the framing itself was lost.
  virtual std::optional<WireMessage> receive() = 0;

  virtual void close() = 0;
  virtual std::string describe() const = 0;
};

namespace detail {

class Inbox {
 public:
  using Item = std::variant<WireMessage, Error>;

  void push(Item item) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      items_.push_back(std::move(item));
    }
    cv_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  // Items queued before close are still delivered.
  std::optional<WireMessage> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    Item item = std::move(items_.front());
    items_.pop_front();
    if (auto* e = std::get_if<Error>(&item)) throw *e;
    return std::get<WireMessage>(std::move(item));
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Item> items_;
  bool closed_ = false;
};

}  // namespace detail

// ---- in-process pipe -------------------------------------------------------

class PipeConnection : public Connection {
 public:
  PipeConnection(std::shared_ptr<detail::Inbox> in, std::shared_ptr<detail::Inbox> out, std::string name)
      : in_(std::move(in)), out_(std::move(out)), name_(std::move(name)) {}

  ~PipeConnection() override { close(); }

  void send(const WireMessage& msg) override {
    if (out_->closed()) throw Error(ErrorCode::StreamClosed, name_);
    Bytes frame = encode(msg);
    try {
      out_->push(decode(frame).message);
    } catch (const Error& e) {
      out_->push(e);
    }
  }

  std::optional<WireMessage> receive() override { return in_->pop(); }

  void close() override {
    in_->close();
    out_->close();
  }

  std::string describe() const override { return name_; }

 private:
  std::shared_ptr<detail::Inbox> in_, out_;
  std::string name_;
};

inline std::pair<std::shared_ptr<Connection>, std::shared_ptr<Connection>> make_pipe(
    const std::string& name = "pipe") {
  auto a = std::make_shared<detail::Inbox>();
  auto b = std::make_shared<detail::Inbox>();
  return {std::make_shared<PipeConnection>(a, b, name + ":a"),
          std::make_shared<PipeConnection>(b, a, name + ":b")};
}

// ---- io context ------------------------------------------------------------

// An io_context driven by one background thread.
class IoThread {
 public:
  IoThread() : guard_(asio::make_work_guard(ioc_)), thread_([this] { ioc_.run(); }) {}

  IoThread(const IoThread&) = delete;
  IoThread& operator=(const IoThread&) = delete;

  ~IoThread() { stop(); }

  asio::io_context& context() { return ioc_; }

  void stop() {
    guard_.reset();
    ioc_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  asio::io_context ioc_;
  asio::executor_work_guard<asio::io_context::executor_type> guard_;
  std::thread thread_;
};

// ---- TCP -------------------------------------------------------------------

class TcpConnection : public Connection, public std::enable_shared_from_this<TcpConnection> {
 public:
  explicit TcpConnection(tcp::socket socket) : socket_(std::move(socket)) {
    beast::error_code ec;
    auto ep = socket_.remote_endpoint(ec);
    name_ = ec ? "tcp:?" : "tcp:" + ep.address().to_string() + ":" + std::to_string(ep.port());
    socket_.set_option(tcp::no_delay(true), ec);
  }

  void start() {
    asio::dispatch(socket_.get_executor(), [self = shared_from_this()] { self->read_header(); });
  }

  void send(const WireMessage& msg) override {
    auto frame = std::make_shared<Bytes>(encode(msg));
    if (inbox_.closed()) throw Error(ErrorCode::StreamClosed, name_);
    asio::post(socket_.get_executor(), [self = shared_from_this(), frame] {
      self->queue_.push_back(frame);
      if (self->queue_.size() == 1) self->write_next();
    });
  }

  std::optional<WireMessage> receive() override { return inbox_.pop(); }

  void close() override {
    inbox_.close();
    asio::post(socket_.get_executor(), [self = shared_from_this()] { self->shutdown(); });
  }

  std::string describe() const override { return name_; }

 private:
  void read_header() {
    asio::async_read(socket_, asio::buffer(header_),
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (ec) return self->fail();
                       self->on_header();
                     });
  }

  void on_header() {
    const std::uint32_t len = (std::uint32_t{header_[0]} << 24) | (std::uint32_t{header_[1]} << 16) |
                              (std::uint32_t{header_[2]} << 8) | std::uint32_t{header_[3]};
    if (len > kMaxPayloadSize) {
      inbox_.push(Error(ErrorCode::PayloadTooLarge, "declared length " + std::to_string(len)));
      return fail();
    }
    payload_.resize(len);
    asio::async_read(socket_, asio::buffer(payload_),
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (ec) return self->fail();
                       try {
                         self->inbox_.push(decode_payload(
                             std::string_view(self->payload_.data(), self->payload_.size())));
                       } catch (const Error& e) {
                         self->inbox_.push(e);
                       }
                       self->read_header();
                     });
  }

  void write_next() {
    asio::async_write(socket_, asio::buffer(*queue_.front()),
                      [self = shared_from_this()](beast::error_code ec, std::size_t) {
                        self->queue_.pop_front();
                        if (ec) return self->fail();
                        if (!self->queue_.empty()) self->write_next();
                      });
  }

  void fail() {
    inbox_.close();
    shutdown();
  }

  void shutdown() {
    beast::error_code ec;
    socket_.shutdown(tcp::socket::shutdown_both, ec);
    socket_.close(ec);
  }

  tcp::socket socket_;
  std::string name_;
  std::array<std::uint8_t, kFrameHeaderSize> header_{};
  std::string payload_;
  std::deque<std::shared_ptr<Bytes>> queue_;
  detail::Inbox inbox_;
};

// Connects to a TCP endpoint; throws OrchestratorUnreachable.
inline std::shared_ptr<TcpConnection> connect_tcp(asio::io_context& ioc, const std::string& host,
                                                  std::uint16_t port) {
  tcp::resolver resolver(ioc);
  tcp::socket socket(ioc);
  beast::error_code ec;
  auto endpoints = resolver.resolve(host, std::to_string(port), ec);
  if (!ec) asio::connect(socket, endpoints, ec);
  if (ec) {
    throw Error(ErrorCode::OrchestratorUnreachable, host + ":" + std::to_string(port) + ": " + ec.message());
  }
  auto conn = std::make_shared<TcpConnection>(std::move(socket));
  conn->start();
  return conn;
}

// ---- WebSocket -------------------------------------------------------------

inline std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

// Resolves "/console/<rest>" under `root`; nullopt for anything outside it.
inline std::optional<std::filesystem::path> console_file(const std::filesystem::path& root,
                                                         std::string_view target) {
  namespace fs = std::filesystem;
  if (root.empty()) return std::nullopt;
  if (auto q = target.find('?'); q != std::string_view::npos) target = target.substr(0, q);
  constexpr std::string_view prefix = "/console";
  if (target.substr(0, prefix.size()) != prefix) return std::nullopt;
  std::string_view rest = target.substr(prefix.size());
  if (!rest.empty() && rest.front() != '/') return std::nullopt;
  while (!rest.empty() && rest.front() == '/') rest.remove_prefix(1);
  fs::path rel(std::string{rest});
  for (const auto& part : rel) {
    if (part == "..") return std::nullopt;
  }
  fs::path full = root / rel;
  std::error_code ec;
  if (fs::is_directory(full, ec)) full /= "index.html";
  if (!fs::is_regular_file(full, ec)) return std::nullopt;
  return full;
}

class WsConnection : public Connection, public std::enable_shared_from_this<WsConnection> {
 public:
  using OnOpen = std::function<void(std::shared_ptr<Connection>)>;

  WsConnection(tcp::socket socket, std::filesystem::path console_root, OnOpen on_open)
      : ws_(std::move(socket)), console_root_(std::move(console_root)), on_open_(std::move(on_open)) {
    beast::error_code ec;
    auto ep = beast::get_lowest_layer(ws_).socket().remote_endpoint(ec);
    name_ = ec ? "ws:?" : "ws:" + ep.address().to_string() + ":" + std::to_string(ep.port());
  }

  void start() {
    asio::dispatch(ws_.get_executor(), [self = shared_from_this()] {
      http::async_read(beast::get_lowest_layer(self->ws_), self->buffer_, self->request_,
                       [self](beast::error_code ec, std::size_t) {
                         if (ec) return self->fail();
                         self->on_request();
                       });
    });
  }

  void send(const WireMessage& msg) override {
    auto frame = std::make_shared<Bytes>(encode(msg));
    if (inbox_.closed()) throw Error(ErrorCode::StreamClosed, name_);
    asio::post(ws_.get_executor(), [self = shared_from_this(), frame] {
      self->queue_.push_back(frame);
      if (self->queue_.size() == 1) self->write_next();
    });
  }

  std::optional<WireMessage> receive() override { return inbox_.pop(); }

  void close() override {
    inbox_.close();
    asio::post(ws_.get_executor(), [self = shared_from_this()] {
      if (!self->ws_.is_open()) return self->shutdown();
      self->ws_.async_close(websocket::close_code::normal,
                            [self](beast::error_code) { self->shutdown(); });
    });
  }

  std::string describe() const override { return name_; }

 private:
  void on_request() {
    if (websocket::is_upgrade(request_)) {
      ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws_.read_message_max(kFrameHeaderSize + kMaxPayloadSize);
      ws_.async_accept(request_, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return self->fail();
        self->buffer_.consume(self->buffer_.size());
        if (self->on_open_) self->on_open_(self);
        self->read_next();
      });
      return;
    }
    serve_static();
  }

  void serve_static() {
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(request_.version());
    res->keep_alive(false);
    auto file = request_.method() == http::verb::get
                    ? console_file(console_root_, std::string_view(request_.target().data(),
                                                                   request_.target().size()))
                    : std::nullopt;
    if (file) {
      std::ifstream in(*file, std::ios::binary);
      res->result(http::status::ok);
      res->set(http::field::content_type, mime_type(*file));
      res->body().assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    } else {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "text/plain");
      res->body() = "not found\n";
    }
    res->prepare_payload();
    http::async_write(beast::get_lowest_layer(ws_), *res,
                      [self = shared_from_this(), res](beast::error_code, std::size_t) { self->fail(); });
  }

  void read_next() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->fail();
      self->on_message();
      self->read_next();
    });
  }

  void on_message() {
    const auto data = buffer_.data();
    const auto* p = static_cast<const std::uint8_t*>(data.data());
    const std::size_t n = data.size();
    text_mode_ = ws_.got_text();
    try {
      if (text_mode_) {
        inbox_.push(decode_payload(std::string_view(reinterpret_cast<const char*>(p), n)));
      } else {
        auto d = decode(std::span<const std::uint8_t>(p, n));
        if (!d.remainder.empty()) throw Error(ErrorCode::MalformedPayload, "one frame per message");
        inbox_.push(std::move(d.message));
      }
    } catch (const Error& e) {
      inbox_.push(e);
    }
    buffer_.consume(n);
  }

  // Replies mirror the mode of the most recent inbound message.
  void write_next() {
    const Bytes& frame = *queue_.front();
    ws_.text(text_mode_);
    auto buf = text_mode_ ? asio::buffer(frame.data() + kFrameHeaderSize, frame.size() - kFrameHeaderSize)
                          : asio::buffer(frame);
    ws_.async_write(buf, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->queue_.pop_front();
      if (ec) return self->fail();
      if (!self->queue_.empty()) self->write_next();
    });
  }

  void fail() {
    inbox_.close();
    shutdown();
  }

  void shutdown() {
    beast::error_code ec;
    auto& sock = beast::get_lowest_layer(ws_).socket();
    sock.shutdown(tcp::socket::shutdown_both, ec);
    sock.close(ec);
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::filesystem::path console_root_;
  OnOpen on_open_;
  std::string name_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  std::deque<std::shared_ptr<Bytes>> queue_;
  bool text_mode_ = false;
  detail::Inbox inbox_;
};

// ---- server ----------------------------------------------------------------

struct ServerOptions {
  std::string bind_address = "0.0.0.0";
  std::uint16_t tcp_port = 9000;  // 0 picks a free port
  std::uint16_t ws_port = 9001;
  std::filesystem::path console_root;
};

// Accepts TCP and WebSocket clients and hands each opened connection to
// `on_connection`. Throws PortInUse when either port cannot be bound.
class Server {
 public:
  using OnConnection = std::function<void(std::shared_ptr<Connection>)>;

  Server(asio::io_context& ioc, ServerOptions options, OnConnection on_connection)
      : options_(std::move(options)),
        on_connection_(std::move(on_connection)),
        tcp_acceptor_(ioc),
        ws_acceptor_(ioc) {
    open(tcp_acceptor_, options_.tcp_port);
    open(ws_acceptor_, options_.ws_port);
    tcp_port_ = tcp_acceptor_.local_endpoint().port();
    ws_port_ = ws_acceptor_.local_endpoint().port();
    asio::dispatch(tcp_acceptor_.get_executor(), [this] { accept_tcp(); });
    asio::dispatch(ws_acceptor_.get_executor(), [this] { accept_ws(); });
  }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  ~Server() { stop(); }

  std::uint16_t tcp_port() const { return tcp_port_; }
  std::uint16_t ws_port() const { return ws_port_; }

  // Stops accepting; blocks until the acceptors are closed.
  void stop() {
    if (stopped_.exchange(true)) return;
    auto& ioc = static_cast<asio::io_context&>(tcp_acceptor_.get_executor().context());
    if (ioc.stopped()) {
      beast::error_code ec;
      tcp_acceptor_.close(ec);
      ws_acceptor_.close(ec);
      return;
    }
    std::promise<void> done;
    asio::post(tcp_acceptor_.get_executor(), [&] {
      beast::error_code ec;
      tcp_acceptor_.close(ec);
      ws_acceptor_.close(ec);
      done.set_value();
    });
    done.get_future().wait();
  }

 private:
  void open(tcp::acceptor& acceptor, std::uint16_t port) {
    beast::error_code ec;
    tcp::endpoint ep(asio::ip::make_address(options_.bind_address, ec), port);
    if (ec) throw Error(ErrorCode::InvalidConfig, "bad bind address " + options_.bind_address);
    acceptor.open(ep.protocol(), ec);
    if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(ep, ec);
    if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) {
      beast::error_code ignored;
      tcp_acceptor_.close(ignored);
      ws_acceptor_.close(ignored);
      throw Error(ErrorCode::PortInUse, "port " + std::to_string(port) + ": " + ec.message());
    }
  }

  void accept_tcp() {
    tcp_acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // closed
      auto conn = std::make_shared<TcpConnection>(std::move(socket));
      conn->start();
      on_connection_(conn);
      accept_tcp();
    });
  }

  void accept_ws() {
    ws_acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<WsConnection>(std::move(socket), options_.console_root, on_connection_)->start();
      accept_ws();
    });
  }

  ServerOptions options_;
  OnConnection on_connection_;
  tcp::acceptor tcp_acceptor_, ws_acceptor_;
  std::uint16_t tcp_port_ = 0, ws_port_ = 0;
  std::atomic<bool> stopped_{false};
};

}  // namespace trialmesh::net
