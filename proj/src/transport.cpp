// Copyright 2026 The edgeval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <deque>

#include "edgeval/server.hpp"

namespace edgeval::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxBodyBytes = 256u << 20;
constexpr std::size_t kViewerBacklog = 64;

std::map<std::string, std::string> query_of(std::string_view target) {
  std::map<std::string, std::string> out;
  const auto q = target.find('?');
  if (q == std::string_view::npos) return out;
  target.remove_prefix(q + 1);
  while (!target.empty()) {
    const auto amp = target.find('&');
    const auto pair = target.substr(0, amp);
    const auto eq = pair.find('=');
    out[std::string(pair.substr(0, eq))] = eq == std::string_view::npos ? "" : std::string(pair.substr(eq + 1));
    if (amp == std::string_view::npos) break;
    target.remove_prefix(amp + 1);
  }
  return out;
}

/// "/stream/<id>" -> id.
std::optional<std::string> stream_session(std::string_view target) {
  target = target.substr(0, target.find('?'));
  constexpr std::string_view prefix = "/stream/";
  if (target.substr(0, prefix.size()) != prefix) return std::nullopt;
  const auto id = std::string(target.substr(prefix.size()));
  if (!store::is_safe_component(id) || id.find('/') != std::string::npos) return std::nullopt;
  return id;
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, ServerContext& ctx) : ws_(std::move(socket)), ctx_(ctx) {}

  ~WsSession() {
    if (endpoint_) endpoint_->on_close();
  }

  void run(http::request<http::string_body> req) {
    const auto target = std::string(req.target());
    const auto session = stream_session(target);
    const auto query = query_of(target);
    std::optional<std::string> protocol;
    if (const auto it = query.find("protocol"); it != query.end() && !it->second.empty()) protocol = it->second;
    const bool subscribe = query.count("subscribe") && query.at("subscribe") != "0";

    auto sink = std::make_shared<Sink>(weak_from_this());
    endpoint_ = std::make_unique<StreamEndpoint>(ctx_, *session, protocol, sink, subscribe);

    ws_.binary(true);
    ws_.read_message_max(kMaxBodyBytes);
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  /// Viewer side: enqueue without blocking, drop when the client lags.
  class Sink final : public orchestrator::Subscriber {
   public:
    explicit Sink(std::weak_ptr<WsSession> s) : session_(std::move(s)) {}
    bool offer(orchestrator::SharedBytes message) override {
      const auto s = session_.lock();
      if (!s) return false;
      if (s->backlog_.load() >= kViewerBacklog) return false;
      ++s->backlog_;
      asio::post(s->ws_.get_executor(), [s, m = std::move(message)] { s->send(m, true); });
      return true;
    }

   private:
    std::weak_ptr<WsSession> session_;
  };

  void on_accept(beast::error_code ec) {
    if (ec) {
      spdlog::warn("websocket accept: {}", ec.message());
      return;
    }
    read();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      if (ec != websocket::error::closed) spdlog::debug("websocket read: {}", ec.message());
      if (endpoint_) endpoint_->on_close();
      endpoint_.reset();
      return;
    }
    const auto data = buffer_.cdata();
    const std::span<const std::uint8_t> message(static_cast<const std::uint8_t*>(data.data()), data.size());
    for (auto& reply : endpoint_->on_message(message))
      send(std::make_shared<const Bytes>(std::move(reply)), false);
    buffer_.consume(buffer_.size());
    if (endpoint_->wants_close()) {
      closing_ = true;
      if (queue_.empty()) close();
      return;
    }
    read();
  }

  void send(orchestrator::SharedBytes message, bool broadcast) {
    queue_.push_back({std::move(message), broadcast});
    if (queue_.size() == 1) write_next();
  }

  void write_next() {
    ws_.async_write(asio::buffer(*queue_.front().bytes),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (queue_.front().broadcast) --backlog_;
    queue_.pop_front();
    if (ec) {
      queue_.clear();
      return;
    }
    if (!queue_.empty()) {
      write_next();
    } else if (closing_) {
      close();
    }
  }

  void close() {
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  struct Outgoing {
    orchestrator::SharedBytes bytes;
    bool broadcast;
  };

  websocket::stream<beast::tcp_stream> ws_;
  ServerContext& ctx_;
  beast::flat_buffer buffer_;
  std::unique_ptr<StreamEndpoint> endpoint_;
  std::deque<Outgoing> queue_;
  std::atomic<std::size_t> backlog_{0};
  bool closing_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, ServerContext& ctx) : stream_(std::move(socket)), ctx_(ctx) {}

  void run() {
    asio::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::read, shared_from_this()));
  }

 private:
  void read() {
    parser_.emplace();
    parser_->body_limit(kMaxBodyBytes);
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, *parser_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    if (ec) return;
    auto req = parser_->release();

    if (websocket::is_upgrade(req)) {
      if (stream_session(std::string(req.target()))) {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), ctx_)->run(std::move(req));
        return;
      }
    }

    const auto res = handle_http(ctx_, {std::string(req.method_string()), std::string(req.target()), req.body()});
    auto out = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(res.status),
                                                                   req.version());
    out->set(http::field::server, "edgeval");
    out->set(http::field::content_type, res.content_type);
    out->set(http::field::access_control_allow_origin, "*");
    out->keep_alive(req.keep_alive());
    out->body() = res.body;
    out->prepare_payload();
    http::async_write(stream_, *out,
                      [self = shared_from_this(), out](beast::error_code wec, std::size_t) {
                        if (wec) return;
                        if (!out->keep_alive()) {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                          return;
                        }
                        self->read();
                      });
  }

  beast::tcp_stream stream_;
  ServerContext& ctx_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
};

}  // namespace

struct Server::Impl {
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> threads;
  ServerContext* ctx = nullptr;

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec != asio::error::operation_aborted) spdlog::warn("accept: {}", ec.message());
        if (!acceptor.is_open()) return;
      } else {
        std::make_shared<HttpSession>(std::move(socket), *ctx)->run();
      }
      accept();
    });
  }
};

Server::Server(ServerContext& ctx, int threads) : impl_(std::make_unique<Impl>()), ctx_(ctx), threads_(threads) {
  impl_->ctx = &ctx_;
}

Server::~Server() { stop(); }

std::uint16_t Server::start() {
  const auto [host, port] = split_bind_address(ctx_.config().bind_address);
  const auto address = asio::ip::make_address(host == "localhost" ? "127.0.0.1" : host);
  const tcp::endpoint ep{address, port};
  auto& acc = impl_->acceptor;
  acc.open(ep.protocol());
  acc.set_option(asio::socket_base::reuse_address(true));
  acc.bind(ep);
  acc.listen(asio::socket_base::max_listen_connections);
  port_ = acc.local_endpoint().port();
  impl_->accept();
  for (int i = 0; i < std::max(threads_, 1); ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
  spdlog::info("listening on {}:{}", host, port_);
  return port_;
}

void Server::stop() {
  if (!impl_) return;
  asio::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
  });
  impl_->ioc.stop();
  for (auto& t : impl_->threads)
    if (t.joinable()) t.join();
  impl_->threads.clear();
}

}  // namespace edgeval::server
