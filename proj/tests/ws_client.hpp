#pragma once

// Blocking websocket client for exercising the motion service.

#include "mcst/protocol.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <optional>
#include <string>

namespace mcst::testing {

class WsClient {
 public:
  explicit WsClient(unsigned short port) : resolver_(ioc_), ws_(ioc_) {
    const auto results = resolver_.resolve("127.0.0.1", std::to_string(port));
    boost::asio::connect(ws_.next_layer(), results.begin(), results.end());
    ws_.handshake("127.0.0.1:" + std::to_string(port), "/");
    ws_.text(true);
  }

  void send(const std::string& text) { ws_.write(boost::asio::buffer(text)); }
  void send(const wire::Message& m) { send(wire::encode_message(m)); }

  /// Next text message, or nothing once the server has closed.
  std::optional<std::string> receive() {
    boost::beast::flat_buffer buffer;
    boost::beast::error_code ec;
    ws_.read(buffer, ec);
    if (ec) return std::nullopt;
    return boost::beast::buffers_to_string(buffer.data());
  }

  void close() {
    boost::beast::error_code ec;
    ws_.close(boost::beast::websocket::close_code::normal, ec);
  }

 private:
  boost::asio::io_context ioc_;
  boost::asio::ip::tcp::resolver resolver_;
  boost::beast::websocket::stream<boost::asio::ip::tcp::socket> ws_;
};

}  // namespace mcst::testing
