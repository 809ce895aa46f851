#pragma once

// Wire protocol between the motion service and its clients.
//
// Every message is one JSON object sent as a single websocket text frame.
// The first two members are always "type" (tag below) and "v" (protocol
// version); the remaining members appear in the fixed order listed here.
//
//   client_hello    attention (bool), client (string)
//   server_hello    session (u64), joint_count, parents [J], fps, tick_rate,
//                   terrain, attention (bool)
//   client_control  dir_x, dir_z, speed, gait (name), client_time
//   server_frame    frame (i64), root {x, z, angle}, joints [J][3] world
//                   positions, contacts [4], gait, trajectory [S] and
//                   predicted [S] points {x, z, dx, dz} in world space,
//                   fault (bool), warnings [string], and attention
//                   {tokens [{scale, offset}], layers [L][heads][tokens]}
//                   when the client opted in
//   server_error    code, text
//
// Doubles are printed with round-trip precision, so decode(encode(m)) == m.

#include "mcst/runtime.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mcst::wire {

inline constexpr int kProtocolVersion = 1;

struct ClientHello {
  bool attention = false;
  std::string client;
  bool operator==(const ClientHello&) const = default;
};

struct ServerHello {
  std::uint64_t session = 0;
  int joint_count = 0;
  std::vector<int> parents;
  int fps = 60;
  double tick_rate = 60.0;
  std::string terrain;
  bool attention = false;
  bool operator==(const ServerHello&) const = default;
};

struct ClientControl {
  double dir_x = 0.0;
  double dir_z = 0.0;
  double speed = 0.0;
  Gait gait = Gait::Standing;
  double client_time = 0.0;
  bool operator==(const ClientControl&) const = default;
};

struct WirePoint {
  double x = 0.0, z = 0.0, dx = 0.0, dz = 1.0;
  bool operator==(const WirePoint&) const = default;
};

struct WireAttention {
  std::vector<std::pair<std::string, int>> tokens;
  /// [layer][head][token]
  std::vector<std::vector<std::vector<double>>> layers;
  bool operator==(const WireAttention&) const = default;
};

struct ServerFrame {
  std::int64_t frame = 0;
  RootTransform root;
  std::vector<std::array<double, 3>> joints;
  std::array<bool, 4> contacts{};
  Gait gait = Gait::Standing;
  std::vector<WirePoint> trajectory;
  std::vector<WirePoint> predicted;
  bool fault = false;
  std::vector<std::string> warnings;
  std::optional<WireAttention> attention;
  bool operator==(const ServerFrame&) const = default;
};

struct ServerError {
  std::string code;
  std::string text;
  bool operator==(const ServerError&) const = default;
};

using Message = std::variant<ClientHello, ServerHello, ClientControl, ServerFrame, ServerError>;

std::string_view type_tag(const Message& message);

nlohmann::ordered_json to_json(const Message& message);
std::string encode_message(const Message& message);

/// Throws FormatError for malformed JSON, missing fields, an unknown type tag
/// or an unsupported version; the message names the tag.
Message decode_message(const std::string& text);
Message from_json(const nlohmann::json& j);

ControlInput to_control(const ClientControl& control);
ClientControl from_control(const ControlInput& control);

/// World-space frame message for one session step.
ServerFrame make_server_frame(std::int64_t frame_index, const StepResult& step, bool with_attention);

}  // namespace mcst::wire
