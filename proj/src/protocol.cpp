#include "mcst/protocol.hpp"

namespace mcst::wire {

namespace {

using ojson = nlohmann::ordered_json;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

ojson point_json(const WirePoint& p) { return ojson{{"x", p.x}, {"z", p.z}, {"dx", p.dx}, {"dz", p.dz}}; }

ojson points_json(const std::vector<WirePoint>& points) {
  ojson a = ojson::array();
  for (const auto& p : points) a.push_back(point_json(p));
  return a;
}

ojson envelope(std::string_view tag) {
  ojson j;
  j["type"] = tag;
  j["v"] = kProtocolVersion;
  return j;
}

std::vector<WirePoint> read_points(const nlohmann::json& a) {
  std::vector<WirePoint> out;
  for (const auto& p : a)
    out.push_back({p.at("x").get<double>(), p.at("z").get<double>(), p.at("dx").get<double>(), p.at("dz").get<double>()});
  return out;
}

WirePoint to_world(const RootTransform& root, const TrajectoryPoint& p) {
  const Eigen::Vector2d pos = plane_to_world(root, p.position);
  const Eigen::Vector2d dir = direction_to_world(root, p.direction);
  return {pos.x(), pos.y(), dir.x(), dir.y()};
}

}  // namespace

std::string_view type_tag(const Message& message) {
  return std::visit(overloaded{[](const ClientHello&) { return std::string_view("client_hello"); },
                               [](const ServerHello&) { return std::string_view("server_hello"); },
                               [](const ClientControl&) { return std::string_view("client_control"); },
                               [](const ServerFrame&) { return std::string_view("server_frame"); },
                               [](const ServerError&) { return std::string_view("server_error"); }},
                    message);
}

ojson to_json(const Message& message) {
  ojson j = envelope(type_tag(message));
  std::visit(overloaded{
                 [&](const ClientHello& m) {
                   j["attention"] = m.attention;
                   j["client"] = m.client;
                 },
                 [&](const ServerHello& m) {
                   j["session"] = m.session;
                   j["joint_count"] = m.joint_count;
                   j["parents"] = m.parents;
                   j["fps"] = m.fps;
                   j["tick_rate"] = m.tick_rate;
                   j["terrain"] = m.terrain;
                   j["attention"] = m.attention;
                 },
                 [&](const ClientControl& m) {
                   j["dir_x"] = m.dir_x;
                   j["dir_z"] = m.dir_z;
                   j["speed"] = m.speed;
                   j["gait"] = gait_name(m.gait);
                   j["client_time"] = m.client_time;
                 },
                 [&](const ServerFrame& m) {
                   j["frame"] = m.frame;
                   j["root"] = ojson{{"x", m.root.x}, {"z", m.root.z}, {"angle", m.root.angle}};
                   ojson joints = ojson::array();
                   for (const auto& p : m.joints) joints.push_back({p[0], p[1], p[2]});
                   j["joints"] = std::move(joints);
                   j["contacts"] = m.contacts;
                   j["gait"] = gait_name(m.gait);
                   j["trajectory"] = points_json(m.trajectory);
                   j["predicted"] = points_json(m.predicted);
                   j["fault"] = m.fault;
                   j["warnings"] = m.warnings;
                   if (m.attention) {
                     ojson tokens = ojson::array();
                     for (const auto& [scale, offset] : m.attention->tokens)
                       tokens.push_back({{"scale", scale}, {"offset", offset}});
                     j["attention"] = ojson{{"tokens", std::move(tokens)}, {"layers", m.attention->layers}};
                   }
                 },
                 [&](const ServerError& m) {
                   j["code"] = m.code;
                   j["text"] = m.text;
                 }},
             message);
  return j;
}

std::string encode_message(const Message& message) { return to_json(message).dump(); }

Message from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("message: expected a JSON object");
  if (!j.contains("type") || !j.at("type").is_string()) throw FormatError("message: missing type tag");
  const std::string tag = j.at("type").get<std::string>();
  if (!j.contains("v") || !j.at("v").is_number_integer())
    throw FormatError("message '" + tag + "': missing protocol version");
  const int version = j.at("v").get<int>();
  if (version != kProtocolVersion)
    throw FormatError("message '" + tag + "': unsupported protocol version " + std::to_string(version));
  try {
    if (tag == "client_hello") return ClientHello{j.at("attention").get<bool>(), j.at("client").get<std::string>()};
    if (tag == "server_hello") {
      ServerHello m;
      m.session = j.at("session").get<std::uint64_t>();
      m.joint_count = j.at("joint_count").get<int>();
      m.parents = j.at("parents").get<std::vector<int>>();
      m.fps = j.at("fps").get<int>();
      m.tick_rate = j.at("tick_rate").get<double>();
      m.terrain = j.at("terrain").get<std::string>();
      m.attention = j.at("attention").get<bool>();
      return m;
    }
    if (tag == "client_control") {
      ClientControl m;
      m.dir_x = j.at("dir_x").get<double>();
      m.dir_z = j.at("dir_z").get<double>();
      m.speed = j.at("speed").get<double>();
      m.gait = parse_gait(j.at("gait").get<std::string>());
      m.client_time = j.at("client_time").get<double>();
      return m;
    }
    if (tag == "server_frame") {
      ServerFrame m;
      m.frame = j.at("frame").get<std::int64_t>();
      const auto& root = j.at("root");
      m.root = {root.at("x").get<double>(), root.at("z").get<double>(), root.at("angle").get<double>()};
      for (const auto& p : j.at("joints")) {
        if (!p.is_array() || p.size() != 3) throw FormatError("message 'server_frame': joint must have 3 coordinates");
        m.joints.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
      }
      m.contacts = j.at("contacts").get<std::array<bool, 4>>();
      m.gait = parse_gait(j.at("gait").get<std::string>());
      m.trajectory = read_points(j.at("trajectory"));
      m.predicted = read_points(j.at("predicted"));
      m.fault = j.at("fault").get<bool>();
      m.warnings = j.at("warnings").get<std::vector<std::string>>();
      if (j.contains("attention")) {
        WireAttention a;
        for (const auto& t : j.at("attention").at("tokens"))
          a.tokens.emplace_back(t.at("scale").get<std::string>(), t.at("offset").get<int>());
        a.layers = j.at("attention").at("layers").get<std::vector<std::vector<std::vector<double>>>>();
        m.attention = std::move(a);
      }
      return m;
    }
    if (tag == "server_error") return ServerError{j.at("code").get<std::string>(), j.at("text").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("message '" + tag + "': " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError("message '" + tag + "': " + e.what());
  }
  throw FormatError("message: unknown type tag '" + tag + "'");
}

Message decode_message(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("message: malformed JSON: ") + e.what());
  }
  return from_json(j);
}

ControlInput to_control(const ClientControl& control) {
  ControlInput c;
  c.direction = {control.dir_x, control.dir_z};
  c.speed = control.speed;
  c.gait = control.gait;
  c.time = control.client_time;
  c.validate();
  return c;
}

ClientControl from_control(const ControlInput& control) {
  return {control.direction.x(), control.direction.y(), control.speed, control.gait, control.time};
}

ServerFrame make_server_frame(std::int64_t frame_index, const StepResult& step, bool with_attention) {
  ServerFrame m;
  m.frame = frame_index;
  m.root = step.frame.root;
  const Points3 world = local_to_world(step.frame.root, step.frame.positions);
  m.joints.reserve(static_cast<std::size_t>(world.rows()));
  for (Index i = 0; i < world.rows(); ++i) m.joints.push_back({world(i, 0), world(i, 1), world(i, 2)});
  m.contacts = step.frame.contact;
  m.gait = step.frame.gait;
  for (const auto& p : step.trajectory) m.trajectory.push_back(to_world(step.frame.root, p));
  for (const auto& p : step.predicted) m.predicted.push_back(to_world(step.next_root, p));
  m.fault = step.fault;
  m.warnings = step.warnings;
  if (with_attention && step.attention) {
    WireAttention a;
    for (const auto& t : step.attention->tokens) a.tokens.emplace_back(t.scale, t.offset);
    for (const auto& layer : step.attention->decoder_layers) {
      std::vector<std::vector<double>> heads;
      for (Index h = 0; h < layer.rows(); ++h)
        heads.emplace_back(layer.row(h).data(), layer.row(h).data() + layer.cols());
      a.layers.push_back(std::move(heads));
    }
    m.attention = std::move(a);
  }
  return m;
}

}  // namespace mcst::wire
