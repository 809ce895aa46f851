#include "mcst/skeleton.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mcst {

namespace {

constexpr std::array<std::string_view, kGaitCount> kGaitNames = {"standing", "walking", "jogging", "jumping",
                                                                 "crouching"};

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::ordered_json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void check_format(const nlohmann::json& j, std::string_view format, const std::filesystem::path& path) {
  if (j.value("format", std::string{}) != format) throw ConfigError(path.string() + ": expected format " + std::string(format));
  if (j.value("version", 0) != 1) throw ConfigError(path.string() + ": unsupported version");
}

}  // namespace

std::string_view gait_name(Gait gait) { return kGaitNames.at(static_cast<std::size_t>(gait)); }

Gait parse_gait(std::string_view name) {
  for (std::size_t i = 0; i < kGaitNames.size(); ++i)
    if (kGaitNames[i] == name) return static_cast<Gait>(i);
  throw ConfigError("unknown gait '" + std::string(name) + "'");
}

Gait gait_from_index(int index) {
  if (index < 0 || index >= kGaitCount) throw FormatError("gait index out of range: " + std::to_string(index));
  return static_cast<Gait>(index);
}

double wrap_angle(double angle) {
  constexpr double pi = std::numbers::pi;
  double a = std::fmod(angle + pi, 2.0 * pi);
  if (a <= 0.0) a += 2.0 * pi;
  return a - pi;
}

Eigen::Vector2d facing(const RootTransform& root) { return {std::sin(root.angle), std::cos(root.angle)}; }

Eigen::Vector2d direction_to_world(const RootTransform& root, const Eigen::Vector2d& local) {
  const double c = std::cos(root.angle), s = std::sin(root.angle);
  return {c * local.x() + s * local.y(), -s * local.x() + c * local.y()};
}

Eigen::Vector2d direction_to_local(const RootTransform& root, const Eigen::Vector2d& world) {
  const double c = std::cos(root.angle), s = std::sin(root.angle);
  return {c * world.x() - s * world.y(), s * world.x() + c * world.y()};
}

Eigen::Vector2d plane_to_world(const RootTransform& root, const Eigen::Vector2d& local) {
  return direction_to_world(root, local) + Eigen::Vector2d(root.x, root.z);
}

Eigen::Vector2d plane_to_local(const RootTransform& root, const Eigen::Vector2d& world) {
  return direction_to_local(root, world - Eigen::Vector2d(root.x, root.z));
}

Eigen::Vector3d rotate_to_world(const RootTransform& root, const Eigen::Vector3d& local) {
  const Eigen::Vector2d p = direction_to_world(root, {local.x(), local.z()});
  return {p.x(), local.y(), p.y()};
}

Eigen::Vector3d rotate_to_local(const RootTransform& root, const Eigen::Vector3d& world) {
  const Eigen::Vector2d p = direction_to_local(root, {world.x(), world.z()});
  return {p.x(), world.y(), p.y()};
}

Eigen::Vector3d local_to_world(const RootTransform& root, const Eigen::Vector3d& local) {
  return rotate_to_world(root, local) + Eigen::Vector3d(root.x, 0.0, root.z);
}

Eigen::Vector3d world_to_local(const RootTransform& root, const Eigen::Vector3d& world) {
  return rotate_to_local(root, world - Eigen::Vector3d(root.x, 0.0, root.z));
}

Points3 local_to_world(const RootTransform& root, const Points3& local) {
  Points3 out(local.rows(), 3);
  for (Index j = 0; j < local.rows(); ++j) out.row(j) = local_to_world(root, Eigen::Vector3d(local.row(j))).transpose();
  return out;
}

Points3 world_to_local(const RootTransform& root, const Points3& world) {
  Points3 out(world.rows(), 3);
  for (Index j = 0; j < world.rows(); ++j) out.row(j) = world_to_local(root, Eigen::Vector3d(world.row(j))).transpose();
  return out;
}

RootTransform relative_root(const RootTransform& from, const RootTransform& to) {
  const Eigen::Vector2d d = plane_to_local(from, {to.x, to.z});
  return {d.x(), d.y(), wrap_angle(to.angle - from.angle)};
}

RootTransform advance_root(const RootTransform& from, const RootTransform& delta) {
  const Eigen::Vector2d p = plane_to_world(from, {delta.x, delta.z});
  return {p.x(), p.y(), wrap_angle(from.angle + delta.angle)};
}

void SkeletonSpec::validate() const {
  if (joint_count <= 0) throw ConfigError("skeleton: joint_count must be positive");
  if (static_cast<int>(parents.size()) != joint_count) throw ConfigError("skeleton: parents length != joint_count");
  if (!names.empty() && static_cast<int>(names.size()) != joint_count)
    throw ConfigError("skeleton: names length != joint_count");
  if (parents[0] != -1) throw ConfigError("skeleton: joint 0 must be the root (parent -1)");
  for (int j = 1; j < joint_count; ++j) {
    if (parents[j] < 0 || parents[j] >= joint_count || parents[j] == j)
      throw ConfigError("skeleton: joint " + std::to_string(j) + " has invalid parent");
    int cursor = j, hops = 0;
    while (cursor != 0) {
      cursor = parents[cursor];
      if (cursor < 0 || ++hops > joint_count) throw ConfigError("skeleton: joint " + std::to_string(j) + " is not connected to the root");
    }
  }
  for (const auto& [name, joints] : subsets) {
    for (int j : joints)
      if (j < 0 || j >= joint_count) throw ConfigError("skeleton: subset '" + name + "' references joint " + std::to_string(j));
  }
  for (int j : foot_joints)
    if (j < 0 || j >= joint_count) throw ConfigError("skeleton: foot joint " + std::to_string(j) + " out of range");
}

const std::vector<int>& SkeletonSpec::subset(const std::string& name) const {
  const auto it = subsets.find(name);
  if (it == subsets.end()) throw ConfigError("skeleton: unknown subset '" + name + "'");
  return it->second;
}

std::uint64_t SkeletonSpec::hash() const {
  std::ostringstream s;
  s << "J=" << joint_count << ";P=";
  for (int p : parents) s << p << ',';
  for (const auto& [name, joints] : subsets) {
    s << ";S:" << name << '=';
    for (int j : joints) s << j << ',';
  }
  s << ";F=";
  for (int f : foot_joints) s << f << ',';
  return fnv1a(s.str());
}

SkeletonSpec default_skeleton() {
  SkeletonSpec s;
  s.joint_count = 31;
  s.names = {"Hips",         "LHipJoint",      "LeftUpLeg",       "LeftLeg",   "LeftFoot",       "LeftToeBase",
             "RHipJoint",    "RightUpLeg",     "RightLeg",        "RightFoot", "RightToeBase",   "LowerBack",
             "Spine",        "Spine1",         "Neck",            "Neck1",     "Head",           "LeftShoulder",
             "LeftArm",      "LeftForeArm",    "LeftHand",        "LeftFingerBase", "LeftHandIndex1", "LThumb",
             "RightShoulder", "RightArm",      "RightForeArm",    "RightHand", "RightFingerBase", "RightHandIndex1",
             "RThumb"};
  s.parents = {-1, 0, 1, 2, 3, 4, 0, 6, 7, 8, 9, 0, 11, 12, 13, 14, 15, 13, 17, 18, 19, 20, 21, 20, 13, 24, 25, 26, 27, 28, 27};
  std::vector<int> all(31);
  for (int j = 0; j < 31; ++j) all[j] = j;
  std::vector<int> arm, leg;
  for (int j = 17; j <= 30; ++j) arm.push_back(j);
  for (int j = 1; j <= 10; ++j) leg.push_back(j);
  s.subsets = {{"full", all}, {"arm", arm}, {"leg", leg}};
  s.foot_joints = {4, 5, 9, 10};
  return s;
}

void PoolingMap::validate(int joint_count) const {
  if (groups.empty()) throw ConfigError("pooling map '" + name + "': no groups");
  std::vector<int> seen(static_cast<std::size_t>(joint_count), 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw ConfigError("pooling map '" + name + "': group " + std::to_string(g) + " is empty");
    for (int j : groups[g]) {
      if (j < 0 || j >= joint_count)
        throw ConfigError("pooling map '" + name + "': joint " + std::to_string(j) + " out of range");
      if (seen[static_cast<std::size_t>(j)]++)
        throw ConfigError("pooling map '" + name + "': joint " + std::to_string(j) + " appears in two groups");
    }
  }
  for (int j = 0; j < joint_count; ++j)
    if (!seen[static_cast<std::size_t>(j)])
      throw ConfigError("pooling map '" + name + "': joint " + std::to_string(j) + " is not covered");
}

PoolingMap default_coarse_map() {
  return {"coarse",
          {{14, 15, 16},
           {0, 11, 12, 13},
           {17, 18, 19, 20, 21, 22, 23},
           {24, 25, 26, 27, 28, 29, 30},
           {1, 2, 3, 4, 5},
           {6, 7, 8, 9, 10}}};
}

PoolingMap default_middle_map() {
  return {"middle",
          {{14, 15, 16},
           {0, 11},
           {12, 13},
           {17, 18},
           {19, 20, 21, 22, 23},
           {24, 25},
           {26, 27, 28, 29, 30},
           {1, 2},
           {3, 4, 5},
           {6, 7},
           {8, 9, 10}}};
}

SkeletonSpec load_skeleton(const std::filesystem::path& path) {
  const auto j = read_json(path);
  check_format(j, "mcst-skeleton", path);
  SkeletonSpec s;
  try {
    for (const auto& joint : j.at("joints")) {
      s.names.push_back(joint.at("name").get<std::string>());
      s.parents.push_back(joint.at("parent").get<int>());
    }
    s.joint_count = static_cast<int>(s.parents.size());
    s.subsets = j.at("subsets").get<std::map<std::string, std::vector<int>>>();
    const auto feet = j.at("foot_joints").get<std::vector<int>>();
    if (feet.size() != 4) throw ConfigError(path.string() + ": exactly 4 foot joints required");
    std::copy(feet.begin(), feet.end(), s.foot_joints.begin());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_skeleton(const SkeletonSpec& skeleton, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "mcst-skeleton";
  j["version"] = 1;
  auto joints = nlohmann::ordered_json::array();
  for (int i = 0; i < skeleton.joint_count; ++i) {
    nlohmann::ordered_json joint;
    joint["name"] = skeleton.names.empty() ? "joint" + std::to_string(i) : skeleton.names[i];
    joint["parent"] = skeleton.parents[i];
    joints.push_back(joint);
  }
  j["joints"] = joints;
  j["subsets"] = skeleton.subsets;
  j["foot_joints"] = skeleton.foot_joints;
  write_json(j, path);
}

PoolingMap load_pooling_map(const std::filesystem::path& path) {
  const auto j = read_json(path);
  check_format(j, "mcst-pooling", path);
  PoolingMap map;
  try {
    map.name = j.at("name").get<std::string>();
    map.groups = j.at("groups").get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return map;
}

void save_pooling_map(const PoolingMap& map, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "mcst-pooling";
  j["version"] = 1;
  j["name"] = map.name;
  j["groups"] = map.groups;
  write_json(j, path);
}

bool identical(const PoseFrame& a, const PoseFrame& b) {
  return a.positions.rows() == b.positions.rows() && a.velocities.rows() == b.velocities.rows() &&
         a.rotations.rows() == b.rotations.rows() && a.positions == b.positions && a.velocities == b.velocities &&
         a.rotations == b.rotations && a.root == b.root && a.contact == b.contact && a.gait == b.gait;
}

PoseFrame make_frame(int joint_count) {
  PoseFrame f;
  f.positions = Points3::Zero(joint_count, 3);
  f.velocities = Points3::Zero(joint_count, 3);
  f.rotations = Quats::Zero(joint_count, 4);
  f.rotations.col(0).setOnes();
  return f;
}

Eigen::Quaterniond quaternion_at(const Quats& rotations, Index joint) {
  return {rotations(joint, 0), rotations(joint, 1), rotations(joint, 2), rotations(joint, 3)};
}

void set_quaternion(Quats& rotations, Index joint, const Eigen::Quaterniond& q) {
  rotations.row(joint) << q.w(), q.x(), q.y(), q.z();
}

double quat_angle(const Eigen::Quaterniond& q1, const Eigen::Quaterniond& q2) {
  const double n1 = q1.norm(), n2 = q2.norm();
  require(n1 > 0.0 && n2 > 0.0, "quat_angle: zero quaternion");
  const double dot = std::abs(q1.coeffs().dot(q2.coeffs())) / (n1 * n2);
  return 2.0 * std::acos(std::clamp(dot, 0.0, 1.0));
}

PooledPose pool_coarse(const PoseFrame& frame, const PoolingMap& map) {
  map.validate(frame.joint_count());
  PooledPose out{Points3::Zero(map.group_count(), 3), Points3::Zero(map.group_count(), 3)};
  for (int g = 0; g < map.group_count(); ++g) {
    for (int j : map.groups[g]) {
      out.positions.row(g) += frame.positions.row(j);
      out.velocities.row(g) += frame.velocities.row(j);
    }
    const double n = static_cast<double>(map.groups[g].size());
    out.positions.row(g) /= n;
    out.velocities.row(g) /= n;
  }
  return out;
}

namespace {

/// Positions and velocities of `frame` re-expressed in `current`'s root frame.
PoseFrame reexpress(const PoseFrame& frame, const RootTransform& current) {
  PoseFrame out = frame;
  for (Index j = 0; j < frame.positions.rows(); ++j) {
    const Eigen::Vector3d world = local_to_world(frame.root, Eigen::Vector3d(frame.positions.row(j)));
    out.positions.row(j) = world_to_local(current, world).transpose();
    const Eigen::Vector3d vworld = rotate_to_world(frame.root, Eigen::Vector3d(frame.velocities.row(j)));
    out.velocities.row(j) = rotate_to_local(current, vworld).transpose();
  }
  out.root = current;
  return out;
}

}  // namespace

MultiScaleInput build_input(std::span<const PoseFrame> history, const RootTransform& current,
                            std::span<const int> offsets, std::span<const PoolingMap> coarse_maps) {
  require(!offsets.empty(), "build_input: no past-frame offsets");
  for (int k : offsets) {
    if (k < 1 || static_cast<std::size_t>(k) > history.size())
      throw UnderflowError("build_input: offset " + std::to_string(k) + " is not resolvable, history holds " +
                           std::to_string(history.size()) + " frames");
  }
  const int joints = history.back().joint_count();
  for (const auto& map : coarse_maps) map.validate(joints);

  const Index rows = static_cast<Index>(offsets.size());
  MultiScaleInput input;
  input.scales.emplace_back(rows, fine_row_width(joints));
  for (const auto& map : coarse_maps) input.scales.emplace_back(rows, coarse_row_width(map));

  for (Index r = 0; r < rows; ++r) {
    const auto& source = history[history.size() - static_cast<std::size_t>(offsets[static_cast<std::size_t>(r)])];
    require(source.joint_count() == joints, "build_input: history frames disagree on joint count");
    const PoseFrame local = reexpress(source, current);
    auto& fine = input.scales[0];
    for (Index j = 0; j < joints; ++j) {
      fine.block(r, 3 * j, 1, 3) = local.positions.row(j);
      fine.block(r, 3 * (joints + j), 1, 3) = local.velocities.row(j);
    }
    for (std::size_t m = 0; m < coarse_maps.size(); ++m) {
      const PooledPose pooled = pool_coarse(local, coarse_maps[m]);
      const Index groups = pooled.positions.rows();
      auto& coarse = input.scales[m + 1];
      for (Index g = 0; g < groups; ++g) {
        coarse.block(r, 3 * g, 1, 3) = pooled.positions.row(g);
        coarse.block(r, 3 * (groups + g), 1, 3) = pooled.velocities.row(g);
      }
    }
  }
  return input;
}

}  // namespace mcst
