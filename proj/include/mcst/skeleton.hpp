#pragma once

#include "mcst/tensor.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcst {

enum class Gait : std::uint8_t { Standing = 0, Walking = 1, Jogging = 2, Jumping = 3, Crouching = 4 };
inline constexpr int kGaitCount = 5;

std::string_view gait_name(Gait gait);
/// Throws ConfigError for unknown names.
Gait parse_gait(std::string_view name);
Gait gait_from_index(int index);

/// J x 3 points, one joint per row.
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
/// J x 4 unit quaternions stored (w, x, y, z).
using Quats = Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor>;

/// Ground-plane placement of the character. Facing angle 0 looks along +z,
/// the forward direction is (sin a, cos a) in (x, z) and local +x is the
/// character's left.
struct RootTransform {
  double x = 0.0;
  double z = 0.0;
  double angle = 0.0;

  bool operator==(const RootTransform&) const = default;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

Eigen::Vector2d facing(const RootTransform& root);
Eigen::Vector3d local_to_world(const RootTransform& root, const Eigen::Vector3d& local);
Eigen::Vector3d world_to_local(const RootTransform& root, const Eigen::Vector3d& world);
/// Rotation-only variants for velocities and directions.
Eigen::Vector3d rotate_to_world(const RootTransform& root, const Eigen::Vector3d& local);
Eigen::Vector3d rotate_to_local(const RootTransform& root, const Eigen::Vector3d& world);
Eigen::Vector2d plane_to_world(const RootTransform& root, const Eigen::Vector2d& local);
Eigen::Vector2d plane_to_local(const RootTransform& root, const Eigen::Vector2d& world);
Eigen::Vector2d direction_to_world(const RootTransform& root, const Eigen::Vector2d& local);
Eigen::Vector2d direction_to_local(const RootTransform& root, const Eigen::Vector2d& world);

/// Row-wise local_to_world over a J x 3 block.
Points3 local_to_world(const RootTransform& root, const Points3& local);
Points3 world_to_local(const RootTransform& root, const Points3& world);

/// `to` expressed in the local frame of `from` as (dx, dz, dangle).
RootTransform relative_root(const RootTransform& from, const RootTransform& to);
/// Inverse of relative_root: applies a local delta to `from`.
RootTransform advance_root(const RootTransform& from, const RootTransform& delta);

struct SkeletonSpec {
  int joint_count = 0;
  std::vector<int> parents;
  std::vector<std::string> names;
  /// Named joint subsets used by metrics; "full", "arm" and "leg" are expected.
  std::map<std::string, std::vector<int>> subsets;
  /// Left heel, left toe, right heel, right toe.
  std::array<int, 4> foot_joints{};

  /// Throws ConfigError when the parents are not a tree rooted at joint 0,
  /// a subset leaves the joint range or the foot joints are out of range.
  void validate() const;
  const std::vector<int>& subset(const std::string& name) const;
  /// Stable 64-bit FNV-1a hash over parents, subsets and foot joints.
  std::uint64_t hash() const;
};

/// The 31-joint biped used throughout.
SkeletonSpec default_skeleton();

struct PoolingMap {
  std::string name;
  std::vector<std::vector<int>> groups;

  /// Throws ConfigError unless the groups partition 0..joint_count-1.
  void validate(int joint_count) const;
  int group_count() const { return static_cast<int>(groups.size()); }
};

/// Six kinematic-chain groups: head+neck, torso, left/right arm, left/right leg.
PoolingMap default_coarse_map();
/// Eleven groups: each limb split into upper and lower, torso split in two.
PoolingMap default_middle_map();

SkeletonSpec load_skeleton(const std::filesystem::path& path);
void save_skeleton(const SkeletonSpec& skeleton, const std::filesystem::path& path);
PoolingMap load_pooling_map(const std::filesystem::path& path);
void save_pooling_map(const PoolingMap& map, const std::filesystem::path& path);

struct PoseFrame {
  Points3 positions;   // root frame, meters
  Points3 velocities;  // root frame, m/s
  Quats rotations;     // local joint rotations
  RootTransform root;  // world placement
  std::array<bool, 4> contact{};
  Gait gait = Gait::Standing;

  int joint_count() const { return static_cast<int>(positions.rows()); }
};

/// Exact (bitwise-valued) equality of every field.
bool identical(const PoseFrame& a, const PoseFrame& b);

PoseFrame make_frame(int joint_count);

Eigen::Quaterniond quaternion_at(const Quats& rotations, Index joint);
void set_quaternion(Quats& rotations, Index joint, const Eigen::Quaterniond& q);

/// Rotation angle between two rotations, 2 acos(|<q1, q2>|) in [0, pi].
/// Inputs are renormalized; a zero quaternion is a ContractError.
double quat_angle(const Eigen::Quaterniond& q1, const Eigen::Quaterniond& q2);

struct PooledPose {
  Points3 positions;
  Points3 velocities;
};

/// Group means of joint positions and velocities.
PooledPose pool_coarse(const PoseFrame& frame, const PoolingMap& map);

/// One K x D matrix per scale, fine scale first.
struct MultiScaleInput {
  std::vector<Tensor2d> scales;
};

/// Width of one fine row (positions then velocities).
inline Index fine_row_width(int joint_count) { return 6 * static_cast<Index>(joint_count); }
inline Index coarse_row_width(const PoolingMap& map) { return 6 * static_cast<Index>(map.group_count()); }

/// Assembles the past-pose input for the frame whose root is `current`.
///
/// `history` is ordered oldest to newest; history.back() is the frame one
/// step in the past, so offset k reads history[size - k]. Every quantity is
/// re-expressed in `current`'s root frame. Throws UnderflowError naming the
/// first offset the history cannot resolve.
MultiScaleInput build_input(std::span<const PoseFrame> history, const RootTransform& current,
                            std::span<const int> offsets, std::span<const PoolingMap> coarse_maps);

}  // namespace mcst
