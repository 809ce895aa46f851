#pragma once

#include "mcst/skeleton.hpp"
#include "mcst/tensor.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mcst {

struct TrajectoryPoint {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();           // root frame, meters
  Eigen::Vector2d direction = Eigen::Vector2d(0.0, 1.0);        // unit facing
  Eigen::Vector3d heights = Eigen::Vector3d::Zero();            // center, left, right
  Gait gait = Gait::Standing;
};

struct TrajectoryConfig {
  int half = 6;                 // S: points per side
  int step = 10;                // frames between samples
  double lateral_offset = 0.25; // meters, left/right height probes
  int fps = 60;

  int point_count() const { return 2 * half; }
  /// Flattened width: 2S x (position 2 + direction 2 + heights 3 + gait one-hot).
  Index flat_width() const { return static_cast<Index>(point_count()) * (2 + 2 + 3 + kGaitCount); }
  int past_span() const { return half * step; }
  int future_span() const { return (half - 1) * step; }
};

/// 2S points for s = -S..S-1; points[s + S], s = 0 is the current frame.
struct Trajectory {
  std::vector<TrajectoryPoint> points;

  int half() const { return static_cast<int>(points.size()) / 2; }
  TrajectoryPoint& at(int s) { return points.at(static_cast<std::size_t>(s + half())); }
  const TrajectoryPoint& at(int s) const { return points.at(static_cast<std::size_t>(s + half())); }
  std::span<TrajectoryPoint> future() { return std::span(points).subspan(static_cast<std::size_t>(half())); }
  std::span<const TrajectoryPoint> future() const {
    return std::span(points).subspan(static_cast<std::size_t>(half()));
  }

  /// Layout: all positions, all directions, all heights, all gait one-hots.
  RowVector<double> flatten() const;
};

/// Height field over the ground plane: analytic or a bilinear grid.
class Terrain {
 public:
  using HeightFunction = std::function<double(double x, double z)>;

  static Terrain flat(double height = 0.0);
  static Terrain analytic(std::string name, HeightFunction fn);
  /// `heights` is nz x nx, row-major over z then x. Queries clamp to the edge.
  static Terrain grid(std::string name, double origin_x, double origin_z, double cell, Tensor2d heights);
  /// Built-in scenario terrains: flat, rocky, obstacles, ceiling.
  static Terrain builtin(const std::string& name);
  /// A built-in name or a height-grid file path.
  static Terrain resolve(const std::string& reference);

  double height(double x, double z) const;
  const std::string& name() const { return name_; }
  bool is_grid() const { return !fn_; }
  /// Scenario has a low ceiling; the controller should force crouching.
  bool low_ceiling() const { return low_ceiling_; }

  double origin_x() const { return origin_x_; }
  double origin_z() const { return origin_z_; }
  double cell() const { return cell_; }
  const Tensor2d& heights() const { return heights_; }

 private:
  std::string name_;
  HeightFunction fn_;
  double origin_x_ = 0.0, origin_z_ = 0.0, cell_ = 1.0;
  Tensor2d heights_;
  bool low_ceiling_ = false;
};

double terrain_height(const Terrain& terrain, double x, double z);

/// Text height-grid format:
///   mcst-heightgrid 1
///   <origin_x> <origin_z> <cell> <nx> <nz>
///   nz rows of nx heights
Terrain load_height_grid(const std::filesystem::path& path);
void save_height_grid(const Terrain& terrain, const std::filesystem::path& path);

struct BlendSchedule {
  double position_exponent = 0.5;
  double direction_exponent = 2.0;
  int half = 6;

  /// Blend weights toward the predicted trajectory, (s/S)^p.
  double position_weight(int s) const;
  double direction_weight(int s) const;
  void validate() const;

  /// Schedule leaning harder on the user signal: (s/S)^2 and (s/S)^5.
  static BlendSchedule responsive(int half = 6) { return {2.0, 5.0, half}; }
};

/// Root placement and gait over a contiguous frame window.
struct TrajectoryWindow {
  std::span<const RootTransform> roots;
  std::span<const Gait> gaits;
  /// Index of the current frame inside roots/gaits.
  std::size_t current = 0;
};

/// Samples 2S points at offsets s*step around the current frame, expressed in
/// the current root frame, with terrain heights at center and +/- lateral
/// offset. Throws UnderflowError if the window is too short on either side.
Trajectory sample_trajectory(const TrajectoryWindow& window, const Terrain& terrain, const TrajectoryConfig& config);

/// Fills the three terrain heights of a root-frame point.
Eigen::Vector3d probe_heights(const RootTransform& current, const Eigen::Vector2d& position,
                              const Eigen::Vector2d& direction, const Terrain& terrain, double lateral_offset);

/// Mixes the user's future half with the model's predicted future half:
/// position = (1 - tp) user + tp predicted, direction likewise with td and
/// renormalized (falls back to the user direction if the mix degenerates).
/// Heights and gait are taken from the user points.
std::vector<TrajectoryPoint> blend_trajectory(std::span<const TrajectoryPoint> user,
                                              std::span<const TrajectoryPoint> predicted,
                                              const BlendSchedule& schedule);

}  // namespace mcst
