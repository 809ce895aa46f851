#include "mcst/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mcst {

RowVector<double> Trajectory::flatten() const {
  const Index n = static_cast<Index>(points.size());
  RowVector<double> out(n * (2 + 2 + 3 + kGaitCount));
  out.setZero();
  for (Index i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    out.segment(2 * i, 2) = p.position.transpose();
    out.segment(2 * n + 2 * i, 2) = p.direction.transpose();
    out.segment(4 * n + 3 * i, 3) = p.heights.transpose();
    out(7 * n + kGaitCount * i + static_cast<Index>(p.gait)) = 1.0;
  }
  return out;
}

Terrain Terrain::flat(double height) {
  return analytic("flat", [height](double, double) { return height; });
}

Terrain Terrain::analytic(std::string name, HeightFunction fn) {
  Terrain t;
  t.name_ = std::move(name);
  t.fn_ = std::move(fn);
  return t;
}

Terrain Terrain::grid(std::string name, double origin_x, double origin_z, double cell, Tensor2d heights) {
  require(cell > 0.0, "terrain grid: cell size must be positive");
  require(heights.rows() >= 1 && heights.cols() >= 1, "terrain grid: empty height array");
  require(heights.allFinite(), "terrain grid: non-finite heights");
  Terrain t;
  t.name_ = std::move(name);
  t.origin_x_ = origin_x;
  t.origin_z_ = origin_z;
  t.cell_ = cell;
  t.heights_ = std::move(heights);
  return t;
}

namespace {

double smooth_ramp(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * (3.0 - 2.0 * t);
}

double positive_fmod(double a, double m) {
  const double r = std::fmod(a, m);
  return r < 0.0 ? r + m : r;
}

}  // namespace

Terrain Terrain::builtin(const std::string& name) {
  if (name == "flat") return flat(0.0);
  if (name == "rocky") {
    return analytic("rocky", [](double x, double z) {
      return 0.12 * std::sin(0.8 * x) * std::cos(0.6 * z) + 0.06 * std::sin(1.7 * x + 1.3 * z) +
             0.04 * std::cos(2.9 * z - 0.7 * x);
    });
  }
  if (name == "obstacles") {
    // 0.3 m blocks with smoothed edges on a 6 m x 8 m lattice
    return analytic("obstacles", [](double x, double z) {
      const double dx = std::abs(positive_fmod(x, 6.0) - 3.0);
      const double dz = std::abs(positive_fmod(z, 8.0) - 4.0);
      return 0.3 * smooth_ramp((0.9 - dx) / 0.25) * smooth_ramp((0.6 - dz) / 0.25);
    });
  }
  if (name == "ceiling") {
    Terrain t = flat(0.0);
    t.name_ = "ceiling";
    t.low_ceiling_ = true;
    return t;
  }
  throw ConfigError("unknown built-in terrain '" + name + "'");
}

Terrain Terrain::resolve(const std::string& reference) {
  if (reference == "flat" || reference == "rocky" || reference == "obstacles" || reference == "ceiling")
    return builtin(reference);
  return load_height_grid(reference);
}

double Terrain::height(double x, double z) const {
  if (fn_) return fn_(x, z);
  const Index nz = heights_.rows(), nx = heights_.cols();
  const double fx = std::clamp((x - origin_x_) / cell_, 0.0, static_cast<double>(nx - 1));
  const double fz = std::clamp((z - origin_z_) / cell_, 0.0, static_cast<double>(nz - 1));
  const Index x0 = std::min(static_cast<Index>(std::floor(fx)), nx - 1);
  const Index z0 = std::min(static_cast<Index>(std::floor(fz)), nz - 1);
  const Index x1 = std::min(x0 + 1, nx - 1);
  const Index z1 = std::min(z0 + 1, nz - 1);
  const double tx = fx - static_cast<double>(x0);
  const double tz = fz - static_cast<double>(z0);
  const double top = (1.0 - tx) * heights_(z0, x0) + tx * heights_(z0, x1);
  const double bottom = (1.0 - tx) * heights_(z1, x0) + tx * heights_(z1, x1);
  return (1.0 - tz) * top + tz * bottom;
}

double terrain_height(const Terrain& terrain, double x, double z) { return terrain.height(x, z); }

Terrain load_height_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open terrain file " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "mcst-heightgrid" || version != 1) throw FormatError(path.string() + ": not a version 1 height grid");
  double ox = 0, oz = 0, cell = 0;
  Index nx = 0, nz = 0;
  if (!(in >> ox >> oz >> cell >> nx >> nz) || nx <= 0 || nz <= 0 || cell <= 0)
    throw FormatError(path.string() + ": bad height grid header");
  Tensor2d h(nz, nx);
  for (Index r = 0; r < nz; ++r)
    for (Index c = 0; c < nx; ++c)
      if (!(in >> h(r, c))) throw FormatError(path.string() + ": truncated height data");
  return Terrain::grid(path.string(), ox, oz, cell, std::move(h));
}

void save_height_grid(const Terrain& terrain, const std::filesystem::path& path) {
  require(terrain.is_grid(), "save_height_grid: terrain is analytic");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "mcst-heightgrid 1\n";
  out << terrain.origin_x() << ' ' << terrain.origin_z() << ' ' << terrain.cell() << ' ' << terrain.heights().cols()
      << ' ' << terrain.heights().rows() << '\n';
  for (Index r = 0; r < terrain.heights().rows(); ++r) {
    for (Index c = 0; c < terrain.heights().cols(); ++c) out << (c ? " " : "") << terrain.heights()(r, c);
    out << '\n';
  }
}

double BlendSchedule::position_weight(int s) const {
  return std::pow(static_cast<double>(s) / static_cast<double>(half), position_exponent);
}

double BlendSchedule::direction_weight(int s) const {
  return std::pow(static_cast<double>(s) / static_cast<double>(half), direction_exponent);
}

void BlendSchedule::validate() const {
  if (half < 1) throw ConfigError("blend schedule: half must be >= 1");
  if (!(position_exponent > 0.0) || !(direction_exponent > 0.0))
    throw ConfigError("blend schedule: exponents must be positive");
}

Eigen::Vector3d probe_heights(const RootTransform& current, const Eigen::Vector2d& position,
                              const Eigen::Vector2d& direction, const Terrain& terrain, double lateral_offset) {
  const Eigen::Vector2d left(direction.y(), -direction.x());
  const Eigen::Vector2d center = plane_to_world(current, position);
  const Eigen::Vector2d l = plane_to_world(current, position + lateral_offset * left);
  const Eigen::Vector2d r = plane_to_world(current, position - lateral_offset * left);
  return {terrain.height(center.x(), center.y()), terrain.height(l.x(), l.y()), terrain.height(r.x(), r.y())};
}

Trajectory sample_trajectory(const TrajectoryWindow& window, const Terrain& terrain, const TrajectoryConfig& config) {
  require(window.roots.size() == window.gaits.size(), "sample_trajectory: roots and gaits differ in length");
  require(window.current < window.roots.size(), "sample_trajectory: current frame outside the window");
  const std::size_t past = static_cast<std::size_t>(config.past_span());
  const std::size_t future = static_cast<std::size_t>(config.future_span());
  if (window.current < past)
    throw UnderflowError("sample_trajectory: needs " + std::to_string(past) + " past frames, window has " +
                         std::to_string(window.current));
  if (window.current + future >= window.roots.size())
    throw UnderflowError("sample_trajectory: needs " + std::to_string(future) + " future frames, window has " +
                         std::to_string(window.roots.size() - window.current - 1));

  const RootTransform& current = window.roots[window.current];
  Trajectory traj;
  traj.points.resize(static_cast<std::size_t>(config.point_count()));
  for (int s = -config.half; s < config.half; ++s) {
    const auto idx = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(window.current) + s * config.step);
    const RootTransform& root = window.roots[idx];
    auto& p = traj.at(s);
    p.position = plane_to_local(current, {root.x, root.z});
    p.direction = direction_to_local(current, facing(root));
    p.heights = probe_heights(current, p.position, p.direction, terrain, config.lateral_offset);
    p.gait = window.gaits[idx];
  }
  return traj;
}

std::vector<TrajectoryPoint> blend_trajectory(std::span<const TrajectoryPoint> user,
                                              std::span<const TrajectoryPoint> predicted,
                                              const BlendSchedule& schedule) {
  schedule.validate();
  require(user.size() == static_cast<std::size_t>(schedule.half) && predicted.size() == user.size(),
          "blend_trajectory: both halves must hold " + std::to_string(schedule.half) + " points");
  std::vector<TrajectoryPoint> out(user.begin(), user.end());
  for (int s = 0; s < schedule.half; ++s) {
    const auto i = static_cast<std::size_t>(s);
    const double tp = schedule.position_weight(s);
    const double td = schedule.direction_weight(s);
    // a zero weight keeps the user point bit-exact (no renormalization round-off)
    if (tp != 0.0) out[i].position = (1.0 - tp) * user[i].position + tp * predicted[i].position;
    if (td != 0.0) {
      const Eigen::Vector2d d = (1.0 - td) * user[i].direction + td * predicted[i].direction;
      const double n = d.norm();
      out[i].direction = n < 1e-8 ? user[i].direction : Eigen::Vector2d(d / n);
    }
  }
  return out;
}

}  // namespace mcst
