#include "mcst/synthetic.hpp"

#include "mcst/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mcst {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kBlendFrames = 30;

GaitProfile lerp(const GaitProfile& a, const GaitProfile& b, double w) {
  auto mix = [w](double x, double y) { return (1.0 - w) * x + w * y; };
  GaitProfile p;
  p.speed = mix(a.speed, b.speed);
  p.frequency = mix(a.frequency, b.frequency);
  p.hip_amplitude = mix(a.hip_amplitude, b.hip_amplitude);
  p.knee_amplitude = mix(a.knee_amplitude, b.knee_amplitude);
  p.ankle_amplitude = mix(a.ankle_amplitude, b.ankle_amplitude);
  p.arm_amplitude = mix(a.arm_amplitude, b.arm_amplitude);
  p.hip_bias = mix(a.hip_bias, b.hip_bias);
  p.knee_bias = mix(a.knee_bias, b.knee_bias);
  p.lean = mix(a.lean, b.lean);
  p.hop_height = mix(a.hop_height, b.hop_height);
  p.right_leg_phase = mix(a.right_leg_phase, b.right_leg_phase);
  p.sway = mix(a.sway, b.sway);
  p.yaw = mix(a.yaw, b.yaw);
  p.surge = mix(a.surge, b.surge);
  return p;
}

Eigen::Quaterniond rot_x(double a) { return Eigen::Quaterniond(Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX())); }
Eigen::Quaterniond rot_y(double a) { return Eigen::Quaterniond(Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY())); }
Eigen::Quaterniond rot_z(double a) { return Eigen::Quaterniond(Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ())); }

/// Local joint rotations for a phase and profile, default 31-joint skeleton.
Quats animate(double phase, const GaitProfile& p, double amplitude_scale) {
  Quats q = Quats::Zero(31, 4);
  q.col(0).setOnes();
  const double a = amplitude_scale;
  const double left = phase;
  const double right = phase + p.right_leg_phase;
  const double hip_l = p.hip_bias + a * p.hip_amplitude * std::sin(left);
  const double hip_r = p.hip_bias + a * p.hip_amplitude * std::sin(right);
  const double swing_l = std::max(0.0, std::cos(left));
  const double swing_r = std::max(0.0, std::cos(right));
  const double knee_l = p.knee_bias + a * p.knee_amplitude * swing_l * swing_l;
  const double knee_r = p.knee_bias + a * p.knee_amplitude * swing_r * swing_r;
  const double flat = p.hip_bias - p.knee_bias;

  // pelvis: cancel the facing oscillation, then roll and twist with the stride
  set_quaternion(q, 0, rot_y(-a * p.yaw * std::sin(phase)) * rot_z(0.6 * a * p.yaw * std::sin(phase)) *
                           rot_y(0.4 * a * p.yaw * std::cos(phase)));
  set_quaternion(q, 2, rot_x(-hip_l));
  set_quaternion(q, 3, rot_x(knee_l));
  set_quaternion(q, 4, rot_x(flat + a * p.ankle_amplitude * std::sin(left + kPi / 3.0)));
  set_quaternion(q, 7, rot_x(-hip_r));
  set_quaternion(q, 8, rot_x(knee_r));
  set_quaternion(q, 9, rot_x(flat + a * p.ankle_amplitude * std::sin(right + kPi / 3.0)));

  set_quaternion(q, 11, rot_x(p.lean));
  set_quaternion(q, 12, rot_y(0.15 * a * p.hip_amplitude * std::sin(left)));
  set_quaternion(q, 14, rot_x(-0.5 * p.lean));

  set_quaternion(q, 18, rot_x(a * p.arm_amplitude * std::sin(left)));
  set_quaternion(q, 19, rot_x(-(0.2 + 0.5 * a * p.arm_amplitude * (1.0 + std::sin(right)))));
  set_quaternion(q, 25, rot_x(a * p.arm_amplitude * std::sin(right)));
  set_quaternion(q, 26, rot_x(-(0.2 + 0.5 * a * p.arm_amplitude * (1.0 + std::sin(left)))));
  return q;
}

/// Forward kinematics with the hips at the root-frame origin.
Points3 forward_kinematics(const SkeletonSpec& skeleton, const Points3& offsets, const Quats& rotations) {
  const int n = skeleton.joint_count;
  Points3 pos = Points3::Zero(n, 3);
  std::vector<Eigen::Quaterniond> global(static_cast<std::size_t>(n), Eigen::Quaterniond::Identity());
  global[0] = quaternion_at(rotations, 0);
  for (int j = 1; j < n; ++j) {
    const int parent = skeleton.parents[static_cast<std::size_t>(j)];
    require(parent < j, "synthetic: skeleton joints must be listed parent-first");
    const auto& g = global[static_cast<std::size_t>(parent)];
    pos.row(j) = pos.row(parent) + (g * Eigen::Vector3d(offsets.row(j))).transpose();
    global[static_cast<std::size_t>(j)] = g * quaternion_at(rotations, j);
  }
  return pos;
}

double turn_rate(PathShape path, double speed, double radius, double sign, double t) {
  switch (path) {
    case PathShape::Line: return 0.0;
    case PathShape::Circle: return sign * speed / radius;
    case PathShape::FigureEight: {
      const double period = 2.0 * (2.0 * kPi * radius / std::max(speed, 0.5));
      return sign * (speed / radius) * std::sin(2.0 * kPi * t / period) * (kPi / 2.0);
    }
  }
  return 0.0;
}

/// Lifts a root-frame pose so its lowest foot rests 5 mm above the terrain.
void ground(Points3& local, const SkeletonSpec& skeleton, const Terrain& terrain, const RootTransform& root,
            double lift) {
  double lowest = std::numeric_limits<double>::infinity();
  for (int f : skeleton.foot_joints) {
    const Eigen::Vector3d w = local_to_world(root, Eigen::Vector3d(local.row(f)));
    lowest = std::min(lowest, w.y() - terrain.height(w.x(), w.z()));
  }
  local.col(1).array() += 0.005 - lowest + lift;
}

}  // namespace

std::string_view path_shape_name(PathShape p) {
  switch (p) {
    case PathShape::Line: return "line";
    case PathShape::Circle: return "circle";
    case PathShape::FigureEight: return "figure8";
  }
  return "line";
}

PathShape parse_path_shape(std::string_view name) {
  if (name == "line") return PathShape::Line;
  if (name == "circle") return PathShape::Circle;
  if (name == "figure8" || name == "figure-eight") return PathShape::FigureEight;
  throw ConfigError("unknown path shape '" + std::string(name) + "'");
}

GaitProfile gait_profile(Gait gait) {
  GaitProfile p;
  switch (gait) {
    case Gait::Standing: break;
    case Gait::Walking:
      p = {1.2, 1.0, 0.45, 0.7, 0.15, 0.35, 0.0, 0.0, 0.05, 0.0, kPi, 0.03, 0.05, 0.08};
      break;
    case Gait::Jogging:
      p = {3.0, 1.4, 0.7, 1.2, 0.25, 0.6, 0.0, 0.0, 0.15, 0.0, kPi, 0.02, 0.06, 0.06};
      break;
    case Gait::Jumping:
      p = {1.5, 1.1, 0.3, 0.6, 0.2, 0.5, 0.0, 0.0, 0.1, 0.25, 0.0, 0.0, 0.03, 0.15};
      break;
    case Gait::Crouching:
      p = {0.6, 0.8, 0.3, 0.4, 0.1, 0.15, 0.7, 1.2, 0.35, 0.0, kPi, 0.02, 0.04, 0.05};
      break;
  }
  return p;
}

nlohmann::ordered_json SyntheticSpec::to_json() const {
  nlohmann::ordered_json j;
  std::vector<std::string> names;
  for (Gait g : gaits) names.emplace_back(gait_name(g));
  j["gaits"] = names;
  j["segment_frames"] = segment_frames;
  j["path"] = path_shape_name(path);
  j["terrain"] = terrain;
  j["frames"] = frames;
  j["fps"] = fps;
  j["clips"] = clips;
  j["seed"] = seed;
  j["jitter"] = jitter;
  return j;
}

Points3 default_rest_offsets() {
  Points3 o(31, 3);
  o << 0.0, 0.0, 0.0,  // Hips
      0.09, -0.05, 0.0, 0.0, -0.02, 0.0, 0.0, -0.42, 0.01, 0.0, -0.44, -0.02, 0.0, -0.01, 0.13,  // left leg
      -0.09, -0.05, 0.0, 0.0, -0.02, 0.0, 0.0, -0.42, 0.01, 0.0, -0.44, -0.02, 0.0, -0.01, 0.13,  // right leg
      0.0, 0.10, 0.0, 0.0, 0.12, 0.0, 0.0, 0.12, 0.0,   // LowerBack, Spine, Spine1
      0.0, 0.14, 0.0, 0.0, 0.05, 0.0, 0.0, 0.10, 0.02,  // Neck, Neck1, Head
      0.04, 0.10, 0.0, 0.14, 0.0, 0.0, 0.0, -0.28, 0.0, 0.0, -0.25, 0.0, 0.0, -0.05, 0.0, 0.0, -0.04, 0.01,
      -0.01, -0.03, 0.03,  // left arm
      -0.04, 0.10, 0.0, -0.14, 0.0, 0.0, 0.0, -0.28, 0.0, 0.0, -0.25, 0.0, 0.0, -0.05, 0.0, 0.0, -0.04, 0.01,
      0.01, -0.03, 0.03;  // right arm
  return o;
}

PoseFrame rest_pose(const SkeletonSpec& skeleton, const Terrain& terrain, const RootTransform& root) {
  skeleton.validate();
  require(skeleton.joint_count == 31, "rest_pose: the procedural rig targets the 31-joint skeleton");
  PoseFrame frame = make_frame(skeleton.joint_count);
  frame.rotations = animate(0.0, gait_profile(Gait::Standing), 1.0);
  frame.positions = forward_kinematics(skeleton, default_rest_offsets(), frame.rotations);
  ground(frame.positions, skeleton, terrain, root, 0.0);
  frame.root = root;
  frame.gait = Gait::Standing;
  const Points3 world = local_to_world(root, frame.positions);
  for (std::size_t f = 0; f < 4; ++f) {
    const int j = skeleton.foot_joints[f];
    frame.contact[f] = world(j, 1) - terrain.height(world(j, 0), world(j, 2)) < kContactHeight;
  }
  return frame;
}

std::vector<MotionClip> generate_synthetic_dataset(const SyntheticSpec& spec, const SkeletonSpec& skeleton,
                                                   const Terrain& terrain) {
  skeleton.validate();
  require(skeleton.joint_count == 31, "synthetic: the procedural rig targets the 31-joint skeleton");
  require(!spec.gaits.empty(), "synthetic: at least one gait required");
  require(spec.frames >= 1 && spec.fps >= 1 && spec.clips >= 1, "synthetic: frames, fps and clips must be positive");
  const Points3 offsets = default_rest_offsets();
  const int segment =
      spec.segment_frames > 0 ? spec.segment_frames
                              : std::max(1, spec.frames / static_cast<int>(spec.gaits.size()));
  const double dt = 1.0 / spec.fps;

  std::vector<MotionClip> clips;
  for (int c = 0; c < spec.clips; ++c) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(c)));
    double amp = 1.0, phase = 0.0, heading = 0.0, x = 0.0, z = 0.0, radius = 6.0, sign = 1.0;
    if (spec.jitter) {
      amp = uniform(rng, 0.95, 1.05);
      phase = uniform(rng, 0.0, 2.0 * kPi);
      heading = wrap_angle(uniform(rng, -kPi, kPi));
      x = uniform(rng, -5.0, 5.0);
      z = uniform(rng, -5.0, 5.0);
      radius = uniform(rng, 4.0, 8.0);
      sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    }

    auto profile_at = [&](int n) {
      const int k = std::max(n, 0) / segment;
      const Gait g = spec.gaits[static_cast<std::size_t>(k) % spec.gaits.size()];
      GaitProfile p = gait_profile(g);
      const int into = std::max(n, 0) - k * segment;
      if (k > 0 && into < kBlendFrames) {
        const Gait prev = spec.gaits[static_cast<std::size_t>(k - 1) % spec.gaits.size()];
        const double t = static_cast<double>(into) / kBlendFrames;
        p = lerp(gait_profile(prev), p, t * t * (3.0 - 2.0 * t));
      }
      p.speed *= amp;
      return std::pair{g, p};
    };

    MotionClip clip;
    clip.id = "synthetic-" + std::to_string(spec.seed) + "-" + std::to_string(c);
    clip.fps = spec.fps;
    clip.terrain = terrain.name();
    clip.skeleton_hash = skeleton.hash();
    clip.producer = spec.to_json();
    clip.producer["clip_index"] = c;

    Points3 previous_world;
    for (int n = -1; n < spec.frames; ++n) {
      const auto [gait, profile] = profile_at(n);
      if (n >= 0) {
        heading = wrap_angle(heading + turn_rate(spec.path, profile.speed, radius, sign, n * dt) * dt);
        const double speed = profile.speed * (1.0 + profile.surge * std::cos(2.0 * phase));
        x += speed * std::sin(heading) * dt;
        z += speed * std::cos(heading) * dt;
        phase += 2.0 * kPi * profile.frequency * dt;
      }
      // the facing oscillates with the stride; the pelvis counter-rotates and
      // swings over the stance foot relative to the root
      const double yaw = amp * profile.yaw * std::sin(phase);
      const RootTransform root{x, z, wrap_angle(heading + yaw)};
      const Quats rotations = animate(phase, profile, amp);
      Points3 local = forward_kinematics(skeleton, offsets, rotations);
      const Eigen::RowVector3d shift(amp * profile.sway * std::sin(phase), 0.0,
                                     0.25 * amp * profile.sway * std::cos(2.0 * phase));
      local.rowwise() += shift;

      ground(local, skeleton, terrain, root, profile.hop_height * std::max(0.0, std::sin(phase)));
      const Points3 world = local_to_world(root, local);

      if (n >= 0) {
        PoseFrame frame = make_frame(skeleton.joint_count);
        frame.positions = local;
        frame.rotations = rotations;
        frame.root = root;
        frame.gait = gait;
        for (Index j = 0; j < world.rows(); ++j) {
          const Eigen::Vector3d v = (world.row(j) - previous_world.row(j)).transpose() * static_cast<double>(spec.fps);
          frame.velocities.row(j) = rotate_to_local(root, v).transpose();
        }
        for (std::size_t f = 0; f < 4; ++f) {
          const int j = skeleton.foot_joints[f];
          frame.contact[f] = world(j, 1) - terrain.height(world(j, 0), world(j, 2)) < kContactHeight;
        }
        clip.frames.push_back(std::move(frame));
      }
      previous_world = world;
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace mcst
