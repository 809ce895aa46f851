#pragma once

// Procedural locomotion clips: the root follows a parametric path at a
// gait-dependent speed while joints oscillate around a rest pose with
// gait-dependent frequency and amplitude. Positions come from forward
// kinematics over the rest offsets, so rotations and positions agree.

#include "mcst/clip_io.hpp"
#include "mcst/skeleton.hpp"
#include "mcst/trajectory.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mcst {

enum class PathShape { Line, Circle, FigureEight };

std::string_view path_shape_name(PathShape p);
PathShape parse_path_shape(std::string_view name);

struct GaitProfile {
  double speed = 0.0;        // m/s
  double frequency = 0.0;    // gait cycles per second
  double hip_amplitude = 0.0;
  double knee_amplitude = 0.0;
  double ankle_amplitude = 0.0;
  double arm_amplitude = 0.0;
  double hip_bias = 0.0;     // static thigh flexion (crouching)
  double knee_bias = 0.0;
  double lean = 0.0;         // forward torso lean
  double hop_height = 0.0;   // jumping only
  double right_leg_phase = 3.141592653589793;  // 0 = both legs together
  double sway = 0.0;         // lateral root oscillation, meters
  double yaw = 0.0;          // facing oscillation, radians
  double surge = 0.0;        // forward speed modulation at twice the stride rate
};

GaitProfile gait_profile(Gait gait);

struct SyntheticSpec {
  /// Gait per segment; a single entry animates the whole clip.
  std::vector<Gait> gaits = {Gait::Walking};
  /// Frames per gait segment, cycling through `gaits`. 0 = frames / gaits.size().
  int segment_frames = 0;
  PathShape path = PathShape::Line;
  std::string terrain = "flat";
  int frames = 600;
  int fps = 60;
  int clips = 1;
  std::uint64_t seed = 0;
  /// Per-clip random jitter of amplitudes, start pose and path radius.
  bool jitter = true;

  nlohmann::ordered_json to_json() const;
};

/// Height above terrain under which a foot joint counts as in contact.
inline constexpr double kContactHeight = 0.02;

/// Rest offsets of the default skeleton (joint relative to its parent).
Points3 default_rest_offsets();

/// Standing pose at `root` with the lowest foot just above the terrain.
PoseFrame rest_pose(const SkeletonSpec& skeleton, const Terrain& terrain, const RootTransform& root);

std::vector<MotionClip> generate_synthetic_dataset(const SyntheticSpec& spec, const SkeletonSpec& skeleton,
                                                   const Terrain& terrain);

}  // namespace mcst
