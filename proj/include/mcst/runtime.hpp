#pragma once

// Autoregressive character controller: a ring buffer of past frames, the
// user/prediction trajectory blend, and headless scripted runs.

#include "mcst/checkpoint.hpp"
#include "mcst/clip_io.hpp"
#include "mcst/metrics.hpp"
#include "mcst/model.hpp"
#include "mcst/training.hpp"
#include "mcst/trajectory.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mcst {

/// Trained network plus everything needed to run it. Shared read-only
/// between sessions.
struct Controller {
  ModelParamsd params;
  NormStats stats;
  SkeletonSpec skeleton;

  /// Throws ConfigError if the checkpoint disagrees with the skeleton.
  static std::shared_ptr<const Controller> from_checkpoint(const Checkpoint& checkpoint, SkeletonSpec skeleton);
};

struct ControlInput {
  /// Desired world-space (x, z) heading; unit length or zero.
  Eigen::Vector2d direction = Eigen::Vector2d::Zero();
  double speed = 0.0;  // m/s
  Gait gait = Gait::Standing;
  double time = 0.0;   // client timestamp, seconds

  /// Throws ContractError on negative speed or a non-unit, non-zero direction.
  void validate() const;
  bool operator==(const ControlInput&) const = default;
};

/// Walking pace of the procedural data for a gait, m/s.
double default_speed(Gait gait);

/// Tick-indexed controls. The entry at or before a tick applies; ticks before
/// the first entry stand still.
///
/// Text format:
///   mcst-control 1
///   ticks <n>
///   <tick> <dir_x> <dir_z> <speed> <gait>
struct ControlScript {
  int ticks = 0;
  std::vector<std::pair<int, ControlInput>> entries;

  void validate() const;
  ControlInput at(int tick) const;
  /// One entry at tick 0 held for `ticks` ticks.
  static ControlScript constant(const ControlInput& control, int ticks);
};

ControlScript load_control_script(const std::filesystem::path& path);
void save_control_script(const ControlScript& script, const std::filesystem::path& path);
ControlScript parse_control_script(const std::string& text);
std::string format_control_script(const ControlScript& script);

struct SessionConfig {
  BlendSchedule blend;
  /// Root continuity threshold is max_speed / fps * 4 per step.
  double max_speed = 4.0;
  /// Clean steps after a fault before the flag clears.
  int recovery_steps = 40;
  /// Angular rate at which the user trajectory turns toward the stick, rad/s.
  double turn_rate = 3.0;
};

struct StepResult {
  PoseFrame frame;
  /// Root of the next frame to be generated.
  RootTransform next_root;
  /// Blended future half used as input, in the frame's root space.
  std::vector<TrajectoryPoint> trajectory;
  /// Predicted future of the next frame, in the next root's space.
  std::vector<TrajectoryPoint> predicted;
  std::optional<AttentionExport> attention;
  bool fault = false;
  std::vector<std::string> warnings;
};

class Session {
 public:
  Session(std::shared_ptr<const Controller> controller, std::shared_ptr<const Terrain> terrain,
          SessionConfig config = {});

  /// Buffer capacity: enough for every past offset and the past trajectory.
  std::size_t capacity() const { return capacity_; }

  /// Tiles the rest pose standing at `root`.
  void warm_start(const RootTransform& root = {});
  /// Loads the clip tail (front-padded with its first frame) and extrapolates
  /// the next root from the last two frames.
  void warm_start(const MotionClip& clip);

  bool warmed() const { return !history_.empty(); }
  StepResult step(const ControlInput& control, bool with_attention = false);

  /// Swaps the network; used to exercise the fault path.
  void replace_controller(std::shared_ptr<const Controller> controller);

  const std::vector<PoseFrame>& history() const { return history_; }
  const RootTransform& root() const { return root_; }
  std::int64_t frame_index() const { return frame_index_; }
  bool faulted() const { return fault_; }
  const Controller& controller() const { return *controller_; }
  const Terrain& terrain() const { return *terrain_; }
  const SessionConfig& config() const { return config_; }

  /// User-side future half from a control, in the current root frame.
  std::vector<TrajectoryPoint> user_trajectory(const ControlInput& control) const;

 private:
  std::shared_ptr<const Controller> controller_;
  std::shared_ptr<const Terrain> terrain_;
  SessionConfig config_;
  std::size_t capacity_ = 0;
  std::vector<PoseFrame> history_;  // oldest first
  RootTransform root_;
  std::optional<std::vector<TrajectoryPoint>> predicted_;
  std::int64_t frame_index_ = 0;
  bool fault_ = false;
  int clean_steps_ = 0;

  void push(PoseFrame frame);
  void rewarm(const PoseFrame& frame);
};

struct RolloutOptions {
  SessionConfig session;
  /// Warm start from this clip's tail instead of the rest pose.
  std::optional<MotionClip> warm_clip;
  RootTransform start;
  std::string scenario = "flat";
};

struct Rollout {
  MotionClip clip;  // kind "rollout" with per-frame annotations
  AngleUpdateReport metrics;
  std::vector<std::string> warnings;
  int faults = 0;
};

/// Annotation columns written into rollout records.
const std::vector<std::string>& rollout_annotation_names();

Rollout run_script(std::shared_ptr<const Controller> controller, std::shared_ptr<const Terrain> terrain,
                   const ControlScript& script, const RolloutOptions& options = {});

}  // namespace mcst
