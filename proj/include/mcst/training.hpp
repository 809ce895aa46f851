#pragma once

// Sample assembly, normalization, loss and the optimization loop.

#include "mcst/clip_io.hpp"
#include "mcst/model.hpp"
#include "mcst/optim.hpp"
#include "mcst/trajectory.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace mcst {

enum class LossVariant { Mse, Mae, CeContact };

std::string_view loss_variant_name(LossVariant v);
LossVariant parse_loss_variant(std::string_view name);

/// How the four contact outputs are read back: clamped regression values or
/// logits through a sigmoid (the cross-entropy variant).
enum class ContactReadout { Clamp, Sigmoid };

ContactReadout contact_readout_for(LossVariant v);

struct TrainingSample {
  int frame = 0;
  MultiScaleInput x;
  RowVector<double> trajectory;
  RowVector<double> target;
};

struct SampleSet {
  std::vector<TrainingSample> samples;
  /// Non-empty when the clip produced no samples.
  std::string diagnostic;
};

/// Inclusive range of frames with enough past and future context.
struct FrameRange {
  int first = 0;
  int last = -1;
  int count() const { return last >= first ? last - first + 1 : 0; }
};

FrameRange valid_frames(int frame_count, const ModelConfig& config);

/// Past-frame input and ground-truth trajectory of frame i. Past trajectory
/// samples before the clip start repeat frame 0.
TrainingSample assemble_sample(const MotionClip& clip, int frame, const ModelConfig& config, const Terrain& terrain);
SampleSet assemble_samples(const MotionClip& clip, const ModelConfig& config, const Terrain& terrain);

/// Target vector for `frame` whose successor sits at `next`. `next_future`
/// holds the roots at the successor's future sample times, s = 0..S-1.
RowVector<double> encode_target(const PoseFrame& frame, const RootTransform& next,
                                std::span<const RootTransform> next_future, const OutputLayout& layout);

/// Decoded model output in physical units.
struct PredictedState {
  RootTransform root_delta;
  Points3 positions;
  Points3 velocities;
  Quats rotations;
  /// Future half of the next frame's trajectory (position and direction only).
  std::vector<TrajectoryPoint> future;
  std::array<double, 4> contact_probability{};

  std::array<bool, 4> contacts() const;
};

/// Fine rows, then each coarse scale's rows, then the trajectory.
RowVector<double> flatten_input(const MultiScaleInput& x, const RowVector<double>& trajectory);

struct NormStats {
  RowVector<double> input_mean, input_std;
  RowVector<double> output_mean, output_std;
  double joint_scale = 0.1;
  /// Leading input dims that hold joint features; the rest is trajectory.
  Index joint_dims = 0;
  Index contact_begin = 0;
  ContactReadout readout = ContactReadout::Clamp;

  static constexpr double kStdFloor = 1e-8;

  Index input_width() const { return input_mean.size(); }
  Index output_width() const { return output_mean.size(); }

  /// Throws ContractError on a width mismatch.
  RowVector<double> normalize_input(const RowVector<double>& raw) const;
  RowVector<double> normalize_output(const RowVector<double>& raw) const;
  /// Inverse of normalize_output, without the readout nonlinearities.
  RowVector<double> denormalize_output(const RowVector<double>& normalized) const;

  /// Per-dim statistics over the given samples. Contact outputs keep mean 0, std 1.
  static NormStats compute(std::span<const TrainingSample> samples, const ModelConfig& config, LossVariant loss);
};

/// Denormalizes, renormalizes quaternions and reads out contacts.
PredictedState decode_output(const RowVector<double>& normalized, const NormStats& stats, const ModelConfig& config);

/// Normalized rows ready for batching.
struct Dataset {
  Tensor2d inputs;
  Tensor2d targets;
  Index size() const { return inputs.rows(); }
};

Dataset normalize_samples(std::span<const TrainingSample> samples, const NormStats& stats);

/// Gathers dataset rows into a model batch.
ModelInput<double> make_batch(const Tensor2d& inputs, std::span<const Index> rows, const ModelConfig& config);
ModelInput<double> make_batch(const Tensor2d& inputs, const ModelConfig& config);
Tensor2d gather_rows(const Tensor2d& m, std::span<const Index> rows);

struct TrainConfig {
  double lambda = 0.01;
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 20;
  std::uint64_t seed = 0;
  LossVariant loss = LossVariant::Mse;
  BlendSchedule blend;
  /// Stops after this many optimizer steps; 0 runs every epoch to completion.
  std::int64_t max_steps = 0;
  double validation_fraction = 0.1;
  /// Std of Gaussian noise, in standardized units, added to the joint and
  /// trajectory inputs of each training batch.
  double joint_noise = 0.0;
  double trajectory_noise = 0.0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Data term plus lambda times the mean absolute parameter value.
ad::Var<double> compute_loss(ad::Tape<double>& tape, ad::Var<double> prediction, const Tensor2d& target,
                             std::span<const ad::Var<double>> params, const TrainConfig& config, Index contact_begin);
double compute_loss(const Tensor2d& prediction, const Tensor2d& target, const std::vector<Tensor2d>& params,
                    const TrainConfig& config, Index contact_begin);

/// Inference-mode data loss over a whole dataset, in batches.
double dataset_loss(const ModelParamsd& params, const Dataset& data, LossVariant loss, Index contact_begin,
                    int batch_size = 256);

/// Clip indices for the validation split; at least one clip always trains.
std::vector<std::size_t> validation_clips(std::size_t clip_count, double fraction, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  std::int64_t steps = 0;
  double train_loss = 0.0;
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
  bool best = false;
};

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
};

struct FitOptions {
  /// Writes epoch-<n>.ckpt and best.ckpt when non-empty.
  std::filesystem::path checkpoint_dir;
  std::uint64_t skeleton_hash = 0;
  nlohmann::ordered_json producer = nlohmann::ordered_json::object();
  /// Return false to stop early.
  std::function<bool(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Starting parameters; initialized from the seed when empty.
  std::optional<ModelParamsd> initial;
};

struct FitResult {
  ModelParamsd params;
  ModelParamsd best;
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
};

/// Seeded shuffled mini-batches, train-mode forward, loss, backward, Adam.
/// Throws NumericError naming the batch and the largest gradient if the loss
/// stops being finite.
FitResult fit(const Dataset& train, const Dataset& validation, const NormStats& stats, const ModelConfig& config,
              const TrainConfig& train_config, const FitOptions& options = {});

/// Writes the per-epoch trace as JSON lines, after a {"producer": ...} line.
void write_trace(const FitResult& result, const std::filesystem::path& path,
                 const nlohmann::ordered_json& producer = nlohmann::ordered_json::object());

/// Samples of every clip, statistics over the training clips only, and the
/// normalized datasets. Each clip's terrain is resolved by name.
struct PreparedData {
  NormStats stats;
  Dataset train;
  Dataset validation;
  /// One line per clip that produced no samples.
  std::vector<std::string> diagnostics;
};

PreparedData prepare_data(std::span<const MotionClip> train, std::span<const MotionClip> validation,
                          const ModelConfig& config, LossVariant loss);

}  // namespace mcst
