#include "mcst/training.hpp"

#include "mcst/checkpoint.hpp"
#include "mcst/ops.hpp"
#include "mcst/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mcst {

std::string_view loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::Mse: return "mse";
    case LossVariant::Mae: return "mae";
    case LossVariant::CeContact: return "ce-contact";
  }
  return "mse";
}

LossVariant parse_loss_variant(std::string_view name) {
  if (name == "mse") return LossVariant::Mse;
  if (name == "mae") return LossVariant::Mae;
  if (name == "ce-contact" || name == "ce") return LossVariant::CeContact;
  throw ConfigError("unknown loss variant '" + std::string(name) + "'");
}

ContactReadout contact_readout_for(LossVariant v) {
  return v == LossVariant::CeContact ? ContactReadout::Sigmoid : ContactReadout::Clamp;
}

FrameRange valid_frames(int frame_count, const ModelConfig& config) {
  return {config.max_offset() + 1, frame_count - 1 - config.trajectory.half * config.trajectory.step};
}

RowVector<double> encode_target(const PoseFrame& frame, const RootTransform& next,
                                std::span<const RootTransform> next_future, const OutputLayout& layout) {
  require(frame.joint_count() == layout.joints, "encode_target: frame has " + std::to_string(frame.joint_count()) +
                                                    " joints, layout expects " + std::to_string(layout.joints));
  require(next_future.size() == static_cast<std::size_t>(layout.future_points),
          "encode_target: expected " + std::to_string(layout.future_points) + " future roots");
  RowVector<double> y = RowVector<double>::Zero(layout.width);
  const RootTransform d = relative_root(frame.root, next);
  y(layout.root) = d.x;
  y(layout.root + 1) = d.z;
  y(layout.root + 2) = d.angle;
  for (Index j = 0; j < layout.joints; ++j) {
    for (Index c = 0; c < 3; ++c) {
      y(layout.positions + 3 * j + c) = frame.positions(j, c);
      y(layout.velocities + 3 * j + c) = frame.velocities(j, c);
    }
    for (Index c = 0; c < 4; ++c) y(layout.rotations + 4 * j + c) = frame.rotations(j, c);
  }
  const Index S = layout.future_points;
  for (Index s = 0; s < S; ++s) {
    const RootTransform& r = next_future[static_cast<std::size_t>(s)];
    y.segment(layout.trajectory + 2 * s, 2) = plane_to_local(next, {r.x, r.z}).transpose();
    y.segment(layout.trajectory + 2 * S + 2 * s, 2) = direction_to_local(next, facing(r)).transpose();
  }
  for (Index f = 0; f < 4; ++f) y(layout.contacts + f) = frame.contact[static_cast<std::size_t>(f)] ? 1.0 : 0.0;
  return y;
}

TrainingSample assemble_sample(const MotionClip& clip, int frame, const ModelConfig& config, const Terrain& terrain) {
  const int n = static_cast<int>(clip.frames.size());
  const FrameRange range = valid_frames(n, config);
  require(frame >= range.first && frame <= range.last,
          "assemble_sample: frame " + std::to_string(frame) + " outside valid range [" + std::to_string(range.first) +
              ", " + std::to_string(range.last) + "]");
  const auto& tc = config.trajectory;
  const PoseFrame& current = clip.frames[static_cast<std::size_t>(frame)];

  TrainingSample sample;
  sample.frame = frame;
  sample.x = build_input(std::span(clip.frames).first(static_cast<std::size_t>(frame)), current.root,
                         config.past_offsets, config.coarse_scales);

  std::vector<RootTransform> roots;
  std::vector<Gait> gaits;
  for (int t = frame - tc.past_span(); t <= frame + tc.future_span(); ++t) {
    const auto& f = clip.frames[static_cast<std::size_t>(std::clamp(t, 0, n - 1))];
    roots.push_back(f.root);
    gaits.push_back(f.gait);
  }
  const TrajectoryWindow window{roots, gaits, static_cast<std::size_t>(tc.past_span())};
  sample.trajectory = sample_trajectory(window, terrain, tc).flatten();

  const RootTransform& next = clip.frames[static_cast<std::size_t>(frame + 1)].root;
  std::vector<RootTransform> future;
  for (int s = 0; s < tc.half; ++s) future.push_back(clip.frames[static_cast<std::size_t>(frame + 1 + s * tc.step)].root);
  sample.target = encode_target(current, next, future, config.output_layout());
  return sample;
}

SampleSet assemble_samples(const MotionClip& clip, const ModelConfig& config, const Terrain& terrain) {
  SampleSet set;
  const FrameRange range = valid_frames(static_cast<int>(clip.frames.size()), config);
  if (range.count() == 0) {
    set.diagnostic = "clip '" + clip.id + "' has " + std::to_string(clip.frames.size()) + " frames; at least " +
                     std::to_string(range.first + 1 + config.trajectory.half * config.trajectory.step) +
                     " are needed for one sample";
    return set;
  }
  set.samples.reserve(static_cast<std::size_t>(range.count()));
  for (int i = range.first; i <= range.last; ++i) set.samples.push_back(assemble_sample(clip, i, config, terrain));
  return set;
}

std::array<bool, 4> PredictedState::contacts() const {
  std::array<bool, 4> c{};
  for (std::size_t i = 0; i < 4; ++i) c[i] = contact_probability[i] >= 0.5;
  return c;
}

RowVector<double> flatten_input(const MultiScaleInput& x, const RowVector<double>& trajectory) {
  Index width = trajectory.size();
  for (const auto& s : x.scales) width += s.size();
  RowVector<double> out(width);
  Index at = 0;
  for (const auto& s : x.scales) {
    // Tensor2d is row-major, so data() walks rows in order
    out.segment(at, s.size()) = Eigen::Map<const RowVector<double>>(s.data(), s.size());
    at += s.size();
  }
  out.segment(at, trajectory.size()) = trajectory;
  return out;
}

RowVector<double> NormStats::normalize_input(const RowVector<double>& raw) const {
  require(raw.size() == input_width(), "normalize_input: width " + std::to_string(raw.size()) + " vs stats " +
                                           std::to_string(input_width()));
  RowVector<double> out = (raw - input_mean).cwiseQuotient(input_std);
  out.head(joint_dims) *= joint_scale;
  return out;
}

RowVector<double> NormStats::normalize_output(const RowVector<double>& raw) const {
  require(raw.size() == output_width(), "normalize_output: width " + std::to_string(raw.size()) + " vs stats " +
                                            std::to_string(output_width()));
  return (raw - output_mean).cwiseQuotient(output_std);
}

RowVector<double> NormStats::denormalize_output(const RowVector<double>& normalized) const {
  require(normalized.size() == output_width(), "denormalize_output: width " + std::to_string(normalized.size()) +
                                                   " vs stats " + std::to_string(output_width()));
  return normalized.cwiseProduct(output_std) + output_mean;
}

namespace {

void column_stats(const Tensor2d& m, RowVector<double>& mean, RowVector<double>& std_dev) {
  const double n = static_cast<double>(m.rows());
  mean = m.colwise().sum() / n;
  std_dev.resize(m.cols());
  for (Index c = 0; c < m.cols(); ++c) {
    const double var = (m.col(c).array() - mean(c)).square().sum() / n;
    const double s = std::sqrt(var);
    std_dev(c) = s < NormStats::kStdFloor ? 1.0 : s;
  }
}

}  // namespace

NormStats NormStats::compute(std::span<const TrainingSample> samples, const ModelConfig& config, LossVariant loss) {
  require(!samples.empty(), "NormStats::compute: no samples");
  const RowVector<double> first = flatten_input(samples[0].x, samples[0].trajectory);
  Tensor2d inputs(static_cast<Index>(samples.size()), first.size());
  Tensor2d outputs(static_cast<Index>(samples.size()), samples[0].target.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto row = flatten_input(samples[i].x, samples[i].trajectory);
    require(row.size() == inputs.cols() && samples[i].target.size() == outputs.cols(),
            "NormStats::compute: samples differ in width");
    inputs.row(static_cast<Index>(i)) = row;
    outputs.row(static_cast<Index>(i)) = samples[i].target;
  }
  NormStats stats;
  column_stats(inputs, stats.input_mean, stats.input_std);
  column_stats(outputs, stats.output_mean, stats.output_std);
  const OutputLayout layout = config.output_layout();
  require(outputs.cols() == layout.width, "NormStats::compute: target width does not match the model config");
  stats.contact_begin = layout.contacts;
  stats.output_mean.segment(layout.contacts, 4).setZero();
  stats.output_std.segment(layout.contacts, 4).setOnes();
  stats.joint_dims = inputs.cols() - config.trajectory_width();
  stats.readout = contact_readout_for(loss);
  return stats;
}

PredictedState decode_output(const RowVector<double>& normalized, const NormStats& stats, const ModelConfig& config) {
  const OutputLayout layout = config.output_layout();
  const RowVector<double> y = stats.denormalize_output(normalized);
  PredictedState p;
  p.root_delta = {y(layout.root), y(layout.root + 1), wrap_angle(y(layout.root + 2))};
  p.positions.resize(layout.joints, 3);
  p.velocities.resize(layout.joints, 3);
  p.rotations.resize(layout.joints, 4);
  for (Index j = 0; j < layout.joints; ++j) {
    for (Index c = 0; c < 3; ++c) {
      p.positions(j, c) = y(layout.positions + 3 * j + c);
      p.velocities(j, c) = y(layout.velocities + 3 * j + c);
    }
    Eigen::Vector4d q = y.segment(layout.rotations + 4 * j, 4).transpose();
    const double n = q.norm();
    if (n < 1e-12 || !std::isfinite(n)) q = Eigen::Vector4d(1, 0, 0, 0);
    else q /= n;
    p.rotations.row(j) = q.transpose();
  }
  const Index S = layout.future_points;
  p.future.resize(static_cast<std::size_t>(S));
  for (Index s = 0; s < S; ++s) {
    auto& pt = p.future[static_cast<std::size_t>(s)];
    pt.position = y.segment(layout.trajectory + 2 * s, 2).transpose();
    Eigen::Vector2d d = y.segment(layout.trajectory + 2 * S + 2 * s, 2).transpose();
    const double n = d.norm();
    pt.direction = n < 1e-8 ? Eigen::Vector2d(0, 1) : Eigen::Vector2d(d / n);
  }
  for (Index f = 0; f < 4; ++f) {
    const double v = y(layout.contacts + f);
    p.contact_probability[static_cast<std::size_t>(f)] =
        stats.readout == ContactReadout::Sigmoid ? sigmoid(v) : std::clamp(v, 0.0, 1.0);
  }
  return p;
}

Dataset normalize_samples(std::span<const TrainingSample> samples, const NormStats& stats) {
  Dataset d;
  d.inputs.resize(static_cast<Index>(samples.size()), stats.input_width());
  d.targets.resize(static_cast<Index>(samples.size()), stats.output_width());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    d.inputs.row(static_cast<Index>(i)) = stats.normalize_input(flatten_input(samples[i].x, samples[i].trajectory));
    d.targets.row(static_cast<Index>(i)) = stats.normalize_output(samples[i].target);
  }
  return d;
}

Tensor2d gather_rows(const Tensor2d& m, std::span<const Index> rows) {
  Tensor2d out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

ModelInput<double> make_batch(const Tensor2d& inputs, std::span<const Index> rows, const ModelConfig& config) {
  const Index K = config.past_frames();
  Index expected = config.trajectory_width();
  for (int s = 0; s < config.scale_count(); ++s) expected += K * config.scale_input_width(s);
  require(inputs.cols() == expected, "make_batch: input width " + std::to_string(inputs.cols()) +
                                         " does not match the model config (" + std::to_string(expected) + ")");
  ModelInput<double> batch;
  batch.batch = static_cast<Index>(rows.size());
  Index at = 0;
  for (int s = 0; s < config.scale_count(); ++s) {
    const Index w = config.scale_input_width(s);
    Tensor2d m(batch.batch * K, w);
    for (Index b = 0; b < batch.batch; ++b) {
      const Index r = rows[static_cast<std::size_t>(b)];
      for (Index k = 0; k < K; ++k) m.row(b * K + k) = inputs.row(r).segment(at + k * w, w);
    }
    batch.scales.push_back(std::move(m));
    at += K * w;
  }
  batch.trajectory.resize(batch.batch, config.trajectory_width());
  for (Index b = 0; b < batch.batch; ++b)
    batch.trajectory.row(b) = inputs.row(rows[static_cast<std::size_t>(b)]).segment(at, config.trajectory_width());
  return batch;
}

ModelInput<double> make_batch(const Tensor2d& inputs, const ModelConfig& config) {
  std::vector<Index> rows(static_cast<std::size_t>(inputs.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return make_batch(inputs, rows, config);
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
  if (!(joint_noise >= 0.0) || !(trajectory_noise >= 0.0)) throw ConfigError("train: input noise must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("train: validation fraction must be in [0, 1)");
  blend.validate();
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["lambda"] = lambda;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["loss"] = loss_variant_name(loss);
  j["blend"] = {{"position_exponent", blend.position_exponent},
                {"direction_exponent", blend.direction_exponent},
                {"half", blend.half}};
  j["max_steps"] = max_steps;
  j["validation_fraction"] = validation_fraction;
  j["joint_noise"] = joint_noise;
  j["trajectory_noise"] = trajectory_noise;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.lambda = j.value("lambda", c.lambda);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.loss = parse_loss_variant(j.value("loss", std::string("mse")));
    if (j.contains("blend")) {
      const auto& b = j.at("blend");
      c.blend.position_exponent = b.value("position_exponent", c.blend.position_exponent);
      c.blend.direction_exponent = b.value("direction_exponent", c.blend.direction_exponent);
      c.blend.half = b.value("half", c.blend.half);
    }
    c.max_steps = j.value("max_steps", c.max_steps);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.joint_noise = j.value("joint_noise", c.joint_noise);
    c.trajectory_noise = j.value("trajectory_noise", c.trajectory_noise);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

ad::LossKind loss_kind(LossVariant v) {
  switch (v) {
    case LossVariant::Mse: return ad::LossKind::MeanSquared;
    case LossVariant::Mae: return ad::LossKind::MeanAbsolute;
    case LossVariant::CeContact: return ad::LossKind::MeanSquaredWithContactBce;
  }
  return ad::LossKind::MeanSquared;
}

ad::Var<double> data_loss(ad::Tape<double>& tape, ad::Var<double> prediction, const Tensor2d& target, LossVariant v,
                          Index contact_begin) {
  return ad::regression_loss(tape, prediction, target, loss_kind(v), contact_begin,
                             v == LossVariant::CeContact ? Index{4} : Index{0});
}

}  // namespace

ad::Var<double> compute_loss(ad::Tape<double>& tape, ad::Var<double> prediction, const Tensor2d& target,
                             std::span<const ad::Var<double>> params, const TrainConfig& config, Index contact_begin) {
  ad::Var<double> loss = data_loss(tape, prediction, target, config.loss, contact_begin);
  if (config.lambda == 0.0 || params.empty()) return loss;
  return ad::add(tape, loss, ad::scale(tape, ad::l1_mean(tape, params), config.lambda));
}

double compute_loss(const Tensor2d& prediction, const Tensor2d& target, const std::vector<Tensor2d>& params,
                    const TrainConfig& config, Index contact_begin) {
  ad::Tape<double> tape(ad::Mode::Infer, 0, false);
  std::vector<ad::Var<double>> vars;
  for (const auto& p : params) vars.push_back(tape.constant(p));
  return tape.value(compute_loss(tape, tape.constant(prediction), target, vars, config, contact_begin))(0, 0);
}

double dataset_loss(const ModelParamsd& params, const Dataset& data, LossVariant loss, Index contact_begin,
                    int batch_size) {
  require(data.size() > 0, "dataset_loss: empty dataset");
  require(batch_size > 0, "dataset_loss: batch size must be positive");
  double total = 0.0;
  for (Index start = 0; start < data.size(); start += batch_size) {
    const Index n = std::min<Index>(batch_size, data.size() - start);
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), start);
    const Tensor2d pred = predict(params, make_batch(data.inputs, rows, params.config));
    ad::Tape<double> tape(ad::Mode::Infer, 0, false);
    const double l =
        tape.value(data_loss(tape, tape.constant(pred), gather_rows(data.targets, rows), loss, contact_begin))(0, 0);
    total += l * static_cast<double>(n);
  }
  return total / static_cast<double>(data.size());
}

std::vector<std::size_t> validation_clips(std::size_t clip_count, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(clip_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5eed'5b17ULL));
  shuffle(std::span(order), rng);
  std::size_t count = static_cast<std::size_t>(std::floor(static_cast<double>(clip_count) * fraction + 1e-9));
  if (clip_count > 0) count = std::min(count, clip_count - 1);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

FitResult fit(const Dataset& train, const Dataset& validation, const NormStats& stats, const ModelConfig& config,
              const TrainConfig& tc, const FitOptions& options) {
  config.validate();
  tc.validate();
  require(train.size() > 0, "fit: empty training set");
  require(train.inputs.cols() == stats.input_width() && train.targets.cols() == stats.output_width(),
          "fit: dataset width does not match the normalization statistics");

  FitResult result{options.initial ? *options.initial : init_params(config, tc.seed), {}, {}, {}};
  result.params.validate();
  result.best = result.params;
  AdamState<double> adam;
  adam.config.learning_rate = tc.learning_rate;

  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);
  auto write = [&](const ModelParamsd& params, int epoch, const std::filesystem::path& path) {
    Checkpoint ckpt{params, stats, tc, options.skeleton_hash, epoch, options.producer};
    save_checkpoint(ckpt, path);
  };

  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), Index{0});
  Rng shuffle_rng(derive_seed(tc.seed, 0x5b0ff1eULL));
  double best_score = std::numeric_limits<double>::infinity();
  std::int64_t step = 0;
  bool stop = false;

  for (int epoch = 1; epoch <= tc.epochs && !stop; ++epoch) {
    shuffle(std::span(order), shuffle_rng);
    double epoch_total = 0.0;
    std::int64_t epoch_batches = 0;
    for (std::size_t start = 0; start < order.size() && !stop; start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t n = std::min(order.size() - start, static_cast<std::size_t>(tc.batch_size));
      const std::span<const Index> rows(order.data() + start, n);
      ad::Tape<double> tape(ad::Mode::Train, derive_seed(tc.seed, static_cast<std::uint64_t>(step) + 1));
      ModelInput<double> batch;
      if (tc.joint_noise > 0.0 || tc.trajectory_noise > 0.0) {
        Tensor2d noisy = gather_rows(train.inputs, rows);
        // noise is in standardized units; joint dims carry the joint scale
        for (Index r = 0; r < noisy.rows(); ++r)
          for (Index c = 0; c < noisy.cols(); ++c)
            noisy(r, c) += (c < stats.joint_dims ? tc.joint_noise * stats.joint_scale : tc.trajectory_noise) *
                           normal(tape.rng());
        batch = make_batch(noisy, config);
      } else {
        batch = make_batch(train.inputs, rows, config);
      }
      const Tensor2d target = gather_rows(train.targets, rows);

      const auto vars = bind_params(tape, result.params);
      const auto out = forward(tape, result.params, vars, batch);
      const auto loss = compute_loss(tape, out.output, target, vars, tc, stats.contact_begin);
      tape.backward(loss);
      std::vector<Tensor2d> grads;
      grads.reserve(vars.size());
      double max_grad = 0.0;
      for (const auto& v : vars) {
        grads.push_back(tape.grad(v));
        max_grad = std::max(max_grad, grads.back().cwiseAbs().maxCoeff());
      }
      const double value = tape.value(loss)(0, 0);
      if (!std::isfinite(value) || !std::isfinite(max_grad)) {
        std::ostringstream msg;
        msg << "fit: non-finite loss at epoch " << epoch << " batch " << epoch_batches << " (step " << step
            << "), loss " << value << ", max |grad| " << max_grad;
        throw NumericError(msg.str());
      }
      adam_step(std::span(result.params.tensors), std::span<const Tensor2d>(grads), adam);
      ++step;
      ++epoch_batches;
      epoch_total += value;
      result.step_losses.push_back(value);
      if (options.on_step && !options.on_step({step, epoch, value})) stop = true;
      if (tc.max_steps > 0 && step >= tc.max_steps) stop = true;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = step;
    rec.train_loss = epoch_total / static_cast<double>(std::max<std::int64_t>(epoch_batches, 1));
    double score = rec.train_loss;
    if (validation.size() > 0) {
      rec.validation_loss = dataset_loss(result.params, validation, tc.loss, stats.contact_begin);
      score = rec.validation_loss;
    }
    if (score < best_score) {
      best_score = score;
      rec.best = true;
      result.best = result.params;
    }
    result.epochs.push_back(rec);
    if (!options.checkpoint_dir.empty()) {
      write(result.params, epoch, options.checkpoint_dir / ("epoch-" + std::to_string(epoch) + ".ckpt"));
      if (rec.best) write(result.best, epoch, options.checkpoint_dir / "best.ckpt");
    }
    if (options.on_epoch) options.on_epoch(rec);
  }
  return result;
}

void write_trace(const FitResult& result, const std::filesystem::path& path, const nlohmann::ordered_json& producer) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << nlohmann::ordered_json{{"producer", producer}}.dump() << '\n';
  for (const auto& e : result.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["steps"] = e.steps;
    j["train_loss"] = e.train_loss;
    if (std::isfinite(e.validation_loss)) j["validation_loss"] = e.validation_loss;
    else j["validation_loss"] = nullptr;
    j["best"] = e.best;
    out << j.dump() << '\n';
  }
}

namespace {

std::vector<TrainingSample> collect(std::span<const MotionClip> clips, const ModelConfig& config,
                                    std::vector<std::string>& diagnostics) {
  std::vector<TrainingSample> out;
  for (const auto& clip : clips) {
    const Terrain terrain = Terrain::resolve(clip.terrain);
    SampleSet set = assemble_samples(clip, config, terrain);
    if (set.samples.empty()) diagnostics.push_back(clip.id + ": " + set.diagnostic);
    for (auto& s : set.samples) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

PreparedData prepare_data(std::span<const MotionClip> train, std::span<const MotionClip> validation,
                          const ModelConfig& config, LossVariant loss) {
  PreparedData out;
  const auto train_samples = collect(train, config, out.diagnostics);
  if (train_samples.empty())
    throw UnderflowError("prepare_data: no training samples" +
                         (out.diagnostics.empty() ? std::string() : " (" + out.diagnostics.front() + ")"));
  const auto validation_samples = collect(validation, config, out.diagnostics);
  out.stats = NormStats::compute(train_samples, config, loss);
  out.train = normalize_samples(train_samples, out.stats);
  if (!validation_samples.empty()) out.validation = normalize_samples(validation_samples, out.stats);
  return out;
}

}  // namespace mcst
