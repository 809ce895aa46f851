#include "mcst/checkpoint.hpp"
#include "mcst/training.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace mcst;
using mcst::testing::walking_clips;

namespace {

// world (x, z) displacement seen from a root with heading `a`
Eigen::Vector2d to_local(double a, double dx, double dz) {
  return {std::cos(a) * dx - std::sin(a) * dz, std::sin(a) * dx + std::cos(a) * dz};
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TrainConfig quick_train(std::uint64_t seed = 4) {
  TrainConfig tc;
  tc.seed = seed;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.learning_rate = 1e-3;
  tc.max_steps = 12;
  return tc;
}

}  // namespace

TEST(Samples, ValidFrameRange) {
  const ModelConfig c;
  const FrameRange r = valid_frames(600, c);
  EXPECT_EQ(r.first, 41);
  EXPECT_EQ(r.last, 600 - 61);
  EXPECT_EQ(r.count(), 499);
  EXPECT_EQ(valid_frames(102, c).count(), 1);
  EXPECT_EQ(valid_frames(101, c).count(), 0);
}

TEST(Samples, ShortClipYieldsDiagnostic) {
  const auto clips = walking_clips(101);
  const SampleSet s = assemble_samples(clips[0], ModelConfig::tiny(), Terrain::flat());
  EXPECT_TRUE(s.samples.empty());
  EXPECT_NE(s.diagnostic.find("102"), std::string::npos) << s.diagnostic;
  EXPECT_THROW(prepare_data(clips, {}, ModelConfig::tiny(), LossVariant::Mse), UnderflowError);
}

TEST(Samples, OneSamplePerValidFrame) {
  const auto clips = walking_clips(150);
  const ModelConfig c = ModelConfig::tiny();
  const SampleSet s = assemble_samples(clips[0], c, Terrain::flat());
  ASSERT_EQ(s.samples.size(), 150u - 41u - 60u);
  EXPECT_EQ(s.samples.front().frame, 41);
  EXPECT_EQ(s.samples.back().frame, 89);
  for (const auto& t : s.samples) {
    EXPECT_EQ(t.target.size(), 341);
    EXPECT_EQ(t.trajectory.size(), 144);
  }
}

TEST(Target, EncodesRootDeltaPoseFutureAndContacts) {
  const ModelConfig c;
  const OutputLayout L = c.output_layout();
  PoseFrame f = make_frame(31);
  for (int j = 0; j < 31; ++j) {
    f.positions.row(j) << j, 2.0 * j, -j;
    f.velocities.row(j) << 0.5 * j, 0.0, 1.0;
    f.rotations.row(j) << 1.0, 0.0, 0.0, 0.0;
  }
  f.root = {1.0, 2.0, 0.4};
  f.contact = {true, false, false, true};
  const RootTransform next{1.1, 2.05, 0.5};
  std::vector<RootTransform> future;
  for (int s = 0; s < 6; ++s) future.push_back({1.1 + 0.1 * s, 2.05 + 0.3 * s, 0.5 + 0.05 * s});

  const RowVector<double> y = encode_target(f, next, future, L);
  ASSERT_EQ(y.size(), 341);
  const Eigen::Vector2d d = to_local(0.4, 0.1, 0.05);
  EXPECT_NEAR(y(0), d.x(), 1e-14);
  EXPECT_NEAR(y(1), d.y(), 1e-14);
  EXPECT_NEAR(y(2), 0.1, 1e-14);
  EXPECT_EQ(y(3 + 3 * 7 + 1), 14.0);
  EXPECT_EQ(y(96 + 3 * 7), 3.5);
  EXPECT_EQ(y(189 + 4 * 30), 1.0);
  for (int s = 0; s < 6; ++s) {
    const Eigen::Vector2d p = to_local(0.5, 0.1 * s, 0.3 * s);
    EXPECT_NEAR(y(313 + 2 * s), p.x(), 1e-14);
    EXPECT_NEAR(y(313 + 2 * s + 1), p.y(), 1e-14);
    EXPECT_NEAR(y(325 + 2 * s), std::sin(0.05 * s), 1e-14);
    EXPECT_NEAR(y(325 + 2 * s + 1), std::cos(0.05 * s), 1e-14);
  }
  EXPECT_EQ(y(337), 1.0);
  EXPECT_EQ(y(338), 0.0);
  EXPECT_EQ(y(340), 1.0);
  EXPECT_THROW(encode_target(f, next, std::span(future).first(5), L), ContractError);
}

TEST(NormStats, ColumnStatisticsFloorAndContacts) {
  const auto clips = walking_clips(200);
  const ModelConfig c = ModelConfig::tiny();
  const SampleSet set = assemble_samples(clips[0], c, Terrain::flat());
  const NormStats s = NormStats::compute(set.samples, c, LossVariant::Mse);
  const Index n = static_cast<Index>(set.samples.size());
  const Index width = 5 * 186 + 5 * 36 + 144;
  ASSERT_EQ(s.input_width(), width);
  EXPECT_EQ(s.joint_dims, width - 144);
  EXPECT_EQ(s.contact_begin, 337);
  // column 0 of the fine scale and a constant gait column
  for (Index col : {Index{0}, Index{5}, width - 144 + 84 + 5 * 0 + 0}) {
    double mean = 0.0;
    for (const auto& t : set.samples) mean += flatten_input(t.x, t.trajectory)(col);
    mean /= double(n);
    double var = 0.0;
    for (const auto& t : set.samples) var += std::pow(flatten_input(t.x, t.trajectory)(col) - mean, 2);
    const double sd = std::sqrt(var / double(n));
    EXPECT_NEAR(s.input_mean(col), mean, 1e-12);
    EXPECT_NEAR(s.input_std(col), sd < 1e-8 ? 1.0 : sd, 1e-12);
  }
  EXPECT_EQ(s.input_std(width - 144 + 84), 1.0);  // standing never occurs
  EXPECT_EQ(s.output_mean.segment(337, 4), RowVector<double>::Zero(4));
  EXPECT_EQ(s.output_std.segment(337, 4), RowVector<double>::Ones(4));

  const RowVector<double> raw = flatten_input(set.samples[3].x, set.samples[3].trajectory);
  const RowVector<double> z = s.normalize_input(raw);
  EXPECT_NEAR(z(0), 0.1 * (raw(0) - s.input_mean(0)) / s.input_std(0), 1e-14);
  EXPECT_NEAR(z(width - 1), (raw(width - 1) - s.input_mean(width - 1)) / s.input_std(width - 1), 1e-14);
  const RowVector<double> y = s.normalize_output(set.samples[3].target);
  EXPECT_LT((s.denormalize_output(y) - set.samples[3].target).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(s.normalize_input(raw.head(10)), ContractError);
}

TEST(Decode, QuaternionsAndContactReadout) {
  const ModelConfig c;
  NormStats s;
  s.output_mean = RowVector<double>::Zero(341);
  s.output_std = RowVector<double>::Ones(341);
  RowVector<double> y = RowVector<double>::Zero(341);
  y.segment(189, 4) << 2.0, 0.0, 0.0, 0.0;
  y(337) = 1.7;
  y(338) = -0.3;
  y(339) = 0.5;
  PredictedState p = decode_output(y, s, c);
  EXPECT_EQ(p.rotations.row(0), Eigen::RowVector4d(1, 0, 0, 0));
  EXPECT_EQ(p.rotations.row(1), Eigen::RowVector4d(1, 0, 0, 0));  // zero falls back to identity
  EXPECT_EQ(p.contact_probability[0], 1.0);
  EXPECT_EQ(p.contact_probability[1], 0.0);
  EXPECT_EQ(p.contacts()[2], true);
  s.readout = ContactReadout::Sigmoid;
  p = decode_output(y, s, c);
  EXPECT_NEAR(p.contact_probability[0], 1.0 / (1.0 + std::exp(-1.7)), 1e-15);
  EXPECT_FALSE(p.contacts()[1]);
}

TEST(Loss, DataTermPlusL1Penalty) {
  Tensor2d pred(2, 6), target(2, 6);
  pred << 0.5, -1.0, 2.0, 0.0, 1.5, -2.0, 1.0, 1.0, 1.0, 1.0, 0.2, 3.0;
  target << 0.0, 0.0, 2.5, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 3.0, 0.0, 1.0;
  const std::vector<Tensor2d> params = {Tensor2d::Constant(1, 2, -0.5), Tensor2d::Constant(2, 1, 2.0)};
  TrainConfig tc;
  tc.lambda = 0.1;
  // mean |theta| = (0.5 + 0.5 + 2 + 2) / 4
  const double l1 = 1.25;

  double se = 0.0, ae = 0.0;
  for (Index i = 0; i < pred.size(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    se += d * d;
    ae += std::abs(d);
  }
  tc.loss = LossVariant::Mse;
  EXPECT_NEAR(compute_loss(pred, target, params, tc, 4), se / 12 + 0.1 * l1, 1e-14);
  tc.loss = LossVariant::Mae;
  EXPECT_NEAR(compute_loss(pred, target, params, tc, 4), ae / 12 + 0.1 * l1, 1e-14);

  // last four columns as logits
  tc.loss = LossVariant::CeContact;
  double total = 0.0;
  for (Index r = 0; r < 2; ++r)
    for (Index col = 0; col < 6; ++col) {
      const double x = pred(r, col), y = target(r, col);
      if (col >= 2) {
        const double p = 1.0 / (1.0 + std::exp(-x));
        total += -(y * std::log(p) + (1 - y) * std::log(1 - p));
      } else {
        total += (x - y) * (x - y);
      }
    }
  EXPECT_NEAR(compute_loss(pred, target, params, tc, 2), total / 12 + 0.1 * l1, 1e-12);
  tc.lambda = 0.0;
  EXPECT_NEAR(compute_loss(pred, target, params, tc, 2), total / 12, 1e-12);
}

TEST(Split, ValidationClipsAreSeededAndLeaveTraining) {
  EXPECT_TRUE(validation_clips(5, 0.0, 1).empty());
  EXPECT_EQ(validation_clips(10, 0.2, 3).size(), 2u);
  EXPECT_EQ(validation_clips(10, 0.2, 3), validation_clips(10, 0.2, 3));
  EXPECT_EQ(validation_clips(1, 0.9, 3).size(), 0u);
  EXPECT_EQ(validation_clips(4, 1.0, 3).size(), 3u);
  bool differs = false;
  for (std::uint64_t s = 0; s < 8 && !differs; ++s) differs = validation_clips(10, 0.3, s) != validation_clips(10, 0.3, 99);
  EXPECT_TRUE(differs);
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.joint_noise = 0.1;
  tc.trajectory_noise = 1.0;
  tc.loss = LossVariant::CeContact;
  const TrainConfig back = TrainConfig::from_json(nlohmann::json::parse(tc.to_json().dump()));
  EXPECT_EQ(back.to_json(), tc.to_json());
  EXPECT_THROW(parse_loss_variant("huber"), ConfigError);
}

TEST(Fit, ReducesLossAndIsDeterministic) {
  const auto clips = walking_clips(200);
  const ModelConfig c = ModelConfig::tiny();
  const PreparedData data = prepare_data(clips, {}, c, LossVariant::Mse);
  TrainConfig tc = quick_train();
  tc.max_steps = 40;
  tc.epochs = 10;
  tc.lambda = 0.0;
  const FitResult a = fit(data.train, data.validation, data.stats, c, tc);
  const FitResult b = fit(data.train, data.validation, data.stats, c, tc);
  ASSERT_EQ(a.step_losses.size(), 40u);
  EXPECT_EQ(a.step_losses, b.step_losses);
  for (std::size_t i = 0; i < a.params.tensors.size(); ++i) EXPECT_EQ(a.params.tensors[i], b.params.tensors[i]);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 5; ++i) head += a.step_losses[i], tail += a.step_losses[35 + i];
  EXPECT_LT(tail, head);
  tc.seed = 5;
  EXPECT_NE(fit(data.train, data.validation, data.stats, c, tc).step_losses, a.step_losses);
}

TEST(Fit, NonFiniteLossNamesTheBatch) {
  const auto clips = walking_clips(160);
  const ModelConfig c = ModelConfig::tiny();
  PreparedData data = prepare_data(clips, {}, c, LossVariant::Mse);
  data.train.targets(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc = quick_train();
  tc.batch_size = 1000;
  try {
    fit(data.train, data.validation, data.stats, c, tc);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos) << e.what();
  }
}

TEST(Fit, ValidationSplitDrivesBestAndTrace) {
  const auto clips = walking_clips(160, 3, 2);
  const ModelConfig c = ModelConfig::tiny();
  const PreparedData data = prepare_data(std::span(clips).first(2), std::span(clips).last(1), c, LossVariant::Mse);
  EXPECT_GT(data.validation.size(), 0);
  EXPECT_EQ(data.train.size(), 2 * data.validation.size());
  TrainConfig tc = quick_train();
  tc.max_steps = 0;
  tc.epochs = 2;
  const auto dir = std::filesystem::temp_directory_path() / "mcst_fit_test";
  std::filesystem::remove_all(dir);
  FitOptions o;
  o.checkpoint_dir = dir;
  o.producer = {{"method", "test"}};
  const FitResult r = fit(data.train, data.validation, data.stats, c, tc, o);
  ASSERT_EQ(r.epochs.size(), 2u);
  for (const auto& e : r.epochs) EXPECT_TRUE(std::isfinite(e.validation_loss));
  EXPECT_TRUE(r.epochs[0].best);
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch-1.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch-2.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "best.ckpt"));
  write_trace(r, dir / "trace.jsonl", o.producer);
  std::istringstream lines(read_text(dir / "trace.jsonl"));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(nlohmann::json::parse(line)["producer"]["method"], "test");
  std::getline(lines, line);
  const auto first = nlohmann::json::parse(line);
  EXPECT_EQ(first["epoch"], 1);
  EXPECT_DOUBLE_EQ(first["validation_loss"].get<double>(), r.epochs[0].validation_loss);
}

TEST(Checkpoint, ByteExactRoundTrip) {
  Checkpoint c = mcst::testing::tiny_checkpoint(8, [] {
    ModelConfig m = ModelConfig::tiny();
    m.coarse_scales = scale_preset("three");
    return m;
  }());
  c.train.joint_noise = 0.25;
  c.epoch = 7;
  c.producer = {{"method", "mcs-t"}};
  const auto dir = std::filesystem::temp_directory_path() / "mcst_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(c, dir / "a.ckpt");
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(back, dir / "b.ckpt");
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
  EXPECT_EQ(back.epoch, 7);
  EXPECT_EQ(back.params.config.to_json(), c.params.config.to_json());
  for (std::size_t i = 0; i < c.params.tensors.size(); ++i) EXPECT_EQ(back.params.tensors[i], c.params.tensors[i]);
  EXPECT_EQ(back.stats.input_std, c.stats.input_std);
  EXPECT_EQ(back.train.to_json(), c.train.to_json());
  EXPECT_EQ(back.producer, c.producer);
}

TEST(Checkpoint, RejectsCorruption) {
  const Checkpoint c = mcst::testing::tiny_checkpoint();
  std::vector<char> bytes = encode_checkpoint(c);
  EXPECT_NO_THROW(decode_checkpoint(bytes));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad[8] = 9;
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad.assign(bytes.begin(), bytes.end() - 3);
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), ConfigError);
}
