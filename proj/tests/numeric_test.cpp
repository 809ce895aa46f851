#include "mcst/autodiff.hpp"
#include "mcst/gradcheck.hpp"
#include "mcst/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mcst;

namespace {

Tensor2d random_matrix(Index rows, Index cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor2d m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
  return m;
}

// Sum of the output weighted by a fixed random matrix, so every output
// element contributes a distinct gradient.
ad::Var<double> weighted_sum(ad::Tape<double>& t, ad::Var<double> x, std::uint64_t seed) {
  const auto& v = t.value(x);
  const auto w = t.constant(random_matrix(v.rows(), v.cols(), seed));
  Tensor2d ones = Tensor2d::Ones(v.cols(), 1);
  auto prod = t.push(t.value(x).cwiseProduct(t.value(w)), t.requires_grad(x), [x, w](ad::Tape<double>& tp, std::size_t self) {
    tp.grad_slot(x) += tp.output_grad(self).cwiseProduct(tp.value(w));
  });
  return ad::sum_all(t, prod);
}

GradCheckReport check(const TapeFunction& f, std::vector<Tensor2d> params) {
  GradCheckOptions o;
  o.step = 1e-5;
  o.tolerance = 1e-6;
  return grad_check(f, std::move(params), o);
}

}  // namespace

TEST(Softmax, RowsSumToOneAndMatchDirectFormula) {
  const Tensor2d m = random_matrix(7, 9, 1, -30.0, 30.0);
  const Tensor2d s = softmax_rows(m);
  for (Index r = 0; r < m.rows(); ++r) {
    EXPECT_NEAR(s.row(r).sum(), 1.0, 1e-12);
    double z = 0.0;
    for (Index c = 0; c < m.cols(); ++c) z += std::exp(m(r, c));
    for (Index c = 0; c < m.cols(); ++c) EXPECT_NEAR(s(r, c), std::exp(m(r, c)) / z, 1e-12);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  Tensor2d m(1, 3);
  m << 1000.0, 999.0, -1000.0;
  const Tensor2d s = softmax_rows(m);
  EXPECT_TRUE(s.allFinite());
  EXPECT_NEAR(s(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  const Tensor2d m = random_matrix(5, 24, 2, -3.0, 3.0);
  const Tensor2d s = standardize_rows(m);
  for (Index r = 0; r < s.rows(); ++r) {
    EXPECT_NEAR(s.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(s.row(r).squaredNorm() / 24.0, 1.0, 1e-6);
  }
}

TEST(Elu, ValuesAndDerivative) {
  EXPECT_DOUBLE_EQ(elu(2.0), 2.0);
  EXPECT_NEAR(elu(-1.0), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(elu_derivative(3.0), 1.0);
  EXPECT_NEAR(elu_derivative(-2.0), std::exp(-2.0), 1e-15);
}

TEST(Sigmoid, SymmetricAndStable) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(3.0) + sigmoid(-3.0), 1.0, 1e-15);
  EXPECT_EQ(sigmoid(-800.0), 0.0);
  EXPECT_EQ(sigmoid(800.0), 1.0);
}

TEST(Tape, MatmulValueMatchesEigen) {
  ad::Tape<double> t;
  const Tensor2d a = random_matrix(3, 4, 3), b = random_matrix(4, 2, 4);
  const auto y = ad::matmul(t, t.constant(a), t.constant(b));
  EXPECT_TRUE(t.value(y).isApprox(a * b, 1e-14));
}

TEST(Tape, UnusedParameterHasZeroGradient) {
  const Tensor2d a = random_matrix(2, 2, 5), b = random_matrix(2, 2, 6);
  ad::Tape<double> t;
  const auto pa = t.parameter(a);
  const auto pb = t.parameter(b);
  const auto y = ad::sum_all(t, ad::relu(t, pa));
  t.backward(y);
  EXPECT_TRUE(t.grad(pb).isZero(0.0));
}

TEST(Tape, BackwardRequiresScalar) {
  ad::Tape<double> t;
  const Tensor2d a = random_matrix(2, 2, 5);
  const auto pa = t.parameter(a);
  EXPECT_THROW(t.backward(pa), ContractError);
}

TEST(Gradients, Linear) {
  auto f = [](ad::Tape<double>& t, std::span<const ad::Var<double>> p) {
    return weighted_sum(t, ad::linear(t, p[0], p[1], p[2]), 11);
  };
  const auto r = check(f, {random_matrix(3, 5, 1), random_matrix(5, 4, 2), random_matrix(1, 4, 3)});
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(Gradients, ReluEluAddScale) {
  auto f = [](ad::Tape<double>& t, std::span<const ad::Var<double>> p) {
    auto a = ad::elu(t, p[0]);
    auto b = ad::relu(t, ad::scale(t, p[1], 1.7));
    return weighted_sum(t, ad::add(t, a, b), 12);
  };
  // keep relu inputs away from the kink
  Tensor2d x = random_matrix(4, 3, 5, 0.2, 1.0);
  x(0, 0) = -0.7;
  x(2, 1) = -0.4;
  const auto r = check(f, {random_matrix(4, 3, 4), x});
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(Gradients, LayerNorm) {
  auto f = [](ad::Tape<double>& t, std::span<const ad::Var<double>> p) {
    return weighted_sum(t, ad::layer_norm(t, p[0], p[1], p[2]), 13);
  };
  const auto r = check(f, {random_matrix(3, 8, 6, -2.0, 2.0), random_matrix(1, 8, 7), random_matrix(1, 8, 8)});
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(Gradients, MultiHeadAttention) {
  auto f = [](ad::Tape<double>& t, std::span<const ad::Var<double>> p) {
    return weighted_sum(t, ad::attention(t, p[0], p[1], p[2], 2, 1, 5), 14);
  };
  // batch 2, one query, five keys, width 4, two heads
  const auto r = check(f, {random_matrix(2, 4, 9), random_matrix(10, 4, 10), random_matrix(10, 4, 11)});
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(Gradients, TokenConcatAddTiledBlockMeanConcatCols) {
  auto f = [](ad::Tape<double>& t, std::span<const ad::Var<double>> p) {
    auto tokens = ad::concat_token_blocks(t, {p[0], p[1]}, 2);  // 2 samples x (2 + 3) tokens
    auto tiled = ad::add_tiled(t, tokens, p[2]);
    auto pooled = ad::block_mean(t, tiled, 5);
    return weighted_sum(t, ad::concat_cols(t, pooled, p[3]), 15);
  };
  const auto r = check(f, {random_matrix(4, 3, 12), random_matrix(6, 3, 13), random_matrix(5, 3, 14),
                           random_matrix(2, 2, 15)});
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(Gradients, Losses) {
  const Tensor2d target = random_matrix(3, 6, 16, 0.0, 1.0);
  for (auto kind : {ad::LossKind::MeanSquared, ad::LossKind::MeanAbsolute, ad::LossKind::MeanSquaredWithContactBce}) {
    auto f = [&](ad::Tape<double>& t, std::span<const ad::Var<double>> p) {
      auto data = ad::regression_loss(t, p[0], target, kind, 2, 3);
      return ad::add(t, data, ad::scale(t, ad::l1_mean(t, p), 0.3));
    };
    const auto r = check(f, {random_matrix(3, 6, 17, -2.0, 2.0), random_matrix(2, 2, 18)});
    EXPECT_TRUE(r.passed) << static_cast<int>(kind) << " " << r.max_relative_error;
  }
}

TEST(Losses, ValuesMatchHandComputation) {
  Tensor2d pred(1, 2), target(1, 2);
  pred << 0.5, -1.0;
  target << 1.0, 1.0;
  ad::Tape<double> t;
  const auto p = t.constant(pred);
  EXPECT_DOUBLE_EQ(t.value(ad::regression_loss(t, p, target, ad::LossKind::MeanSquared))(0, 0), (0.25 + 4.0) / 2);
  EXPECT_DOUBLE_EQ(t.value(ad::regression_loss(t, p, target, ad::LossKind::MeanAbsolute))(0, 0), (0.5 + 2.0) / 2);
  const double bce = std::log(1.0 + std::exp(1.0));  // logit -1, label 1
  EXPECT_NEAR(t.value(ad::regression_loss(t, p, target, ad::LossKind::MeanSquaredWithContactBce, 1, 1))(0, 0),
              (0.25 + bce) / 2, 1e-15);
}

TEST(Dropout, InferenceIsIdentityTrainingScalesSurvivors) {
  const Tensor2d x = random_matrix(20, 20, 19, 0.5, 1.5);
  {
    ad::Tape<double> t(ad::Mode::Infer);
    EXPECT_EQ(t.value(ad::dropout(t, t.constant(x), 0.5)), x);
  }
  ad::Tape<double> t(ad::Mode::Train, 42);
  const Tensor2d y = t.value(ad::dropout(t, t.constant(x), 0.25));
  int kept = 0;
  for (Index i = 0; i < x.size(); ++i) {
    if (y.data()[i] != 0.0) {
      ++kept;
      EXPECT_NEAR(y.data()[i], x.data()[i] / 0.75, 1e-15);
    }
  }
  EXPECT_NEAR(kept / 400.0, 0.75, 0.08);
}

TEST(Adam, FirstStepsMatchHandComputedMoments) {
  std::vector<Tensor2d> params = {Tensor2d::Constant(1, 1, 1.0)};
  AdamState<double> state;
  state.config.learning_rate = 0.1;
  const double grads[2] = {0.5, -0.25};
  double m = 0, v = 0, theta = 1.0;
  for (int step = 1; step <= 2; ++step) {
    std::vector<Tensor2d> g = {Tensor2d::Constant(1, 1, grads[step - 1])};
    adam_step<double>(params, g, state);
    m = 0.9 * m + 0.1 * grads[step - 1];
    v = 0.999 * v + 0.001 * grads[step - 1] * grads[step - 1];
    const double mh = m / (1 - std::pow(0.9, step)), vh = v / (1 - std::pow(0.999, step));
    theta -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(params[0](0, 0), theta, 1e-14);
  }
  EXPECT_EQ(state.step, 2u);
}

TEST(GradCheck, DetectsAWrongBackward) {
  auto f = [](ad::Tape<double>& t, std::span<const ad::Var<double>> p) {
    const auto x = p[0];
    // square with a deliberately halved gradient
    auto y = t.push(t.value(x).array().square().matrix(), true, [x](ad::Tape<double>& tp, std::size_t self) {
      tp.grad_slot(x) += tp.output_grad(self).cwiseProduct(tp.value(x));
    });
    return ad::sum_all(t, y);
  };
  const auto r = check(f, {random_matrix(2, 2, 20, 0.5, 1.0)});
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_relative_error, 0.3);
}

TEST(Random, StreamsAreStableAcrossRuns) {
  Rng a(derive_seed(7, 1)), b(derive_seed(7, 1)), c(derive_seed(7, 2));
  const double x = uniform01(a);
  EXPECT_EQ(x, uniform01(b));
  EXPECT_NE(x, uniform01(c));
  EXPECT_GE(x, 0.0);
  EXPECT_LT(x, 1.0);
}

TEST(Random, NormalHasUnitMoments) {
  Rng rng(3);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = normal(rng);
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
