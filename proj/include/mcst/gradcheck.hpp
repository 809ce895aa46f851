#pragma once

#include "mcst/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mcst {

/// Builds a scalar (1x1) output on the tape from the bound parameters.
using TapeFunction =
    std::function<ad::Var<double>(ad::Tape<double>&, std::span<const ad::Var<double>> params)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Number of randomly probed coordinates; 0 probes every coordinate.
  std::size_t probes = 0;
  std::uint64_t probe_seed = 0;
  /// Relative error denominator is max(|analytic|, |numeric|, floor).
  double absolute_floor = 1e-6;
  /// Every evaluation uses a fresh tape with this mode and seed, so dropout
  /// masks repeat exactly between the analytic and perturbed passes.
  ad::Mode mode = ad::Mode::Infer;
  std::uint64_t tape_seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t probed = 0;
  std::size_t worst_tensor = 0;
  Index worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool passed = true;
};

/// Evaluates f once (no gradient recording).
double evaluate(const TapeFunction& f, const std::vector<Tensor2d>& params, const GradCheckOptions& options);

/// Tape gradients of f with respect to every parameter.
std::vector<Tensor2d> analytic_gradients(const TapeFunction& f, const std::vector<Tensor2d>& params,
                                         const GradCheckOptions& options, double* value = nullptr);

/// Compares tape gradients against central differences (f(θ+h) − f(θ−h)) / 2h.
/// Throws NumericError if f is not finite at any evaluated point.
GradCheckReport grad_check(const TapeFunction& f, std::vector<Tensor2d> params, const GradCheckOptions& options = {});

}  // namespace mcst
