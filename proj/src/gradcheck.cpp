#include "mcst/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mcst {
namespace {

std::vector<ad::Var<double>> bind(ad::Tape<double>& tape, const std::vector<Tensor2d>& params) {
  std::vector<ad::Var<double>> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.parameter(p));
  return vars;
}

double checked_scalar(const ad::Tape<double>& tape, ad::Var<double> out) {
  const auto& v = tape.value(out);
  require(v.rows() == 1 && v.cols() == 1, "grad_check: function output must be 1x1, got " + shape_of(v));
  const double x = v(0, 0);
  if (!std::isfinite(x)) throw NumericError("grad_check: function value is not finite");
  return x;
}

}  // namespace

double evaluate(const TapeFunction& f, const std::vector<Tensor2d>& params, const GradCheckOptions& options) {
  ad::Tape<double> tape(options.mode, options.tape_seed, /*record_gradients=*/false);
  const auto vars = bind(tape, params);
  return checked_scalar(tape, f(tape, vars));
}

std::vector<Tensor2d> analytic_gradients(const TapeFunction& f, const std::vector<Tensor2d>& params,
                                         const GradCheckOptions& options, double* value) {
  ad::Tape<double> tape(options.mode, options.tape_seed, /*record_gradients=*/true);
  const auto vars = bind(tape, params);
  const auto out = f(tape, vars);
  const double v = checked_scalar(tape, out);
  if (value) *value = v;
  tape.backward(out);
  std::vector<Tensor2d> grads;
  grads.reserve(vars.size());
  for (const auto& var : vars) grads.push_back(tape.grad(var));
  return grads;
}

GradCheckReport grad_check(const TapeFunction& f, std::vector<Tensor2d> params, const GradCheckOptions& options) {
  require(options.step > 0.0, "grad_check: step must be positive");
  const auto grads = analytic_gradients(f, params, options);

  std::vector<std::pair<std::size_t, Index>> coords;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (Index j = 0; j < params[i].size(); ++j) coords.emplace_back(i, j);
  if (options.probes > 0 && options.probes < coords.size()) {
    Rng rng(options.probe_seed);
    // partial Fisher-Yates: the first `probes` entries become a uniform sample
    for (std::size_t k = 0; k < options.probes; ++k) {
      const auto j = k + static_cast<std::size_t>(uniform_index(rng, coords.size() - k));
      std::swap(coords[k], coords[j]);
    }
    coords.resize(options.probes);
  }

  GradCheckReport report;
  for (const auto& [tensor, index] : coords) {
    double& theta = params[tensor].data()[index];
    const double original = theta;
    theta = original + options.step;
    const double plus = evaluate(f, params, options);
    theta = original - options.step;
    const double minus = evaluate(f, params, options);
    theta = original;

    const double numeric = (plus - minus) / (2.0 * options.step);
    const double analytic = grads[tensor].data()[index];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.absolute_floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.probed;
    if (rel > report.max_relative_error || report.probed == 1) {
      report.max_relative_error = rel;
      report.worst_tensor = tensor;
      report.worst_index = index;
      report.analytic_at_worst = analytic;
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace mcst
