#pragma once

#include "mcst/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mcst {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter moment accumulators. Empty moments mean "step 0, all zeros".
template <typename Scalar>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor2<Scalar>> first;
  std::vector<Tensor2<Scalar>> second;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update, in place.
template <typename Scalar>
void adam_step(std::span<Tensor2<Scalar>> params, std::span<const Tensor2<Scalar>> grads, AdamState<Scalar>& state) {
  require(params.size() == grads.size(), "adam_step: " + std::to_string(params.size()) + " params but " +
                                             std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].rows() == grads[i].rows() && params[i].cols() == grads[i].cols(),
            "adam_step: parameter " + std::to_string(i) + " is " + shape_of(params[i]) + " but gradient is " +
                shape_of(grads[i]));
  }
  if (state.first.empty()) {
    require(state.step == 0, "adam_step: moments missing after step 0");
    for (const auto& p : params) {
      state.first.push_back(Tensor2<Scalar>::Zero(p.rows(), p.cols()));
      state.second.push_back(Tensor2<Scalar>::Zero(p.rows(), p.cols()));
    }
  }
  require(state.first.size() == params.size(), "adam_step: state tracks a different parameter count");

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const Scalar correction1 = Scalar(1.0 - std::pow(c.beta1, t));
  const Scalar correction2 = Scalar(1.0 - std::pow(c.beta2, t));
  const Scalar b1 = Scalar(c.beta1), b2 = Scalar(c.beta2);
  const Scalar lr = Scalar(c.learning_rate), eps = Scalar(c.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first[i];
    auto& v = state.second[i];
    require(m.rows() == params[i].rows() && m.cols() == params[i].cols(), "adam_step: moment shape drifted");
    m = b1 * m + (Scalar(1) - b1) * grads[i];
    v = b2 * v + (Scalar(1) - b2) * grads[i].cwiseAbs2();
    params[i].array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
  }
}

}  // namespace mcst
