#pragma once

#include "mcst/tensor.hpp"

#include <cmath>

namespace mcst {

/// Row-wise softmax with max subtraction. Total on finite input.
template <typename Derived>
Tensor2<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Tensor2<Scalar> out(m.rows(), m.cols());
  for (Index r = 0; r < m.rows(); ++r) {
    const Scalar peak = m.row(r).maxCoeff();
    out.row(r) = (m.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Scalar>
Scalar elu(Scalar x) {
  return x >= Scalar(0) ? x : std::expm1(x);
}

template <typename Scalar>
Scalar elu_derivative(Scalar x) {
  return x >= Scalar(0) ? Scalar(1) : std::exp(x);
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

inline constexpr double kLayerNormEpsilon = 1e-8;

/// Per-row standardization (mean 0, population variance 1) without affine.
template <typename Derived>
Tensor2<typename Derived::Scalar> standardize_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Tensor2<Scalar> out(m.rows(), m.cols());
  const Scalar n = static_cast<Scalar>(m.cols());
  for (Index r = 0; r < m.rows(); ++r) {
    const Scalar mean = m.row(r).sum() / n;
    const auto centered = (m.row(r).array() - mean).eval();
    const Scalar var = centered.square().sum() / n;
    out.row(r) = (centered / std::sqrt(var + Scalar(kLayerNormEpsilon))).matrix();
  }
  return out;
}

}  // namespace mcst
