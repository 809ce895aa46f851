#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mcst {

/// Dense row-major matrix. 64-bit in tests and training, 32-bit allowed at runtime.
template <typename Scalar>
using Tensor2 = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Tensor2d = Tensor2<double>;
using Tensor2f = Tensor2<float>;

using Index = Eigen::Index;

// Error taxonomy. Everything derives from std::runtime_error or
// std::invalid_argument so callers can catch coarsely.

/// Shapes or arguments violate an operation's precondition.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A configuration file or config object is inconsistent.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Not enough history/future frames to satisfy a request.
struct UnderflowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Statistically degenerate input (e.g. zero-variance differences).
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file or wire payload.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The one generator type used everywhere; seeded once per context.
using Rng = std::mt19937_64;

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
std::string shape_of(const Eigen::MatrixBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace mcst
