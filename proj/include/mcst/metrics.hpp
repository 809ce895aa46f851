#pragma once

// Joint angle update and paired t-test.

#include "mcst/skeleton.hpp"

#include "json.hpp"

#include <span>
#include <string>
#include <vector>

namespace mcst {

/// Mean over consecutive frame pairs and subset joints of the rotation angle
/// 2 acos(|<q_i, q_i+1>|), in degrees per second. Needs at least two frames.
double angle_update(std::span<const Quats> frames, std::span<const int> subset, double fps);
double angle_update(std::span<const PoseFrame> frames, std::span<const int> subset, double fps);

/// Per-pair angle (degrees per second) averaged over the subset; one value per frame transition.
std::vector<double> angle_update_series(std::span<const PoseFrame> frames, std::span<const int> subset, double fps);

/// Means of consecutive non-overlapping one-second windows of the series.
std::vector<double> per_second_means(std::span<const double> series, int fps);

struct AngleUpdateReport {
  double full = 0.0;
  double arm = 0.0;
  double leg = 0.0;
  int frames = 0;
  double fps = 0.0;

  nlohmann::ordered_json to_json() const;
};

AngleUpdateReport angle_update_report(std::span<const PoseFrame> frames, const SkeletonSpec& skeleton, double fps);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
/// Two-tailed p-value of Student's t with df degrees of freedom.
double student_t_two_tailed(double t, double df);

struct TTestReport {
  double mean_difference = 0.0;
  double t = 0.0;
  int df = 0;
  double p = 1.0;

  nlohmann::ordered_json to_json() const;
};

/// Paired test on d = a - b. Unequal lengths or n < 2 is a ContractError;
/// zero variance of d with nonzero mean is a DegenerateInputError.
TTestReport paired_t_test(std::span<const double> a, std::span<const double> b);

/// Method rows against scenario column groups, each split Full / Arm / Leg,
/// with a trailing Average group over the scenarios a row has.
class AngleUpdateTable {
 public:
  void add(const std::string& method, const std::string& scenario, const AngleUpdateReport& report);

  const std::vector<std::string>& methods() const { return methods_; }
  const std::vector<std::string>& scenarios() const { return scenarios_; }
  const AngleUpdateReport* find(const std::string& method, const std::string& scenario) const;

  std::string to_text(int precision = 1) const;
  nlohmann::ordered_json to_json() const;

 private:
  struct Cell {
    std::string method, scenario;
    AngleUpdateReport report;
  };
  std::vector<std::string> methods_;
  std::vector<std::string> scenarios_;
  std::vector<Cell> cells_;
};

}  // namespace mcst
