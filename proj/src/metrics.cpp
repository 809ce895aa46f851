#include "mcst/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace mcst {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

void check_subset(std::span<const int> subset, Index joints) {
  require(!subset.empty(), "angle_update: empty joint subset");
  for (int j : subset) require(j >= 0 && j < joints, "angle_update: joint " + std::to_string(j) + " out of range");
}

double pair_mean(const Quats& a, const Quats& b, std::span<const int> subset) {
  require(a.rows() == b.rows(), "angle_update: frames differ in joint count");
  double sum = 0.0;
  for (int j : subset) sum += quat_angle(quaternion_at(a, j), quaternion_at(b, j));
  return sum / static_cast<double>(subset.size());
}

}  // namespace

double angle_update(std::span<const Quats> frames, std::span<const int> subset, double fps) {
  require(frames.size() >= 2, "angle_update: needs at least two frames");
  require(fps > 0.0, "angle_update: fps must be positive");
  check_subset(subset, frames[0].rows());
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) sum += pair_mean(frames[i], frames[i + 1], subset);
  return sum / static_cast<double>(frames.size() - 1) * fps * kRadToDeg;
}

double angle_update(std::span<const PoseFrame> frames, std::span<const int> subset, double fps) {
  std::vector<Quats> q;
  q.reserve(frames.size());
  for (const auto& f : frames) q.push_back(f.rotations);
  return angle_update(std::span<const Quats>(q), subset, fps);
}

std::vector<double> angle_update_series(std::span<const PoseFrame> frames, std::span<const int> subset, double fps) {
  require(frames.size() >= 2, "angle_update_series: needs at least two frames");
  check_subset(subset, frames[0].rotations.rows());
  std::vector<double> out;
  out.reserve(frames.size() - 1);
  for (std::size_t i = 0; i + 1 < frames.size(); ++i)
    out.push_back(pair_mean(frames[i].rotations, frames[i + 1].rotations, subset) * fps * kRadToDeg);
  return out;
}

std::vector<double> per_second_means(std::span<const double> series, int fps) {
  require(fps > 0, "per_second_means: fps must be positive");
  std::vector<double> out;
  const auto w = static_cast<std::size_t>(fps);
  for (std::size_t start = 0; start + w <= series.size(); start += w) {
    double s = 0.0;
    for (std::size_t i = start; i < start + w; ++i) s += series[i];
    out.push_back(s / static_cast<double>(w));
  }
  return out;
}

nlohmann::ordered_json AngleUpdateReport::to_json() const {
  return {{"full", full}, {"arm", arm}, {"leg", leg}, {"frames", frames}, {"fps", fps}};
}

AngleUpdateReport angle_update_report(std::span<const PoseFrame> frames, const SkeletonSpec& skeleton, double fps) {
  AngleUpdateReport r;
  r.full = angle_update(frames, skeleton.subset("full"), fps);
  r.arm = angle_update(frames, skeleton.subset("arm"), fps);
  r.leg = angle_update(frames, skeleton.subset("leg"), fps);
  r.frames = static_cast<int>(frames.size());
  r.fps = fps;
  return r;
}

double incomplete_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, "incomplete_beta: a and b must be positive");
  require(x >= 0.0 && x <= 1.0, "incomplete_beta: x outside [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  // the continued fraction converges fast below the mean; reflect above it
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  // modified Lentz
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    f *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) return std::exp(log_front) * f / a;
  }
  throw NumericError("incomplete_beta: continued fraction did not converge");
}

double student_t_two_tailed(double t, double df) {
  require(df > 0.0, "student_t_two_tailed: df must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

nlohmann::ordered_json TTestReport::to_json() const {
  return {{"mean_difference", mean_difference}, {"t", t}, {"df", df}, {"p", p}};
}

TTestReport paired_t_test(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "paired_t_test: samples differ in length (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
  require(a.size() >= 2, "paired_t_test: needs at least two pairs");
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double sd = std::sqrt(ss / (n - 1.0));

  TTestReport r;
  r.mean_difference = mean;
  r.df = static_cast<int>(a.size()) - 1;
  if (sd == 0.0) {
    if (mean != 0.0) throw DegenerateInputError("paired_t_test: differences have zero variance");
    r.t = 0.0;
    r.p = 1.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  r.p = std::clamp(student_t_two_tailed(r.t, r.df), 0.0, 1.0);
  return r;
}

void AngleUpdateTable::add(const std::string& method, const std::string& scenario, const AngleUpdateReport& report) {
  if (std::find(methods_.begin(), methods_.end(), method) == methods_.end()) methods_.push_back(method);
  if (std::find(scenarios_.begin(), scenarios_.end(), scenario) == scenarios_.end()) scenarios_.push_back(scenario);
  for (auto& c : cells_) {
    if (c.method == method && c.scenario == scenario) {
      c.report = report;
      return;
    }
  }
  cells_.push_back({method, scenario, report});
}

const AngleUpdateReport* AngleUpdateTable::find(const std::string& method, const std::string& scenario) const {
  for (const auto& c : cells_)
    if (c.method == method && c.scenario == scenario) return &c.report;
  return nullptr;
}

namespace {

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

}  // namespace

std::string AngleUpdateTable::to_text(int precision) const {
  std::size_t method_width = 6;
  for (const auto& m : methods_) method_width = std::max(method_width, m.size());
  constexpr int cell = 8;
  std::vector<std::string> groups;
  for (const auto& s : scenarios_) groups.push_back(capitalize(s));
  groups.emplace_back("Average");

  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(method_width)) << "" << " |";
  for (const auto& g : groups) out << std::right << std::setw(3 * cell) << g << " |";
  out << '\n' << std::left << std::setw(static_cast<int>(method_width)) << "Method" << " |";
  for (std::size_t g = 0; g < groups.size(); ++g)
    out << std::right << std::setw(cell) << "Full" << std::setw(cell) << "Arm" << std::setw(cell) << "Leg" << " |";
  out << '\n' << std::string(method_width + 2 + groups.size() * (3 * cell + 2), '-') << '\n';
  out << std::fixed << std::setprecision(precision);
  for (const auto& m : methods_) {
    out << std::left << std::setw(static_cast<int>(method_width)) << m << " |" << std::right;
    double sum[3] = {0, 0, 0};
    int present = 0;
    for (const auto& s : scenarios_) {
      if (const auto* r = find(m, s)) {
        out << std::setw(cell) << r->full << std::setw(cell) << r->arm << std::setw(cell) << r->leg << " |";
        sum[0] += r->full;
        sum[1] += r->arm;
        sum[2] += r->leg;
        ++present;
      } else {
        out << std::setw(cell) << "-" << std::setw(cell) << "-" << std::setw(cell) << "-" << " |";
      }
    }
    if (present > 0) {
      for (double v : sum) out << std::setw(cell) << v / present;
    } else {
      out << std::setw(cell) << "-" << std::setw(cell) << "-" << std::setw(cell) << "-";
    }
    out << " |\n";
  }
  return out.str();
}

nlohmann::ordered_json AngleUpdateTable::to_json() const {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& c : cells_) {
    nlohmann::ordered_json r;
    r["method"] = c.method;
    r["scenario"] = c.scenario;
    r["full"] = c.report.full;
    r["arm"] = c.report.arm;
    r["leg"] = c.report.leg;
    r["frames"] = c.report.frames;
    r["fps"] = c.report.fps;
    rows.push_back(r);
  }
  return {{"metric", "angle-update-deg-per-s"}, {"scenarios", scenarios_}, {"methods", methods_}, {"rows", rows}};
}

}  // namespace mcst
