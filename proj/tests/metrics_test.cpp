#include "mcst/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace mcst;

namespace {

Eigen::RowVector4d yaw_quat(double angle) {
  return {std::cos(angle / 2), 0.0, std::sin(angle / 2), 0.0};  // w, x, y, z
}

std::vector<Quats> spinning(int frames, int joints, double step) {
  std::vector<Quats> out;
  for (int f = 0; f < frames; ++f) {
    Quats q(joints, 4);
    for (int j = 0; j < joints; ++j) q.row(j) = yaw_quat(step * f);
    out.push_back(q);
  }
  return out;
}

}  // namespace

TEST(AngleUpdate, QuarterTurnPerFrameAtSixtyFps) {
  const auto frames = spinning(10, 3, std::numbers::pi / 2);
  const std::vector<int> all = {0, 1, 2};
  EXPECT_NEAR(angle_update(frames, all, 60.0), 90.0 * 60.0, 1e-9);
}

TEST(AngleUpdate, SignFlipIsTheSameRotation) {
  auto frames = spinning(4, 2, 0.1);
  frames[2] = -frames[2];
  const std::vector<int> all = {0, 1};
  EXPECT_NEAR(angle_update(frames, all, 30.0), 0.1 * 180.0 / std::numbers::pi * 30.0, 1e-9);
}

TEST(AngleUpdate, SubsetSelectsJoints) {
  std::vector<Quats> frames(2, Quats(2, 4));
  frames[0].row(0) = yaw_quat(0.0);
  frames[1].row(0) = yaw_quat(0.2);
  frames[0].row(1) = yaw_quat(0.0);
  frames[1].row(1) = yaw_quat(0.0);
  const double deg = 0.2 * 180.0 / std::numbers::pi;
  const std::vector<int> first = {0}, second = {1}, both = {0, 1};
  EXPECT_NEAR(angle_update(frames, first, 60.0), deg * 60.0, 1e-9);
  EXPECT_NEAR(angle_update(frames, second, 60.0), 0.0, 1e-4);
  EXPECT_NEAR(angle_update(frames, both, 60.0), deg * 30.0, 1e-4);
  EXPECT_THROW(angle_update(std::span(frames).first(1), first, 60.0), ContractError);
}

TEST(AngleUpdate, ReportUsesSkeletonSubsets) {
  const SkeletonSpec s = default_skeleton();
  std::vector<PoseFrame> frames;
  for (int f = 0; f < 5; ++f) {
    PoseFrame p = make_frame(31);
    for (int j = 0; j < 31; ++j) p.rotations.row(j) = yaw_quat(0.0);
    for (int j : s.subset("arm")) p.rotations.row(j) = yaw_quat(0.05 * f);
    frames.push_back(p);
  }
  const AngleUpdateReport r = angle_update_report(frames, s, 60.0);
  const double arm = 0.05 * 180.0 / std::numbers::pi * 60.0;
  EXPECT_NEAR(r.arm, arm, 1e-6);
  EXPECT_NEAR(r.leg, 0.0, 1e-3);
  EXPECT_NEAR(r.full, arm * double(s.subset("arm").size()) / 31.0, 1e-3);
  EXPECT_EQ(r.frames, 5);
}

TEST(PerSecond, DropsThePartialWindow) {
  std::vector<double> series;
  for (int i = 0; i < 7; ++i) series.push_back(i);
  const auto m = per_second_means(series, 3);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_DOUBLE_EQ(m[0], 1.0);
  EXPECT_DOUBLE_EQ(m[1], 4.0);
}

TEST(TTest, KnownPairedSample) {
  // d = {-1, -2, -3}: mean -2, sd 1, t = -2 sqrt(3); for df 2, p = 1 - |t| / sqrt(t^2 + 2)
  const std::vector<double> a = {1.0, 2.0, 3.0}, b = {2.0, 4.0, 6.0};
  const TTestReport r = paired_t_test(a, b);
  EXPECT_NEAR(r.t, -2.0 * std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(r.t, -3.4641, 1e-4);
  EXPECT_EQ(r.df, 2);
  EXPECT_NEAR(r.mean_difference, -2.0, 1e-15);
  EXPECT_NEAR(r.p, 1.0 - std::abs(r.t) / std::sqrt(r.t * r.t + 2.0), 1e-12);
  EXPECT_NEAR(r.p, 0.0742, 1e-4);
}

TEST(TTest, DegenerateAndContractCases) {
  const std::vector<double> a = {1.0, 2.0, 3.0}, shifted = {0.0, 1.0, 2.0};
  EXPECT_THROW(paired_t_test(a, shifted), DegenerateInputError);
  const TTestReport same = paired_t_test(a, a);
  EXPECT_EQ(same.t, 0.0);
  EXPECT_EQ(same.p, 1.0);
  EXPECT_THROW(paired_t_test(a, std::vector<double>{1.0, 2.0}), ContractError);
  EXPECT_THROW(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}), ContractError);
}

TEST(TTest, StudentTailMatchesBoost) {
  for (double df : {1.0, 2.0, 5.0, 29.0, 200.0}) {
    const boost::math::students_t dist(df);
    for (double t : {0.0, 0.3, 1.0, 2.5, 6.0, -4.0}) {
      const double expect = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
      EXPECT_NEAR(student_t_two_tailed(t, df), expect, 1e-10 * std::max(1.0, expect)) << df << " " << t;
    }
  }
}

TEST(TTest, IncompleteBetaMatchesBoost) {
  for (double a : {0.5, 1.0, 3.0, 12.5})
    for (double b : {0.5, 2.0, 7.0})
      for (double x : {0.0, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0})
        EXPECT_NEAR(incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-12) << a << " " << b << " " << x;
}

TEST(Table, LayoutAndAverages) {
  AngleUpdateTable t;
  t.add("mcs-t", "flat", {100.0, 200.0, 300.0, 60, 60.0});
  t.add("mcs-t", "rocky", {200.0, 100.0, 0.0, 60, 60.0});
  t.add("data", "flat", {50.25, 60.0, 70.0, 60, 60.0});
  const std::string text = t.to_text(1);
  std::istringstream lines(text);
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_NE(rows[0].find("Flat"), std::string::npos);
  EXPECT_NE(rows[0].find("Rocky"), std::string::npos);
  EXPECT_NE(rows[0].find("Average"), std::string::npos);
  EXPECT_EQ(rows[1].rfind("Method", 0), 0u);
  EXPECT_EQ(rows[2].find_first_not_of('-'), std::string::npos);
  for (const auto& r : rows) EXPECT_EQ(r.size(), rows[0].size()) << r;
  EXPECT_NE(rows[3].find("150.0   150.0   150.0"), std::string::npos) << rows[3];
  EXPECT_NE(rows[4].find("-       -       -"), std::string::npos) << rows[4];
  EXPECT_NE(rows[4].find("50.2"), std::string::npos) << rows[4];
  const auto j = t.to_json();
  EXPECT_EQ(j["rows"].size(), 3u);
  EXPECT_EQ(j["methods"][1], "data");
  ASSERT_NE(t.find("data", "flat"), nullptr);
  EXPECT_EQ(t.find("data", "rocky"), nullptr);
}
