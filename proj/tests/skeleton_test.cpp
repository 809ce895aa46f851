#include "mcst/skeleton.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

using namespace mcst;

namespace {

PoseFrame numbered_frame(int joints, double base, RootTransform root) {
  PoseFrame f = make_frame(joints);
  for (int j = 0; j < joints; ++j) {
    f.positions.row(j) << base + j, 0.5 * j, -base;
    f.velocities.row(j) << 0.1 * j, base, 0.0;
  }
  f.root = root;
  return f;
}

}  // namespace

TEST(Skeleton, DefaultHas31JointsAndValidates) {
  const SkeletonSpec s = default_skeleton();
  EXPECT_EQ(s.joint_count, 31);
  EXPECT_EQ(static_cast<int>(s.parents.size()), 31);
  EXPECT_EQ(s.parents[0], -1);
  EXPECT_NO_THROW(s.validate());
  for (const char* name : {"full", "arm", "leg"}) EXPECT_FALSE(s.subset(name).empty());
  EXPECT_EQ(static_cast<int>(s.subset("full").size()), 31);
}

TEST(Skeleton, RejectsCycleAndBadSubset) {
  SkeletonSpec s = default_skeleton();
  s.parents[3] = 5;  // 5 descends from 3
  EXPECT_THROW(s.validate(), ConfigError);
  s = default_skeleton();
  s.subsets["arm"].push_back(31);
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Skeleton, HashTracksTopology) {
  const SkeletonSpec a = default_skeleton();
  SkeletonSpec b = a;
  EXPECT_EQ(a.hash(), b.hash());
  b.parents[30] = 28;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Skeleton, JsonRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "mcst_skeleton_test";
  std::filesystem::create_directories(dir);
  save_skeleton(default_skeleton(), dir / "s.json");
  const SkeletonSpec s = load_skeleton(dir / "s.json");
  EXPECT_EQ(s.hash(), default_skeleton().hash());
  EXPECT_EQ(s.names, default_skeleton().names);
  save_pooling_map(default_middle_map(), dir / "m.json");
  EXPECT_EQ(load_pooling_map(dir / "m.json").groups, default_middle_map().groups);
}

TEST(PoolingMaps, PartitionTheJoints) {
  for (const PoolingMap& map : {default_coarse_map(), default_middle_map()}) {
    EXPECT_NO_THROW(map.validate(31));
    std::set<int> seen;
    for (const auto& g : map.groups)
      for (int j : g) EXPECT_TRUE(seen.insert(j).second) << map.name << " repeats " << j;
    EXPECT_EQ(seen.size(), 31u);
  }
  EXPECT_EQ(default_coarse_map().group_count(), 6);
  EXPECT_EQ(default_middle_map().group_count(), 11);
  PoolingMap bad = default_coarse_map();
  bad.groups.back().pop_back();
  EXPECT_THROW(bad.validate(31), ConfigError);
}

TEST(PoolingMaps, CoarseFeaturesAreGroupMeans) {
  const PoseFrame f = numbered_frame(31, 2.0, {});
  const PoolingMap map = default_coarse_map();
  const PooledPose p = pool_coarse(f, map);
  for (int g = 0; g < map.group_count(); ++g) {
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (int j : map.groups[g]) mean += f.positions.row(j);
    mean /= static_cast<double>(map.groups[g].size());
    EXPECT_TRUE(p.positions.row(g).isApprox(mean, 1e-14));
  }
}

TEST(RootTransform, WrapAngle) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(-std::numbers::pi), std::numbers::pi, 1e-15);
  EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-15);
  EXPECT_NEAR(wrap_angle(7.0), 7.0 - 2 * std::numbers::pi, 1e-15);
}

TEST(RootTransform, FacingConvention) {
  EXPECT_TRUE(facing({0, 0, 0}).isApprox(Eigen::Vector2d(0, 1)));
  EXPECT_TRUE(facing({0, 0, std::numbers::pi / 2}).isApprox(Eigen::Vector2d(1, 0)));
  // forward one meter from a root facing +x lands at x + 1
  const Eigen::Vector3d w = local_to_world({2.0, 3.0, std::numbers::pi / 2}, Eigen::Vector3d(0, 0.5, 1));
  EXPECT_TRUE(w.isApprox(Eigen::Vector3d(3.0, 0.5, 3.0), 1e-14));
}

TEST(RootTransform, LocalWorldRoundTrip) {
  const RootTransform r{1.5, -2.0, 0.7};
  const Eigen::Vector3d p(0.3, 1.2, -0.4);
  EXPECT_TRUE(world_to_local(r, local_to_world(r, p)).isApprox(p, 1e-14));
  const Eigen::Vector2d d(0.6, 0.8);
  EXPECT_TRUE(direction_to_local(r, direction_to_world(r, d)).isApprox(d, 1e-14));
}

TEST(RootTransform, RelativeAndAdvanceAreInverse) {
  const RootTransform a{1.0, 2.0, 0.3}, b{1.4, 2.9, -0.2};
  const RootTransform d = relative_root(a, b);
  const RootTransform c = advance_root(a, d);
  EXPECT_NEAR(c.x, b.x, 1e-14);
  EXPECT_NEAR(c.z, b.z, 1e-14);
  EXPECT_NEAR(wrap_angle(c.angle - b.angle), 0.0, 1e-14);
  // the delta's translation is the world displacement seen from a
  const Eigen::Vector2d local = plane_to_local(a, {b.x, b.z});
  EXPECT_NEAR(d.x, local.x(), 1e-14);
  EXPECT_NEAR(d.z, local.y(), 1e-14);
}

TEST(Quaternion, AngleBetweenRotations) {
  const Eigen::Quaterniond a(Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitY()));
  const Eigen::Quaterniond b(Eigen::AngleAxisd(1.1, Eigen::Vector3d::UnitY()));
  EXPECT_NEAR(quat_angle(a, b), 0.8, 1e-12);
  EXPECT_NEAR(quat_angle(a, Eigen::Quaterniond(-b.coeffs())), 0.8, 1e-12);
  EXPECT_NEAR(quat_angle(a, a), 0.0, 1e-7);
  EXPECT_THROW(quat_angle(a, Eigen::Quaterniond(0, 0, 0, 0)), ContractError);
}

TEST(BuildInput, ReadsOffsetsFromHistoryInCurrentFrame) {
  std::vector<PoseFrame> history;
  for (int i = 0; i < 41; ++i) history.push_back(numbered_frame(31, i, {0.1 * i, 0.0, 0.0}));
  const RootTransform current{4.1, 0.0, 0.0};
  const std::vector<int> offsets = {1, 10, 20, 30, 40};
  const std::vector<PoolingMap> maps = {default_coarse_map()};
  const MultiScaleInput x = build_input(history, current, offsets, maps);
  ASSERT_EQ(x.scales.size(), 2u);
  EXPECT_EQ(x.scales[0].rows(), 5);
  EXPECT_EQ(x.scales[0].cols(), 186);
  EXPECT_EQ(x.scales[1].cols(), 36);
  // offset 10 reads history[31]; a pure translation shifts x by root.x - current.x
  const PoseFrame& f = history[31];
  EXPECT_NEAR(x.scales[0](1, 0), f.positions(0, 0) + f.root.x - current.x, 1e-12);
  EXPECT_NEAR(x.scales[0](1, 1), f.positions(0, 1), 1e-12);
  EXPECT_NEAR(x.scales[0](1, 93 + 1), f.velocities(0, 1), 1e-12);
}

TEST(BuildInput, RotatesIntoCurrentRoot) {
  std::vector<PoseFrame> history(41, numbered_frame(31, 1.0, {0.0, 0.0, 0.0}));
  const RootTransform current{0.0, 0.0, std::numbers::pi / 2};
  const std::vector<int> offsets = {1};
  const MultiScaleInput x = build_input(history, current, offsets, {});
  const Eigen::Vector3d world = local_to_world(history.back().root, Eigen::Vector3d(history.back().positions.row(5)));
  const Eigen::Vector3d expect = world_to_local(current, world);
  EXPECT_NEAR(x.scales[0](0, 15), expect.x(), 1e-12);
  EXPECT_NEAR(x.scales[0](0, 17), expect.z(), 1e-12);
}

TEST(BuildInput, UnderflowNamesTheOffset) {
  std::vector<PoseFrame> history(20, numbered_frame(31, 0.0, {}));
  const std::vector<int> offsets = {1, 10, 20, 30, 40};
  try {
    build_input(history, {}, offsets, {});
    FAIL() << "expected UnderflowError";
  } catch (const UnderflowError& e) {
    EXPECT_NE(std::string(e.what()).find("30"), std::string::npos) << e.what();
  }
}
