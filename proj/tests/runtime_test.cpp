#include "mcst/runtime.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace mcst;
using mcst::testing::tiny_checkpoint;
using mcst::testing::tiny_controller;
using mcst::testing::walking_clips;

namespace {

std::shared_ptr<const Terrain> terrain(const std::string& name = "flat") {
  return std::make_shared<const Terrain>(Terrain::builtin(name));
}

ControlInput walk(Eigen::Vector2d dir = {0.0, 1.0}, double speed = 1.2) {
  return {dir, speed, Gait::Walking, 0.0};
}

bool same_frame(const PoseFrame& a, const PoseFrame& b) {
  return a.positions == b.positions && a.velocities == b.velocities && a.rotations == b.rotations &&
         a.contact == b.contact && a.root.x == b.root.x && a.root.z == b.root.z && a.root.angle == b.root.angle &&
         a.gait == b.gait;
}

}  // namespace

TEST(Session, CapacityCoversOffsetsAndPastTrajectory) {
  Session s(tiny_controller(), terrain());
  EXPECT_EQ(s.capacity(), 61u);
  EXPECT_FALSE(s.warmed());
  EXPECT_THROW(s.step(walk()), ContractError);
}

TEST(Session, RestWarmStartTilesTheRestPose) {
  Session s(tiny_controller(), terrain());
  s.warm_start(RootTransform{1.0, 2.0, 7.0});
  ASSERT_EQ(s.history().size(), 61u);
  for (const auto& f : s.history()) EXPECT_TRUE(same_frame(f, s.history().front()));
  EXPECT_NEAR(s.root().angle, 7.0 - 2 * std::numbers::pi, 1e-14);
  EXPECT_EQ(s.frame_index(), 0);
}

TEST(Session, ClipWarmStartLoadsTheTail) {
  const auto clip = walking_clips(120)[0];
  Session s(tiny_controller(), terrain());
  s.warm_start(clip);
  ASSERT_EQ(s.history().size(), 61u);
  for (std::size_t i = 0; i < 61; ++i) EXPECT_TRUE(same_frame(s.history()[i], clip.frames[120 - 61 + i]));
  // constant-velocity extrapolation of the last step
  const RootTransform& a = clip.frames[118].root;
  const RootTransform& b = clip.frames[119].root;
  const double turn = wrap_angle(b.angle - a.angle);
  EXPECT_NEAR(wrap_angle(s.root().angle - b.angle - turn), 0.0, 1e-12);
  EXPECT_NEAR(std::hypot(s.root().x - b.x, s.root().z - b.z), std::hypot(b.x - a.x, b.z - a.z), 1e-12);

  MotionClip shorter = clip;
  shorter.frames.resize(50);
  Session t(tiny_controller(), terrain());
  t.warm_start(shorter);
  for (std::size_t i = 0; i < 11; ++i) EXPECT_TRUE(same_frame(t.history()[i], shorter.frames[0]));
  shorter.frames.resize(40);
  EXPECT_THROW(t.warm_start(shorter), ContractError);
}

TEST(Session, UserTrajectoryFollowsTheStick) {
  Session s(tiny_controller(), terrain());
  s.warm_start(RootTransform{0.0, 0.0, std::numbers::pi / 2});  // facing +x
  const auto ahead = s.user_trajectory(walk({1.0, 0.0}, 1.5));
  ASSERT_EQ(ahead.size(), 6u);
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(ahead[i].position.x(), 0.0, 1e-12);
    EXPECT_NEAR(ahead[i].position.y(), 1.5 * i / 6.0, 1e-12);
    EXPECT_NEAR((ahead[i].direction - Eigen::Vector2d(0, 1)).norm(), 0.0, 1e-12);
    EXPECT_EQ(ahead[i].gait, Gait::Walking);
  }
  // stick to world -z is the character's left; the turn is rate limited
  const auto turn = s.user_trajectory(walk({0.0, -1.0}, 1.0));
  const double reach = 3.0 * (10.0 / 60.0);
  EXPECT_NEAR(std::atan2(turn[1].direction.x(), turn[1].direction.y()), reach, 1e-12);
  EXPECT_NEAR(std::atan2(turn[5].direction.x(), turn[5].direction.y()), std::numbers::pi / 2, 1e-12);
  const auto stand = s.user_trajectory(ControlInput{});
  for (const auto& p : stand) EXPECT_EQ(p.position, Eigen::Vector2d::Zero());
}

TEST(Session, CeilingForcesCrouching) {
  Session s(tiny_controller(), terrain("ceiling"));
  s.warm_start();
  for (const auto& p : s.user_trajectory(walk())) EXPECT_EQ(p.gait, Gait::Crouching);
  EXPECT_EQ(s.step(walk()).frame.gait, Gait::Crouching);
}

TEST(Session, CurrentPointIsAlwaysTheUserPoint) {
  Session s(tiny_controller(), terrain());
  s.warm_start();
  for (int i = 0; i < 5; ++i) {
    const ControlInput c = walk(Eigen::Vector2d(std::sin(i), std::cos(i)));
    const auto user = s.user_trajectory(c);
    const StepResult r = s.step(c);
    ASSERT_EQ(r.trajectory.size(), 6u);
    EXPECT_EQ(r.trajectory[0].position, user[0].position);
    EXPECT_EQ(r.trajectory[0].direction, user[0].direction);
    EXPECT_EQ(r.predicted.size(), 6u);
    if (i == 0) {
      for (int k = 0; k < 6; ++k) EXPECT_EQ(r.trajectory[k].position, user[k].position);
    }
  }
  EXPECT_EQ(s.frame_index(), 5);
}

TEST(Session, StepAdvancesHistoryAndRoot) {
  Session s(tiny_controller(), terrain());
  s.warm_start();
  const RootTransform before = s.root();
  const StepResult r = s.step(walk());
  EXPECT_TRUE(same_frame(s.history().back(), r.frame));
  EXPECT_EQ(r.frame.root.x, before.x);
  EXPECT_EQ(s.root().x, r.next_root.x);
  EXPECT_EQ(s.history().size(), 61u);
  EXPECT_FALSE(r.attention.has_value());
  const StepResult a = s.step(walk(), true);
  ASSERT_TRUE(a.attention.has_value());
  EXPECT_EQ(a.attention->tokens.size(), 10u);
}

TEST(Session, NonFiniteOutputFaultsAndRecovers) {
  const auto good = tiny_controller();
  Checkpoint broken = tiny_checkpoint();
  // finite weights whose output overflows
  broken.params.tensors[broken.params.tensors.size() - 2].setConstant(std::numeric_limits<double>::max());
  const auto bad = Controller::from_checkpoint(broken, default_skeleton());

  SessionConfig cfg;
  cfg.recovery_steps = 3;
  Session s(good, terrain(), cfg);
  s.warm_start();
  s.step(walk());
  const PoseFrame last = s.history().back();
  s.replace_controller(bad);
  const StepResult r = s.step(walk());
  EXPECT_TRUE(r.fault);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("non-finite"), std::string::npos);
  EXPECT_EQ(r.frame.positions, last.positions);
  for (const auto& f : s.history()) EXPECT_EQ(f.positions, last.positions);
  EXPECT_TRUE(s.faulted());

  s.replace_controller(good);
  EXPECT_TRUE(s.step(walk()).fault);
  EXPECT_TRUE(s.step(walk()).fault);
  EXPECT_FALSE(s.step(walk()).fault);
  EXPECT_FALSE(s.faulted());
}

TEST(Session, RejectsMismatchedSetup) {
  Checkpoint other = tiny_checkpoint(3, [] {
    ModelConfig m = ModelConfig::tiny();
    m.coarse_scales = scale_preset("single");
    return m;
  }());
  Session s(tiny_controller(), terrain());
  EXPECT_THROW(s.replace_controller(Controller::from_checkpoint(other, default_skeleton())), ContractError);
  SkeletonSpec sk = default_skeleton();
  sk.parents[30] = 28;
  Checkpoint c = tiny_checkpoint();
  EXPECT_THROW(Controller::from_checkpoint(c, sk), ConfigError);
  s.warm_start();
  EXPECT_THROW(s.step(walk({0.3, 0.3})), ContractError);
  EXPECT_THROW(s.step(walk({0.0, 1.0}, -1.0)), ContractError);
}

TEST(ControlScript, ParseFormatRoundTrip) {
  const std::string text =
      "mcst-control 1\n"
      "# comment\n"
      "ticks 300\n"
      "0 0 1 1.2 walking\n"
      "120 1 0 2.5 jogging  # turn right\n"
      "240 0 0 0 standing\n";
  const ControlScript s = parse_control_script(text);
  EXPECT_EQ(s.ticks, 300);
  ASSERT_EQ(s.entries.size(), 3u);
  EXPECT_EQ(s.entries[1].first, 120);
  EXPECT_EQ(s.entries[1].second.gait, Gait::Jogging);
  EXPECT_EQ(s.at(119).speed, 1.2);
  EXPECT_EQ(s.at(120).speed, 2.5);
  EXPECT_EQ(s.at(1000).gait, Gait::Standing);
  const ControlScript back = parse_control_script(format_control_script(s));
  EXPECT_EQ(back.ticks, s.ticks);
  EXPECT_EQ(back.entries, s.entries);
  EXPECT_EQ(format_control_script(back), format_control_script(s));

  ControlScript later;
  later.ticks = 5;
  later.entries.push_back({3, walk()});
  EXPECT_EQ(later.at(1), ControlInput{});
}

TEST(ControlScript, ParseErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    try {
      parse_control_script(text);
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("mcst-control 2\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("mcst-control 1\nticks 5\n0 0 1 1 flying\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("mcst-control 1\nticks 5\n0 0 1\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("mcst-control 1\n0 0 1 1 walking\n").find("ticks"), std::string::npos);
  EXPECT_NE(message("mcst-control 1\nticks 5\n3 0 1 1 walking\n2 0 1 1 walking\n").find("increasing"),
            std::string::npos);
  EXPECT_NE(message("mcst-control 1\nticks 5\n0 0 2 1 walking\n").find("unit"), std::string::npos);
}

TEST(Rollout, DeterministicWithAnnotations) {
  const auto ctl = tiny_controller();
  ControlScript script = ControlScript::constant(walk(), 30);
  script.entries.push_back({15, walk({1.0, 0.0})});
  RolloutOptions o;
  o.scenario = "flat";
  const Rollout a = run_script(ctl, terrain(), script, o);
  const Rollout b = run_script(ctl, terrain(), script, o);
  ASSERT_EQ(a.clip.frames.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_TRUE(same_frame(a.clip.frames[i], b.clip.frames[i]));
  EXPECT_EQ(a.clip.annotations, b.clip.annotations);
  EXPECT_EQ(a.clip.kind, "rollout");
  EXPECT_EQ(a.clip.annotation_names.size(), 5u);
  EXPECT_EQ(a.clip.annotations.size(), 30u);
  EXPECT_EQ(a.metrics.frames, 30);
  EXPECT_EQ(a.clip.producer["scenario"], "flat");
  EXPECT_EQ(parse_control_script(a.clip.producer["script"].get<std::string>()).entries, script.entries);
}
