#include "mcst/runtime.hpp"

#include "mcst/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mcst {

std::shared_ptr<const Controller> Controller::from_checkpoint(const Checkpoint& checkpoint, SkeletonSpec skeleton) {
  skeleton.validate();
  const auto& config = checkpoint.params.config;
  if (config.joint_count != skeleton.joint_count)
    throw ConfigError("checkpoint expects " + std::to_string(config.joint_count) + " joints, skeleton has " +
                      std::to_string(skeleton.joint_count));
  if (checkpoint.skeleton_hash != 0 && checkpoint.skeleton_hash != skeleton.hash())
    throw ConfigError("checkpoint was trained on a different skeleton (hash " +
                      std::to_string(checkpoint.skeleton_hash) + ", loaded " + std::to_string(skeleton.hash()) + ")");
  checkpoint.params.validate();
  auto c = std::make_shared<Controller>();
  c->params = checkpoint.params;
  c->stats = checkpoint.stats;
  c->skeleton = std::move(skeleton);
  return c;
}

void ControlInput::validate() const {
  require(std::isfinite(speed) && speed >= 0.0, "control: speed must be finite and >= 0");
  const double n = direction.norm();
  require(std::isfinite(n) && (n == 0.0 || std::abs(n - 1.0) < 1e-6), "control: direction must be unit length or zero");
}

double default_speed(Gait gait) { return gait_profile(gait).speed; }

void ControlScript::validate() const {
  require(ticks >= 0, "control script: negative tick count");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    require(entries[i].first >= 0, "control script: negative tick");
    if (i > 0)
      require(entries[i].first > entries[i - 1].first, "control script: ticks must be strictly increasing (tick " +
                                                           std::to_string(entries[i].first) + ")");
    entries[i].second.validate();
  }
}

ControlInput ControlScript::at(int tick) const {
  ControlInput current;
  for (const auto& [t, c] : entries) {
    if (t > tick) break;
    current = c;
  }
  return current;
}

ControlScript ControlScript::constant(const ControlInput& control, int ticks) {
  ControlScript s;
  s.ticks = ticks;
  s.entries.push_back({0, control});
  return s;
}

ControlScript parse_control_script(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header = false;
  ControlScript script;
  script.ticks = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    auto fail = [&](const std::string& why) {
      throw FormatError("control script line " + std::to_string(line_no) + ": " + why);
    };
    if (!header) {
      int version = 0;
      if (first != "mcst-control" || !(ls >> version)) fail("expected 'mcst-control 1'");
      if (version != 1) fail("unsupported version " + std::to_string(version));
      header = true;
      continue;
    }
    if (first == "ticks") {
      if (!(ls >> script.ticks) || script.ticks < 0) fail("bad tick count");
      continue;
    }
    ControlInput c;
    std::string gait;
    int tick = 0;
    try {
      tick = std::stoi(first);
    } catch (const std::exception&) {
      fail("expected a tick number, got '" + first + "'");
    }
    if (!(ls >> c.direction.x() >> c.direction.y() >> c.speed >> gait)) fail("expected 'tick dir_x dir_z speed gait'");
    try {
      c.gait = parse_gait(gait);
    } catch (const ConfigError& e) {
      fail(e.what());
    }
    c.time = 0.0;
    script.entries.push_back({tick, c});
  }
  if (!header) throw FormatError("control script: missing 'mcst-control 1' header");
  if (script.ticks < 0) throw FormatError("control script: missing 'ticks' line");
  try {
    script.validate();
  } catch (const ContractError& e) {
    throw FormatError(e.what());
  }
  return script;
}

std::string format_control_script(const ControlScript& script) {
  std::ostringstream out;
  out.precision(17);
  out << "mcst-control 1\nticks " << script.ticks << "\n# tick dir_x dir_z speed gait\n";
  for (const auto& [tick, c] : script.entries)
    out << tick << ' ' << c.direction.x() << ' ' << c.direction.y() << ' ' << c.speed << ' ' << gait_name(c.gait)
        << '\n';
  return out.str();
}

ControlScript load_control_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open control script " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_control_script(ss.str());
}

void save_control_script(const ControlScript& script, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << format_control_script(script);
}

Session::Session(std::shared_ptr<const Controller> controller, std::shared_ptr<const Terrain> terrain,
                 SessionConfig config)
    : controller_(std::move(controller)), terrain_(std::move(terrain)), config_(config) {
  require(controller_ != nullptr && terrain_ != nullptr, "Session: controller and terrain are required");
  config_.blend.validate();
  const auto& mc = controller_->params.config;
  require(config_.blend.half == mc.trajectory.half, "Session: blend schedule half does not match the model");
  capacity_ = static_cast<std::size_t>(std::max(mc.max_offset(), mc.trajectory.past_span()) + 1);
}

void Session::rewarm(const PoseFrame& frame) {
  history_.assign(capacity_, frame);
  predicted_.reset();
}

void Session::warm_start(const RootTransform& root) {
  RootTransform r = root;
  r.angle = wrap_angle(r.angle);
  rewarm(rest_pose(controller_->skeleton, *terrain_, r));
  root_ = r;
  frame_index_ = 0;
  fault_ = false;
  clean_steps_ = 0;
}

void Session::warm_start(const MotionClip& clip) {
  const auto& mc = controller_->params.config;
  const std::size_t needed = static_cast<std::size_t>(mc.max_offset() + 1);
  require(clip.frames.size() >= needed, "warm_start: clip has " + std::to_string(clip.frames.size()) +
                                            " frames, needs at least " + std::to_string(needed));
  require(clip.frames.front().joint_count() == mc.joint_count, "warm_start: clip joint count does not match the model");
  history_.clear();
  const std::size_t take = std::min(capacity_, clip.frames.size());
  for (std::size_t i = take; i < capacity_; ++i) history_.push_back(clip.frames[clip.frames.size() - take]);
  for (std::size_t i = clip.frames.size() - take; i < clip.frames.size(); ++i) history_.push_back(clip.frames[i]);
  const auto& last = clip.frames.back();
  const auto& prev = clip.frames[clip.frames.size() - 2];
  root_ = advance_root(last.root, relative_root(prev.root, last.root));
  root_.angle = wrap_angle(root_.angle);
  predicted_.reset();
  frame_index_ = 0;
  fault_ = false;
  clean_steps_ = 0;
}

void Session::replace_controller(std::shared_ptr<const Controller> controller) {
  require(controller != nullptr, "replace_controller: null controller");
  require(controller->params.config.to_json() == controller_->params.config.to_json(),
          "replace_controller: model config differs");
  controller_ = std::move(controller);
}

void Session::push(PoseFrame frame) {
  history_.erase(history_.begin());
  history_.push_back(std::move(frame));
}

std::vector<TrajectoryPoint> Session::user_trajectory(const ControlInput& control) const {
  const auto& tc = controller_->params.config.trajectory;
  const double dt = static_cast<double>(tc.step) / tc.fps;
  double target = 0.0;
  if (control.direction.norm() > 0.0) {
    const Eigen::Vector2d d = direction_to_local(root_, control.direction.normalized());
    target = std::atan2(d.x(), d.y());
  }
  const Gait gait = terrain_->low_ceiling() ? Gait::Crouching : control.gait;
  std::vector<TrajectoryPoint> points(static_cast<std::size_t>(tc.half));
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  Eigen::Vector2d previous(0.0, 1.0);
  for (int s = 0; s < tc.half; ++s) {
    const double reach = config_.turn_rate * dt * s;
    const double angle = std::abs(target) <= reach ? target : std::copysign(reach, target);
    const Eigen::Vector2d dir = s == 0 ? Eigen::Vector2d(0.0, 1.0) : Eigen::Vector2d(std::sin(angle), std::cos(angle));
    if (s > 0) position += control.speed * dt * 0.5 * (previous + dir);
    auto& p = points[static_cast<std::size_t>(s)];
    p.position = position;
    p.direction = dir;
    p.heights = probe_heights(root_, p.position, p.direction, *terrain_, tc.lateral_offset);
    p.gait = gait;
    previous = dir;
  }
  return points;
}

StepResult Session::step(const ControlInput& control, bool with_attention) {
  require(warmed(), "step: session is not warmed up");
  control.validate();
  const Controller& ctl = *controller_;
  const auto& mc = ctl.params.config;
  const auto& tc = mc.trajectory;

  StepResult result;
  const auto user = user_trajectory(control);
  result.trajectory = predicted_ ? blend_trajectory(user, *predicted_, config_.blend) : user;
  require(result.trajectory[0].position == user[0].position && result.trajectory[0].direction == user[0].direction,
          "step: blended trajectory moved the current point");

  Trajectory traj;
  traj.points.reserve(static_cast<std::size_t>(tc.point_count()));
  for (int s = -tc.half; s < 0; ++s) {
    const auto& f = history_[history_.size() - static_cast<std::size_t>(-s * tc.step)];
    TrajectoryPoint p;
    p.position = plane_to_local(root_, {f.root.x, f.root.z});
    p.direction = direction_to_local(root_, facing(f.root));
    p.heights = probe_heights(root_, p.position, p.direction, *terrain_, tc.lateral_offset);
    p.gait = f.gait;
    traj.points.push_back(p);
  }
  traj.points.insert(traj.points.end(), result.trajectory.begin(), result.trajectory.end());

  const MultiScaleInput x = build_input(history_, root_, mc.past_offsets, mc.coarse_scales);
  Tensor2d row(1, ctl.stats.input_width());
  row.row(0) = ctl.stats.normalize_input(flatten_input(x, traj.flatten()));
  const ModelInput<double> batch = make_batch(row, mc);

  Tensor2d output;
  if (with_attention) {
    ad::Tape<double> tape(ad::Mode::Infer, 0, false);
    tape.set_capture_attention(true);
    const auto vars = bind_params(tape, ctl.params);
    output = tape.value(forward(tape, ctl.params, vars, batch).output);
    result.attention = collect_decoder_attention(mc, tape.attention(), 0);
  } else {
    output = predict(ctl.params, batch);
  }

  if (!output.allFinite()) {
    PoseFrame frame = history_.back();
    frame.root = root_;
    result.frame = frame;
    result.next_root = root_;
    result.fault = true;
    result.warnings.push_back("frame " + std::to_string(frame_index_) +
                              ": non-finite model output, replaying the last valid frame and re-warming");
    rewarm(frame);
    fault_ = true;
    clean_steps_ = 0;
    ++frame_index_;
    return result;
  }

  const PredictedState pred = decode_output(output.row(0), ctl.stats, mc);
  PoseFrame frame = make_frame(mc.joint_count);
  frame.positions = pred.positions;
  frame.velocities = pred.velocities;
  frame.rotations = pred.rotations;
  frame.contact = pred.contacts();
  frame.root = root_;
  frame.gait = user[0].gait;

  RootTransform next = advance_root(root_, pred.root_delta);
  next.angle = wrap_angle(next.angle);
  const double moved = std::hypot(next.x - root_.x, next.z - root_.z);
  const double limit = config_.max_speed / tc.fps * 4.0;
  if (moved > limit)
    result.warnings.push_back("frame " + std::to_string(frame_index_) + ": root moved " + std::to_string(moved) +
                              " m in one step (limit " + std::to_string(limit) + " m)");

  result.frame = frame;
  result.next_root = next;
  result.predicted = pred.future;
  push(std::move(frame));
  root_ = next;
  predicted_ = pred.future;
  if (fault_ && ++clean_steps_ >= config_.recovery_steps) fault_ = false;
  result.fault = fault_;
  ++frame_index_;
  return result;
}

const std::vector<std::string>& rollout_annotation_names() {
  static const std::vector<std::string> names = {"angle_full", "angle_arm", "angle_leg", "root_step", "fault"};
  return names;
}

Rollout run_script(std::shared_ptr<const Controller> controller, std::shared_ptr<const Terrain> terrain,
                   const ControlScript& script, const RolloutOptions& options) {
  script.validate();
  require(script.ticks > 0, "run_script: script has no ticks");
  const SkeletonSpec skeleton = controller->skeleton;
  const int fps = controller->params.config.trajectory.fps;
  Session session(controller, terrain, options.session);
  if (options.warm_clip) session.warm_start(*options.warm_clip);
  else session.warm_start(options.start);

  Rollout out;
  out.clip.kind = "rollout";
  out.clip.id = "rollout-" + options.scenario;
  out.clip.fps = fps;
  out.clip.terrain = terrain->name();
  out.clip.skeleton_hash = skeleton.hash();
  out.clip.annotation_names = rollout_annotation_names();
  out.clip.producer = {{"scenario", options.scenario},
                       {"ticks", script.ticks},
                       {"warm_start", options.warm_clip ? options.warm_clip->id : std::string("rest")},
                       {"blend",
                        {{"position_exponent", options.session.blend.position_exponent},
                         {"direction_exponent", options.session.blend.direction_exponent}}},
                       {"model", controller->params.config.to_json()},
                       {"script", format_control_script(script)}};

  const std::vector<int>* subsets[3] = {&skeleton.subset("full"), &skeleton.subset("arm"), &skeleton.subset("leg")};
  for (int tick = 0; tick < script.ticks; ++tick) {
    const PoseFrame previous = session.history().back();
    StepResult r = session.step(script.at(tick));
    std::vector<double> row;
    const PoseFrame pair[2] = {previous, r.frame};
    for (const auto* subset : subsets) row.push_back(angle_update(std::span<const PoseFrame>(pair), *subset, fps));
    row.push_back(std::hypot(r.next_root.x - r.frame.root.x, r.next_root.z - r.frame.root.z));
    row.push_back(r.fault ? 1.0 : 0.0);
    out.clip.annotations.push_back(std::move(row));
    if (r.fault) ++out.faults;
    for (auto& w : r.warnings) out.warnings.push_back(std::move(w));
    out.clip.frames.push_back(std::move(r.frame));
  }
  if (out.clip.frames.size() >= 2) out.metrics = angle_update_report(out.clip.frames, skeleton, fps);
  else out.metrics.fps = fps;
  return out;
}

}  // namespace mcst
