// mcst: data generation, training, evaluation, simulation, serving and
// checkpoint inspection for the multi-scale control-signal-aware transformer.
//
// Exit codes: 0 success, 2 usage, 3 config, 4 format, 5 underflow,
// 6 numeric, 7 degenerate input, 8 contract violation, 1 anything else.
// Failures print one line: error: code=<kind> message="<text>".

#include "mcst/checkpoint.hpp"
#include "mcst/clip_io.hpp"
#include "mcst/metrics.hpp"
#include "mcst/runtime.hpp"
#include "mcst/service.hpp"
#include "mcst/synthetic.hpp"
#include "mcst/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace mcst;
using ojson = nlohmann::ordered_json;

namespace {

SkeletonSpec skeleton_from(const std::string& path) {
  return path.empty() ? default_skeleton() : load_skeleton(path);
}

void write_json(const ojson& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Eigen::Vector2d parse_direction(const std::string& text) {
  double x = 0.0, z = 0.0;
  char comma = 0;
  std::istringstream in(text);
  if (!(in >> x >> comma >> z) || comma != ',') throw ConfigError("direction must be 'x,z', got '" + text + "'");
  Eigen::Vector2d d(x, z);
  return d.norm() > 0.0 ? Eigen::Vector2d(d.normalized()) : d;
}

BlendSchedule blend_from(const std::string& name, int half) {
  if (name == "default") return BlendSchedule{0.5, 2.0, half};
  if (name == "responsive") return BlendSchedule::responsive(half);
  throw ConfigError("unknown blend schedule '" + name + "' (default, responsive)");
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  int frames = 600;
  int clips = 1;
  std::vector<std::string> gaits = {"walking"};
  int segment_frames = 0;
  std::string path = "line";
  std::string terrain = "flat";
  std::uint64_t seed = 0;
  bool no_jitter = false;
  double validation_fraction = 0.0;
  std::string skeleton;
};

int gen_data(const GenDataArgs& a) {
  SyntheticSpec spec;
  spec.gaits.clear();
  for (const auto& g : a.gaits) spec.gaits.push_back(parse_gait(g));
  spec.segment_frames = a.segment_frames;
  spec.path = parse_path_shape(a.path);
  spec.terrain = a.terrain;
  spec.frames = a.frames;
  spec.clips = a.clips;
  spec.seed = a.seed;
  spec.jitter = !a.no_jitter;
  const SkeletonSpec skeleton = skeleton_from(a.skeleton);
  const Terrain terrain = Terrain::resolve(a.terrain);
  const auto clips = generate_synthetic_dataset(spec, skeleton, terrain);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const auto held_out = validation_clips(clips.size(), a.validation_fraction, a.seed);
  DatasetManifest manifest;
  manifest.producer = {{"command", "gen-data"}, {"synthetic", spec.to_json()},
                       {"validation_fraction", a.validation_fraction}};
  for (std::size_t i = 0; i < clips.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "clip-%03zu.mclip", i);
    save_clip(clips[i], dir / name);
    const bool validation = std::find(held_out.begin(), held_out.end(), i) != held_out.end();
    manifest.clips.push_back({name, validation ? "validation" : "train"});
    std::cout << (dir / name).string() << '\n';
  }
  save_manifest(manifest, dir / "manifest.json");
  std::cout << (dir / "manifest.json").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  bool tiny = false;
  std::string scales = "two";
  std::vector<std::string> pool_maps;
  std::string decoder = "control-aware";
  std::optional<double> dropout;
  std::optional<double> mpn_dropout;
  TrainConfig train;
  std::string loss = "mse";
  bool deterministic = true;
  std::string skeleton;
};

int train(TrainArgs a) {
  ModelConfig mc = a.tiny ? ModelConfig::tiny() : ModelConfig{};
  mc.coarse_scales = scale_preset(a.scales);
  if (!a.pool_maps.empty()) {
    mc.coarse_scales.clear();
    for (const auto& p : a.pool_maps) mc.coarse_scales.push_back(load_pooling_map(p));
  }
  mc.decoder = parse_decoder_variant(a.decoder);
  if (a.dropout) mc.dropout = *a.dropout;
  if (a.mpn_dropout) mc.mpn_dropout = *a.mpn_dropout;
  const SkeletonSpec skeleton = skeleton_from(a.skeleton);
  mc.joint_count = skeleton.joint_count;
  mc.validate();
  a.train.loss = parse_loss_variant(a.loss);
  a.train.validate();

  const fs::path manifest_path(a.data);
  const DatasetManifest manifest = load_manifest(manifest_path);
  std::vector<MotionClip> train_clips, validation_clips;
  for (const auto& e : manifest.clips) {
    MotionClip clip = load_clip(manifest_path.parent_path() / e.file);
    if (clip.skeleton_hash != 0 && clip.skeleton_hash != skeleton.hash())
      throw ConfigError(e.file + ": clip was recorded on a different skeleton");
    (e.split == "validation" ? validation_clips : train_clips).push_back(std::move(clip));
  }
  const PreparedData data = prepare_data(train_clips, validation_clips, mc, a.train.loss);
  for (const auto& d : data.diagnostics) std::cerr << "warning: " << d << '\n';

  const fs::path dir(a.out);
  fs::create_directories(dir);
  FitOptions options;
  options.checkpoint_dir = dir;
  options.skeleton_hash = skeleton.hash();
  options.producer = {{"command", "train"},
                      {"data", a.data},
                      {"deterministic", a.deterministic},
                      {"model", mc.to_json()},
                      {"train", a.train.to_json()},
                      {"dataset", manifest.producer}};
  options.on_epoch = [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " steps " << e.steps << " train " << e.train_loss;
    if (std::isfinite(e.validation_loss)) std::cerr << " validation " << e.validation_loss;
    std::cerr << (e.best ? " best" : "") << '\n';
  };
  const FitResult result = fit(data.train, data.validation, data.stats, mc, a.train, options);
  write_trace(result, dir / "trace.jsonl", options.producer);
  for (const auto& e : result.epochs) std::cout << (dir / ("epoch-" + std::to_string(e.epoch) + ".ckpt")).string() << '\n';
  std::cout << (dir / "best.ckpt").string() << '\n' << (dir / "trace.jsonl").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> files;
  std::vector<std::string> labels;
  bool ttest = false;
  std::string subset = "full";
  std::string json;
  int precision = 1;
  std::string skeleton;
};

int eval(const EvalArgs& a) {
  const SkeletonSpec skeleton = skeleton_from(a.skeleton);
  if (!a.labels.empty() && a.labels.size() != a.files.size())
    throw ConfigError("eval: give one --label per input file or none");
  AngleUpdateTable table;
  std::vector<MotionClip> clips;
  for (std::size_t i = 0; i < a.files.size(); ++i) {
    MotionClip clip = load_clip(a.files[i]);
    if (clip.frames.size() < 2) throw UnderflowError(a.files[i] + ": needs at least two frames");
    std::string method = clip.kind == "rollout" ? clip.producer.value("method", std::string("mcs-t")) : "data";
    std::string scenario = clip.producer.value("scenario", clip.terrain);
    if (!a.labels.empty()) {
      const auto& label = a.labels[i];
      const auto colon = label.find(':');
      method = label.substr(0, colon);
      if (colon != std::string::npos) scenario = label.substr(colon + 1);
    }
    table.add(method, scenario, angle_update_report(clip.frames, skeleton, clip.fps));
    clips.push_back(std::move(clip));
  }
  std::cout << table.to_text(a.precision);
  ojson report{{"table", table.to_json()}};

  if (a.ttest) {
    if (clips.size() != 2) throw ConfigError("eval --ttest needs exactly two inputs");
    std::vector<std::vector<double>> samples;
    for (const auto& clip : clips)
      samples.push_back(per_second_means(angle_update_series(clip.frames, skeleton.subset(a.subset), clip.fps), clip.fps));
    const std::size_t n = std::min(samples[0].size(), samples[1].size());
    samples[0].resize(n);
    samples[1].resize(n);
    const TTestReport t = paired_t_test(samples[0], samples[1]);
    ojson j = t.to_json();
    j["subset"] = a.subset;
    j["sample_unit"] = "per-second mean angle update";
    j["pairs"] = n;
    std::cout << "paired t-test (" << a.subset << ", per-second means, n=" << n << "): " << j.dump() << '\n';
    report["ttest"] = std::move(j);
  }
  if (!a.json.empty()) {
    write_json(report, a.json);
    std::cout << a.json << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string checkpoint;
  std::string out;
  std::string script;
  int ticks = 600;
  std::string direction = "0,1";
  double speed = -1.0;
  std::string gait = "walking";
  std::string terrain = "flat";
  std::string warm_clip;
  std::string blend = "default";
  std::string scenario;
  std::string method = "mcs-t";
  std::uint64_t seed = 0;
  std::string skeleton;
};

int simulate(const SimulateArgs& a) {
  const auto controller = service::load_controller(a.checkpoint, a.skeleton);
  const auto terrain = std::make_shared<const Terrain>(Terrain::resolve(a.terrain));
  ControlScript script;
  if (!a.script.empty()) {
    script = load_control_script(a.script);
  } else {
    ControlInput c;
    c.gait = parse_gait(a.gait);
    c.direction = parse_direction(a.direction);
    c.speed = a.speed >= 0.0 ? a.speed : (c.direction.norm() > 0.0 ? default_speed(c.gait) : 0.0);
    script = ControlScript::constant(c, a.ticks);
  }
  RolloutOptions options;
  options.session.blend = blend_from(a.blend, controller->params.config.trajectory.half);
  options.scenario = a.scenario.empty() ? terrain->name() : a.scenario;
  if (!a.warm_clip.empty()) options.warm_clip = load_clip(a.warm_clip);
  Rollout rollout = run_script(controller, terrain, script, options);
  rollout.clip.producer["method"] = a.method;
  rollout.clip.producer["checkpoint"] = a.checkpoint;
  rollout.clip.producer["seed"] = a.seed;
  rollout.clip.producer["blend_schedule"] = a.blend;
  save_clip(rollout.clip, a.out);
  for (std::size_t i = 0; i < std::min<std::size_t>(rollout.warnings.size(), 5); ++i)
    std::cerr << "warning: " << rollout.warnings[i] << '\n';
  if (rollout.warnings.size() > 5) std::cerr << "warning: " << rollout.warnings.size() - 5 << " more warnings\n";
  std::cerr << "faults " << rollout.faults << " metrics " << rollout.metrics.to_json().dump() << '\n';
  std::cout << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

service::Server* g_server = nullptr;

int serve(service::ServiceConfig config, const std::set<std::string>& explicit_flags,
          const service::ServiceConfig& flags, const std::string& listen, const std::string& blend) {
  config.apply_environment();
  if (explicit_flags.count("listen")) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--listen must be host:port");
    config.address = listen.substr(0, colon);
    config.port = static_cast<unsigned short>(std::stoul(listen.substr(colon + 1)));
  }
  if (explicit_flags.count("checkpoint")) config.checkpoint = flags.checkpoint;
  if (explicit_flags.count("terrain")) config.terrain = flags.terrain;
  if (explicit_flags.count("tick-rate")) config.tick_rate = flags.tick_rate;
  if (explicit_flags.count("session-cap")) config.session_cap = flags.session_cap;
  if (explicit_flags.count("control-log")) config.control_log_dir = flags.control_log_dir;
  if (config.checkpoint.empty()) throw ConfigError("serve: no checkpoint (--checkpoint or MCST_CHECKPOINT)");

  const auto controller = service::load_controller(config.checkpoint, config.skeleton);
  config.session.blend = blend_from(blend, controller->params.config.trajectory.half);
  const auto terrain = std::make_shared<const Terrain>(Terrain::resolve(config.terrain));
  service::Server server(config, controller, terrain);
  server.start();
  std::cout << "listening ws://" << config.address << ':' << server.port() << std::endl;
  g_server = &server;
  std::signal(SIGINT, [](int) { g_server->stop(); });
  std::signal(SIGTERM, [](int) { g_server->stop(); });
  server.wait();
  g_server = nullptr;
  return 0;
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  std::string checkpoint;
  std::string clip;
  int frame = -1;
};

int inspect(const InspectArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto& params = ck.params;
  ojson j;
  j["checkpoint"] = a.checkpoint;
  j["epoch"] = ck.epoch;
  j["skeleton_hash"] = ck.skeleton_hash;
  j["model"] = params.config.to_json();
  j["train"] = ck.train.to_json();
  j["producer"] = ck.producer;
  j["parameters"] = params.parameter_count();
  j["memory_tokens"] = params.config.memory_tokens();
  ojson tensors = ojson::array();
  for (std::size_t i = 0; i < params.layout.tensor_count(); ++i)
    tensors.push_back({{"name", params.layout.names[i]},
                       {"shape", {params.layout.shapes[i].first, params.layout.shapes[i].second}}});
  j["tensors"] = std::move(tensors);

  if (!a.clip.empty()) {
    const MotionClip clip = load_clip(a.clip);
    const ModelConfig& mc = params.config;
    const FrameRange range = valid_frames(static_cast<int>(clip.frames.size()), mc);
    if (range.count() == 0) throw UnderflowError(a.clip + ": no frame has enough context for the model");
    const int frame = a.frame < 0 ? range.first : a.frame;
    if (frame < range.first || frame > range.last)
      throw UnderflowError("frame " + std::to_string(frame) + " outside the valid range [" +
                           std::to_string(range.first) + ", " + std::to_string(range.last) + "]");
    const TrainingSample sample = assemble_sample(clip, frame, mc, Terrain::resolve(clip.terrain));
    Tensor2d row(1, ck.stats.input_width());
    row.row(0) = ck.stats.normalize_input(flatten_input(sample.x, sample.trajectory));
    const AttentionExport att = export_attention(params, make_batch(row, mc));
    ojson tokens = ojson::array();
    for (const auto& t : att.tokens) tokens.push_back({{"scale", t.scale}, {"offset", t.offset}});
    ojson layers = ojson::array();
    for (const auto& layer : att.decoder_layers) {
      ojson heads = ojson::array();
      for (Index h = 0; h < layer.rows(); ++h)
        heads.push_back(std::vector<double>(layer.row(h).data(), layer.row(h).data() + layer.cols()));
      layers.push_back(std::move(heads));
    }
    j["attention"] = {{"clip", a.clip}, {"frame", frame}, {"tokens", std::move(tokens)}, {"layers", std::move(layers)}};
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

int fail(const std::string& code, const std::string& message, int exit_code) {
  std::cerr << "error: code=" << code << " message=" << nlohmann::json(message).dump() << '\n';
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale control-signal-aware transformer toolkit"};
  app.set_config("--config", "", "TOML/INI file with flag defaults; [subcommand] sections apply to that subcommand");
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 1 other failure, 2 usage, 3 config, 4 format, 5 underflow,\n"
      "6 numeric, 7 degenerate input, 8 contract violation. Failures print one line:\n"
      "  error: code=<kind> message=\"<text>\"\n"
      "Environment (serve): MCST_LISTEN, MCST_CHECKPOINT, MCST_TERRAIN, MCST_TICK_RATE,\n"
      "MCST_SESSION_CAP, MCST_CONTROL_LOG. Flags take precedence over the environment.");

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate synthetic locomotion clips and a manifest");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--frames", gd.frames, "Frames per clip")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--clips", gd.clips, "Number of clips")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--gait", gd.gaits, "Gait per segment: standing, walking, jogging, jumping, crouching")
      ->capture_default_str();
  gen->add_option("--segment-frames", gd.segment_frames, "Frames per gait segment (0 = even split)")
      ->capture_default_str();
  gen->add_option("--path", gd.path, "Root path: line, circle, figure8")->capture_default_str();
  gen->add_option("--terrain", gd.terrain, "flat, rocky, obstacles, ceiling or a height-grid file")
      ->capture_default_str();
  gen->add_option("--seed", gd.seed, "Random seed")->capture_default_str();
  gen->add_flag("--no-jitter", gd.no_jitter, "Disable per-clip random variation");
  gen->add_option("--validation-fraction", gd.validation_fraction, "Fraction of clips held out")
      ->capture_default_str();
  gen->add_option("--skeleton", gd.skeleton, "Skeleton JSON (default: built-in 31 joints)");

  TrainArgs tr;
  double dropout = -1.0, mpn_dropout = -1.0;
  auto* trn = app.add_subcommand("train", "Fit a model and write checkpoints and a loss trace");
  trn->add_option("--data", tr.data, "Dataset manifest.json")->required();
  trn->add_option("--out", tr.out, "Output directory")->required();
  trn->add_flag("--tiny", tr.tiny, "Width 24, 2 heads, 1 layer");
  trn->add_option("--scales", tr.scales, "single, two or three scales")->capture_default_str();
  trn->add_option("--pool-map", tr.pool_maps, "Pooling map JSON per coarse scale (overrides --scales)");
  trn->add_option("--decoder", tr.decoder, "control-aware or plain")->capture_default_str();
  trn->add_option("--dropout", dropout, "Transformer dropout (default 0.1)");
  trn->add_option("--mpn-dropout", mpn_dropout, "Prediction network dropout (default 0.3)");
  trn->add_option("--epochs", tr.train.epochs, "Epochs")->capture_default_str();
  trn->add_option("--batch", tr.train.batch_size, "Mini-batch size")->capture_default_str();
  trn->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->capture_default_str();
  trn->add_option("--lambda", tr.train.lambda, "L1 weight penalty")->capture_default_str();
  trn->add_option("--loss", tr.loss, "mse, mae or ce-contact")->capture_default_str();
  trn->add_option("--max-steps", tr.train.max_steps, "Stop after this many steps (0 = all epochs)")
      ->capture_default_str();
  trn->add_option("--joint-noise", tr.train.joint_noise, "Input noise on joint features, standardized units")
      ->capture_default_str();
  trn->add_option("--trajectory-noise", tr.train.trajectory_noise, "Input noise on trajectory features")
      ->capture_default_str();
  trn->add_option("--seed", tr.train.seed, "Random seed")->capture_default_str();
  trn->add_flag("--deterministic,!--no-deterministic", tr.deterministic,
                "Single-threaded, bit-reproducible training (always on)");
  trn->add_option("--skeleton", tr.skeleton, "Skeleton JSON");

  EvalArgs ev;
  auto* evl = app.add_subcommand("eval", "Angle-update table and paired t-test over clips or rollouts");
  evl->add_option("files", ev.files, "Clip or rollout files")->required();
  evl->add_option("--label", ev.labels, "method[:scenario] per input file");
  std::string metric = "angle-update";
  evl->add_option("--metric", metric, "Metric (angle-update)")->capture_default_str();
  evl->add_flag("--ttest", ev.ttest, "Paired t-test between exactly two inputs");
  evl->add_option("--subset", ev.subset, "Joint subset for the t-test: full, arm, leg")->capture_default_str();
  evl->add_option("--json", ev.json, "Also write machine-readable records here");
  evl->add_option("--precision", ev.precision, "Digits after the decimal point")->capture_default_str();
  evl->add_option("--skeleton", ev.skeleton, "Skeleton JSON");

  SimulateArgs sm;
  auto* sim = app.add_subcommand("simulate", "Headless scripted rollout to a rollout file");
  sim->add_option("--checkpoint", sm.checkpoint, "Checkpoint")->required();
  sim->add_option("--out", sm.out, "Rollout file")->required();
  sim->add_option("--script", sm.script, "Control script (overrides the constant-control flags)");
  sim->add_option("--ticks", sm.ticks, "Ticks for constant control")->capture_default_str();
  sim->add_option("--direction", sm.direction, "World direction x,z")->capture_default_str();
  sim->add_option("--speed", sm.speed, "m/s (default: the gait's pace)");
  sim->add_option("--gait", sm.gait, "Gait")->capture_default_str();
  sim->add_option("--terrain", sm.terrain, "Terrain")->capture_default_str();
  sim->add_option("--warm-clip", sm.warm_clip, "Warm start from this clip's tail");
  sim->add_option("--blend", sm.blend, "default or responsive")->capture_default_str();
  sim->add_option("--scenario", sm.scenario, "Scenario label (default: terrain name)");
  sim->add_option("--method", sm.method, "Method label")->capture_default_str();
  sim->add_option("--seed", sm.seed, "Recorded for provenance; stepping is deterministic")->capture_default_str();
  sim->add_option("--skeleton", sm.skeleton, "Skeleton JSON");

  service::ServiceConfig sc;
  std::string listen = "127.0.0.1:8765";
  std::string checkpoint, control_log, serve_blend = "default";
  auto* srv = app.add_subcommand("serve", "Websocket motion service");
  srv->add_option("--listen", listen, "host:port (env MCST_LISTEN)")->capture_default_str();
  srv->add_option("--checkpoint", checkpoint, "Checkpoint (env MCST_CHECKPOINT)");
  srv->add_option("--terrain", sc.terrain, "Terrain (env MCST_TERRAIN)")->capture_default_str();
  srv->add_option("--tick-rate", sc.tick_rate, "Hz (env MCST_TICK_RATE)")->capture_default_str();
  srv->add_option("--session-cap", sc.session_cap, "Concurrent sessions (env MCST_SESSION_CAP)")
      ->capture_default_str();
  srv->add_option("--control-log", control_log, "Directory for per-session control logs (env MCST_CONTROL_LOG)");
  srv->add_option("--max-ticks", sc.max_ticks, "Close sessions after this many frames (0 = never)")
      ->capture_default_str();
  srv->add_option("--threads", sc.threads, "I/O threads")->capture_default_str();
  srv->add_option("--blend", serve_blend, "default or responsive")->capture_default_str();
  srv->add_option("--skeleton", sc.skeleton, "Skeleton JSON");

  InspectArgs in;
  auto* ins = app.add_subcommand("inspect", "Dump checkpoint config, parameter counts and attention maps");
  ins->add_option("checkpoint", in.checkpoint, "Checkpoint")->required();
  ins->add_option("--clip", in.clip, "Clip to take a sample from for the attention map");
  ins->add_option("--frame", in.frame, "Sample frame (default: first valid frame)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << "error: code=usage message=" << nlohmann::json(std::string(e.what())).dump() << '\n';
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return gen_data(gd);
    if (*trn) {
      if (dropout >= 0.0) tr.dropout = dropout;
      if (mpn_dropout >= 0.0) tr.mpn_dropout = mpn_dropout;
      return train(tr);
    }
    if (*evl) {
      if (metric != "angle-update") throw ConfigError("unknown metric '" + metric + "'");
      return eval(ev);
    }
    if (*sim) return simulate(sm);
    if (*srv) {
      std::set<std::string> given;
      for (const char* name : {"listen", "checkpoint", "terrain", "tick-rate", "session-cap", "control-log"})
        if (srv->count(std::string("--") + name) > 0) given.insert(name);
      service::ServiceConfig flags = sc;
      flags.checkpoint = checkpoint;
      flags.control_log_dir = control_log;
      return serve(sc, given, flags, listen, serve_blend);
    }
    if (*ins) return inspect(in);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 3);
  } catch (const FormatError& e) {
    return fail("format", e.what(), 4);
  } catch (const UnderflowError& e) {
    return fail("underflow", e.what(), 5);
  } catch (const NumericError& e) {
    return fail("numeric", e.what(), 6);
  } catch (const DegenerateInputError& e) {
    return fail("degenerate", e.what(), 7);
  } catch (const ContractError& e) {
    return fail("contract", e.what(), 8);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 2;
}
