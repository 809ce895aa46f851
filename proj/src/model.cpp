#include "mcst/model.hpp"

#include <cmath>

namespace mcst {

std::string_view decoder_variant_name(DecoderVariant v) {
  return v == DecoderVariant::ControlAware ? "control-aware" : "plain";
}

DecoderVariant parse_decoder_variant(std::string_view name) {
  if (name == "control-aware") return DecoderVariant::ControlAware;
  if (name == "plain") return DecoderVariant::PlainSelfAttention;
  throw ConfigError("unknown decoder variant '" + std::string(name) + "'");
}

std::vector<PoolingMap> scale_preset(std::string_view name) {
  if (name == "single") return {};
  if (name == "two") return {default_coarse_map()};
  if (name == "three") return {default_middle_map(), default_coarse_map()};
  throw ConfigError("unknown scale preset '" + std::string(name) + "' (single, two, three)");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.width = 24;
  c.heads = 2;
  c.layers = 1;
  c.feedforward = 64;
  c.mpn_hidden = 128;
  return c;
}

int ModelConfig::max_offset() const {
  int m = 0;
  for (int k : past_offsets) m = std::max(m, k);
  return m;
}

void ModelConfig::validate() const {
  if (width <= 0 || heads <= 0 || width % heads != 0)
    throw ConfigError("model config: width " + std::to_string(width) + " not divisible by heads " + std::to_string(heads));
  if (layers < 1) throw ConfigError("model config: at least one layer required");
  if (feedforward < 1 || mpn_hidden < 1) throw ConfigError("model config: hidden widths must be positive");
  if (dropout < 0.0 || dropout >= 1.0 || mpn_dropout < 0.0 || mpn_dropout >= 1.0)
    throw ConfigError("model config: dropout rates must be in [0, 1)");
  if (past_offsets.empty()) throw ConfigError("model config: K must be >= 1");
  for (int k : past_offsets)
    if (k < 1) throw ConfigError("model config: past offsets must be >= 1");
  if (trajectory.half < 1 || trajectory.step < 1) throw ConfigError("model config: bad trajectory sampling");
  if (joint_count < 1) throw ConfigError("model config: joint_count must be positive");
  for (const auto& m : coarse_scales) m.validate(joint_count);
}

std::string ModelConfig::scale_name(int scale) const {
  return scale == 0 ? std::string("fine") : coarse_scales.at(static_cast<std::size_t>(scale - 1)).name;
}

Index ModelConfig::scale_input_width(int scale) const {
  return scale == 0 ? fine_row_width(joint_count) : coarse_row_width(coarse_scales.at(static_cast<std::size_t>(scale - 1)));
}

OutputLayout ModelConfig::output_layout() const {
  OutputLayout o;
  o.joints = joint_count;
  o.future_points = trajectory.half;
  const Index j = joint_count;
  o.root = 0;
  o.positions = 3;
  o.velocities = o.positions + 3 * j;
  o.rotations = o.velocities + 3 * j;
  o.trajectory = o.rotations + 4 * j;
  o.contacts = o.trajectory + 4 * static_cast<Index>(trajectory.half);
  o.width = o.contacts + 4;
  return o;
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["width"] = width;
  j["heads"] = heads;
  j["layers"] = layers;
  j["feedforward"] = feedforward;
  j["dropout"] = dropout;
  j["mpn_hidden"] = mpn_hidden;
  j["mpn_dropout"] = mpn_dropout;
  auto scales = nlohmann::ordered_json::array();
  for (const auto& m : coarse_scales) {
    nlohmann::ordered_json s;
    s["name"] = m.name;
    s["groups"] = m.groups;
    scales.push_back(s);
  }
  j["coarse_scales"] = scales;
  j["decoder"] = decoder_variant_name(decoder);
  j["past_offsets"] = past_offsets;
  j["trajectory_half"] = trajectory.half;
  j["trajectory_step"] = trajectory.step;
  j["lateral_offset"] = trajectory.lateral_offset;
  j["fps"] = trajectory.fps;
  j["joint_count"] = joint_count;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.width = j.at("width").get<int>();
    c.heads = j.at("heads").get<int>();
    c.layers = j.at("layers").get<int>();
    c.feedforward = j.at("feedforward").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.mpn_hidden = j.at("mpn_hidden").get<int>();
    c.mpn_dropout = j.at("mpn_dropout").get<double>();
    c.coarse_scales.clear();
    for (const auto& s : j.at("coarse_scales"))
      c.coarse_scales.push_back({s.at("name").get<std::string>(), s.at("groups").get<std::vector<std::vector<int>>>()});
    c.decoder = parse_decoder_variant(j.at("decoder").get<std::string>());
    c.past_offsets = j.at("past_offsets").get<std::vector<int>>();
    c.trajectory.half = j.at("trajectory_half").get<int>();
    c.trajectory.step = j.at("trajectory_step").get<int>();
    c.trajectory.lateral_offset = j.at("lateral_offset").get<double>();
    c.trajectory.fps = j.at("fps").get<int>();
    c.joint_count = j.at("joint_count").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

struct LayoutBuilder {
  ParamLayout& layout;

  std::size_t add(const std::string& name, Index rows, Index cols, InitKind init) {
    layout.names.push_back(name);
    layout.shapes.emplace_back(rows, cols);
    layout.init.push_back(init);
    return layout.names.size() - 1;
  }
  LinearSlot linear(const std::string& name, Index in, Index out) {
    return {add(name + ".weight", in, out, InitKind::Glorot), add(name + ".bias", 1, out, InitKind::Zero)};
  }
  NormSlot norm(const std::string& name, Index width) {
    return {add(name + ".gain", 1, width, InitKind::One), add(name + ".bias", 1, width, InitKind::Zero)};
  }
  AttentionBlockSlots block(const std::string& name, Index width, Index ff) {
    AttentionBlockSlots b;
    b.query = linear(name + ".query", width, width);
    b.key = linear(name + ".key", width, width);
    b.value = linear(name + ".value", width, width);
    b.output = linear(name + ".output", width, width);
    b.norm1 = norm(name + ".norm1", width);
    b.ff1 = linear(name + ".ff1", width, ff);
    b.ff2 = linear(name + ".ff2", ff, width);
    b.norm2 = norm(name + ".norm2", width);
    return b;
  }
};

}  // namespace

ParamLayout ParamLayout::build(const ModelConfig& config) {
  config.validate();
  ParamLayout layout;
  LayoutBuilder b{layout};
  const Index w = config.width;
  for (int s = 0; s < config.scale_count(); ++s) {
    const std::string prefix = "encoder." + config.scale_name(s);
    ScaleSlots slots;
    slots.input = b.linear(prefix + ".input", config.scale_input_width(s), w);
    slots.positional = b.add(prefix + ".positional", config.past_frames(), w, InitKind::Zero);
    for (int l = 0; l < config.layers; ++l) slots.layers.push_back(b.block(prefix + ".layer" + std::to_string(l), w, config.feedforward));
    layout.scales.push_back(std::move(slots));
  }
  if (config.decoder == DecoderVariant::ControlAware)
    layout.trajectory_query = b.linear("decoder.trajectory_query", config.trajectory_width(), w);
  for (int l = 0; l < config.layers; ++l) layout.decoder.push_back(b.block("decoder.layer" + std::to_string(l), w, config.feedforward));
  layout.mpn[0] = b.linear("mpn.layer0", config.mpn_input_width(), config.mpn_hidden);
  layout.mpn[1] = b.linear("mpn.layer1", config.mpn_hidden, config.mpn_hidden);
  layout.mpn[2] = b.linear("mpn.layer2", config.mpn_hidden, config.output_width());
  return layout;
}

std::size_t ParamLayout::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [r, c] : shapes) n += static_cast<std::size_t>(r * c);
  return n;
}

template <typename Scalar>
void ModelParams<Scalar>::validate() const {
  require(tensors.size() == layout.tensor_count(), "model params: expected " + std::to_string(layout.tensor_count()) +
                                                       " tensors, got " + std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto [r, c] = layout.shapes[i];
    require(tensors[i].rows() == r && tensors[i].cols() == c,
            "model params: " + layout.names[i] + " is " + shape_of(tensors[i]) + ", expected " + shape_string(r, c));
    require(tensors[i].allFinite(), "model params: " + layout.names[i] + " has non-finite entries");
  }
}

ModelParams<double> init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<double> p{config, ParamLayout::build(config), {}};
  Rng rng(seed);
  for (std::size_t i = 0; i < p.layout.tensor_count(); ++i) {
    const auto [rows, cols] = p.layout.shapes[i];
    Tensor2d t(rows, cols);
    switch (p.layout.init[i]) {
      case InitKind::Zero: t.setZero(); break;
      case InitKind::One: t.setOnes(); break;
      case InitKind::Glorot: {
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (Index k = 0; k < t.size(); ++k) t.data()[k] = uniform(rng, -limit, limit);
        break;
      }
    }
    p.tensors.push_back(std::move(t));
  }
  return p;
}

template <typename Scalar>
ParamVars<Scalar> bind_params(ad::Tape<Scalar>& tape, const ModelParams<Scalar>& params) {
  params.validate();
  ParamVars<Scalar> vars;
  vars.reserve(params.tensors.size());
  for (const auto& t : params.tensors) vars.push_back(tape.parameter(t));
  return vars;
}

namespace {

template <typename Scalar>
ad::Var<Scalar> apply_linear(ad::Tape<Scalar>& t, const ParamVars<Scalar>& v, const LinearSlot& s, ad::Var<Scalar> x) {
  return ad::linear(t, x, v[s.weight], v[s.bias]);
}

/// Post-norm attention block: norm(x + drop(attn)), then norm(h + drop(ff)).
template <typename Scalar>
ad::Var<Scalar> attention_block(ad::Tape<Scalar>& t, const ParamVars<Scalar>& v, const AttentionBlockSlots& s,
                                const ModelConfig& c, ad::Var<Scalar> x, ad::Var<Scalar> memory, Index queries,
                                Index keys, const std::string& label) {
  const auto q = apply_linear(t, v, s.query, x);
  const auto k = apply_linear(t, v, s.key, memory);
  const auto val = apply_linear(t, v, s.value, memory);
  auto a = ad::attention(t, q, k, val, c.heads, queries, keys, label);
  a = ad::dropout(t, apply_linear(t, v, s.output, a), c.dropout);
  const auto h = ad::layer_norm(t, ad::add(t, x, a), v[s.norm1.gain], v[s.norm1.bias]);
  auto f = apply_linear(t, v, s.ff2, ad::relu(t, apply_linear(t, v, s.ff1, h)));
  f = ad::dropout(t, f, c.dropout);
  return ad::layer_norm(t, ad::add(t, h, f), v[s.norm2.gain], v[s.norm2.bias]);
}

}  // namespace

template <typename Scalar>
ad::Var<Scalar> encode_scale(ad::Tape<Scalar>& tape, const ModelParams<Scalar>& params, const ParamVars<Scalar>& vars,
                             int scale, ad::Var<Scalar> input) {
  const auto& c = params.config;
  require(scale >= 0 && scale < c.scale_count(), "encode_scale: no scale " + std::to_string(scale));
  const auto& x = tape.value(input);
  const Index K = c.past_frames();
  require(x.cols() == c.scale_input_width(scale) && x.rows() % K == 0 && x.rows() > 0,
          "encode_scale: " + c.scale_name(scale) + " input " + shape_of(x) + " incompatible with K=" +
              std::to_string(K) + ", width " + std::to_string(c.scale_input_width(scale)));
  const auto& slots = params.layout.scales[static_cast<std::size_t>(scale)];
  auto h = ad::add_tiled(tape, apply_linear(tape, vars, slots.input, input), vars[slots.positional]);
  for (std::size_t l = 0; l < slots.layers.size(); ++l) {
    h = attention_block(tape, vars, slots.layers[l], c, h, h, K, K,
                        "encoder/" + c.scale_name(scale) + "/layer" + std::to_string(l));
  }
  return h;
}

template <typename Scalar>
ad::Var<Scalar> concat_scales(ad::Tape<Scalar>& tape, const std::vector<ad::Var<Scalar>>& encoded, Index batch) {
  const Index width = tape.value(encoded.front()).cols();
  for (const auto& e : encoded) require(tape.value(e).cols() == width, "concat_scales: scales disagree on width");
  return ad::concat_token_blocks(tape, encoded, batch);
}

template <typename Scalar>
ad::Var<Scalar> decode(ad::Tape<Scalar>& tape, const ModelParams<Scalar>& params, const ParamVars<Scalar>& vars,
                       ad::Var<Scalar> memory, ad::Var<Scalar> trajectory) {
  const auto& c = params.config;
  const auto& z = tape.value(memory);
  const auto& traj = tape.value(trajectory);
  const Index tokens = c.memory_tokens();
  require(z.cols() == c.width && z.rows() % tokens == 0, "decode: memory " + shape_of(z) + " incompatible with " +
                                                             std::to_string(tokens) + " tokens of width " +
                                                             std::to_string(c.width));
  const Index batch = z.rows() / tokens;
  require(traj.rows() == batch && traj.cols() == c.trajectory_width(),
          "decode: trajectory " + shape_of(traj) + ", expected " + shape_string(batch, c.trajectory_width()));
  ad::Var<Scalar> x = c.decoder == DecoderVariant::ControlAware
                          ? apply_linear(tape, vars, *params.layout.trajectory_query, trajectory)
                          : ad::block_mean(tape, memory, tokens);
  for (std::size_t l = 0; l < params.layout.decoder.size(); ++l)
    x = attention_block(tape, vars, params.layout.decoder[l], c, x, memory, 1, tokens, "decoder/layer" + std::to_string(l));
  return x;
}

template <typename Scalar>
ad::Var<Scalar> mpn_forward(ad::Tape<Scalar>& tape, const ModelParams<Scalar>& params, const ParamVars<Scalar>& vars,
                            ad::Var<Scalar> decoded, ad::Var<Scalar> trajectory) {
  const auto& c = params.config;
  require(tape.value(decoded).cols() == c.width, "mpn_forward: decoded width " + std::to_string(tape.value(decoded).cols()));
  require(tape.value(trajectory).cols() == c.trajectory_width(),
          "mpn_forward: trajectory width " + std::to_string(tape.value(trajectory).cols()));
  const auto& m = params.layout.mpn;
  auto h = ad::concat_cols(tape, decoded, trajectory);
  h = ad::dropout(tape, ad::elu(tape, apply_linear(tape, vars, m[0], h)), c.mpn_dropout);
  h = ad::dropout(tape, ad::elu(tape, apply_linear(tape, vars, m[1], h)), c.mpn_dropout);
  return apply_linear(tape, vars, m[2], h);
}

template <typename Scalar>
ForwardResult<Scalar> forward(ad::Tape<Scalar>& tape, const ModelParams<Scalar>& params, const ParamVars<Scalar>& vars,
                              const ModelInput<Scalar>& input) {
  const auto& c = params.config;
  require(static_cast<int>(input.scales.size()) == c.scale_count(),
          "forward: input has " + std::to_string(input.scales.size()) + " scales, model expects " +
              std::to_string(c.scale_count()));
  require(input.batch > 0 && input.trajectory.rows() == input.batch, "forward: batch size mismatch");
  std::vector<ad::Var<Scalar>> encoded;
  for (int s = 0; s < c.scale_count(); ++s) {
    const auto x = tape.constant(input.scales[static_cast<std::size_t>(s)]);
    encoded.push_back(encode_scale(tape, params, vars, s, x));
  }
  const auto memory = concat_scales(tape, encoded, input.batch);
  const auto traj = tape.constant(input.trajectory);
  const auto decoded = decode(tape, params, vars, memory, traj);
  return {mpn_forward(tape, params, vars, decoded, traj), memory, decoded};
}

template <typename Scalar>
Tensor2<Scalar> predict(const ModelParams<Scalar>& params, const ModelInput<Scalar>& input) {
  ad::Tape<Scalar> tape(ad::Mode::Infer, 0, /*record_gradients=*/false);
  const auto vars = bind_params(tape, params);
  return tape.value(forward(tape, params, vars, input).output);
}

std::vector<TokenLabel> memory_token_labels(const ModelConfig& config) {
  std::vector<TokenLabel> labels;
  for (int s = 0; s < config.scale_count(); ++s)
    for (int k : config.past_offsets) labels.push_back({config.scale_name(s), k});
  return labels;
}

AttentionExport collect_decoder_attention(const ModelConfig& config,
                                          const std::vector<ad::AttentionRecord<double>>& records, Index sample) {
  AttentionExport out;
  out.tokens = memory_token_labels(config);
  for (const auto& r : records) {
    if (r.label.rfind("decoder/", 0) != 0) continue;
    require(sample < r.batch, "collect_decoder_attention: sample out of range");
    // queries == 1 for the decoder, so sample rows are contiguous per head
    out.decoder_layers.push_back(r.weights.middleRows(sample * r.heads * r.queries, r.heads * r.queries));
  }
  return out;
}

AttentionExport export_attention(const ModelParams<double>& params, const Tensor2d& memory, const Tensor2d& trajectory) {
  ad::Tape<double> tape(ad::Mode::Infer, 0, /*record_gradients=*/false);
  tape.set_capture_attention(true);
  const auto vars = bind_params(tape, params);
  decode(tape, params, vars, tape.constant(memory), tape.constant(trajectory));
  return collect_decoder_attention(params.config, tape.attention());
}

AttentionExport export_attention(const ModelParams<double>& params, const ModelInput<double>& input) {
  ad::Tape<double> tape(ad::Mode::Infer, 0, /*record_gradients=*/false);
  tape.set_capture_attention(true);
  const auto vars = bind_params(tape, params);
  forward(tape, params, vars, input);
  return collect_decoder_attention(params.config, tape.attention());
}

#define MCST_INSTANTIATE_MODEL(Scalar)                                                                              \
  template struct ModelParams<Scalar>;                                                                              \
  template ParamVars<Scalar> bind_params(ad::Tape<Scalar>&, const ModelParams<Scalar>&);                            \
  template ad::Var<Scalar> encode_scale(ad::Tape<Scalar>&, const ModelParams<Scalar>&, const ParamVars<Scalar>&,    \
                                        int, ad::Var<Scalar>);                                                      \
  template ad::Var<Scalar> concat_scales(ad::Tape<Scalar>&, const std::vector<ad::Var<Scalar>>&, Index);            \
  template ad::Var<Scalar> decode(ad::Tape<Scalar>&, const ModelParams<Scalar>&, const ParamVars<Scalar>&,          \
                                  ad::Var<Scalar>, ad::Var<Scalar>);                                                \
  template ad::Var<Scalar> mpn_forward(ad::Tape<Scalar>&, const ModelParams<Scalar>&, const ParamVars<Scalar>&,     \
                                       ad::Var<Scalar>, ad::Var<Scalar>);                                           \
  template ForwardResult<Scalar> forward(ad::Tape<Scalar>&, const ModelParams<Scalar>&, const ParamVars<Scalar>&,   \
                                         const ModelInput<Scalar>&);                                                \
  template Tensor2<Scalar> predict(const ModelParams<Scalar>&, const ModelInput<Scalar>&);

MCST_INSTANTIATE_MODEL(double)
MCST_INSTANTIATE_MODEL(float)

#undef MCST_INSTANTIATE_MODEL

}  // namespace mcst
