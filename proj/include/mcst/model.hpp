#pragma once

// Multi-scale control-signal-aware transformer.
//
// Per-scale transformer encoders turn K past-frame rows into K tokens of
// width `width`. The scales are stacked along the token axis into a memory of
// scale_count * K tokens. A decoder whose single query token is the projected
// trajectory attends over that memory; its output and the trajectory feed a
// three-layer ELU network that regresses the next state.

#include "mcst/autodiff.hpp"
#include "mcst/skeleton.hpp"
#include "mcst/trajectory.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mcst {

enum class DecoderVariant { ControlAware, PlainSelfAttention };

std::string_view decoder_variant_name(DecoderVariant v);
DecoderVariant parse_decoder_variant(std::string_view name);

/// Offsets into the output vector. Order: root delta, positions, velocities,
/// rotations, future trajectory (positions then directions), contacts.
struct OutputLayout {
  Index root = 0, positions = 0, velocities = 0, rotations = 0, trajectory = 0, contacts = 0, width = 0;
  int joints = 0;
  int future_points = 0;
};

/// Coarse pooling maps for a named scale setup: "single" (fine only), "two"
/// (fine + coarse) or "three" (fine + middle + coarse).
std::vector<PoolingMap> scale_preset(std::string_view name);

struct ModelConfig {
  int width = 186;
  int heads = 6;
  int layers = 3;
  int feedforward = 1024;
  double dropout = 0.1;
  int mpn_hidden = 512;
  double mpn_dropout = 0.3;
  std::vector<PoolingMap> coarse_scales = {default_coarse_map()};
  DecoderVariant decoder = DecoderVariant::ControlAware;
  std::vector<int> past_offsets = {1, 10, 20, 30, 40};
  TrajectoryConfig trajectory;
  int joint_count = 31;

  /// Width 24, 2 heads, 1 layer, small feed-forward and MPN.
  static ModelConfig tiny();

  /// Throws ConfigError on inconsistent values.
  void validate() const;

  int past_frames() const { return static_cast<int>(past_offsets.size()); }
  int max_offset() const;
  int scale_count() const { return 1 + static_cast<int>(coarse_scales.size()); }
  std::string scale_name(int scale) const;
  Index scale_input_width(int scale) const;
  Index trajectory_width() const { return trajectory.flat_width(); }
  Index memory_tokens() const { return static_cast<Index>(scale_count()) * past_frames(); }
  Index mpn_input_width() const { return width + trajectory_width(); }
  OutputLayout output_layout() const;
  Index output_width() const { return output_layout().width; }

  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct LinearSlot {
  std::size_t weight = 0, bias = 0;
};
struct NormSlot {
  std::size_t gain = 0, bias = 0;
};
struct AttentionBlockSlots {
  LinearSlot query, key, value, output;
  NormSlot norm1;
  LinearSlot ff1, ff2;
  NormSlot norm2;
};
struct ScaleSlots {
  LinearSlot input;
  std::size_t positional = 0;
  std::vector<AttentionBlockSlots> layers;
};

enum class InitKind { Glorot, Zero, One };

/// Fixed parameter order for a config; the checkpoint stores tensors in this order.
struct ParamLayout {
  std::vector<ScaleSlots> scales;
  std::optional<LinearSlot> trajectory_query;
  std::vector<AttentionBlockSlots> decoder;
  std::array<LinearSlot, 3> mpn;

  std::vector<std::string> names;
  std::vector<std::pair<Index, Index>> shapes;
  std::vector<InitKind> init;

  static ParamLayout build(const ModelConfig& config);
  std::size_t tensor_count() const { return names.size(); }
  std::size_t parameter_count() const;
};

template <typename Scalar>
struct ModelParams {
  ModelConfig config;
  ParamLayout layout;
  std::vector<Tensor2<Scalar>> tensors;

  std::size_t parameter_count() const { return layout.parameter_count(); }

  template <typename To>
  ModelParams<To> cast() const {
    ModelParams<To> out{config, layout, {}};
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<To>());
    return out;
  }

  /// Throws ContractError if a tensor has the wrong shape or is non-finite.
  void validate() const;
};

using ModelParamsd = ModelParams<double>;

/// Glorot-uniform weights, zero biases and positional slots, unit norm gains.
ModelParams<double> init_params(const ModelConfig& config, std::uint64_t seed);

/// One (normalized) mini-batch. scales[s] is (batch*K) x scale width, rows of
/// sample b at b*K..b*K+K-1; trajectory is batch x trajectory width.
template <typename Scalar>
struct ModelInput {
  std::vector<Tensor2<Scalar>> scales;
  Tensor2<Scalar> trajectory;
  Index batch = 0;
};

template <typename Scalar>
using ParamVars = std::vector<ad::Var<Scalar>>;

template <typename Scalar>
ParamVars<Scalar> bind_params(ad::Tape<Scalar>& tape, const ModelParams<Scalar>& params);

/// Projection, positional slots, then the scale's encoder layers.
template <typename Scalar>
ad::Var<Scalar> encode_scale(ad::Tape<Scalar>& tape, const ModelParams<Scalar>& params, const ParamVars<Scalar>& vars,
                             int scale, ad::Var<Scalar> input);

/// Token-axis concatenation, fine scale first within each sample.
template <typename Scalar>
ad::Var<Scalar> concat_scales(ad::Tape<Scalar>& tape, const std::vector<ad::Var<Scalar>>& encoded, Index batch);

/// Control-signal-aware (or plain) decoder over the memory; batch x width.
template <typename Scalar>
ad::Var<Scalar> decode(ad::Tape<Scalar>& tape, const ModelParams<Scalar>& params, const ParamVars<Scalar>& vars,
                       ad::Var<Scalar> memory, ad::Var<Scalar> trajectory);

/// concat(decoded, trajectory) -> affine -> ELU -> dropout -> affine -> ELU -> dropout -> affine.
template <typename Scalar>
ad::Var<Scalar> mpn_forward(ad::Tape<Scalar>& tape, const ModelParams<Scalar>& params, const ParamVars<Scalar>& vars,
                            ad::Var<Scalar> decoded, ad::Var<Scalar> trajectory);

template <typename Scalar>
struct ForwardResult {
  ad::Var<Scalar> output;
  ad::Var<Scalar> memory;
  ad::Var<Scalar> decoded;
};

/// Full network: encode every scale, concatenate, decode, predict.
template <typename Scalar>
ForwardResult<Scalar> forward(ad::Tape<Scalar>& tape, const ModelParams<Scalar>& params, const ParamVars<Scalar>& vars,
                              const ModelInput<Scalar>& input);

/// Inference-mode forward returning batch x output width.
template <typename Scalar>
Tensor2<Scalar> predict(const ModelParams<Scalar>& params, const ModelInput<Scalar>& input);

struct TokenLabel {
  std::string scale;
  int offset = 0;
};

/// Memory token identities in order: scale-major, past offsets within a scale.
std::vector<TokenLabel> memory_token_labels(const ModelConfig& config);

struct AttentionExport {
  std::vector<TokenLabel> tokens;
  /// One heads x tokens matrix per decoder layer.
  std::vector<Tensor2d> decoder_layers;
};

/// Decoder attention weights for one sample, given its memory (tokens x width)
/// and normalized trajectory (1 x trajectory width).
AttentionExport export_attention(const ModelParams<double>& params, const Tensor2d& memory,
                                 const Tensor2d& trajectory);

/// Runs the encoders first, then exports the decoder attention of sample 0.
AttentionExport export_attention(const ModelParams<double>& params, const ModelInput<double>& input);

/// Decoder attention of sample `sample` from records captured on a tape.
AttentionExport collect_decoder_attention(const ModelConfig& config,
                                          const std::vector<ad::AttentionRecord<double>>& records, Index sample = 0);

}  // namespace mcst
