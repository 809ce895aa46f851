#pragma once

// Shared fixtures: procedural clips and small controllers.

#include "mcst/runtime.hpp"
#include "mcst/synthetic.hpp"
#include "mcst/training.hpp"

#include <memory>
#include <vector>

namespace mcst::testing {

inline std::vector<MotionClip> walking_clips(int frames = 240, int clips = 1, std::uint64_t seed = 1,
                                             Gait gait = Gait::Walking) {
  SyntheticSpec spec;
  spec.gaits = {gait};
  spec.frames = frames;
  spec.clips = clips;
  spec.seed = seed;
  return generate_synthetic_dataset(spec, default_skeleton(), Terrain::flat());
}

inline PreparedData prepare(const std::vector<MotionClip>& clips, const ModelConfig& config,
                            LossVariant loss = LossVariant::Mse) {
  return prepare_data(clips, {}, config, loss);
}

/// Untrained tiny network with statistics from a walking clip.
inline Checkpoint tiny_checkpoint(std::uint64_t seed = 3, ModelConfig config = ModelConfig::tiny()) {
  const PreparedData data = prepare(walking_clips(), config);
  Checkpoint c;
  c.params = init_params(config, seed);
  c.stats = data.stats;
  c.skeleton_hash = default_skeleton().hash();
  return c;
}

inline std::shared_ptr<const Controller> tiny_controller(std::uint64_t seed = 3) {
  return Controller::from_checkpoint(tiny_checkpoint(seed), default_skeleton());
}

}  // namespace mcst::testing
