#pragma once

// Checkpoint container.
//
//   bytes 0..7   magic "MCSTCKPT"
//   u32          format version (1)
//   u32          header length n, then n bytes of header JSON: model config,
//                train config, skeleton hash, epoch, producer, and the
//                name and shape of every parameter tensor in layout order
//   normalization statistics:
//     f64        joint scale
//     u64 x3     joint dims, contact begin, contact readout (0 clamp, 1 sigmoid)
//     u64 + f64s input mean, input std, output mean, output std (length-prefixed)
//   parameter tensors in layout order, each as rows*cols f64 in row-major order

#include "mcst/model.hpp"
#include "mcst/training.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mcst {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelParamsd params;
  NormStats stats;
  TrainConfig train;
  std::uint64_t skeleton_hash = 0;
  int epoch = 0;
  nlohmann::ordered_json producer = nlohmann::ordered_json::object();
};

std::vector<char> encode_checkpoint(const Checkpoint& checkpoint);
/// Throws FormatError on a bad magic, version, truncation or tensor shape.
Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& source = "checkpoint");

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mcst
