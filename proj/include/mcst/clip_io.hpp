#pragma once

// Binary motion record stream shared by dataset clips and rollouts.
//
//   bytes 0..7   magic "MCSTCLIP"
//   u32          format version (1)
//   u32          header length n
//   n bytes      header JSON: kind ("clip" | "rollout"), id, fps, joint_count,
//                skeleton_hash, terrain, frame_count, annotations (names of
//                per-frame extra values) and the producing config
//   frame_count records, little-endian:
//     f64 x3     root x, z, facing angle
//     f64 x10J   per joint: position xyz, velocity xyz, quaternion wxyz
//     u8         gait id
//     u8 x4      contact flags (left heel, left toe, right heel, right toe)
//     f64 xA     annotation values, A = annotations.size()

#include "mcst/skeleton.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mcst {

struct MotionClip {
  std::string id;
  int fps = 60;
  std::string terrain = "flat";
  std::vector<PoseFrame> frames;
  /// Names of per-frame annotation columns (rollouts only).
  std::vector<std::string> annotation_names;
  /// frames.size() x annotation_names.size().
  std::vector<std::vector<double>> annotations;
  std::string kind = "clip";
  std::uint64_t skeleton_hash = 0;
  nlohmann::ordered_json producer = nlohmann::ordered_json::object();
};

inline constexpr std::uint32_t kClipFormatVersion = 1;

void save_clip(const MotionClip& clip, const std::filesystem::path& path);
/// Throws FormatError on a bad magic, version, or truncated payload.
MotionClip load_clip(const std::filesystem::path& path);

struct ManifestEntry {
  std::string file;  // relative to the manifest directory
  std::string split; // "train" or "validation"
};

struct DatasetManifest {
  std::vector<ManifestEntry> clips;
  nlohmann::ordered_json producer = nlohmann::ordered_json::object();
};

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace mcst
