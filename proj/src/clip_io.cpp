#include "mcst/clip_io.hpp"

#include "binary_io.hpp"

#include <fstream>

namespace mcst {

namespace {
constexpr char kMagic[8] = {'M', 'C', 'S', 'T', 'C', 'L', 'I', 'P'};
}

void save_clip(const MotionClip& clip, const std::filesystem::path& path) {
  const int joints = clip.frames.empty() ? 0 : clip.frames.front().joint_count();
  require(clip.annotations.empty() || clip.annotations.size() == clip.frames.size(),
          "save_clip: annotation rows must match frame count");

  nlohmann::ordered_json header;
  header["kind"] = clip.kind;
  header["id"] = clip.id;
  header["fps"] = clip.fps;
  header["joint_count"] = joints;
  header["skeleton_hash"] = clip.skeleton_hash;
  header["terrain"] = clip.terrain;
  header["frame_count"] = clip.frames.size();
  header["annotations"] = clip.annotation_names;
  header["producer"] = clip.producer;

  BinaryWriter w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kClipFormatVersion);
  w.string32(header.dump());
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    const auto& frame = clip.frames[f];
    require(frame.joint_count() == joints, "save_clip: frames disagree on joint count");
    w.f64(frame.root.x);
    w.f64(frame.root.z);
    w.f64(frame.root.angle);
    for (Index j = 0; j < joints; ++j) {
      for (int c = 0; c < 3; ++c) w.f64(frame.positions(j, c));
      for (int c = 0; c < 3; ++c) w.f64(frame.velocities(j, c));
      for (int c = 0; c < 4; ++c) w.f64(frame.rotations(j, c));
    }
    w.u8(static_cast<std::uint8_t>(frame.gait));
    for (bool c : frame.contact) w.u8(c ? 1 : 0);
    if (!clip.annotation_names.empty()) {
      const auto& row = clip.annotations.at(f);
      require(row.size() == clip.annotation_names.size(), "save_clip: annotation row width mismatch");
      for (double v : row) w.f64(v);
    }
  }
  w.write_file(path);
}

MotionClip load_clip(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::from_file(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kMagic)) throw FormatError(path.string() + ": not a motion clip file");
  const auto version = r.u32();
  if (version != kClipFormatVersion) throw FormatError(path.string() + ": unsupported clip version " + std::to_string(version));
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(r.string32());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad clip header: " + e.what());
  }
  MotionClip clip;
  std::size_t frame_count = 0;
  int joints = 0;
  try {
    clip.kind = header.at("kind").get<std::string>();
    clip.id = header.at("id").get<std::string>();
    clip.fps = header.at("fps").get<int>();
    joints = header.at("joint_count").get<int>();
    clip.skeleton_hash = header.at("skeleton_hash").get<std::uint64_t>();
    clip.terrain = header.at("terrain").get<std::string>();
    frame_count = header.at("frame_count").get<std::size_t>();
    clip.annotation_names = header.at("annotations").get<std::vector<std::string>>();
    clip.producer = header.at("producer");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad clip header: " + e.what());
  }
  clip.frames.reserve(frame_count);
  for (std::size_t f = 0; f < frame_count; ++f) {
    PoseFrame frame = make_frame(joints);
    frame.root.x = r.f64();
    frame.root.z = r.f64();
    frame.root.angle = r.f64();
    for (Index j = 0; j < joints; ++j) {
      for (int c = 0; c < 3; ++c) frame.positions(j, c) = r.f64();
      for (int c = 0; c < 3; ++c) frame.velocities(j, c) = r.f64();
      for (int c = 0; c < 4; ++c) frame.rotations(j, c) = r.f64();
    }
    frame.gait = gait_from_index(r.u8());
    for (auto& c : frame.contact) c = r.u8() != 0;
    if (!clip.annotation_names.empty()) {
      std::vector<double> row(clip.annotation_names.size());
      for (double& v : row) v = r.f64();
      clip.annotations.push_back(std::move(row));
    }
    clip.frames.push_back(std::move(frame));
  }
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after last frame");
  return clip;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "mcst-dataset";
  j["version"] = 1;
  auto clips = nlohmann::ordered_json::array();
  for (const auto& e : manifest.clips) clips.push_back({{"file", e.file}, {"split", e.split}});
  j["clips"] = clips;
  j["producer"] = manifest.producer;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  DatasetManifest m;
  try {
    const auto j = nlohmann::ordered_json::parse(in);
    if (j.at("format") != "mcst-dataset" || j.at("version") != 1) throw FormatError(path.string() + ": not a dataset manifest");
    for (const auto& c : j.at("clips")) {
      ManifestEntry e{c.at("file").get<std::string>(), c.at("split").get<std::string>()};
      if (e.split != "train" && e.split != "validation") throw FormatError(path.string() + ": bad split '" + e.split + "'");
      m.clips.push_back(std::move(e));
    }
    m.producer = j.value("producer", nlohmann::ordered_json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace mcst
