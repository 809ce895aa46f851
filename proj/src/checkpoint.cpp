#include "mcst/checkpoint.hpp"

#include "binary_io.hpp"

#include <fstream>
#include <iterator>

namespace mcst {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'S', 'T', 'C', 'K', 'P', 'T'};

void write_vector(BinaryWriter& w, const RowVector<double>& v) {
  w.u64(static_cast<std::uint64_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) w.f64(v(i));
}

RowVector<double> read_vector(BinaryReader& r, const std::string& source) {
  const auto n = r.u64();
  if (n > (std::uint64_t{1} << 32)) throw FormatError(source + ": implausible vector length " + std::to_string(n));
  RowVector<double> v(static_cast<Index>(n));
  for (Index i = 0; i < v.size(); ++i) v(i) = r.f64();
  return v;
}

}  // namespace

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.params.validate();
  nlohmann::ordered_json header;
  header["format"] = "mcst-checkpoint";
  header["model"] = ckpt.params.config.to_json();
  header["train"] = ckpt.train.to_json();
  header["skeleton_hash"] = ckpt.skeleton_hash;
  header["epoch"] = ckpt.epoch;
  header["producer"] = ckpt.producer;
  auto tensors = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ckpt.params.tensors.size(); ++i) {
    const auto& t = ckpt.params.tensors[i];
    tensors.push_back({{"name", ckpt.params.layout.names[i]}, {"shape", {t.rows(), t.cols()}}});
  }
  header["tensors"] = tensors;

  BinaryWriter w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointFormatVersion);
  w.string32(header.dump());
  const NormStats& s = ckpt.stats;
  w.f64(s.joint_scale);
  w.u64(static_cast<std::uint64_t>(s.joint_dims));
  w.u64(static_cast<std::uint64_t>(s.contact_begin));
  w.u64(s.readout == ContactReadout::Sigmoid ? 1 : 0);
  write_vector(w, s.input_mean);
  write_vector(w, s.input_std);
  write_vector(w, s.output_mean);
  write_vector(w, s.output_std);
  for (const auto& t : ckpt.params.tensors)
    for (Index i = 0; i < t.size(); ++i) w.f64(t.data()[i]);
  return w.buffer();
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& source) {
  BinaryReader r(bytes, source);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kMagic)) throw FormatError(source + ": not a checkpoint file");
  const auto version = r.u32();
  if (version != kCheckpointFormatVersion)
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  std::vector<std::pair<std::string, std::pair<Index, Index>>> shapes;
  try {
    const auto header = nlohmann::ordered_json::parse(r.string32());
    if (header.at("format") != "mcst-checkpoint") throw FormatError(source + ": wrong format tag");
    ckpt.params.config = ModelConfig::from_json(header.at("model"));
    ckpt.train = TrainConfig::from_json(header.at("train"));
    ckpt.skeleton_hash = header.at("skeleton_hash").get<std::uint64_t>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.producer = header.at("producer");
    for (const auto& t : header.at("tensors"))
      shapes.push_back({t.at("name").get<std::string>(),
                        {t.at("shape").at(0).get<Index>(), t.at("shape").at(1).get<Index>()}});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": bad checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(source + ": bad checkpoint header: " + e.what());
  }

  NormStats& s = ckpt.stats;
  s.joint_scale = r.f64();
  s.joint_dims = static_cast<Index>(r.u64());
  s.contact_begin = static_cast<Index>(r.u64());
  const auto readout = r.u64();
  if (readout > 1) throw FormatError(source + ": unknown contact readout " + std::to_string(readout));
  s.readout = readout == 1 ? ContactReadout::Sigmoid : ContactReadout::Clamp;
  s.input_mean = read_vector(r, source);
  s.input_std = read_vector(r, source);
  s.output_mean = read_vector(r, source);
  s.output_std = read_vector(r, source);
  if (s.input_std.size() != s.input_mean.size() || s.output_std.size() != s.output_mean.size())
    throw FormatError(source + ": normalization statistics disagree in width");
  if (s.output_width() != ckpt.params.config.output_width())
    throw FormatError(source + ": output statistics width " + std::to_string(s.output_width()) +
                      " does not match the model (" + std::to_string(ckpt.params.config.output_width()) + ")");

  ckpt.params.layout = ParamLayout::build(ckpt.params.config);
  const auto& layout = ckpt.params.layout;
  if (shapes.size() != layout.tensor_count())
    throw FormatError(source + ": header lists " + std::to_string(shapes.size()) + " tensors, config implies " +
                      std::to_string(layout.tensor_count()));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].first != layout.names[i] || shapes[i].second != layout.shapes[i])
      throw FormatError(source + ": tensor " + std::to_string(i) + " is '" + shapes[i].first + "' " +
                        std::to_string(shapes[i].second.first) + "x" + std::to_string(shapes[i].second.second) +
                        ", expected '" + layout.names[i] + "' " + std::to_string(layout.shapes[i].first) + "x" +
                        std::to_string(layout.shapes[i].second));
    Tensor2d t(layout.shapes[i].first, layout.shapes[i].second);
    for (Index k = 0; k < t.size(); ++k) t.data()[k] = r.f64();
    ckpt.params.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw FormatError(source + ": trailing bytes after the last tensor");
  try {
    ckpt.params.validate();
  } catch (const ContractError& e) {
    throw FormatError(source + ": " + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace mcst
