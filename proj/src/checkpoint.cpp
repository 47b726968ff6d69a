#include "socnav/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "socnav/errors.hpp"

namespace socnav {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMagic = "SOCNAV-CHECKPOINT";

std::uint64_t le64(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const GridSpec& s) {
  return {{"voxel", s.voxel},   {"x_min", s.x_min}, {"x_max", s.x_max},      {"y_min", s.y_min},
          {"y_max", s.y_max}, {"z_min", s.z_min}, {"z_extent", s.z_extent}};
}

GridSpec grid_spec_from_json(const json& j) {
  GridSpec s;
  try {
    read_opt(j, "voxel", s.voxel);
    read_opt(j, "x_min", s.x_min);
    read_opt(j, "x_max", s.x_max);
    read_opt(j, "y_min", s.y_min);
    read_opt(j, "y_max", s.y_max);
    read_opt(j, "z_min", s.z_min);
    read_opt(j, "z_extent", s.z_extent);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("grid: ") + e.what());
  }
  s.validate();
  return s;
}

json to_json(const ModelConfig& c) {
  return {{"modality", to_string(c.modality)},
          {"img_channels", c.img_channels},
          {"vox_channels", c.vox_channels},
          {"embed_dim", c.embed_dim},
          {"rnn_hidden", c.rnn_hidden},
          {"tf_layers", c.tf_layers},
          {"tf_heads", c.tf_heads},
          {"M", c.plan_length},
          {"scale", to_string(c.scale)},
          {"img_patch", c.img_patch},
          {"vox_patch", c.vox_patch},
          {"grid", to_json(c.grid)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    if (j.contains("modality")) c.modality = parse_modality(j.at("modality").get<std::string>());
    if (j.contains("scale")) c.scale = parse_scale(j.at("scale").get<std::string>());
    read_opt(j, "img_channels", c.img_channels);
    read_opt(j, "vox_channels", c.vox_channels);
    read_opt(j, "embed_dim", c.embed_dim);
    read_opt(j, "rnn_hidden", c.rnn_hidden);
    read_opt(j, "tf_layers", c.tf_layers);
    read_opt(j, "tf_heads", c.tf_heads);
    read_opt(j, "M", c.plan_length);
    read_opt(j, "img_patch", c.img_patch);
    read_opt(j, "vox_patch", c.vox_patch);
    if (j.contains("grid")) c.grid = grid_spec_from_json(j.at("grid"));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  json inventory = json::array();
  std::uint64_t offset = 0;
  for (const auto& e : ckpt.params.entries()) {
    inventory.push_back({{"name", e.name}, {"shape", e.value.shape}, {"offset", offset}});
    offset += e.value.size() * 8;
  }
  json header = {{"version", kCheckpointVersion},
                 {"config", to_json(ckpt.config)},
                 {"meta", {{"seed", ckpt.meta.seed}, {"epoch", ckpt.meta.epoch}, {"loss", ckpt.meta.loss}}},
                 {"tensors", inventory},
                 {"data_bytes", offset},
                 {"dtype", "float64-le"}};

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot write checkpoint " + path.string());
  out << kMagic << ' ' << kCheckpointVersion << '\n' << header.dump() << '\n';
  std::vector<std::uint64_t> buf;
  for (const auto& e : ckpt.params.entries()) {
    buf.resize(e.value.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = le64(std::bit_cast<std::uint64_t>(e.value.data[i]));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
  }
  if (!out) throw StorageError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingPrerequisite("checkpoint not found: " + path.string());
  std::string magic_line, header_line;
  std::getline(in, magic_line);
  if (magic_line != std::string(kMagic) + " " + std::to_string(kCheckpointVersion))
    throw FormatError(path.filename().string() + ": not a version " + std::to_string(kCheckpointVersion) + " checkpoint");
  std::getline(in, header_line);

  Checkpoint ck;
  json header;
  try {
    header = json::parse(header_line);
    ck.config = model_config_from_json(header.at("config"));
    const auto& meta = header.at("meta");
    ck.meta.seed = meta.at("seed").get<std::uint64_t>();
    ck.meta.epoch = meta.at("epoch").get<int>();
    ck.meta.loss = meta.at("loss").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(path.filename().string() + ": bad header: " + e.what());
  }

  const std::streampos data_start = in.tellg();
  std::vector<std::uint64_t> buf;
  for (const auto& t : header.at("tensors")) {
    ad::Tensor value(t.at("shape").get<std::vector<int>>());
    in.seekg(data_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    buf.resize(value.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
    if (!in) throw FormatError(path.filename().string() + ": truncated tensor " + t.at("name").get<std::string>());
    for (std::size_t i = 0; i < buf.size(); ++i) value.data[i] = std::bit_cast<double>(le64(buf[i]));
    ck.params.add(t.at("name").get<std::string>(), std::move(value));
  }

  // The stored inventory must be exactly what the stored config builds.
  const ModelParams expected = init_params(ck.config, 0);
  if (expected.size() != ck.params.size())
    throw FormatError(path.filename().string() + ": parameter inventory does not match its config");
  for (const auto& e : expected.entries())
    if (!ck.params.contains(e.name) || ck.params.get(e.name).shape != e.value.shape)
      throw FormatError(path.filename().string() + ": parameter " + e.name + " missing or misshapen");
  return ck;
}

}  // namespace socnav
