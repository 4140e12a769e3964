#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stcast/adam.hpp"
#include "stcast/error.hpp"
#include "stcast/model.hpp"

namespace stcast::nn {

// Container layout, all integers little-endian:
//   magic[4] | u32 version | u32 metadata length | metadata (UTF-8 JSON) | payload
// Metadata offsets are relative to the start of the payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 4> kFloatMagic = {'S', 'T', 'R', 'N'};
inline constexpr std::array<char, 4> kTernaryMagic = {'S', 'T', 'R', 'T'};

using Bytes = std::vector<std::uint8_t>;

namespace ckpt {

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

inline void put_f32(Bytes& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

inline float get_f32(std::span<const std::uint8_t> in, std::size_t off) {
  return std::bit_cast<float>(get_u32(in, off));
}

// Value after a round trip through 32-bit storage.
inline double storage_round(double v) { return static_cast<double>(static_cast<float>(v)); }

struct Container {
  nlohmann::json meta;
  std::span<const std::uint8_t> payload;
  std::size_t payload_offset = 0;
};

inline Bytes encode(const std::array<char, 4>& magic, const nlohmann::json& meta, const Bytes& payload) {
  Bytes out(magic.begin(), magic.end());
  put_u32(out, kCheckpointVersion);
  const std::string text = meta.dump();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline Container decode(std::span<const std::uint8_t> bytes, const std::array<char, 4>& magic) {
  if (bytes.size() < 4) throw FormatError("checkpoint truncated at offset 0 (no magic)");
  if (!std::equal(magic.begin(), magic.end(), bytes.begin()))
    throw FormatError("checkpoint: bad magic at offset 0, expected '" +
                      std::string(magic.begin(), magic.end()) + "'");
  if (bytes.size() < 12) throw FormatError("checkpoint truncated at offset " + std::to_string(bytes.size()) + " (header)");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " at offset 4");
  const std::uint32_t len = get_u32(bytes, 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(len))
    throw FormatError("checkpoint truncated at offset " + std::to_string(bytes.size()) +
                      " (metadata block needs " + std::to_string(len) + " bytes from offset 12)");
  Container c;
  try {
    c.meta = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed metadata at offset 12: ") + e.what());
  }
  c.payload_offset = 12 + len;
  c.payload = bytes.subspan(c.payload_offset);
  return c;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

// Appends a tensor as f32 and its manifest entry.
inline void append_f32(nlohmann::json& manifest, Bytes& payload, const std::string& name, const Tensor& t) {
  manifest.push_back({{"name", name}, {"shape", t.shape}, {"dtype", "f32"},
                      {"offset", payload.size()}, {"nbytes", 4 * t.size()}});
  for (double v : t.data) put_f32(payload, v);
}

struct Entry {
  std::string name;
  Shape shape;
  std::string dtype;
  std::size_t offset;
  std::size_t nbytes;
};

inline std::map<std::string, Entry> read_manifest(const Container& c) {
  std::map<std::string, Entry> out;
  try {
    for (const auto& e : c.meta.at("tensors")) {
      Entry en{e.at("name").get<std::string>(), e.at("shape").get<Shape>(),
               e.at("dtype").get<std::string>(), e.at("offset").get<std::size_t>(),
               e.at("nbytes").get<std::size_t>()};
      if (en.offset + en.nbytes > c.payload.size())
        throw FormatError("checkpoint truncated: tensor '" + en.name + "' spans to offset " +
                          std::to_string(c.payload_offset + en.offset + en.nbytes) + ", file ends at " +
                          std::to_string(c.payload_offset + c.payload.size()));
      if (!out.emplace(en.name, en).second) throw FormatError("checkpoint: duplicate tensor '" + en.name + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed tensor manifest: ") + e.what());
  }
  return out;
}

inline void read_f32_into(const Container& c, const Entry& e, Tensor& dst) {
  if (e.dtype != "f32") throw FormatError("checkpoint: tensor '" + e.name + "' has dtype " + e.dtype + ", expected f32");
  if (e.shape != dst.shape)
    throw FormatError("checkpoint: tensor '" + e.name + "' has shape " + shape_string(e.shape) +
                      ", model expects " + shape_string(dst.shape));
  if (e.nbytes != 4 * dst.size())
    throw FormatError("checkpoint: tensor '" + e.name + "' byte count mismatch at offset " +
                      std::to_string(c.payload_offset + e.offset));
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] = get_f32(c.payload, e.offset + 4 * i);
}

}  // namespace ckpt

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return {{"variant", std::string(to_string(cfg.variant))},
          {"filters", cfg.filters},
          {"residual_units", cfg.residual_units},
          {"height", cfg.height},
          {"width", cfg.width},
          {"lags_close", cfg.lags[kCloseness]},
          {"lags_period", cfg.lags[kPeriod]},
          {"lags_trend", cfg.lags[kTrend]},
          {"external_width", cfg.external_width},
          {"external_hidden", cfg.external_hidden},
          {"batch_norm", cfg.batch_norm},
          {"bn_momentum", cfg.bn_momentum}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg;
    cfg.variant = variant_from_string(j.at("variant").get<std::string>());
    cfg.filters = j.at("filters").get<std::size_t>();
    cfg.residual_units = j.at("residual_units").get<std::size_t>();
    cfg.height = j.at("height").get<std::size_t>();
    cfg.width = j.at("width").get<std::size_t>();
    cfg.lags[kCloseness] = j.at("lags_close").get<std::vector<std::size_t>>();
    cfg.lags[kPeriod] = j.at("lags_period").get<std::vector<std::size_t>>();
    cfg.lags[kTrend] = j.at("lags_trend").get<std::vector<std::size_t>>();
    cfg.external_width = j.at("external_width").get<std::size_t>();
    cfg.external_hidden = j.at("external_hidden").get<std::size_t>();
    cfg.batch_norm = j.at("batch_norm").get<bool>();
    cfg.bn_momentum = j.at("bn_momentum").get<double>();
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed model config: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid model config: ") + e.what());
  }
}

using Extras = std::map<std::string, std::string>;

struct Checkpoint {
  Model model;
  std::optional<Adam> adam;
  Extras extra;
};

inline Bytes serialize_checkpoint(const Model& model, const Adam* adam = nullptr, const Extras& extra = {}) {
  nlohmann::json meta;
  meta["model_config"] = config_to_json(model.config);
  meta["extra"] = extra;
  nlohmann::json manifest = nlohmann::json::array();
  Bytes payload;
  for (const auto& p : model.params) ckpt::append_f32(manifest, payload, p.name, p.value);
  for (const auto& b : model.buffers) ckpt::append_f32(manifest, payload, b.name, b.value);
  if (adam) {
    meta["adam"] = {{"step", adam->step}, {"beta1", adam->beta1}, {"beta2", adam->beta2}, {"eps", adam->eps}};
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      ckpt::append_f32(manifest, payload, "adam.m/" + model.params[i].name, adam->m[i]);
      ckpt::append_f32(manifest, payload, "adam.v/" + model.params[i].name, adam->v[i]);
    }
  }
  meta["tensors"] = std::move(manifest);
  return ckpt::encode(kFloatMagic, meta, payload);
}

inline Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto c = ckpt::decode(bytes, kFloatMagic);
  const auto manifest = ckpt::read_manifest(c);
  Checkpoint out;
  out.model = make_model_layout(config_from_json(c.meta.at("model_config")));
  auto need = [&](const std::string& name) -> const ckpt::Entry& {
    auto it = manifest.find(name);
    if (it == manifest.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    return it->second;
  };
  for (auto& p : out.model.params) ckpt::read_f32_into(c, need(p.name), p.value);
  for (auto& b : out.model.buffers) ckpt::read_f32_into(c, need(b.name), b.value);
  if (c.meta.contains("adam")) {
    Adam adam(out.model);
    const auto& a = c.meta["adam"];
    adam.step = a.at("step").get<std::uint64_t>();
    adam.beta1 = a.at("beta1").get<double>();
    adam.beta2 = a.at("beta2").get<double>();
    adam.eps = a.at("eps").get<double>();
    for (std::size_t i = 0; i < out.model.params.size(); ++i) {
      ckpt::read_f32_into(c, need("adam.m/" + out.model.params[i].name), adam.m[i]);
      ckpt::read_f32_into(c, need("adam.v/" + out.model.params[i].name), adam.v[i]);
    }
    out.adam = std::move(adam);
  }
  if (c.meta.contains("extra")) out.extra = c.meta["extra"].get<Extras>();
  return out;
}

inline void save_checkpoint(const Model& model, const std::filesystem::path& path,
                            const Adam* adam = nullptr, const Extras& extra = {}) {
  ckpt::write_file(path, serialize_checkpoint(model, adam, extra));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = ckpt::read_file(path);
  return parse_checkpoint(bytes);
}

// Rounds every stored quantity to 32-bit precision in place, matching what a
// save/load cycle yields.
inline void round_to_storage(Model& model, Adam* adam = nullptr) {
  for (auto& p : model.params)
    for (double& v : p.value.data) v = ckpt::storage_round(v);
  for (auto& b : model.buffers)
    for (double& v : b.value.data) v = ckpt::storage_round(v);
  if (adam) {
    for (auto& t : adam->m)
      for (double& v : t.data) v = ckpt::storage_round(v);
    for (auto& t : adam->v)
      for (double& v : t.data) v = ckpt::storage_round(v);
  }
}

}  // namespace stcast::nn
