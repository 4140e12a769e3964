#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "stcast/adam.hpp"
#include "stcast/checkpoint.hpp"
#include "stcast/error.hpp"
#include "stcast/model.hpp"
#include "stcast/train.hpp"

namespace stcast::ternary {

// W ≈ alpha · trits with trits in {−1, 0, +1}.
struct TernaryTensor {
  double alpha = 0.0;
  std::vector<std::int8_t> trits;
  std::size_t nonzeros = 0;

  std::vector<double> dense() const {
    std::vector<double> out(trits.size());
    for (std::size_t i = 0; i < trits.size(); ++i) out[i] = alpha * trits[i];
    return out;
  }
  bool operator==(const TernaryTensor&) const = default;
};

// ‖alpha·T − w‖².
inline double objective(std::span<const double> w, const TernaryTensor& t) {
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double r = t.alpha * t.trits[i] - w[i];
    s += r * r;
  }
  return s;
}

// Exact Euclidean projection onto {alpha·T : alpha > 0, T ∈ {−1,0,1}ⁿ}.
// Sort magnitudes descending (lower index first on ties), take prefix sums
// s_k, keep the k maximizing s_k²/k (smallest such k), alpha = s_k/k.
// An all-zero input maps to alpha = 0, T = 0.
inline TernaryTensor project(std::span<const double> w) {
  if (w.empty()) throw DataError("ternary projection of an empty vector");
  for (double v : w)
    if (!std::isfinite(v)) throw NumericError("ternary projection of a non-finite vector");
  const std::size_t n = w.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(w[a]) > std::abs(w[b]); });
  double prefix = 0, best_score = -1, best_sum = 0;
  std::size_t best_k = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    prefix += std::abs(w[order[k - 1]]);
    // s/sqrt(k) orders k like s²/k but does not underflow for tiny weights.
    const double score = prefix / std::sqrt(static_cast<double>(k));
    if (score > best_score) {
      best_score = score;
      best_sum = prefix;
      best_k = k;
    }
  }
  TernaryTensor t;
  t.trits.assign(n, 0);
  if (best_sum == 0.0) return t;
  t.alpha = best_sum / static_cast<double>(best_k);
  t.nonzeros = best_k;
  for (std::size_t i = 0; i < best_k; ++i) t.trits[order[i]] = w[order[i]] > 0 ? 1 : -1;
  return t;
}

inline constexpr std::size_t kOracleMaxSize = 12;

// Exhaustive minimizer over all 3ⁿ trit vectors with per-vector optimal
// alpha = max(0, ⟨T, w⟩ / ‖T‖²); ties keep the lexicographically first T
// (digit order −1 < 0 < +1, first coordinate most significant).
inline TernaryTensor project_oracle(std::span<const double> w) {
  const std::size_t n = w.size();
  if (n == 0) throw DataError("ternary oracle: empty vector");
  if (n > kOracleMaxSize) throw ShapeError("ternary oracle: n must be <= 12");
  double norm2 = 0;
  for (double v : w) norm2 += v * v;
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= 3;
  std::vector<std::int8_t> t(n);
  TernaryTensor best;
  double best_obj = 0;
  bool have = false;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = n; i-- > 0;) {
      t[i] = static_cast<std::int8_t>(static_cast<int>(c % 3) - 1);
      c /= 3;
    }
    double dot = 0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      dot += t[i] * w[i];
      k += t[i] != 0;
    }
    const double alpha = k ? std::max(0.0, dot / static_cast<double>(k)) : 0.0;
    const double obj = norm2 - 2.0 * alpha * dot + static_cast<double>(k) * alpha * alpha;
    if (!have || obj < best_obj) {
      have = true;
      best_obj = obj;
      best.alpha = alpha;
      best.trits = t;
      best.nonzeros = k;
    }
  }
  if (best.alpha == 0.0) {
    best.trits.assign(n, 0);
    best.nonzeros = 0;
  }
  return best;
}

// 2 bits per trit (00 → 0, 01 → +1, 10 → −1), four per byte starting at the
// low bits, last byte zero-padded.
inline std::vector<std::uint8_t> pack_trits(std::span<const std::int8_t> trits) {
  std::vector<std::uint8_t> out((trits.size() + 3) / 4, 0);
  for (std::size_t i = 0; i < trits.size(); ++i) {
    std::uint8_t code;
    switch (trits[i]) {
      case 0: code = 0b00; break;
      case 1: code = 0b01; break;
      case -1: code = 0b10; break;
      default: throw DataError("pack_trits: value outside {-1, 0, 1} at index " + std::to_string(i));
    }
    out[i / 4] = static_cast<std::uint8_t>(out[i / 4] | (code << (2 * (i % 4))));
  }
  return out;
}

inline std::vector<std::int8_t> unpack_trits(std::span<const std::uint8_t> bytes, std::size_t n) {
  if (bytes.size() < (n + 3) / 4)
    throw FormatError("unpack_trits: " + std::to_string(bytes.size()) + " bytes cannot hold " +
                      std::to_string(n) + " trits");
  std::vector<std::int8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned code = (bytes[i / 4] >> (2 * (i % 4))) & 0b11u;
    if (code == 0b11) throw FormatError("unpack_trits: reserved code 11 at trit " + std::to_string(i));
    out[i] = code == 0b01 ? 1 : (code == 0b10 ? -1 : 0);
  }
  return out;
}

inline std::size_t ternary_payload_bytes(std::size_t n) { return 4 + (n + 3) / 4; }

// Floating-point shadows of every ternarizable tensor alongside their current
// projections; the model holds the projected values.
struct ShadowState {
  std::vector<std::size_t> params;  // model parameter indices
  std::vector<nn::Tensor> shadow;
  std::vector<TernaryTensor> projected;
  std::size_t degenerate_projections = 0;
};

namespace detail {

inline void project_layer(ShadowState& s, nn::Model& model, std::size_t layer) {
  auto t = project(s.shadow[layer].data);
  if (t.nonzeros == 0) ++s.degenerate_projections;
  auto& value = model.params[s.params[layer]].value;
  for (std::size_t i = 0; i < value.size(); ++i) value.data[i] = t.alpha * t.trits[i];
  s.projected[layer] = std::move(t);
}

}  // namespace detail

// Shadows start at the model's current kernels, which are replaced by their
// projections.
inline ShadowState init_shadow(nn::Model& model) {
  ShadowState s;
  for (std::size_t i = 0; i < model.params.size(); ++i)
    if (model.params[i].ternarizable()) {
      s.params.push_back(i);
      s.shadow.push_back(model.params[i].value);
    }
  s.projected.resize(s.params.size());
  for (std::size_t l = 0; l < s.params.size(); ++l) detail::project_layer(s, model, l);
  return s;
}

// One epoch of pseudo-projected ADAM: per minibatch, gradient at the current
// ternary kernels → ADAM step on the shadows → re-projection → gradient at the
// new kernels on the same minibatch → ADAM step on the remaining parameters.
// Batch-norm running statistics follow the second pass. Returns the mean
// objective of the first passes.
inline double train_ternary_epoch(ShadowState& state, nn::Model& model, nn::Adam& adam,
                                  const nn::Dataset& ds, std::span<const std::size_t> ids,
                                  const nn::TrainConfig& tc, std::size_t epoch) {
  std::vector<bool> is_ternary(model.params.size(), false);
  for (auto idx : state.params) is_ternary[idx] = true;
  auto order = nn::shuffled(std::vector<std::size_t>(ids.begin(), ids.end()), tc.seed, epoch);
  double total = 0;
  nn::ForwardCache cache;
  for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
    const std::size_t n = std::min(tc.batch_size, order.size() - start);
    nn::Batch batch = nn::make_batch(model.config, ds, std::span(order).subspan(start, n));
    const double loss = nn::loss_and_grad(model, batch, true, tc.l2, cache);
    if (!std::isfinite(loss)) throw NumericError("ternary training loss became non-finite");
    adam.begin_step();
    for (std::size_t l = 0; l < state.params.size(); ++l)
      adam.update(state.params[l], state.shadow[l].data, model.params[state.params[l]].grad.data,
                  tc.learning_rate);
    for (std::size_t l = 0; l < state.params.size(); ++l) detail::project_layer(state, model, l);
    nn::loss_and_grad(model, batch, true, tc.l2, cache);
    nn::update_running_stats(model, cache);
    for (std::size_t i = 0; i < model.params.size(); ++i)
      if (!is_ternary[i]) adam.update(i, model.params[i].value.data, model.params[i].grad.data, tc.learning_rate);
    total += loss * static_cast<double>(n);
  }
  return order.empty() ? 0.0 : total / static_cast<double>(order.size());
}

// The model exactly as a ternary checkpoint stores it: kernels alpha·T with
// alpha rounded to 32 bits, other tensors rounded to 32 bits.
inline nn::Model export_model(const nn::Model& model, const ShadowState& state) {
  nn::Model out = model;
  nn::round_to_storage(out);
  for (std::size_t l = 0; l < state.params.size(); ++l) {
    const auto& t = state.projected[l];
    const double a = nn::ckpt::storage_round(t.alpha);
    auto& v = out.params[state.params[l]].value;
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = a * t.trits[i];
  }
  return out;
}

inline nn::Bytes serialize_ternary_checkpoint(const nn::Model& model, const ShadowState& state,
                                              const nn::Extras& extra = {}) {
  std::map<std::size_t, std::size_t> layer_of;
  for (std::size_t l = 0; l < state.params.size(); ++l) layer_of[state.params[l]] = l;
  nlohmann::json meta;
  meta["model_config"] = nn::config_to_json(model.config);
  meta["extra"] = extra;
  nlohmann::json manifest = nlohmann::json::array();
  nn::Bytes payload;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& p = model.params[i];
    auto it = layer_of.find(i);
    if (it == layer_of.end()) {
      nn::ckpt::append_f32(manifest, payload, p.name, p.value);
      continue;
    }
    const auto& t = state.projected[it->second];
    const auto packed = pack_trits(t.trits);
    manifest.push_back({{"name", p.name}, {"shape", p.value.shape}, {"dtype", "t2"},
                        {"offset", payload.size()}, {"nbytes", 4 + packed.size()}});
    nn::ckpt::put_f32(payload, t.alpha);
    payload.insert(payload.end(), packed.begin(), packed.end());
  }
  for (const auto& b : model.buffers) nn::ckpt::append_f32(manifest, payload, b.name, b.value);
  meta["tensors"] = std::move(manifest);
  return nn::ckpt::encode(nn::kTernaryMagic, meta, payload);
}

struct TernaryCheckpoint {
  nn::Model model;
  std::map<std::string, TernaryTensor> layers;
  nn::Extras extra;
};

inline TernaryCheckpoint parse_ternary_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto c = nn::ckpt::decode(bytes, nn::kTernaryMagic);
  const auto manifest = nn::ckpt::read_manifest(c);
  TernaryCheckpoint out;
  out.model = nn::make_model_layout(nn::config_from_json(c.meta.at("model_config")));
  auto need = [&](const std::string& name) -> const nn::ckpt::Entry& {
    auto it = manifest.find(name);
    if (it == manifest.end()) throw FormatError("ternary checkpoint: missing tensor '" + name + "'");
    return it->second;
  };
  for (auto& p : out.model.params) {
    const auto& e = need(p.name);
    if (e.dtype != "t2") {
      nn::ckpt::read_f32_into(c, e, p.value);
      continue;
    }
    if (e.shape != p.value.shape)
      throw FormatError("ternary checkpoint: tensor '" + p.name + "' shape mismatch");
    if (e.nbytes != ternary_payload_bytes(p.value.size()))
      throw FormatError("ternary checkpoint: tensor '" + p.name + "' has " + std::to_string(e.nbytes) +
                        " bytes at offset " + std::to_string(c.payload_offset + e.offset));
    TernaryTensor t;
    t.alpha = static_cast<double>(nn::ckpt::get_f32(c.payload, e.offset));
    t.trits = unpack_trits(c.payload.subspan(e.offset + 4, e.nbytes - 4), p.value.size());
    for (auto v : t.trits) t.nonzeros += v != 0;
    if (!(t.alpha >= 0.0) || (t.nonzeros > 0 && !(t.alpha > 0.0)))
      throw FormatError("ternary checkpoint: invalid scale for '" + p.name + "'");
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value.data[i] = t.alpha * t.trits[i];
    out.layers.emplace(p.name, std::move(t));
  }
  for (auto& b : out.model.buffers) nn::ckpt::read_f32_into(c, need(b.name), b.value);
  if (c.meta.contains("extra")) out.extra = c.meta["extra"].get<nn::Extras>();
  return out;
}

inline void save_ternary_checkpoint(const nn::Model& model, const ShadowState& state,
                                    const std::filesystem::path& path, const nn::Extras& extra = {}) {
  nn::ckpt::write_file(path, serialize_ternary_checkpoint(model, state, extra));
}

inline TernaryCheckpoint load_ternary_checkpoint(const std::filesystem::path& path) {
  const auto bytes = nn::ckpt::read_file(path);
  return parse_ternary_checkpoint(bytes);
}

// Per-layer payload sizes of a serialized checkpoint, keyed by tensor name.
inline std::map<std::string, std::size_t> payload_sizes(std::span<const std::uint8_t> bytes) {
  const bool ternary = bytes.size() >= 4 && bytes[3] == 'T';
  const auto c = nn::ckpt::decode(bytes, ternary ? nn::kTernaryMagic : nn::kFloatMagic);
  std::map<std::string, std::size_t> out;
  for (const auto& [name, e] : nn::ckpt::read_manifest(c)) out[name] = e.nbytes;
  return out;
}

}  // namespace stcast::ternary
