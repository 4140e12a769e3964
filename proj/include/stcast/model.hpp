#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "stcast/error.hpp"
#include "stcast/ingest.hpp"
#include "stcast/layers.hpp"
#include "stcast/tensor.hpp"

namespace stcast::nn {

enum class Variant { conv3x3, pointwise };

inline std::string_view to_string(Variant v) { return v == Variant::conv3x3 ? "conv3x3" : "pointwise"; }

inline Variant variant_from_string(std::string_view s) {
  if (s == "conv3x3") return Variant::conv3x3;
  if (s == "pointwise") return Variant::pointwise;
  throw ConfigError("unknown model variant '" + std::string(s) + "'");
}

enum Branch : std::size_t { kCloseness = 0, kPeriod = 1, kTrend = 2, kBranches = 3 };

inline constexpr std::array<std::string_view, kBranches> kBranchNames = {"close", "period", "trend"};

struct ModelConfig {
  Variant variant = Variant::conv3x3;
  std::size_t filters = 64;
  std::size_t residual_units = 6;
  std::size_t height = 31;
  std::size_t width = 31;
  std::array<std::vector<std::size_t>, kBranches> lags = {
      std::vector<std::size_t>{1, 2, 3}, std::vector<std::size_t>{24, 48, 72},
      std::vector<std::size_t>{168, 336, 504}};
  std::size_t external_width = ingest::kFeatureWidth;
  std::size_t external_hidden = 10;
  bool batch_norm = false;
  double bn_momentum = 0.1;

  std::size_t kernel() const { return variant == Variant::conv3x3 ? 3 : 1; }
  std::size_t frame_size() const { return height * width; }
  std::size_t max_lag() const {
    std::size_t m = 0;
    for (const auto& set : lags)
      for (auto l : set) m = std::max(m, l);
    return m;
  }
  void validate() const {
    if (filters < 1 || residual_units < 1) throw ConfigError("model: filters and units must be >= 1");
    if (height < 1 || width < 1) throw ConfigError("model: grid must be non-empty");
    for (std::size_t b = 0; b < kBranches; ++b) {
      if (lags[b].empty())
        throw ConfigError("model: lag set '" + std::string(kBranchNames[b]) + "' is empty");
      for (auto l : lags[b])
        if (l == 0) throw ConfigError("model: lags must be strictly positive");
    }
    if (external_width < 1 || external_hidden < 1) throw ConfigError("model: external head widths");
  }
  bool operator==(const ModelConfig&) const = default;
};

enum class ParamKind { weight, bias, fusion, bn_scale, bn_shift };

struct Parameter {
  std::string name;
  ParamKind kind;
  Tensor value;
  Tensor grad;
  // Convolution and dense kernels; everything else stays floating point under
  // ternarization.
  bool ternarizable() const { return kind == ParamKind::weight; }
};

// Non-trainable state (batch-norm running statistics).
struct Buffer {
  std::string name;
  Tensor value;
};

struct LinearRef {
  std::size_t weight;
  std::size_t bias;
};

struct NormRef {
  std::size_t gamma, beta;          // parameter indices
  std::size_t running_mean, running_var;  // buffer indices
};

struct UnitRef {
  std::optional<NormRef> norm1, norm2;
  LinearRef conv1, conv2;
};

struct BranchRef {
  LinearRef conv_in;
  std::vector<UnitRef> units;
  LinearRef conv_out;
  std::size_t fusion;
};

// Closeness / period / trend residual stacks fused by per-cell matrices, an
// external-feature head, and a tanh output.
struct Model {
  ModelConfig config;
  std::vector<Parameter> params;
  std::vector<Buffer> buffers;
  std::array<BranchRef, kBranches> branches;
  LinearRef ext_hidden{};
  LinearRef ext_out{};

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }
  void zero_grad() {
    for (auto& p : params) p.grad.fill(0.0);
  }
  std::optional<std::size_t> find_param(std::string_view name) const {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].name == name) return i;
    return std::nullopt;
  }
  std::optional<std::size_t> find_buffer(std::string_view name) const {
    for (std::size_t i = 0; i < buffers.size(); ++i)
      if (buffers[i].name == name) return i;
    return std::nullopt;
  }
};

namespace detail {

inline std::size_t add_param(Model& m, std::string name, ParamKind kind, Shape shape,
                             double fill = 0.0) {
  Tensor t(std::move(shape), fill);
  m.params.push_back({std::move(name), kind, t, Tensor(t.shape)});
  return m.params.size() - 1;
}

inline LinearRef add_conv(Model& m, const std::string& name, std::size_t cin, std::size_t cout,
                          std::size_t k) {
  return {add_param(m, name + ".w", ParamKind::weight, {cout, cin, k, k}),
          add_param(m, name + ".b", ParamKind::bias, {cout})};
}

inline NormRef add_norm(Model& m, const std::string& name, std::size_t channels) {
  NormRef r{};
  r.gamma = add_param(m, name + ".gamma", ParamKind::bn_scale, {channels}, 1.0);
  r.beta = add_param(m, name + ".beta", ParamKind::bn_shift, {channels});
  m.buffers.push_back({name + ".running_mean", Tensor({channels}, 0.0)});
  r.running_mean = m.buffers.size() - 1;
  m.buffers.push_back({name + ".running_var", Tensor({channels}, 1.0)});
  r.running_var = m.buffers.size() - 1;
  return r;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace detail

// Allocates every tensor of the architecture, zero-valued (γ = 1 for batch
// norm). The layout is a pure function of the config.
inline Model make_model_layout(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.config = cfg;
  const std::size_t f = cfg.filters, k = cfg.kernel();
  for (std::size_t b = 0; b < kBranches; ++b) {
    const std::string prefix(kBranchNames[b]);
    BranchRef br;
    br.conv_in = detail::add_conv(m, prefix + ".conv_in", cfg.lags[b].size(), f, k);
    for (std::size_t u = 0; u < cfg.residual_units; ++u) {
      const std::string up = prefix + ".unit" + std::to_string(u);
      UnitRef ur{};
      if (cfg.batch_norm) ur.norm1 = detail::add_norm(m, up + ".bn1", f);
      ur.conv1 = detail::add_conv(m, up + ".conv1", f, f, k);
      if (cfg.batch_norm) ur.norm2 = detail::add_norm(m, up + ".bn2", f);
      ur.conv2 = detail::add_conv(m, up + ".conv2", f, f, k);
      br.units.push_back(ur);
    }
    br.conv_out = detail::add_conv(m, prefix + ".conv_out", f, 1, k);
    br.fusion = detail::add_param(m, "fusion." + prefix, ParamKind::fusion, {cfg.height, cfg.width});
    m.branches[b] = br;
  }
  m.ext_hidden = {detail::add_param(m, "ext.dense1.w", ParamKind::weight,
                                    {cfg.external_hidden, cfg.external_width}),
                  detail::add_param(m, "ext.dense1.b", ParamKind::bias, {cfg.external_hidden})};
  m.ext_out = {detail::add_param(m, "ext.dense2.w", ParamKind::weight,
                                 {cfg.frame_size(), cfg.external_hidden}),
               detail::add_param(m, "ext.dense2.b", ParamKind::bias, {cfg.frame_size()})};
  return m;
}

// Glorot-uniform weights from a per-tensor stream derived from `seed`, zero
// biases, fusion matrices 1/3.
inline Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model m = make_model_layout(cfg);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    auto& p = m.params[i];
    if (p.kind == ParamKind::fusion) {
      p.value.fill(1.0 / 3.0);
    } else if (p.kind == ParamKind::weight) {
      double fan_in, fan_out;
      if (p.value.rank() == 4) {
        const double rf = static_cast<double>(p.value.dim(2) * p.value.dim(3));
        fan_in = static_cast<double>(p.value.dim(1)) * rf;
        fan_out = static_cast<double>(p.value.dim(0)) * rf;
      } else {
        fan_in = static_cast<double>(p.value.dim(1));
        fan_out = static_cast<double>(p.value.dim(0));
      }
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::mt19937_64 rng(detail::splitmix64(seed ^ detail::splitmix64(i + 1)));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& v : p.value.data) v = dist(rng);
    }
  }
  return m;
}

// One minibatch: stacked lag frames per branch (N×lags×H×W), external
// features (N×E) and targets (N×H×W, may be empty for inference).
struct Batch {
  std::array<Tensor, kBranches> inputs;
  Tensor external;
  Tensor target;
  std::size_t size() const { return external.rank() ? external.dim(0) : 0; }
};

struct UnitCache {
  Tensor x, pre1, act1, conv1, pre2, act2;
  BatchNormCache norm1, norm2;
};

struct BranchCache {
  Tensor input, hidden_in;
  std::vector<UnitCache> units;
  Tensor pre_out, act_out, out;
};

struct ForwardCache {
  std::array<BranchCache, kBranches> branches;
  Tensor ext_in, ext_pre, ext_act, ext_out;
  Tensor output;  // N×H×W after tanh
  bool training = false;
};

namespace detail {

inline Tensor unit_forward(const Model& m, const UnitRef& u, const Tensor& x, bool training,
                           UnitCache& c) {
  const auto& P = m.params;
  c.x = x;
  c.pre1 = u.norm1 ? batchnorm_forward(x, P[u.norm1->gamma].value, P[u.norm1->beta].value,
                                       m.buffers[u.norm1->running_mean].value,
                                       m.buffers[u.norm1->running_var].value, training, c.norm1)
                   : x;
  c.act1 = relu_forward(c.pre1);
  c.conv1 = conv2d_forward(c.act1, P[u.conv1.weight].value, P[u.conv1.bias].value);
  c.pre2 = u.norm2 ? batchnorm_forward(c.conv1, P[u.norm2->gamma].value, P[u.norm2->beta].value,
                                       m.buffers[u.norm2->running_mean].value,
                                       m.buffers[u.norm2->running_var].value, training, c.norm2)
                   : c.conv1;
  c.act2 = relu_forward(c.pre2);
  Tensor y = conv2d_forward(c.act2, P[u.conv2.weight].value, P[u.conv2.bias].value);
  add_inplace(y, x);
  return y;
}

inline Tensor unit_backward(Model& m, const UnitRef& u, const UnitCache& c, const Tensor& dy) {
  auto& P = m.params;
  Tensor dact2 = conv2d_backward(c.act2, P[u.conv2.weight].value, dy, P[u.conv2.weight].grad,
                                 P[u.conv2.bias].grad);
  Tensor dpre2 = relu_backward(c.pre2, dact2);
  Tensor dconv1 = u.norm2 ? batchnorm_backward(P[u.norm2->gamma].value, c.norm2, dpre2,
                                               P[u.norm2->gamma].grad, P[u.norm2->beta].grad)
                          : std::move(dpre2);
  Tensor dact1 = conv2d_backward(c.act1, P[u.conv1.weight].value, dconv1, P[u.conv1.weight].grad,
                                 P[u.conv1.bias].grad);
  Tensor dpre1 = relu_backward(c.pre1, dact1);
  Tensor dx = u.norm1 ? batchnorm_backward(P[u.norm1->gamma].value, c.norm1, dpre1,
                                           P[u.norm1->gamma].grad, P[u.norm1->beta].grad)
                      : std::move(dpre1);
  add_inplace(dx, dy);
  return dx;
}

}  // namespace detail

// Pre-activation residual unit x + Conv(ReLU(Conv(ReLU(x)))), standalone.
inline Tensor residual_unit(const Model& m, const UnitRef& u, const Tensor& x, bool training,
                            UnitCache& cache) {
  if (x.rank() != 4 || x.dim(1) != m.params[u.conv1.weight].value.dim(1))
    throw ShapeError("residual unit: channel mismatch");
  return detail::unit_forward(m, u, x, training, cache);
}

inline Tensor residual_unit_backward(Model& m, const UnitRef& u, const UnitCache& cache,
                                     const Tensor& dy) {
  return detail::unit_backward(m, u, cache, dy);
}

inline void check_batch(const Model& m, const Batch& b) {
  const auto& cfg = m.config;
  const std::size_t n = b.size();
  if (n == 0) throw ShapeError("forward: empty batch");
  for (std::size_t br = 0; br < kBranches; ++br)
    require_shape(b.inputs[br], {n, cfg.lags[br].size(), cfg.height, cfg.width},
                  "forward branch input");
  require_shape(b.external, {n, cfg.external_width}, "forward external features");
}

// Returns N×H×W predictions in the scaled domain.
inline const Tensor& forward(const Model& m, const Batch& batch, bool training,
                             ForwardCache& cache) {
  check_batch(m, batch);
  const auto& P = m.params;
  const auto& cfg = m.config;
  const std::size_t n = batch.size(), hw = cfg.frame_size();
  cache.training = training;
  Tensor pre({n, cfg.height, cfg.width});
  for (std::size_t b = 0; b < kBranches; ++b) {
    const auto& br = m.branches[b];
    auto& bc = cache.branches[b];
    bc.input = batch.inputs[b];
    bc.hidden_in = conv2d_forward(bc.input, P[br.conv_in.weight].value, P[br.conv_in.bias].value);
    bc.units.resize(br.units.size());
    Tensor h = bc.hidden_in;
    for (std::size_t u = 0; u < br.units.size(); ++u)
      h = detail::unit_forward(m, br.units[u], h, training, bc.units[u]);
    bc.pre_out = std::move(h);
    bc.act_out = relu_forward(bc.pre_out);
    bc.out = conv2d_forward(bc.act_out, P[br.conv_out.weight].value, P[br.conv_out.bias].value);
    const Tensor& fusion = P[br.fusion].value;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < hw; ++p) pre.data[i * hw + p] += fusion.data[p] * bc.out.data[i * hw + p];
  }
  cache.ext_in = batch.external;
  cache.ext_pre = dense_forward(cache.ext_in, P[m.ext_hidden.weight].value, P[m.ext_hidden.bias].value);
  cache.ext_act = relu_forward(cache.ext_pre);
  cache.ext_out = dense_forward(cache.ext_act, P[m.ext_out.weight].value, P[m.ext_out.bias].value);
  for (std::size_t i = 0; i < pre.size(); ++i) pre.data[i] += cache.ext_out.data[i];
  cache.output = tanh_forward(pre);
  return cache.output;
}

inline Tensor predict_batch(const Model& m, const Batch& batch) {
  ForwardCache cache;
  forward(m, batch, false, cache);
  return std::move(cache.output);
}

// Accumulates parameter gradients of a scalar loss given dL/d(output).
inline void backward(Model& m, const ForwardCache& cache, const Tensor& doutput) {
  auto& P = m.params;
  const auto& cfg = m.config;
  require_shape(doutput, cache.output.shape, "backward doutput");
  const std::size_t n = doutput.dim(0), hw = cfg.frame_size();
  Tensor dpre = tanh_backward(cache.output, doutput);
  for (std::size_t b = 0; b < kBranches; ++b) {
    const auto& br = m.branches[b];
    const auto& bc = cache.branches[b];
    const Tensor& fusion = P[br.fusion].value;
    Tensor& dfusion = P[br.fusion].grad;
    Tensor dout({n, 1, cfg.height, cfg.width});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < hw; ++p) {
        const double g = dpre.data[i * hw + p];
        dfusion.data[p] += g * bc.out.data[i * hw + p];
        dout.data[i * hw + p] = g * fusion.data[p];
      }
    Tensor dact = conv2d_backward(bc.act_out, P[br.conv_out.weight].value, dout,
                                  P[br.conv_out.weight].grad, P[br.conv_out.bias].grad);
    Tensor dh = relu_backward(bc.pre_out, dact);
    for (std::size_t u = br.units.size(); u-- > 0;)
      dh = detail::unit_backward(m, br.units[u], bc.units[u], dh);
    conv2d_backward(bc.input, P[br.conv_in.weight].value, dh, P[br.conv_in.weight].grad,
                    P[br.conv_in.bias].grad, false);
  }
  Tensor dext({n, hw});
  std::copy(dpre.data.begin(), dpre.data.end(), dext.data.begin());
  Tensor dact = dense_backward(cache.ext_act, P[m.ext_out.weight].value, dext,
                               P[m.ext_out.weight].grad, P[m.ext_out.bias].grad);
  Tensor dh = relu_backward(cache.ext_pre, dact);
  dense_backward(cache.ext_in, P[m.ext_hidden.weight].value,
                 dh, P[m.ext_hidden.weight].grad, P[m.ext_hidden.bias].grad, false);
}

inline double l2_penalty(const Model& m) {
  double s = 0;
  for (const auto& p : m.params)
    if (p.kind == ParamKind::weight)
      for (double v : p.value.data) s += v * v;
  return s;
}

// Mean squared error over all predicted cells plus l2 · Σ‖kernel‖².
// Fills parameter gradients (zeroed first) and returns the objective.
inline double loss_and_grad(Model& m, const Batch& batch, bool training, double l2,
                            ForwardCache& cache) {
  const Tensor& y = forward(m, batch, training, cache);
  require_shape(batch.target, y.shape, "loss target");
  const double count = static_cast<double>(y.size());
  Tensor dy(y.shape);
  double mse = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y.data[i] - batch.target.data[i];
    mse += r * r;
    dy.data[i] = 2.0 * r / count;
  }
  mse /= count;
  m.zero_grad();
  backward(m, cache, dy);
  if (l2 > 0.0)
    for (auto& p : m.params)
      if (p.kind == ParamKind::weight)
        for (std::size_t i = 0; i < p.value.size(); ++i) p.grad.data[i] += 2.0 * l2 * p.value.data[i];
  return mse + l2 * l2_penalty(m);
}

inline double loss_only(const Model& m, const Batch& batch, bool training, double l2,
                        ForwardCache& cache) {
  const Tensor& y = forward(m, batch, training, cache);
  require_shape(batch.target, y.shape, "loss target");
  double mse = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y.data[i] - batch.target.data[i];
    mse += r * r;
  }
  return mse / static_cast<double>(y.size()) + (l2 > 0.0 ? l2 * l2_penalty(m) : 0.0);
}

inline double loss_only(const Model& m, const Batch& batch, bool training, double l2) {
  ForwardCache cache;
  return loss_only(m, batch, training, l2, cache);
}

// Folds the batch statistics of a training-mode pass into the running
// estimates used at inference.
inline void update_running_stats(Model& m, const ForwardCache& cache) {
  if (!cache.training) return;
  const double mom = m.config.bn_momentum;
  auto fold = [&](const std::optional<NormRef>& ref, const BatchNormCache& c) {
    if (!ref) return;
    auto& mean = m.buffers[ref->running_mean].value;
    auto& var = m.buffers[ref->running_var].value;
    for (std::size_t ch = 0; ch < mean.size(); ++ch) {
      mean.data[ch] = (1.0 - mom) * mean.data[ch] + mom * c.mean[ch];
      var.data[ch] = (1.0 - mom) * var.data[ch] + mom * c.var[ch];
    }
  };
  for (std::size_t b = 0; b < kBranches; ++b)
    for (std::size_t u = 0; u < m.branches[b].units.size(); ++u) {
      fold(m.branches[b].units[u].norm1, cache.branches[b].units[u].norm1);
      fold(m.branches[b].units[u].norm2, cache.branches[b].units[u].norm2);
    }
}

}  // namespace stcast::nn
