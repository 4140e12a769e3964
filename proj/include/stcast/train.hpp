#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stcast/adam.hpp"
#include "stcast/error.hpp"
#include "stcast/grid.hpp"
#include "stcast/ingest.hpp"
#include "stcast/model.hpp"

namespace stcast::nn {

struct TrainConfig {
  double learning_rate = 0.0005;
  std::size_t epochs_main = 200;
  std::size_t epochs_finetune = 50;
  double validation_fraction = 0.2;
  std::size_t batch_size = 32;
  double l2 = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("train: learning rate must be >= 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw ConfigError("train: validation fraction must lie in (0, 1)");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (!(l2 >= 0.0)) throw ConfigError("train: l2 must be >= 0");
  }
};

// Chronological samples over a scaled frame cube: every entry of `targets`
// is a frame offset whose full lag history lies inside the cube.
struct Dataset {
  grid::CrimeCube frames;
  ingest::FeatureTable features;
  std::vector<std::size_t> targets;

  std::size_t size() const { return targets.size(); }
};

// Samples for target offsets in [first, last), skipping offsets whose lag
// history would start before the cube.
inline Dataset make_dataset(const ModelConfig& cfg, grid::CrimeCube frames,
                            ingest::FeatureTable features, std::size_t first, std::size_t last) {
  if (frames.rows != cfg.height || frames.cols != cfg.width)
    throw ShapeError("dataset: frame shape does not match the model grid");
  Dataset ds{std::move(frames), std::move(features), {}};
  last = std::min(last, ds.frames.hours);
  for (std::size_t t = std::max(first, cfg.max_lag()); t < last; ++t) ds.targets.push_back(t);
  return ds;
}

namespace detail {

inline void fill_sample(const ModelConfig& cfg, const grid::CrimeCube& frames,
                        const ingest::FeatureTable& features, std::size_t t, std::size_t slot,
                        Batch& batch) {
  const std::size_t hw = cfg.frame_size();
  for (std::size_t b = 0; b < kBranches; ++b) {
    const auto& lags = cfg.lags[b];
    for (std::size_t c = 0; c < lags.size(); ++c) {
      if (lags[c] > t)
        throw DataError("insufficient history: lag " + std::to_string(lags[c]) + " (" +
                        std::string(kBranchNames[b]) + ") needs " + std::to_string(lags[c]) +
                        " prior frames, have " + std::to_string(t));
      const auto src = frames.frame(t - lags[c]);
      std::copy(src.begin(), src.end(),
                batch.inputs[b].data.begin() + static_cast<std::ptrdiff_t>((slot * lags.size() + c) * hw));
    }
  }
  const auto row = features.at_hour(frames.start_hour + static_cast<EpochHour>(t));
  if (row.size() != cfg.external_width) throw ShapeError("feature width does not match the model");
  std::copy(row.begin(), row.end(),
            batch.external.data.begin() + static_cast<std::ptrdiff_t>(slot * cfg.external_width));
}

inline Batch empty_batch(const ModelConfig& cfg, std::size_t n, bool with_target) {
  Batch b;
  for (std::size_t br = 0; br < kBranches; ++br)
    b.inputs[br] = Tensor({n, cfg.lags[br].size(), cfg.height, cfg.width});
  b.external = Tensor({n, cfg.external_width});
  if (with_target) b.target = Tensor({n, cfg.height, cfg.width});
  return b;
}

}  // namespace detail

// Gathers the samples ds.targets[ids[i]] into one minibatch.
inline Batch make_batch(const ModelConfig& cfg, const Dataset& ds, std::span<const std::size_t> ids) {
  Batch batch = detail::empty_batch(cfg, ids.size(), true);
  const std::size_t hw = cfg.frame_size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t t = ds.targets.at(ids[i]);
    detail::fill_sample(cfg, ds.frames, ds.features, t, i, batch);
    const auto tgt = ds.frames.frame(t);
    std::copy(tgt.begin(), tgt.end(), batch.target.data.begin() + static_cast<std::ptrdiff_t>(i * hw));
  }
  return batch;
}

// Predicts the frame right after `history` (offset history.hours) in the
// scaled domain. Unscaling and the recovery steps belong to the caller.
inline std::vector<double> predict_next(const Model& model, const grid::CrimeCube& history,
                                        const ingest::FeatureTable& features) {
  const auto& cfg = model.config;
  if (history.rows != cfg.height || history.cols != cfg.width)
    throw ShapeError("predict_next: history frame shape does not match the model grid");
  Batch batch = detail::empty_batch(cfg, 1, false);
  detail::fill_sample(cfg, history, features, history.hours, 0, batch);
  Tensor y = predict_batch(model, batch);
  return std::move(y.data);
}

inline std::vector<std::size_t> shuffled(std::vector<std::size_t> ids, std::uint64_t seed,
                                         std::size_t epoch) {
  std::mt19937_64 rng(detail::splitmix64(seed ^ detail::splitmix64(0xE90Cull + epoch)));
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

// One pass over `ids` (indices into ds.targets) in a seed/epoch-determined
// order; returns the sample-weighted mean objective.
inline double run_epoch(Model& model, Adam& adam, const Dataset& ds,
                        std::span<const std::size_t> ids, const TrainConfig& tc, std::size_t epoch) {
  auto order = shuffled(std::vector<std::size_t>(ids.begin(), ids.end()), tc.seed, epoch);
  double total = 0;
  ForwardCache cache;
  for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
    const std::size_t n = std::min(tc.batch_size, order.size() - start);
    Batch batch = make_batch(model.config, ds, std::span(order).subspan(start, n));
    const double loss = loss_and_grad(model, batch, true, tc.l2, cache);
    if (!std::isfinite(loss)) throw NumericError("training loss became non-finite");
    update_running_stats(model, cache);
    adam.begin_step();
    adam.update_all(model, tc.learning_rate);
    total += loss * static_cast<double>(n);
  }
  return order.empty() ? 0.0 : total / static_cast<double>(order.size());
}

// Inference-mode mean squared error over the given samples.
inline double evaluate_mse(const Model& model, const Dataset& ds, std::span<const std::size_t> ids,
                           std::size_t batch_size = 64) {
  double total = 0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < ids.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, ids.size() - start);
    Batch batch = make_batch(model.config, ds, ids.subspan(start, n));
    Tensor y = predict_batch(model, batch);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = y.data[i] - batch.target.data[i];
      total += r * r;
    }
    count += y.size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

struct TrainResult {
  std::vector<double> train_loss;
  std::vector<double> validation_mse;
  std::vector<double> finetune_loss;
  std::size_t best_epoch = 0;
  double best_validation = 0.0;
  Adam adam;
};

// Chronological split (last fraction for validation); main phase keeps the
// best-validation snapshot, then the fine-tune phase runs on all samples from
// that snapshot.
inline TrainResult train(Model& model, const Dataset& ds, const TrainConfig& tc) {
  tc.validate();
  const std::size_t n = ds.size();
  if (n < tc.batch_size || n < 2)
    throw DataError("train: dataset has " + std::to_string(n) +
                    " samples, fewer than one minibatch of " + std::to_string(tc.batch_size));
  auto n_val = static_cast<std::size_t>(std::llround(tc.validation_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const std::span<const std::size_t> train_ids(all.data(), n - n_val);
  const std::span<const std::size_t> val_ids(all.data() + (n - n_val), n_val);

  TrainResult res;
  res.adam = Adam(model);
  Model best = model;
  Adam best_adam = res.adam;
  res.best_validation = evaluate_mse(model, ds, val_ids);
  for (std::size_t e = 0; e < tc.epochs_main; ++e) {
    res.train_loss.push_back(run_epoch(model, res.adam, ds, train_ids, tc, e));
    const double val = evaluate_mse(model, ds, val_ids);
    res.validation_mse.push_back(val);
    if (val < res.best_validation) {
      res.best_validation = val;
      res.best_epoch = e + 1;
      best = model;
      best_adam = res.adam;
    }
  }
  if (tc.epochs_main > 0) {
    model = std::move(best);
    res.adam = std::move(best_adam);
  }
  for (std::size_t e = 0; e < tc.epochs_finetune; ++e)
    res.finetune_loss.push_back(run_epoch(model, res.adam, ds, all, tc, tc.epochs_main + e));
  return res;
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
  std::size_t reduced_steps = 0;  // coordinates checked with a step below epsilon
};

namespace detail {

// Sign pattern of every ReLU input in a forward pass.
inline std::vector<bool> relu_signs(const ForwardCache& c) {
  std::vector<bool> out;
  auto add = [&](const Tensor& t) {
    for (double v : t.data) out.push_back(v > 0.0);
  };
  for (const auto& b : c.branches) {
    for (const auto& u : b.units) {
      add(u.pre1);
      add(u.pre2);
    }
    add(b.pre_out);
  }
  add(c.ext_pre);
  return out;
}

}  // namespace detail

// Central finite differences of the objective against the analytic gradient,
// on every coordinate of small tensors and `per_tensor` evenly spaced ones of
// large tensors. Relative error uses max(|a|, |fd|, floor) as denominator.
// A difference taken across a ReLU kink says nothing about the derivative, so
// when some ReLU input changes sign within ±step the step is divided by 10
// (down to epsilon / 1000) before the coordinate is scored.
inline GradCheckReport grad_check(Model& model, const Batch& batch, double epsilon = 1e-5,
                                  double l2 = 0.0, bool training = true,
                                  std::size_t per_tensor = 200, double floor = 1e-6) {
  ForwardCache cache;
  loss_and_grad(model, batch, training, l2, cache);
  const auto base_signs = detail::relu_signs(cache);
  std::vector<Tensor> analytic;
  for (const auto& p : model.params) analytic.push_back(p.grad);
  GradCheckReport report;
  ForwardCache probe;
  for (std::size_t pi = 0; pi < model.params.size(); ++pi) {
    auto& values = model.params[pi].value.data;
    const std::size_t size = values.size();
    const std::size_t picks = std::min(size, per_tensor);
    for (std::size_t j = 0; j < picks; ++j) {
      const std::size_t idx = size <= per_tensor ? j : j * size / picks;
      const double orig = values[idx];
      double fd = 0.0;
      for (double step = epsilon; step >= epsilon * 1e-3 * 0.5; step /= 10.0) {
        values[idx] = orig + step;
        const double up = loss_only(model, batch, training, l2, probe);
        bool smooth = detail::relu_signs(probe) == base_signs;
        values[idx] = orig - step;
        const double down = loss_only(model, batch, training, l2, probe);
        smooth = smooth && detail::relu_signs(probe) == base_signs;
        values[idx] = orig;
        if (step == epsilon || smooth) fd = (up - down) / (2.0 * step);
        if (smooth) {
          if (step != epsilon) ++report.reduced_steps;
          break;
        }
      }
      const double a = analytic[pi].data[idx];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
      ++report.coordinates;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = model.params[pi].name + "[" + std::to_string(idx) + "]";
      }
    }
  }
  return report;
}

}  // namespace stcast::nn
