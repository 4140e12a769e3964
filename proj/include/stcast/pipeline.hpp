#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "stcast/baselines.hpp"
#include "stcast/error.hpp"
#include "stcast/eval.hpp"
#include "stcast/grid.hpp"
#include "stcast/ingest.hpp"
#include "stcast/model.hpp"
#include "stcast/signal.hpp"
#include "stcast/train.hpp"

namespace stcast::pipeline {

using grid::CrimeCube;
using grid::CubeState;

// Everything the predictor consumes, derived from an hourly count cube whose
// first hour is a midnight. Only the first `train_hours` frames feed the
// scale bound, so the held-out window never leaks into training inputs.
struct Prepared {
  CrimeCube raw;         // H×W counts
  CrimeCube cumulative;  // H×W diurnal running sums
  CrimeCube scaled;      // (2H−1)×(2W−1) scaled cumulative
  ingest::FeatureTable features;
  std::size_t train_hours = 0;
};

// Symmetric bound m = max |training value| so that 0 maps to 0.
inline double scale_bound(const CrimeCube& upsampled_cumulative, std::size_t train_hours) {
  double m = 0;
  const std::size_t n = std::min(train_hours, upsampled_cumulative.hours) * upsampled_cumulative.frame_size();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(upsampled_cumulative.values[i]));
  return m > 0.0 ? m : 1.0;
}

inline Prepared prepare(CrimeCube raw, ingest::FeatureTable features, std::size_t train_hours) {
  if (raw.state != CubeState::raw) throw StateError("prepare: expected a raw count cube");
  if (day_of_hour(raw.start_hour) * kHoursPerDay != raw.start_hour)
    throw DataError("prepare: the cube must start at midnight so daily windows align");
  if (train_hours == 0 || train_hours > raw.hours) throw ConfigError("prepare: training window outside the cube");
  const EpochHour end = raw.start_hour + static_cast<EpochHour>(raw.hours);
  if (features.start_hour > raw.start_hour ||
      features.start_hour + static_cast<EpochHour>(features.hours()) < end)
    throw DataError("prepare: feature table does not cover the cube");
  Prepared p;
  p.cumulative = signal::diurnal_integrate(raw);
  const auto up = signal::diurnal_integrate(signal::spatial_upsample(raw));  // Steps 1–2
  const double m = scale_bound(up, train_hours);
  p.scaled = signal::scale_to_unit(up, -m, m);
  p.raw = std::move(raw);
  p.features = std::move(features);
  p.train_hours = train_hours;
  return p;
}

inline nn::ModelConfig fit_config(nn::ModelConfig cfg, const Prepared& p) {
  cfg.height = p.scaled.rows;
  cfg.width = p.scaled.cols;
  return cfg;
}

inline nn::Dataset training_set(const nn::ModelConfig& cfg, const Prepared& p) {
  return nn::make_dataset(cfg, p.scaled, p.features, 0, p.train_hours);
}

struct Forecast {
  CrimeCube cumulative;  // post-processed, count units, H×W
  CrimeCube raw;         // hourly counts recovered from the cumulative forecast
};

// One-step-ahead forecasts for every hour in [first, last): each target sees
// only frames strictly before it. Network output is unscaled, reduced to the
// original lattice by even-index subsampling, clamped on the cumulative
// signal against the observed previous hour, and
// differenced against that same observation to give hourly counts.
inline Forecast forecast(const nn::Model& model, const Prepared& p, std::size_t first, std::size_t last,
                         std::size_t batch_size = 64) {
  const auto& cfg = model.config;
  if (cfg.height != p.scaled.rows || cfg.width != p.scaled.cols)
    throw ShapeError("forecast: model grid does not match the prepared cube");
  if (first < cfg.max_lag())
    throw DataError("insufficient history: forecasts from hour " + std::to_string(first) + " need " +
                    std::to_string(cfg.max_lag()) + " prior frames");
  last = std::min(last, p.raw.hours);
  if (first >= last) throw DataError("forecast: empty horizon");
  const auto meta = *p.scaled.scale_meta;
  const std::size_t h = p.raw.rows, w = p.raw.cols, hw = h * w;
  const std::size_t n = last - first;
  const EpochHour start = p.raw.start_hour + static_cast<EpochHour>(first);
  Forecast out{CrimeCube(start, n, h, w, CubeState::cumulative), CrimeCube(start, n, h, w, CubeState::raw)};

  nn::Dataset ds{p.scaled, p.features, {}};
  for (std::size_t t = first; t < last; ++t) ds.targets.push_back(t);
  std::vector<std::size_t> ids(ds.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  const std::vector<double> zeros(hw, 0.0);
  for (std::size_t s = 0; s < ids.size(); s += batch_size) {
    const std::size_t m = std::min(batch_size, ids.size() - s);
    auto batch = nn::make_batch(cfg, ds, std::span(ids).subspan(s, m));
    const auto y = nn::predict_batch(model, batch);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t t = ds.targets[s + i];
      std::vector<double> up(y.data.begin() + static_cast<std::ptrdiff_t>(i * cfg.frame_size()),
                             y.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cfg.frame_size()));
      for (double& v : up) v = signal::unscale_value(v, meta.min, meta.max);
      const auto yhat = signal::downsample_frame(up, cfg.height, cfg.width);
      const std::size_t slot = t % signal::kDefaultPeriod;
      const auto prev = slot == 0 ? std::span<const double>(zeros) : p.cumulative.frame(t - 1);
      const auto post = signal::postprocess_prediction(yhat, prev, slot);
      auto cum = out.cumulative.frame(t - first);
      auto raw = out.raw.frame(t - first);
      for (std::size_t c = 0; c < hw; ++c) {
        cum[c] = post[c];
        raw[c] = post[c] - prev[c];
      }
    }
  }
  return out;
}

// Held-out truth over [first, last) in both domains.
inline eval::ForecastRun truth_run(const Prepared& p, std::size_t first, std::size_t last,
                                   eval::Domain domain) {
  const auto& src = domain == eval::Domain::raw ? p.raw : p.cumulative;
  eval::ForecastRun run;
  run.truth = src.slice(first, last - first);
  run.domain = domain;
  return run;
}

inline std::vector<eval::ForecastRun> network_runs(const std::string& name, const Forecast& f,
                                                   const Prepared& p, std::size_t first) {
  const std::size_t last = first + f.raw.hours;
  auto cum = truth_run(p, first, last, eval::Domain::cumulative);
  cum.method = name;
  cum.predictions = f.cumulative;
  auto raw = truth_run(p, first, last, eval::Domain::raw);
  raw.method = name;
  raw.predictions = f.raw;
  return {std::move(cum), std::move(raw)};
}

// ---------------------------------------------------------------------------
// Baselines on the per-cell scalar series, fitted on the training window and
// forecast one step ahead over [first, last) from observed history.

struct BaselineSettings {
  std::vector<std::size_t> knn_candidates{1, 2, 3, 4, 6, 12, 24};
  bool arima = false;
  std::size_t arima_p = 2, arima_d = 0, arima_q = 1;
  std::size_t arima_refit_every = 24;
  std::size_t threads = 1;
};

struct BaselineOutput {
  std::vector<eval::ForecastRun> runs;
  std::size_t knn_k_cumulative = 0;
  std::size_t knn_k_raw = 0;
  std::size_t arima_failures = 0;
};

namespace detail {

template <class Fn>
void for_each_cell(std::size_t cells, std::size_t threads, Fn&& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(cells, 1));
  if (threads == 1) {
    for (std::size_t c = 0; c < cells; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < threads; ++k)
    pool.emplace_back([&, k] {
      for (std::size_t c = k; c < cells; c += threads) fn(c);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline BaselineOutput run_baselines(const Prepared& p, std::size_t first, std::size_t last,
                                    const BaselineSettings& s) {
  last = std::min(last, p.raw.hours);
  if (first < 1 || first >= last) throw DataError("baselines: empty horizon");
  const std::size_t n = last - first, hw = p.raw.frame_size();
  BaselineOutput out;
  for (int d = 0; d < 2; ++d) {
    const auto domain = static_cast<eval::Domain>(d);
    const auto& cube = domain == eval::Domain::raw ? p.raw : p.cumulative;
    const auto train = cube.slice(0, p.train_hours);

    auto ha = truth_run(p, first, last, domain);
    ha.method = "HA";
    ha.predictions = CrimeCube(ha.truth.start_hour, n, cube.rows, cube.cols, cube.state);
    const auto table = baselines::ha_fit(train);
    for (std::size_t t = 0; t < n; ++t) {
      const auto f = baselines::ha_forecast(table, ha.truth.start_hour + static_cast<EpochHour>(t));
      std::copy(f.begin(), f.end(), ha.predictions.frame(t).begin());
    }

    std::vector<std::vector<double>> series(hw);
    for (std::size_t c = 0; c < hw; ++c) series[c] = train.series(c / cube.cols, c % cube.cols);
    const std::size_t k = baselines::knn_select_k(std::span<const std::vector<double>>(series), s.knn_candidates);
    (domain == eval::Domain::raw ? out.knn_k_raw : out.knn_k_cumulative) = k;
    auto knn = truth_run(p, first, last, domain);
    knn.method = "KNN";
    knn.predictions = CrimeCube(knn.truth.start_hour, n, cube.rows, cube.cols, cube.state);
    for (std::size_t c = 0; c < hw; ++c) {
      const auto full = cube.series(c / cube.cols, c % cube.cols);
      for (std::size_t t = first; t < last; ++t)
        knn.predictions.frame(t - first)[c] = baselines::knn_forecast(std::span(full).first(t), k);
    }
    out.runs.push_back(std::move(ha));
    out.runs.push_back(std::move(knn));

    if (s.arima) {
      auto ar = truth_run(p, first, last, domain);
      ar.method = "ARIMA";
      ar.predictions = CrimeCube(ar.truth.start_hour, n, cube.rows, cube.cols, cube.state);
      std::vector<std::size_t> failures(hw, 0);
      baselines::RollingOptions ro;
      ro.refit_every = s.arima_refit_every;
      detail::for_each_cell(hw, s.threads, [&](std::size_t c) {
        const auto full = cube.series(c / cube.cols, c % cube.cols);
        const auto r = baselines::arima_rolling_forecast(std::span(full).first(last), s.arima_p, s.arima_d,
                                                         s.arima_q, first, ro);
        failures[c] = r.failures;
        for (std::size_t t = 0; t < n; ++t) ar.predictions.frame(t)[c] = r.predictions[t];
      });
      for (auto f : failures) out.arima_failures += f;
      out.runs.push_back(std::move(ar));
    }
  }
  return out;
}

}  // namespace stcast::pipeline
