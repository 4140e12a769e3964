#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stcast/error.hpp"
#include "stcast/grid.hpp"
#include "stcast/signal.hpp"
#include "stcast/timeutil.hpp"

namespace stcast::eval {

using grid::CrimeCube;

enum class Domain { raw, cumulative };

inline std::string_view to_string(Domain d) { return d == Domain::raw ? "raw" : "cumulative"; }

struct ForecastRun {
  std::string method;
  CrimeCube predictions;
  CrimeCube truth;
  Domain domain = Domain::cumulative;
};

inline void check_aligned(const ForecastRun& run) {
  if (!run.predictions.same_shape(run.truth) || run.predictions.start_hour != run.truth.start_hour)
    throw ShapeError("forecast run '" + run.method + "': prediction and truth are not aligned");
}

inline double rmse(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw ShapeError("rmse: length mismatch");
  if (truth.empty()) throw ShapeError("rmse: empty input");
  double s = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = truth[i] - pred[i];
    s += r * r;
  }
  return std::sqrt(s / static_cast<double>(truth.size()));
}

inline double rmse(const ForecastRun& run) {
  check_aligned(run);
  return rmse(run.truth.values, run.predictions.values);
}

inline double rmse(const ForecastRun& run, std::size_t r, std::size_t c) {
  check_aligned(run);
  if (r >= run.truth.rows || c >= run.truth.cols) throw ShapeError("rmse: cell outside the grid");
  return rmse(run.truth.series(r, c), run.predictions.series(r, c));
}

struct HitCounts {
  std::size_t true_slots = 0;
  std::size_t pred_slots = 0;
  std::size_t intersection = 0;

  bool operator==(const HitCounts&) const = default;
};

inline constexpr double kDefaultHitThreshold = 0.5;

inline HitCounts hit_metrics(std::span<const double> truth, std::span<const double> pred,
                             double threshold = kDefaultHitThreshold) {
  if (truth.size() != pred.size()) throw ShapeError("hit_metrics: length mismatch");
  if (!(threshold > 0.0)) throw ConfigError("hit_metrics: threshold must be > 0");
  HitCounts h;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] >= 1.0;
    const bool p = pred[i] >= threshold;
    h.true_slots += t;
    h.pred_slots += p;
    h.intersection += t && p;
  }
  return h;
}

struct ReportRow {
  std::string method;
  double rmse_cumulative = 0.0;
  double rmse_raw = 0.0;
  HitCounts hits;
};

namespace detail {

inline CrimeCube to_domain(const CrimeCube& cube, Domain from, Domain to) {
  if (from == to) return cube;
  CrimeCube c = cube;
  if (from == Domain::raw) {
    c.state = grid::CubeState::raw;
    return signal::diurnal_integrate(c);
  }
  c.state = grid::CubeState::cumulative;
  return signal::diurnal_differentiate(c);
}

}  // namespace detail

// One row per method in order of first appearance. A method may supply a
// cumulative run, a raw run, or both; the missing domain is derived with
// the diurnal operators. Hit counts use the raw (hourly) signal over all
// cells and hours.
inline std::vector<ReportRow> compare_report(std::span<const ForecastRun> runs,
                                             double threshold = kDefaultHitThreshold) {
  std::vector<std::string> methods;
  for (const auto& r : runs) {
    check_aligned(r);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  const CrimeCube* ref_truth[2] = {nullptr, nullptr};
  std::vector<ReportRow> rows;
  for (const auto& name : methods) {
    const ForecastRun* by_domain[2] = {nullptr, nullptr};
    for (const auto& r : runs)
      if (r.method == name) {
        auto& slot = by_domain[static_cast<int>(r.domain)];
        if (slot) throw DataError("compare_report: duplicate " + std::string(to_string(r.domain)) + " run for '" + name + "'");
        slot = &r;
      }
    ReportRow row{name, 0.0, 0.0, {}};
    CrimeCube derived_pred[2], derived_truth[2];
    for (int d = 0; d < 2; ++d) {
      const auto dom = static_cast<Domain>(d);
      const CrimeCube* pred;
      const CrimeCube* truth;
      if (by_domain[d]) {
        pred = &by_domain[d]->predictions;
        truth = &by_domain[d]->truth;
      } else {
        const ForecastRun* src = by_domain[1 - d];
        derived_pred[d] = detail::to_domain(src->predictions, src->domain, dom);
        derived_truth[d] = detail::to_domain(src->truth, src->domain, dom);
        pred = &derived_pred[d];
        truth = &derived_truth[d];
      }
      if (!ref_truth[d]) {
        ref_truth[d] = truth;
      } else if (!ref_truth[d]->same_shape(*truth) || ref_truth[d]->start_hour != truth->start_hour ||
                 ref_truth[d]->values != truth->values) {
        throw DataError("compare_report: run '" + name + "' is not aligned on the shared truth");
      }
      const double e = rmse(truth->values, pred->values);
      if (dom == Domain::cumulative) {
        row.rmse_cumulative = e;
      } else {
        row.rmse_raw = e;
        row.hits = hit_metrics(truth->values, pred->values, threshold);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_report_csv(std::ostream& os, std::span<const ReportRow> rows) {
  os << "method,rmse_cumulative,rmse_raw,true_slots,pred_slots,hits\n";
  for (const auto& r : rows)
    os << r.method << ',' << format_double(r.rmse_cumulative) << ',' << format_double(r.rmse_raw) << ','
       << r.hits.true_slots << ',' << r.hits.pred_slots << ',' << r.hits.intersection << '\n';
}

inline void write_report_text(std::ostream& os, std::span<const ReportRow> rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.method.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %12s %12s %10s %10s %8s\n", static_cast<int>(w), "method",
                "rmse_cum", "rmse_raw", "true", "pred", "hits");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %12.6f %12.6f %10zu %10zu %8zu\n", static_cast<int>(w),
                  r.method.c_str(), r.rmse_cumulative, r.rmse_raw, r.hits.true_slots, r.hits.pred_slots,
                  r.hits.intersection);
    os << buf;
  }
}

}  // namespace stcast::eval
