#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stcast/error.hpp"
#include "stcast/grid.hpp"

namespace stcast::baselines {

// ---------------------------------------------------------------------------
// Historical average

struct HaTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> means;  // [(r * cols + c) * 24 + hour_of_day]

  double mean(std::size_t r, std::size_t c, std::size_t hod) const {
    return means[(r * cols + c) * 24 + hod];
  }
};

inline std::size_t hour_of_day(EpochHour h) {
  return static_cast<std::size_t>(h - day_of_hour(h) * kHoursPerDay);
}

inline HaTable ha_fit(const grid::CrimeCube& train) {
  if (train.hours == 0) throw DataError("ha_fit: empty training window");
  if (train.hours < 24) throw DataError("ha_fit: training window must span at least one day");
  HaTable table{train.rows, train.cols, std::vector<double>(train.rows * train.cols * 24, 0.0)};
  std::vector<std::size_t> counts(24, 0);
  for (std::size_t t = 0; t < train.hours; ++t) {
    const std::size_t hod = hour_of_day(train.start_hour + static_cast<EpochHour>(t));
    ++counts[hod];
    const auto f = train.frame(t);
    for (std::size_t cell = 0; cell < f.size(); ++cell) table.means[cell * 24 + hod] += f[cell];
  }
  for (std::size_t cell = 0; cell < train.frame_size(); ++cell)
    for (std::size_t h = 0; h < 24; ++h) table.means[cell * 24 + h] /= static_cast<double>(counts[h]);
  return table;
}

inline std::vector<double> ha_forecast(const HaTable& table, EpochHour hour) {
  const std::size_t hod = hour_of_day(hour);
  std::vector<double> frame(table.rows * table.cols);
  for (std::size_t cell = 0; cell < frame.size(); ++cell) frame[cell] = table.means[cell * 24 + hod];
  return frame;
}

// ---------------------------------------------------------------------------
// k nearest previous steps

inline double knn_forecast(std::span<const double> history, std::size_t k) {
  if (k < 1) throw ConfigError("knn: k must be >= 1");
  if (history.size() < k)
    throw DataError("knn: history of " + std::to_string(history.size()) + " values is shorter than k = " +
                    std::to_string(k));
  double s = 0;
  for (std::size_t i = history.size() - k; i < history.size(); ++i) s += history[i];
  return s / static_cast<double>(k);
}

inline constexpr std::size_t kFolds = 5;

// Mean over the five contiguous folds of the one-step RMSE of the k-rule on
// each fold; folds with no forecastable point are skipped.
inline double knn_cv_score(std::span<const double> series, std::size_t k) {
  const std::size_t n = series.size();
  double total = 0;
  std::size_t used = 0;
  for (std::size_t f = 0; f < kFolds; ++f) {
    const std::size_t lo = f * n / kFolds, hi = (f + 1) * n / kFolds;
    double sse = 0;
    std::size_t count = 0;
    for (std::size_t t = std::max(lo, k); t < hi; ++t) {
      const double r = knn_forecast(series.first(t), k) - series[t];
      sse += r * r;
      ++count;
    }
    if (count == 0) continue;
    total += std::sqrt(sse / static_cast<double>(count));
    ++used;
  }
  return used ? total / static_cast<double>(used) : std::numeric_limits<double>::infinity();
}

// Candidate with the smallest cross-validated score, averaged across all
// supplied series; ties go to the smaller k.
inline std::size_t knn_select_k(std::span<const std::vector<double>> series,
                                std::span<const std::size_t> candidates) {
  if (candidates.empty()) throw ConfigError("knn: empty candidate list");
  std::vector<std::size_t> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t best_k = sorted.front();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k : sorted) {
    if (k < 1) throw ConfigError("knn: candidates must be >= 1");
    double s = 0;
    for (const auto& x : series) s += knn_cv_score(x, k);
    s /= static_cast<double>(std::max<std::size_t>(series.size(), 1));
    if (s < best) {
      best = s;
      best_k = k;
    }
  }
  return best_k;
}

inline std::size_t knn_select_k(std::span<const double> series, std::span<const std::size_t> candidates) {
  std::vector<std::vector<double>> one{std::vector<double>(series.begin(), series.end())};
  return knn_select_k(std::span<const std::vector<double>>(one), candidates);
}

// ---------------------------------------------------------------------------
// ACF / PACF

inline std::vector<double> acf(std::span<const double> x, std::size_t max_lag) {
  const std::size_t n = x.size();
  if (n <= max_lag) throw DataError("acf: series must be longer than max_lag");
  double mean = 0;
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("acf: non-finite value");
    mean += v;
  }
  mean /= static_cast<double>(n);
  double c0 = 0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  if (!(c0 > 0.0)) throw DataError("acf: zero-variance series");
  std::vector<double> r(max_lag + 1);
  for (std::size_t l = 0; l <= max_lag; ++l) {
    double s = 0;
    for (std::size_t t = l; t < n; ++t) s += (x[t] - mean) * (x[t - l] - mean);
    r[l] = s / c0;
  }
  return r;
}

// Durbin–Levinson on the sample ACF; element 0 is 1 by convention.
inline std::vector<double> pacf(std::span<const double> x, std::size_t max_lag) {
  const auto r = acf(x, max_lag);
  std::vector<double> out(max_lag + 1, 0.0);
  out[0] = 1.0;
  if (max_lag == 0) return out;
  std::vector<double> phi(max_lag + 1, 0.0), prev(max_lag + 1, 0.0);
  phi[1] = r[1];
  out[1] = r[1];
  for (std::size_t k = 2; k <= max_lag; ++k) {
    prev = phi;
    double num = r[k], den = 1.0;
    for (std::size_t j = 1; j < k; ++j) {
      num -= prev[j] * r[k - j];
      den -= prev[j] * r[j];
    }
    phi[k] = num / den;
    for (std::size_t j = 1; j < k; ++j) phi[j] = prev[j] - phi[k] * prev[k - j];
    out[k] = phi[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// ARIMA by conditional sum of squares

struct ArimaModel {
  std::size_t p = 0, d = 0, q = 0;
  std::vector<double> phi;
  std::vector<double> theta;
  double intercept = 0.0;
  double sigma2 = 0.0;
  double css = 0.0;
  std::size_t iterations = 0;
};

class ArimaConvergenceError : public NumericError {
 public:
  ArimaConvergenceError(const std::string& what, ArimaModel best)
      : NumericError(what), best_(std::move(best)) {}
  const ArimaModel& best() const { return best_; }

 private:
  ArimaModel best_;
};

struct ArimaFitOptions {
  std::size_t max_iterations = 200;
  double tolerance = 1e-10;
  // When set, receives the objective after initialization and after every
  // accepted step.
  std::vector<double>* css_trace = nullptr;
};

inline std::vector<double> difference(std::span<const double> x, std::size_t d) {
  std::vector<double> w(x.begin(), x.end());
  for (std::size_t k = 0; k < d; ++k) {
    if (w.size() < 2) return {};
    for (std::size_t i = 0; i + 1 < w.size(); ++i) w[i] = w[i + 1] - w[i];
    w.pop_back();
  }
  return w;
}

namespace detail {

// Parameter vector layout: [c, phi_1..phi_p, theta_1..theta_q].
inline std::vector<double> innovations(std::span<const double> w, std::size_t p, std::size_t q,
                                       std::span<const double> beta) {
  const std::size_t n = w.size();
  std::vector<double> e(n, 0.0);
  for (std::size_t t = p; t < n; ++t) {
    double v = w[t] - beta[0];
    for (std::size_t i = 1; i <= p; ++i) v -= beta[i] * w[t - i];
    for (std::size_t j = 1; j <= q && j <= t; ++j) v -= beta[p + j] * e[t - j];
    e[t] = v;
  }
  return e;
}

inline double css_of(std::span<const double> e, std::size_t p) {
  double s = 0;
  for (std::size_t t = p; t < e.size(); ++t) s += e[t] * e[t];
  return s;
}

inline Eigen::VectorXd least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return x.colPivHouseholderQr().solve(y);
}

// Long autoregression for residuals, then regression of w_t on an intercept,
// p lags of w and q lags of those residuals.
inline std::vector<double> hannan_rissanen(std::span<const double> w, std::size_t p, std::size_t q) {
  const std::size_t n = w.size();
  std::vector<double> beta(1 + p + q, 0.0);
  std::vector<double> resid(n, 0.0);
  std::size_t start = p;
  if (q > 0) {
    std::size_t m = std::max<std::size_t>(p + q + 5, static_cast<std::size_t>(10.0 * std::log10(static_cast<double>(n))));
    m = std::min(m, n / 4);
    if (m >= 1 && n > 2 * m + 1) {
      Eigen::MatrixXd x(static_cast<Eigen::Index>(n - m), static_cast<Eigen::Index>(m + 1));
      Eigen::VectorXd y(static_cast<Eigen::Index>(n - m));
      for (std::size_t t = m; t < n; ++t) {
        const auto row = static_cast<Eigen::Index>(t - m);
        x(row, 0) = 1.0;
        for (std::size_t i = 1; i <= m; ++i) x(row, static_cast<Eigen::Index>(i)) = w[t - i];
        y(row) = w[t];
      }
      const Eigen::VectorXd a = least_squares(x, y);
      for (std::size_t t = m; t < n; ++t) resid[t] = y(static_cast<Eigen::Index>(t - m)) - x.row(static_cast<Eigen::Index>(t - m)).dot(a);
      start = std::max(p, m + q);
    } else {
      start = std::max(p, q);
    }
  }
  if (n <= start + beta.size()) {
    double mean = 0;
    for (double v : w) mean += v;
    beta[0] = n ? mean / static_cast<double>(n) : 0.0;
    return beta;
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n - start), static_cast<Eigen::Index>(beta.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n - start));
  for (std::size_t t = start; t < n; ++t) {
    const auto row = static_cast<Eigen::Index>(t - start);
    x(row, 0) = 1.0;
    for (std::size_t i = 1; i <= p; ++i) x(row, static_cast<Eigen::Index>(i)) = w[t - i];
    for (std::size_t j = 1; j <= q; ++j) x(row, static_cast<Eigen::Index>(p + j)) = resid[t - j];
    y(row) = w[t];
  }
  const Eigen::VectorXd b = least_squares(x, y);
  for (std::size_t i = 0; i < beta.size(); ++i) {
    const double v = b(static_cast<Eigen::Index>(i));
    beta[i] = std::isfinite(v) ? v : 0.0;
  }
  // Keep the MA start inside the invertible region so the recursion is stable.
  for (std::size_t j = 1; j <= q; ++j) beta[p + j] = std::clamp(beta[p + j], -0.95, 0.95);
  return beta;
}

}  // namespace detail

// Differences d times, then minimizes the conditional sum of squared
// innovations (zero pre-sample innovations, the first p values conditioned
// on) with Levenberg–Marquardt started from a Hannan–Rissanen estimate.
// Accepted steps never increase the objective.
inline ArimaModel arima_fit(std::span<const double> series, std::size_t p, std::size_t d, std::size_t q,
                            const ArimaFitOptions& opt = {}) {
  for (double v : series)
    if (!std::isfinite(v)) throw DataError("arima: non-finite value in series");
  const auto w = difference(series, d);
  const std::size_t n = w.size();
  const std::size_t k = 1 + p + q;
  if (n < p + k + 2)
    throw DataError("arima: series too short for order (" + std::to_string(p) + "," + std::to_string(d) +
                    "," + std::to_string(q) + ")");
  if (p + q > 0) {
    const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    if (*lo == *hi) throw DataError("arima: degenerate (constant) series after differencing");
  }

  std::vector<double> beta = detail::hannan_rissanen(w, p, q);
  auto e = detail::innovations(w, p, q, beta);
  double css = detail::css_of(e, p);
  if (!std::isfinite(css)) {
    std::fill(beta.begin() + 1, beta.end(), 0.0);
    e = detail::innovations(w, p, q, beta);
    css = detail::css_of(e, p);
  }
  if (opt.css_trace) opt.css_trace->push_back(css);

  auto pack = [&](std::size_t iters) {
    ArimaModel m;
    m.p = p;
    m.d = d;
    m.q = q;
    m.intercept = beta[0];
    m.phi.assign(beta.begin() + 1, beta.begin() + 1 + static_cast<std::ptrdiff_t>(p));
    m.theta.assign(beta.begin() + 1 + static_cast<std::ptrdiff_t>(p), beta.end());
    m.css = css;
    m.sigma2 = css / static_cast<double>(n - p);
    m.iterations = iters;
    return m;
  };

  double lambda = 1e-3;
  bool converged = false;
  std::size_t iter = 0;
  std::vector<double> deriv(n * k, 0.0);  // ∂e_t/∂beta
  for (; iter < opt.max_iterations && !converged; ++iter) {
    std::fill(deriv.begin(), deriv.end(), 0.0);
    for (std::size_t t = p; t < n; ++t) {
      double* row = &deriv[t * k];
      row[0] = -1.0;
      for (std::size_t i = 1; i <= p; ++i) row[i] = -w[t - i];
      for (std::size_t j = 1; j <= q && j <= t; ++j) row[p + j] -= e[t - j];
      for (std::size_t j = 1; j <= q && j <= t; ++j) {
        const double th = beta[p + j];
        const double* prev = &deriv[(t - j) * k];
        for (std::size_t a = 0; a < k; ++a) row[a] -= th * prev[a];
      }
    }
    Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    Eigen::VectorXd jte = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    for (std::size_t t = p; t < n; ++t) {
      Eigen::Map<const Eigen::VectorXd> row(&deriv[t * k], static_cast<Eigen::Index>(k));
      jtj.noalias() += row * row.transpose();
      jte += row * e[t];
    }
    if (jte.norm() <= 1e-12 * std::max(1.0, css)) {
      converged = true;
      break;
    }
    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-12);
      const Eigen::VectorXd step = a.ldlt().solve(-jte);
      std::vector<double> trial(beta);
      for (std::size_t i = 0; i < k; ++i) trial[i] += step(static_cast<Eigen::Index>(i));
      auto te = detail::innovations(w, p, q, trial);
      const double tcss = detail::css_of(te, p);
      if (std::isfinite(tcss) && tcss < css) {
        const double rel = (css - tcss) / std::max(css, 1e-300);
        beta = std::move(trial);
        e = std::move(te);
        css = tcss;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (opt.css_trace) opt.css_trace->push_back(css);
        if (rel < opt.tolerance) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) converged = true;  // no descent direction left at this precision
  }
  if (!converged)
    throw ArimaConvergenceError("arima: no convergence after " + std::to_string(opt.max_iterations) +
                                    " iterations",
                                pack(iter));
  return pack(iter);
}

// One-step-ahead forecast of the value following `series`, in the original
// (undifferenced) scale.
inline double arima_forecast_next(const ArimaModel& m, std::span<const double> series) {
  std::vector<std::vector<double>> levels{std::vector<double>(series.begin(), series.end())};
  for (std::size_t k = 0; k < m.d; ++k) levels.push_back(difference(levels.back(), 1));
  const auto& w = levels.back();
  const std::size_t n = w.size();
  if (n < m.p) throw DataError("arima forecast: history shorter than p");
  std::vector<double> beta{m.intercept};
  beta.insert(beta.end(), m.phi.begin(), m.phi.end());
  beta.insert(beta.end(), m.theta.begin(), m.theta.end());
  const auto e = detail::innovations(w, m.p, m.q, beta);
  double next = m.intercept;
  for (std::size_t i = 1; i <= m.p; ++i) next += m.phi[i - 1] * w[n - i];
  for (std::size_t j = 1; j <= m.q && j <= n; ++j) next += m.theta[j - 1] * e[n - j];
  for (std::size_t k = m.d; k-- > 0;) {
    if (levels[k].empty()) throw DataError("arima forecast: history too short to undo differencing");
    next += levels[k].back();
  }
  return next;
}

struct RollingOptions {
  std::size_t refit_every = 1;
  ArimaFitOptions fit;
};

struct RollingResult {
  std::vector<double> predictions;  // aligned with series[horizon_start..]
  std::size_t failures = 0;
};

// For each t ≥ horizon_start: (re)fit on series[..t) on the configured
// cadence, forecast series[t]. A failed fit falls back to the previous value.
inline RollingResult arima_rolling_forecast(std::span<const double> series, std::size_t p, std::size_t d,
                                            std::size_t q, std::size_t horizon_start,
                                            const RollingOptions& opt = {}) {
  if (horizon_start < 1 || horizon_start > series.size())
    throw DataError("arima rolling: horizon start outside the series");
  RollingResult res;
  std::optional<ArimaModel> model;
  const std::size_t every = std::max<std::size_t>(opt.refit_every, 1);
  for (std::size_t t = horizon_start; t < series.size(); ++t) {
    const auto history = series.first(t);
    if ((t - horizon_start) % every == 0 || !model) {
      try {
        model = arima_fit(history, p, d, q, opt.fit);
      } catch (const Error&) {
        ++res.failures;
        res.predictions.push_back(history.back());
        continue;
      }
    }
    try {
      res.predictions.push_back(arima_forecast_next(*model, history));
    } catch (const Error&) {
      ++res.failures;
      res.predictions.push_back(history.back());
    }
  }
  return res;
}

}  // namespace stcast::baselines
