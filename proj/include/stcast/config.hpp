#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stcast/error.hpp"
#include "stcast/gridspec.hpp"
#include "stcast/ingest.hpp"
#include "stcast/model.hpp"
#include "stcast/pipeline.hpp"
#include "stcast/timeutil.hpp"
#include "stcast/train.hpp"

namespace stcast::cli {

// Flat `key = value` lines; `#` starts a comment line. Keys may not repeat.
inline std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto t = ingest::detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(no) + ": expected 'key = value'");
    std::string key(ingest::detail::trim(t.substr(0, eq)));
    std::string value(ingest::detail::trim(t.substr(eq + 1)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(no) + ": empty key");
    if (!seen.emplace(key, no).second)
      throw ConfigError("config line " + std::to_string(no) + ": duplicate key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

struct RunConfig {
  std::string profile = "desk";

  std::string events, weather, holidays, input, forecast, baselines_dir, checkpoint, out;

  grid::GridSpec grid = grid::default_la_gridspec();
  nn::ModelConfig model;
  nn::TrainConfig train;
  std::size_t epochs_ternary = 10;

  std::string start = "2015-07-01";
  std::size_t days = 104;
  std::size_t train_days = 90;
  double mean_rate = 0.5;
  double amplitude = 0.8;
  double peak_hour = 20.0;
  ingest::Excitation excitation{0.3, 3.0, 1.0};

  pipeline::BaselineSettings baselines;
  double hit_threshold = 0.5;
  double grad_tolerance = 1e-4;

  std::optional<std::uint64_t> seed;

  EpochHour start_hour() const {
    const auto d = parse_iso_date(start);
    if (!d) throw ConfigError("start: expected YYYY-MM-DD, got '" + start + "'");
    return *d * kHoursPerDay;
  }
};

inline void apply_profile(RunConfig& c, std::string_view name) {
  if (name == "desk") {
    c.grid.rows = c.grid.cols = 8;
    c.model.filters = 16;
    c.model.residual_units = 2;
    c.model.lags = {std::vector<std::size_t>{1, 2, 3}, std::vector<std::size_t>{24, 48, 72},
                    std::vector<std::size_t>{168}};
    c.train.epochs_main = 30;
    c.train.epochs_finetune = 10;
    c.epochs_ternary = 10;
  } else if (name == "full") {
    c.grid.rows = c.grid.cols = 16;
    c.model.filters = 64;
    c.model.residual_units = 6;
    c.model.lags = {std::vector<std::size_t>{1, 2, 3}, std::vector<std::size_t>{24, 48, 72},
                    std::vector<std::size_t>{168, 336, 504}};
    c.train.epochs_main = 200;
    c.train.epochs_finetune = 50;
    c.epochs_ternary = 200;
  } else {
    throw ConfigError("profile: expected 'desk' or 'full', got '" + std::string(name) + "'");
  }
  c.profile = std::string(name);
  c.model.height = 2 * c.grid.rows - 1;
  c.model.width = 2 * c.grid.cols - 1;
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return *d;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto t = ingest::detail::trim(v);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (auto f : ingest::detail::split_csv(v)) out.push_back(to_uint(key, std::string(f)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline std::string from_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Key {
  std::string name;
  bool is_path;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define STCAST_PATH_KEY(k, field) \
  Key{k, true, [](RunConfig& c, const std::string& v) { c.field = v; }, [](const RunConfig& c) { return c.field; }}
#define STCAST_NUM_KEY(k, field)                                                            \
  Key{k, false, [](RunConfig& c, const std::string& v) { c.field = to_double(k, v); }, \
      [](const RunConfig& c) { return format_double(c.field); }}
#define STCAST_UINT_KEY(k, field)                                                                  \
  Key{k, false,                                                                                    \
      [](RunConfig& c, const std::string& v) {                                                     \
        c.field = static_cast<std::remove_reference_t<decltype(c.field)>>(to_uint(k, v));          \
      },                                                                                           \
      [](const RunConfig& c) { return std::to_string(c.field); }}

inline const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"profile", false, [](RunConfig& c, const std::string& v) { apply_profile(c, v); },
          [](const RunConfig& c) { return c.profile; }},
      STCAST_PATH_KEY("events", events),
      STCAST_PATH_KEY("weather", weather),
      STCAST_PATH_KEY("holidays", holidays),
      STCAST_PATH_KEY("input", input),
      STCAST_PATH_KEY("forecast", forecast),
      STCAST_PATH_KEY("baselines", baselines_dir),
      STCAST_PATH_KEY("checkpoint", checkpoint),
      STCAST_PATH_KEY("out", out),
      Key{"seed", false, [](RunConfig& c, const std::string& v) { c.seed = to_uint("seed", v); },
          [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string("unset"); }},
      Key{"start", false,
          [](RunConfig& c, const std::string& v) {
            if (!parse_iso_date(v)) throw ConfigError("start: expected YYYY-MM-DD, got '" + v + "'");
            c.start = v;
          },
          [](const RunConfig& c) { return c.start; }},
      STCAST_UINT_KEY("days", days),
      STCAST_UINT_KEY("train_days", train_days),
      Key{"rows", false,
          [](RunConfig& c, const std::string& v) {
            c.grid.rows = to_uint("rows", v);
            c.model.height = 2 * c.grid.rows - 1;
          },
          [](const RunConfig& c) { return std::to_string(c.grid.rows); }},
      Key{"cols", false,
          [](RunConfig& c, const std::string& v) {
            c.grid.cols = to_uint("cols", v);
            c.model.width = 2 * c.grid.cols - 1;
          },
          [](const RunConfig& c) { return std::to_string(c.grid.cols); }},
      STCAST_NUM_KEY("lat_min", grid.lat_min),
      STCAST_NUM_KEY("lat_max", grid.lat_max),
      STCAST_NUM_KEY("lon_min", grid.lon_min),
      STCAST_NUM_KEY("lon_max", grid.lon_max),
      STCAST_NUM_KEY("mean_rate", mean_rate),
      STCAST_NUM_KEY("amplitude", amplitude),
      STCAST_NUM_KEY("peak_hour", peak_hour),
      STCAST_NUM_KEY("branching_ratio", excitation.branching_ratio),
      STCAST_NUM_KEY("decay_hours", excitation.decay_hours),
      STCAST_NUM_KEY("spread_cells", excitation.spread_cells),
      Key{"variant", false,
          [](RunConfig& c, const std::string& v) { c.model.variant = nn::variant_from_string(v); },
          [](const RunConfig& c) { return std::string(nn::to_string(c.model.variant)); }},
      STCAST_UINT_KEY("filters", model.filters),
      STCAST_UINT_KEY("residual_units", model.residual_units),
      Key{"batch_norm", false,
          [](RunConfig& c, const std::string& v) { c.model.batch_norm = to_bool("batch_norm", v); },
          [](const RunConfig& c) { return std::string(c.model.batch_norm ? "true" : "false"); }},
      Key{"lags_close", false,
          [](RunConfig& c, const std::string& v) { c.model.lags[nn::kCloseness] = to_list("lags_close", v); },
          [](const RunConfig& c) { return from_list(c.model.lags[nn::kCloseness]); }},
      Key{"lags_period", false,
          [](RunConfig& c, const std::string& v) { c.model.lags[nn::kPeriod] = to_list("lags_period", v); },
          [](const RunConfig& c) { return from_list(c.model.lags[nn::kPeriod]); }},
      Key{"lags_trend", false,
          [](RunConfig& c, const std::string& v) { c.model.lags[nn::kTrend] = to_list("lags_trend", v); },
          [](const RunConfig& c) { return from_list(c.model.lags[nn::kTrend]); }},
      STCAST_NUM_KEY("learning_rate", train.learning_rate),
      STCAST_UINT_KEY("epochs_main", train.epochs_main),
      STCAST_UINT_KEY("epochs_finetune", train.epochs_finetune),
      STCAST_UINT_KEY("epochs_ternary", epochs_ternary),
      STCAST_NUM_KEY("validation_fraction", train.validation_fraction),
      STCAST_UINT_KEY("batch_size", train.batch_size),
      STCAST_NUM_KEY("l2", train.l2),
      Key{"knn_candidates", false,
          [](RunConfig& c, const std::string& v) { c.baselines.knn_candidates = to_list("knn_candidates", v); },
          [](const RunConfig& c) { return from_list(c.baselines.knn_candidates); }},
      Key{"arima", false, [](RunConfig& c, const std::string& v) { c.baselines.arima = to_bool("arima", v); },
          [](const RunConfig& c) { return std::string(c.baselines.arima ? "true" : "false"); }},
      STCAST_UINT_KEY("arima_p", baselines.arima_p),
      STCAST_UINT_KEY("arima_d", baselines.arima_d),
      STCAST_UINT_KEY("arima_q", baselines.arima_q),
      STCAST_UINT_KEY("arima_refit_every", baselines.arima_refit_every),
      STCAST_NUM_KEY("hit_threshold", hit_threshold),
      STCAST_NUM_KEY("grad_tolerance", grad_tolerance),
  };
  return table;
}

#undef STCAST_PATH_KEY
#undef STCAST_NUM_KEY
#undef STCAST_UINT_KEY

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : detail::keys()) out.push_back(k.name);
  return out;
}

inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& k : detail::keys())
    if (k.name == key) {
      k.set(c, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

// Profile first (it resets several defaults), then everything else in the
// order given; later assignments win.
inline RunConfig build_config(const std::vector<std::pair<std::string, std::string>>& assignments) {
  RunConfig c;
  apply_profile(c, "desk");
  for (const auto& [k, v] : assignments)
    if (k == "profile") set_key(c, k, v);
  for (const auto& [k, v] : assignments)
    if (k != "profile") set_key(c, k, v);
  c.model.validate();
  c.train.validate();
  c.grid.validate();
  return c;
}

// Non-path settings as sorted `key = value` lines.
inline std::string describe(const RunConfig& c) {
  std::map<std::string, std::string> m;
  for (const auto& k : detail::keys())
    if (!k.is_path) m[k.name] = k.get(c);
  std::ostringstream os;
  for (const auto& [k, v] : m) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace stcast::cli
