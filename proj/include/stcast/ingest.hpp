#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stcast/error.hpp"
#include "stcast/gridspec.hpp"
#include "stcast/timeutil.hpp"

namespace stcast::ingest {

struct EventRecord {
  std::string id;
  EpochSeconds start = 0;
  std::optional<EpochSeconds> end;
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const EventRecord&) const = default;
};

// Half-open interval of epoch hours [begin, end).
struct HourRange {
  EpochHour begin = 0;
  EpochHour end = 0;

  std::size_t size() const { return end > begin ? static_cast<std::size_t>(end - begin) : 0; }
  bool empty() const { return end <= begin; }
  bool contains(EpochHour h) const { return h >= begin && h < end; }
  bool operator==(const HourRange&) const = default;
};

struct RowError {
  std::size_t row;  // 1-based line number in the file, header is line 1
  std::string message;
};

struct EventParseResult {
  std::vector<EventRecord> records;
  std::vector<RowError> rejected;
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\xEF' ||
                        s.front() == '\xBB' || s.front() == '\xBF'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

// Parses an events CSV (`id,start,end,lat,lon`). Bad rows are collected in
// `rejected` with their line numbers; the remaining rows keep file order.
inline EventParseResult parse_events(std::istream& in) {
  EventParseResult result;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = detail::trim(line);
    if (!header_seen) {
      if (text.empty()) continue;
      auto cols = detail::split_csv(text);
      if (cols.size() != 5 || detail::trim(cols[0]) != "id" || detail::trim(cols[1]) != "start" ||
          detail::trim(cols[2]) != "end" || detail::trim(cols[3]) != "lat" ||
          detail::trim(cols[4]) != "lon")
        throw FormatError("events: missing header 'id,start,end,lat,lon' at line " +
                          std::to_string(lineno));
      header_seen = true;
      continue;
    }
    if (text.empty()) continue;
    auto cols = detail::split_csv(text);
    auto reject = [&](std::string msg) { result.rejected.push_back({lineno, std::move(msg)}); };
    if (cols.size() != 5) {
      reject("expected 5 fields, got " + std::to_string(cols.size()));
      continue;
    }
    EventRecord rec;
    rec.id = std::string(detail::trim(cols[0]));
    auto start = parse_iso_datetime(detail::trim(cols[1]));
    if (!start) {
      reject("unparsable start timestamp");
      continue;
    }
    rec.start = *start;
    const auto end_text = detail::trim(cols[2]);
    if (!end_text.empty()) {
      auto end = parse_iso_datetime(end_text);
      if (!end) {
        reject("unparsable end timestamp");
        continue;
      }
      if (*end < rec.start) {
        reject("end precedes start");
        continue;
      }
      rec.end = *end;
    }
    auto lat = parse_double(cols[3]);
    auto lon = parse_double(cols[4]);
    if (!lat || !lon || !std::isfinite(*lat) || !std::isfinite(*lon)) {
      reject("unparsable coordinates");
      continue;
    }
    if (*lat < -90.0 || *lat > 90.0) {
      reject("latitude out of range [-90, 90]");
      continue;
    }
    if (*lon < -180.0 || *lon > 180.0) {
      reject("longitude out of range [-180, 180]");
      continue;
    }
    rec.lat = *lat;
    rec.lon = *lon;
    result.records.push_back(std::move(rec));
  }
  return result;
}

inline EventParseResult parse_events(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_events(in);
}

inline void write_events(std::ostream& out, std::span<const EventRecord> events) {
  out << "id,start,end,lat,lon\n";
  for (const auto& e : events) {
    out << e.id << ',' << format_iso_datetime(e.start) << ',';
    if (e.end) out << format_iso_datetime(*e.end);
    out << ',' << format_double(e.lat) << ',' << format_double(e.lon) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Weather / holidays / external features

struct WeatherRow {
  EpochSeconds ts = 0;
  double temp = 0.0;
  double wind = 0.0;
  double fog = 0.0;
  double rain = 0.0;
  double thunder = 0.0;
};

inline std::vector<WeatherRow> parse_weather(std::istream& in) {
  std::vector<WeatherRow> rows;
  std::vector<RowError> bad;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    auto cols = detail::split_csv(text);
    if (!header_seen) {
      static constexpr std::array<std::string_view, 6> kHeader = {"ts",  "temp", "wind",
                                                                  "fog", "rain", "thunder"};
      bool ok = cols.size() == kHeader.size();
      for (std::size_t i = 0; ok && i < cols.size(); ++i) ok = detail::trim(cols[i]) == kHeader[i];
      if (!ok) throw FormatError("weather: missing header 'ts,temp,wind,fog,rain,thunder'");
      header_seen = true;
      continue;
    }
    if (cols.size() != 6) {
      bad.push_back({lineno, "expected 6 fields"});
      continue;
    }
    auto ts = parse_iso_datetime(detail::trim(cols[0]));
    std::array<std::optional<double>, 5> v;
    for (std::size_t i = 0; i < 5; ++i) v[i] = parse_double(cols[i + 1]);
    bool ok = ts.has_value();
    for (const auto& x : v) ok = ok && x && std::isfinite(*x);
    if (!ok) {
      bad.push_back({lineno, "unparsable or non-finite value"});
      continue;
    }
    bool flags_ok = true;
    for (std::size_t i = 2; i < 5; ++i) flags_ok = flags_ok && (*v[i] == 0.0 || *v[i] == 1.0);
    if (!flags_ok) {
      bad.push_back({lineno, "flags must be 0 or 1"});
      continue;
    }
    rows.push_back({*ts, *v[0], *v[1], *v[2], *v[3], *v[4]});
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "weather: " << bad.size() << " bad row(s); first at line " << bad.front().row << ": "
        << bad.front().message;
    throw FormatError(msg.str());
  }
  return rows;
}

inline std::vector<WeatherRow> parse_weather(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_weather(in);
}

inline void write_weather(std::ostream& out, std::span<const WeatherRow> rows) {
  out << "ts,temp,wind,fog,rain,thunder\n";
  for (const auto& r : rows)
    out << format_iso_datetime(r.ts) << ',' << format_double(r.temp) << ','
        << format_double(r.wind) << ',' << format_double(r.fog) << ',' << format_double(r.rain)
        << ',' << format_double(r.thunder) << '\n';
}

// One ISO date per line; blank lines and '#' comments are skipped.
inline std::set<std::int64_t> parse_holidays(std::istream& in) {
  std::set<std::int64_t> days;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    auto d = parse_iso_date(text);
    if (!d) throw FormatError("holidays: bad date at line " + std::to_string(lineno));
    days.insert(*d);
  }
  return days;
}

inline std::set<std::int64_t> parse_holidays(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_holidays(in);
}

// Column layout of a feature row.
enum FeatureColumn : std::size_t {
  kTemperature = 0,
  kWindSpeed,
  kFog,
  kRain,
  kThunder,
  kHoliday,
  kHourSin,
  kHourCos,
  kWeekdaySin,
  kWeekdayCos,
  kFeatureWidth
};

struct ZStats {
  double mean = 0.0;
  double stddev = 0.0;
};

// Hourly external feature vectors, one row per consecutive hour starting at
// `start_hour`.
struct FeatureTable {
  EpochHour start_hour = 0;
  std::vector<double> values;  // hours × kFeatureWidth, row-major
  ZStats temperature;
  ZStats wind;

  std::size_t hours() const { return values.size() / kFeatureWidth; }
  std::span<const double> row(std::size_t offset) const {
    return {values.data() + offset * kFeatureWidth, kFeatureWidth};
  }
  std::span<const double> at_hour(EpochHour h) const {
    if (h < start_hour || static_cast<std::size_t>(h - start_hour) >= hours())
      throw DataError("feature table has no row for hour " + std::to_string(h));
    return row(static_cast<std::size_t>(h - start_hour));
  }
};

inline void write_features(std::ostream& out, const FeatureTable& table) {
  out << "# start_hour=" << table.start_hour << " temp_mean=" << format_double(table.temperature.mean)
      << " temp_std=" << format_double(table.temperature.stddev)
      << " wind_mean=" << format_double(table.wind.mean)
      << " wind_std=" << format_double(table.wind.stddev) << '\n';
  out << "hour,temp,wind,fog,rain,thunder,holiday,hour_sin,hour_cos,dow_sin,dow_cos\n";
  for (std::size_t r = 0; r < table.hours(); ++r) {
    out << table.start_hour + static_cast<EpochHour>(r);
    for (double v : table.row(r)) out << ',' << format_double(v);
    out << '\n';
  }
}

inline FeatureTable read_features(std::istream& in) {
  FeatureTable table;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# start_hour=", 0) != 0)
    throw FormatError("features: missing metadata line");
  {
    std::istringstream meta(line.substr(2));
    std::string tok;
    while (meta >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const auto key = tok.substr(0, eq);
      const auto val = parse_double(std::string_view(tok).substr(eq + 1));
      if (!val) throw FormatError("features: bad metadata value for " + key);
      if (key == "start_hour") table.start_hour = static_cast<EpochHour>(*val);
      else if (key == "temp_mean") table.temperature.mean = *val;
      else if (key == "temp_std") table.temperature.stddev = *val;
      else if (key == "wind_mean") table.wind.mean = *val;
      else if (key == "wind_std") table.wind.stddev = *val;
    }
  }
  std::getline(in, line);  // column header
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cols = detail::split_csv(detail::trim(line));
    if (cols.size() != kFeatureWidth + 1)
      throw FormatError("features: wrong field count at line " + std::to_string(lineno));
    for (std::size_t i = 1; i < cols.size(); ++i) {
      auto v = parse_double(cols[i]);
      if (!v) throw FormatError("features: bad value at line " + std::to_string(lineno));
      table.values.push_back(*v);
    }
  }
  return table;
}

// Builds the per-hour feature table over `range`. Multiple rows within an hour
// are averaged (flags averaged then thresholded at 0.5); empty hours take the
// linear interpolation of the nearest filled hours on each side for the
// continuous fields and the nearer neighbour's flags (earlier on ties);
// leading and trailing gaps copy the nearest filled hour.
inline FeatureTable build_feature_table(std::span<const WeatherRow> weather,
                                        const std::set<std::int64_t>& holidays, HourRange range) {
  if (range.empty()) throw DataError("feature table: empty hour range");
  const std::size_t n = range.size();
  struct Acc {
    double temp = 0, wind = 0, fog = 0, rain = 0, thunder = 0;
    std::size_t count = 0;
  };
  std::vector<Acc> acc(n);
  for (const auto& w : weather) {
    if (!std::isfinite(w.temp) || !std::isfinite(w.wind) || !std::isfinite(w.fog) ||
        !std::isfinite(w.rain) || !std::isfinite(w.thunder))
      throw DataError("feature table: non-finite weather value at " + format_iso_datetime(w.ts));
    const EpochHour h = hour_of(w.ts);
    if (!range.contains(h)) continue;
    auto& a = acc[static_cast<std::size_t>(h - range.begin)];
    a.temp += w.temp;
    a.wind += w.wind;
    a.fog += w.fog;
    a.rain += w.rain;
    a.thunder += w.thunder;
    ++a.count;
  }
  std::vector<std::size_t> filled;
  for (std::size_t i = 0; i < n; ++i)
    if (acc[i].count > 0) filled.push_back(i);
  if (filled.empty()) throw DataError("feature table: no weather rows inside the hour range");

  struct Hour {
    double temp, wind, fog, rain, thunder;
  };
  std::vector<Hour> hours(n);
  for (std::size_t i : filled) {
    const auto& a = acc[i];
    const double c = static_cast<double>(a.count);
    auto flag = [c](double sum) { return sum / c >= 0.5 ? 1.0 : 0.0; };
    hours[i] = {a.temp / c, a.wind / c, flag(a.fog), flag(a.rain), flag(a.thunder)};
  }
  std::size_t next = 0;  // index into `filled` of the first filled hour >= i
  for (std::size_t i = 0; i < n; ++i) {
    while (next < filled.size() && filled[next] < i) ++next;
    if (next < filled.size() && filled[next] == i) continue;
    if (next == 0) {
      hours[i] = hours[filled.front()];
    } else if (next == filled.size()) {
      hours[i] = hours[filled.back()];
    } else {
      const std::size_t lo = filled[next - 1], hi = filled[next];
      const double t = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
      const Hour& a = hours[lo];
      const Hour& b = hours[hi];
      const Hour& near = (i - lo) <= (hi - i) ? a : b;
      hours[i] = {a.temp + t * (b.temp - a.temp), a.wind + t * (b.wind - a.wind), near.fog,
                  near.rain, near.thunder};
    }
  }

  auto zstats = [&](auto field) {
    double mean = 0;
    for (const auto& h : hours) mean += field(h);
    mean /= static_cast<double>(n);
    double var = 0;
    for (const auto& h : hours) var += (field(h) - mean) * (field(h) - mean);
    return ZStats{mean, std::sqrt(var / static_cast<double>(n))};
  };
  auto zscore = [](double v, const ZStats& s) {
    return s.stddev > 0.0 ? (v - s.mean) / s.stddev : 0.0;
  };

  FeatureTable table;
  table.start_hour = range.begin;
  table.temperature = zstats([](const Hour& h) { return h.temp; });
  table.wind = zstats([](const Hour& h) { return h.wind; });
  table.values.resize(n * kFeatureWidth);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const EpochHour h = range.begin + static_cast<EpochHour>(i);
    const std::int64_t day = day_of_hour(h);
    const double hod = static_cast<double>(h - day * kHoursPerDay);
    const double dow = weekday_of_day(day);
    double* row = table.values.data() + i * kFeatureWidth;
    row[kTemperature] = zscore(hours[i].temp, table.temperature);
    row[kWindSpeed] = zscore(hours[i].wind, table.wind);
    row[kFog] = hours[i].fog;
    row[kRain] = hours[i].rain;
    row[kThunder] = hours[i].thunder;
    row[kHoliday] = holidays.contains(day) ? 1.0 : 0.0;
    row[kHourSin] = std::sin(kTwoPi * hod / 24.0);
    row[kHourCos] = std::cos(kTwoPi * hod / 24.0);
    row[kWeekdaySin] = std::sin(kTwoPi * dow / 7.0);
    row[kWeekdayCos] = std::cos(kTwoPi * dow / 7.0);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Synthetic self-exciting event streams

struct Excitation {
  double branching_ratio = 0.0;  // expected direct offspring per event, < 1
  double decay_hours = 1.0;      // mean of the exponential delay kernel
  double spread_cells = 0.5;     // std-dev of the Gaussian cell displacement
};

struct SynthConfig {
  std::size_t rows = 8;
  std::size_t cols = 8;
  std::size_t days = 90;
  EpochHour start_hour = 0;
  // Per cell, 24 hourly rates: base_rates[(r * cols + c) * 24 + hour].
  std::vector<double> base_rates;
  Excitation excitation;
  std::uint64_t seed = 0;
  grid::GridSpec bounds = grid::default_la_gridspec();

  double rate(std::size_t r, std::size_t c, std::size_t hour) const {
    return base_rates[(r * cols + c) * 24 + hour];
  }

  void validate() const {
    if (rows < 1 || cols < 1) throw ConfigError("synth: rows and cols must be >= 1");
    if (base_rates.size() != rows * cols * 24)
      throw ConfigError("synth: base_rates must hold rows*cols*24 entries");
    for (double r : base_rates)
      if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("synth: rates must be >= 0");
    const auto& e = excitation;
    if (!(e.branching_ratio >= 0.0) || !(e.branching_ratio < 1.0))
      throw ConfigError("synth: branching ratio must lie in [0, 1)");
    if (!(e.decay_hours > 0.0)) throw ConfigError("synth: decay hours must be > 0");
    if (!(e.spread_cells >= 0.0)) throw ConfigError("synth: spatial spread must be >= 0");
  }
};

inline std::vector<double> constant_rates(std::size_t rows, std::size_t cols, double rate) {
  return std::vector<double>(rows * cols * 24, rate);
}

// Smooth spatial hot spot around the grid centre times a sinusoidal daily
// profile peaking at `peak_hour`; the grand mean over cells and hours is
// `mean_rate`.
inline std::vector<double> diurnal_rates(std::size_t rows, std::size_t cols, double mean_rate,
                                         double amplitude, double peak_hour) {
  std::vector<double> spatial(rows * cols);
  const double ci = 0.5 * static_cast<double>(rows - 1);
  const double cj = 0.35 * static_cast<double>(cols - 1);
  const double s = std::max(1.0, static_cast<double>(std::max(rows, cols)) / 3.0);
  double total = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double dr = static_cast<double>(r) - ci, dc = static_cast<double>(c) - cj;
      spatial[r * cols + c] = 0.3 + 1.5 * std::exp(-(dr * dr + dc * dc) / (2 * s * s));
      total += spatial[r * cols + c];
    }
  const double norm = static_cast<double>(rows * cols) / total;
  std::vector<double> rates(rows * cols * 24);
  for (std::size_t cell = 0; cell < rows * cols; ++cell)
    for (std::size_t h = 0; h < 24; ++h) {
      const double phase = 2.0 * std::numbers::pi * (static_cast<double>(h) - peak_hour) / 24.0;
      rates[cell * 24 + h] =
          std::max(0.0, mean_rate * spatial[cell] * norm * (1.0 + amplitude * std::cos(phase)));
    }
  return rates;
}

// Cluster-process simulation: Poisson background per cell-hour, then every
// event begets Poisson(branching) children with exponential delay and a
// Gaussian cell displacement (clipped to the grid). Output is sorted by start
// time and ids are assigned in that order.
inline std::vector<EventRecord> synth_events(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const EpochSeconds t0 = cfg.start_hour * kSecondsPerHour;
  const EpochSeconds horizon = t0 + static_cast<EpochSeconds>(cfg.days) * 24 * kSecondsPerHour;
  const grid::GridSpec box{cfg.bounds.lat_min, cfg.bounds.lat_max, cfg.bounds.lon_min,
                           cfg.bounds.lon_max, cfg.rows, cfg.cols};

  struct Pending {
    EpochSeconds start;
    std::size_t r, c;
  };
  std::vector<Pending> events;
  for (std::size_t d = 0; d < cfg.days; ++d)
    for (std::size_t h = 0; h < 24; ++h) {
      const EpochSeconds hour_start = t0 + static_cast<EpochSeconds>(d * 24 + h) * kSecondsPerHour;
      for (std::size_t r = 0; r < cfg.rows; ++r)
        for (std::size_t c = 0; c < cfg.cols; ++c) {
          const double lambda = cfg.rate(r, c, h);
          if (lambda <= 0.0) continue;
          std::poisson_distribution<int> pois(lambda);
          const int k = pois(rng);
          for (int i = 0; i < k; ++i) {
            const auto off = static_cast<EpochSeconds>(unit(rng) * kSecondsPerHour);
            events.push_back({hour_start + std::min<EpochSeconds>(off, kSecondsPerHour - 1), r, c});
          }
        }
    }

  const auto& ex = cfg.excitation;
  if (ex.branching_ratio > 0.0) {
    std::poisson_distribution<int> offspring(ex.branching_ratio);
    std::exponential_distribution<double> delay(1.0 / ex.decay_hours);
    std::normal_distribution<double> jitter(0.0, ex.spread_cells);
    auto clip = [](double v, std::size_t n) {
      const double hi = static_cast<double>(n - 1);
      return static_cast<std::size_t>(std::clamp(std::round(v), 0.0, hi));
    };
    for (std::size_t i = 0; i < events.size(); ++i) {
      const Pending parent = events[i];
      const int k = offspring(rng);
      for (int j = 0; j < k; ++j) {
        const double dt = delay(rng);
        const double dr = ex.spread_cells > 0 ? jitter(rng) : 0.0;
        const double dc = ex.spread_cells > 0 ? jitter(rng) : 0.0;
        const EpochSeconds t =
            parent.start + static_cast<EpochSeconds>(dt * static_cast<double>(kSecondsPerHour));
        if (t >= horizon) continue;
        events.push_back({t, clip(static_cast<double>(parent.r) + dr, cfg.rows),
                          clip(static_cast<double>(parent.c) + dc, cfg.cols)});
      }
    }
  }

  std::stable_sort(events.begin(), events.end(),
                   [](const Pending& a, const Pending& b) { return a.start < b.start; });
  std::vector<EventRecord> out;
  out.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const double lat0 = box.lat_edge(e.r), lat1 = box.lat_edge(e.r + 1);
    const double lon0 = box.lon_edge(e.c), lon1 = box.lon_edge(e.c + 1);
    EventRecord rec;
    rec.id = "e" + std::to_string(i + 1);
    rec.start = e.start;
    rec.lat = lat0 + unit(rng) * (lat1 - lat0);
    rec.lon = lon0 + unit(rng) * (lon1 - lon0);
    out.push_back(std::move(rec));
  }
  return out;
}

// Hourly weather rows to accompany a synthetic event stream.
inline std::vector<WeatherRow> synth_weather(EpochHour start_hour, std::size_t hours,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<WeatherRow> rows;
  rows.reserve(hours);
  for (std::size_t i = 0; i < hours; ++i) {
    const EpochHour h = start_hour + static_cast<EpochHour>(i);
    const double hod = static_cast<double>(h - day_of_hour(h) * 24);
    WeatherRow w;
    w.ts = h * kSecondsPerHour;
    w.temp = 18.0 + 6.0 * std::sin(2.0 * std::numbers::pi * (hod - 9.0) / 24.0) + noise(rng);
    w.wind = std::abs(3.0 + 1.5 * noise(rng));
    w.fog = unit(rng) < 0.05 ? 1.0 : 0.0;
    w.rain = unit(rng) < 0.04 ? 1.0 : 0.0;
    w.thunder = unit(rng) < 0.01 ? 1.0 : 0.0;
    rows.push_back(w);
  }
  return rows;
}

}  // namespace stcast::ingest
