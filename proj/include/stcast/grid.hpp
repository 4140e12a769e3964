#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stcast/error.hpp"
#include "stcast/gridspec.hpp"
#include "stcast/ingest.hpp"
#include "stcast/timeutil.hpp"

namespace stcast::grid {

enum class CubeState { raw, cumulative, upsampled_raw, upsampled_cumulative, scaled };

inline std::string_view to_string(CubeState s) {
  switch (s) {
    case CubeState::raw: return "raw";
    case CubeState::cumulative: return "cumulative";
    case CubeState::upsampled_raw: return "upsampled-raw";
    case CubeState::upsampled_cumulative: return "upsampled-cumulative";
    case CubeState::scaled: return "scaled";
  }
  return "raw";
}

inline CubeState cube_state_from_string(std::string_view s) {
  for (auto st : {CubeState::raw, CubeState::cumulative, CubeState::upsampled_raw,
                  CubeState::upsampled_cumulative, CubeState::scaled})
    if (to_string(st) == s) return st;
  throw FormatError("unknown cube state '" + std::string(s) + "'");
}

inline bool is_upsampled(CubeState s) {
  return s == CubeState::upsampled_raw || s == CubeState::upsampled_cumulative;
}

// Affine [min, max] → [-1, 1] map applied to a cube, plus the state the cube
// had before scaling.
struct ScaleMeta {
  double min = 0.0;
  double max = 1.0;
  CubeState base_state = CubeState::raw;
  bool operator==(const ScaleMeta&) const = default;
};

// Hourly T × H × W tensor of per-cell values.
struct CrimeCube {
  EpochHour start_hour = 0;
  std::size_t hours = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  CubeState state = CubeState::raw;
  std::optional<ScaleMeta> scale_meta;

  CrimeCube() = default;
  CrimeCube(EpochHour start, std::size_t t, std::size_t h, std::size_t w,
            CubeState st = CubeState::raw)
      : start_hour(start), hours(t), rows(h), cols(w), values(t * h * w, 0.0), state(st) {}

  std::size_t frame_size() const { return rows * cols; }
  std::span<double> frame(std::size_t t) { return {values.data() + t * frame_size(), frame_size()}; }
  std::span<const double> frame(std::size_t t) const {
    return {values.data() + t * frame_size(), frame_size()};
  }
  double& at(std::size_t t, std::size_t r, std::size_t c) {
    return values[(t * rows + r) * cols + c];
  }
  double at(std::size_t t, std::size_t r, std::size_t c) const {
    return values[(t * rows + r) * cols + c];
  }
  // Per-cell series over time (strided copy).
  std::vector<double> series(std::size_t r, std::size_t c) const {
    std::vector<double> out(hours);
    for (std::size_t t = 0; t < hours; ++t) out[t] = at(t, r, c);
    return out;
  }
  bool same_shape(const CrimeCube& o) const {
    return hours == o.hours && rows == o.rows && cols == o.cols;
  }
  // Sub-cube over [first, first + count) hours.
  CrimeCube slice(std::size_t first, std::size_t count) const {
    if (first + count > hours) throw ShapeError("cube slice out of range");
    CrimeCube out(start_hour + static_cast<EpochHour>(first), count, rows, cols, state);
    out.scale_meta = scale_meta;
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(first * frame_size()),
                count * frame_size(), out.values.begin());
    return out;
  }
  bool operator==(const CrimeCube&) const = default;
};

struct BinResult {
  CrimeCube cube;
  std::size_t outside_grid = 0;
  std::size_t outside_range = 0;
  std::size_t out_of_range() const { return outside_grid + outside_range; }
};

// Cell row for a latitude, cells half-open [edge_i, edge_{i+1}) except the
// last which also owns lat_max. Returns nullopt outside the window.
inline std::optional<std::size_t> row_of(const GridSpec& spec, double lat) {
  if (!(lat >= spec.lat_min) || !(lat <= spec.lat_max)) return std::nullopt;
  const double f = (lat - spec.lat_min) / (spec.lat_max - spec.lat_min);
  auto i = static_cast<std::size_t>(
      std::clamp(std::floor(f * static_cast<double>(spec.rows)), 0.0,
                 static_cast<double>(spec.rows - 1)));
  while (i > 0 && lat < spec.lat_edge(i)) --i;
  while (i + 1 < spec.rows && lat >= spec.lat_edge(i + 1)) ++i;
  return i;
}

inline std::optional<std::size_t> col_of(const GridSpec& spec, double lon) {
  if (!(lon >= spec.lon_min) || !(lon <= spec.lon_max)) return std::nullopt;
  const double f = (lon - spec.lon_min) / (spec.lon_max - spec.lon_min);
  auto j = static_cast<std::size_t>(
      std::clamp(std::floor(f * static_cast<double>(spec.cols)), 0.0,
                 static_cast<double>(spec.cols - 1)));
  while (j > 0 && lon < spec.lon_edge(j)) --j;
  while (j + 1 < spec.cols && lon >= spec.lon_edge(j + 1)) ++j;
  return j;
}

// Counts events per (hour, cell) using each event's start time.
inline BinResult bin_events(std::span<const ingest::EventRecord> events, const GridSpec& spec,
                            ingest::HourRange range) {
  spec.validate();
  if (range.empty()) throw DataError("bin_events: empty hour range");
  BinResult res{CrimeCube(range.begin, range.size(), spec.rows, spec.cols, CubeState::raw)};
  for (const auto& e : events) {
    const auto r = row_of(spec, e.lat);
    const auto c = col_of(spec, e.lon);
    if (!r || !c) {
      ++res.outside_grid;
      continue;
    }
    const EpochHour h = hour_of(e.start);
    if (!range.contains(h)) {
      ++res.outside_range;
      continue;
    }
    res.cube.at(static_cast<std::size_t>(h - range.begin), *r, *c) += 1.0;
  }
  return res;
}

// Text export: `manifest.txt` plus one row-major CSV per frame.
inline void export_cube(const CrimeCube& cube, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream m(dir / "manifest.txt", std::ios::binary);
    if (!m) throw FormatError("cannot write " + (dir / "manifest.txt").string());
    m << "start_hour,rows,cols,T,state\n";
    m << cube.start_hour << ',' << cube.rows << ',' << cube.cols << ',' << cube.hours << ','
      << to_string(cube.state) << '\n';
    if (cube.scale_meta) {
      m << "scale_min,scale_max,base_state\n";
      m << format_double(cube.scale_meta->min) << ',' << format_double(cube.scale_meta->max)
        << ',' << to_string(cube.scale_meta->base_state) << '\n';
    }
  }
  for (std::size_t t = 0; t < cube.hours; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06zu.csv", t);
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw FormatError("cannot write frame " + std::string(name));
    for (std::size_t r = 0; r < cube.rows; ++r) {
      for (std::size_t c = 0; c < cube.cols; ++c) {
        if (c) f << ',';
        f << format_double(cube.at(t, r, c));
      }
      f << '\n';
    }
  }
}

inline CrimeCube import_cube(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.txt", std::ios::binary);
  if (!m) throw FormatError("missing cube manifest in " + dir.string());
  std::string line;
  std::getline(m, line);
  if (ingest::detail::trim(line) != "start_hour,rows,cols,T,state")
    throw FormatError("cube manifest: bad header in " + dir.string());
  std::getline(m, line);
  auto f = ingest::detail::split_csv(ingest::detail::trim(line));
  if (f.size() != 5) throw FormatError("cube manifest: expected 5 fields");
  auto num = [](std::string_view s) {
    auto v = parse_double(s);
    if (!v || *v < 0 || *v != std::floor(*v)) throw FormatError("cube manifest: bad integer");
    return *v;
  };
  auto start = parse_double(f[0]);
  if (!start) throw FormatError("cube manifest: bad start_hour");
  CrimeCube cube(static_cast<EpochHour>(*start), static_cast<std::size_t>(num(f[3])),
                 static_cast<std::size_t>(num(f[1])), static_cast<std::size_t>(num(f[2])),
                 cube_state_from_string(ingest::detail::trim(f[4])));
  if (std::getline(m, line) && ingest::detail::trim(line) == "scale_min,scale_max,base_state") {
    std::getline(m, line);
    auto s = ingest::detail::split_csv(ingest::detail::trim(line));
    auto lo = s.size() == 3 ? parse_double(s[0]) : std::nullopt;
    auto hi = s.size() == 3 ? parse_double(s[1]) : std::nullopt;
    if (!lo || !hi) throw FormatError("cube manifest: bad scale line");
    cube.scale_meta = ScaleMeta{*lo, *hi, cube_state_from_string(ingest::detail::trim(s[2]))};
  }
  for (std::size_t t = 0; t < cube.hours; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06zu.csv", t);
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw FormatError("missing frame " + (dir / name).string());
    std::size_t r = 0;
    while (std::getline(in, line) && r < cube.rows) {
      auto cells = ingest::detail::split_csv(ingest::detail::trim(line));
      if (cells.size() != cube.cols)
        throw FormatError("frame " + std::string(name) + ": wrong column count");
      for (std::size_t c = 0; c < cube.cols; ++c) {
        auto v = parse_double(cells[c]);
        if (!v) throw FormatError("frame " + std::string(name) + ": bad value");
        cube.at(t, r, c) = *v;
      }
      ++r;
    }
    if (r != cube.rows) throw FormatError("frame " + std::string(name) + ": wrong row count");
  }
  return cube;
}

}  // namespace stcast::grid
