#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "stcast/error.hpp"
#include "stcast/grid.hpp"

namespace stcast::signal {

using grid::CrimeCube;
using grid::CubeState;

inline constexpr std::size_t kDefaultPeriod = 24;

// Within-window inclusive running sum. Windows are [kT, (k+1)T) hour offsets
// from the cube's start hour.
inline CrimeCube diurnal_integrate(const CrimeCube& cube, std::size_t period = kDefaultPeriod) {
  if (period < 1) throw ConfigError("diurnal_integrate: period must be >= 1");
  if (cube.state != CubeState::raw && cube.state != CubeState::upsampled_raw)
    throw StateError("diurnal_integrate expects a raw cube, got " +
                     std::string(grid::to_string(cube.state)));
  CrimeCube out = cube;
  out.state = cube.state == CubeState::raw ? CubeState::cumulative : CubeState::upsampled_cumulative;
  const std::size_t fs = cube.frame_size();
  for (std::size_t t = 0; t < cube.hours; ++t) {
    if (t % period == 0) continue;
    auto cur = out.frame(t);
    auto prev = out.frame(t - 1);
    for (std::size_t i = 0; i < fs; ++i) cur[i] += prev[i];
  }
  return out;
}

inline CrimeCube diurnal_differentiate(const CrimeCube& cube, std::size_t period = kDefaultPeriod) {
  if (period < 1) throw ConfigError("diurnal_differentiate: period must be >= 1");
  if (cube.state != CubeState::cumulative && cube.state != CubeState::upsampled_cumulative)
    throw StateError("diurnal_differentiate expects a cumulative cube, got " +
                     std::string(grid::to_string(cube.state)));
  CrimeCube out = cube;
  out.state = cube.state == CubeState::cumulative ? CubeState::raw : CubeState::upsampled_raw;
  const std::size_t fs = cube.frame_size();
  for (std::size_t t = 0; t < cube.hours; ++t) {
    if (t % period == 0) continue;
    auto cur = out.frame(t);
    auto prev = cube.frame(t - 1);
    for (std::size_t i = 0; i < fs; ++i) cur[i] -= prev[i];
  }
  return out;
}

// Corner-aligned bilinear 2× refinement of one H×W frame to (2H−1)×(2W−1).
inline std::vector<double> upsample_frame(std::span<const double> in, std::size_t h,
                                          std::size_t w) {
  if (h < 2 || w < 2) throw ShapeError("spatial_upsample: frame must be at least 2×2");
  if (in.size() != h * w) throw ShapeError("spatial_upsample: frame size mismatch");
  const std::size_t oh = 2 * h - 1, ow = 2 * w - 1;
  std::vector<double> out(oh * ow);
  auto src = [&](std::size_t i, std::size_t j) { return in[i * w + j]; };
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      out[(2 * i) * ow + 2 * j] = src(i, j);
      if (i + 1 < h) out[(2 * i + 1) * ow + 2 * j] = (src(i, j) + src(i + 1, j)) / 2.0;
      if (j + 1 < w) out[(2 * i) * ow + 2 * j + 1] = (src(i, j) + src(i, j + 1)) / 2.0;
      if (i + 1 < h && j + 1 < w)
        out[(2 * i + 1) * ow + 2 * j + 1] =
            (src(i, j) + src(i + 1, j) + src(i, j + 1) + src(i + 1, j + 1)) / 4.0;
    }
  return out;
}

inline std::vector<double> downsample_frame(std::span<const double> in, std::size_t h,
                                            std::size_t w) {
  if (h % 2 == 0 || w % 2 == 0) throw ShapeError("spatial_downsample: dimensions must be odd");
  if (in.size() != h * w) throw ShapeError("spatial_downsample: frame size mismatch");
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  std::vector<double> out(oh * ow);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) out[i * ow + j] = in[(2 * i) * w + 2 * j];
  return out;
}

inline CrimeCube spatial_upsample(const CrimeCube& cube) {
  CubeState next;
  switch (cube.state) {
    case CubeState::raw: next = CubeState::upsampled_raw; break;
    case CubeState::cumulative: next = CubeState::upsampled_cumulative; break;
    default:
      throw StateError("spatial_upsample: cube is already " +
                       std::string(grid::to_string(cube.state)));
  }
  if (cube.rows < 2 || cube.cols < 2) throw ShapeError("spatial_upsample: H and W must be >= 2");
  CrimeCube out(cube.start_hour, cube.hours, 2 * cube.rows - 1, 2 * cube.cols - 1, next);
  for (std::size_t t = 0; t < cube.hours; ++t) {
    auto f = upsample_frame(cube.frame(t), cube.rows, cube.cols);
    std::copy(f.begin(), f.end(), out.frame(t).begin());
  }
  return out;
}

inline CrimeCube spatial_downsample(const CrimeCube& cube) {
  CubeState next;
  switch (cube.state) {
    case CubeState::upsampled_raw: next = CubeState::raw; break;
    case CubeState::upsampled_cumulative: next = CubeState::cumulative; break;
    default:
      throw StateError("spatial_downsample: cube is not upsampled (" +
                       std::string(grid::to_string(cube.state)) + ")");
  }
  if (cube.rows % 2 == 0 || cube.cols % 2 == 0)
    throw ShapeError("spatial_downsample: dimensions must be odd");
  CrimeCube out(cube.start_hour, cube.hours, (cube.rows + 1) / 2, (cube.cols + 1) / 2, next);
  for (std::size_t t = 0; t < cube.hours; ++t) {
    auto f = downsample_frame(cube.frame(t), cube.rows, cube.cols);
    std::copy(f.begin(), f.end(), out.frame(t).begin());
  }
  return out;
}

inline double scale_value(double v, double lo, double hi) {
  return 2.0 * (v - lo) / (hi - lo) - 1.0;
}
inline double unscale_value(double s, double lo, double hi) {
  return (s + 1.0) * (hi - lo) / 2.0 + lo;
}

// Affine map [lo, hi] → [−1, 1]; the bounds are recorded on the cube.
inline CrimeCube scale_to_unit(const CrimeCube& cube, double lo, double hi) {
  if (!(lo < hi)) throw DataError("scale_to_unit: degenerate scale (min must be < max)");
  if (cube.state == CubeState::scaled) throw StateError("scale_to_unit: cube is already scaled");
  CrimeCube out = cube;
  for (double& v : out.values) v = scale_value(v, lo, hi);
  out.scale_meta = grid::ScaleMeta{lo, hi, cube.state};
  out.state = CubeState::scaled;
  return out;
}

inline CrimeCube unscale(const CrimeCube& cube) {
  if (cube.state != CubeState::scaled || !cube.scale_meta)
    throw StateError("unscale: cube carries no scale metadata");
  const auto meta = *cube.scale_meta;
  CrimeCube out = cube;
  for (double& v : out.values) v = unscale_value(v, meta.min, meta.max);
  out.state = meta.base_state;
  out.scale_meta.reset();
  return out;
}

// Clamp of a predicted cumulative frame: positive part at the first slot of a
// window (slot % period == 0), otherwise also never below the previous hour's
// cumulative frame.
inline std::vector<double> postprocess_prediction(std::span<const double> yhat_next,
                                                  std::span<const double> y_prev,
                                                  std::size_t slot,
                                                  std::size_t period = kDefaultPeriod) {
  if (yhat_next.size() != y_prev.size())
    throw ShapeError("postprocess_prediction: frame shapes differ");
  std::vector<double> out(yhat_next.size());
  const bool window_start = slot % period == 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double pos = yhat_next[i] > 0.0 ? yhat_next[i] : 0.0;
    out[i] = window_start ? pos : std::max(pos, y_prev[i]);
  }
  return out;
}

}  // namespace stcast::signal
