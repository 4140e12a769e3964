#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "stcast/error.hpp"

namespace stcast::cli {

// Binary 16-bit PGM, min-max scaled over the frame. A constant frame maps to
// all zeros. Samples are big-endian as the format requires.
inline std::vector<std::uint8_t> encode_heatmap(std::span<const double> frame, std::size_t rows,
                                                std::size_t cols) {
  if (frame.empty() || rows * cols != frame.size()) throw ShapeError("heatmap: empty or mis-sized frame");
  const auto [lo_it, hi_it] = std::minmax_element(frame.begin(), frame.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw NumericError("heatmap: non-finite value in frame");
  const std::string header = "P5 " + std::to_string(cols) + " " + std::to_string(rows) + " 65535\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 2 * frame.size());
  for (double v : frame) {
    const double u = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    const auto q = static_cast<std::uint16_t>(std::lround(u * 65535.0));
    out.push_back(static_cast<std::uint8_t>(q >> 8));
    out.push_back(static_cast<std::uint8_t>(q & 0xFF));
  }
  return out;
}

inline void emit_heatmap(std::span<const double> frame, std::size_t rows, std::size_t cols,
                         const std::filesystem::path& path) {
  const auto bytes = encode_heatmap(frame, rows, cols);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace stcast::cli
