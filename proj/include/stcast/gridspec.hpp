#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>

#include "stcast/error.hpp"

namespace stcast::grid {

// Rectangular lat/lon window split into rows × cols equal cells. Rows index
// latitude south→north, columns index longitude west→east.
struct GridSpec {
  double lat_min = 0.0;
  double lat_max = 1.0;
  double lon_min = 0.0;
  double lon_max = 1.0;
  std::size_t rows = 1;
  std::size_t cols = 1;

  void validate() const {
    if (!(lat_min < lat_max) || !(lon_min < lon_max))
      throw ConfigError("grid spec: bounds must satisfy min < max");
    if (rows < 1 || cols < 1) throw ConfigError("grid spec: rows and cols must be >= 1");
    if (lat_min < -90.0 || lat_max > 90.0 || lon_min < -180.0 || lon_max > 180.0)
      throw ConfigError("grid spec: bounds outside WGS84 range");
  }

  double lat_edge(std::size_t i) const {
    return i >= rows ? lat_max
                     : lat_min + (lat_max - lat_min) * static_cast<double>(i) /
                                     static_cast<double>(rows);
  }
  double lon_edge(std::size_t j) const {
    return j >= cols ? lon_max
                     : lon_min + (lon_max - lon_min) * static_cast<double>(j) /
                                     static_cast<double>(cols);
  }

  bool operator==(const GridSpec&) const = default;
};

// The central Los Angeles window holding the bulk of recorded crime, 16×16.
inline GridSpec default_la_gridspec() {
  return GridSpec{33.6927, 34.3837, -118.7051, -118.1157, 16, 16};
}

// Area of one cell in km² on a spherical earth, evaluated at the window's
// central latitude.
inline double cell_area_km2(const GridSpec& spec) {
  constexpr double kEarthRadiusKm = 6371.0088;
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double mid = 0.5 * (spec.lat_min + spec.lat_max) * kDeg;
  const double dlat = (spec.lat_max - spec.lat_min) / static_cast<double>(spec.rows) * kDeg;
  const double dlon = (spec.lon_max - spec.lon_min) / static_cast<double>(spec.cols) * kDeg;
  return kEarthRadiusKm * dlat * kEarthRadiusKm * dlon * std::cos(mid);
}

}  // namespace stcast::grid
