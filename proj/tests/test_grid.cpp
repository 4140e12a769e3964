#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "stcast/grid.hpp"
#include "stcast/ingest.hpp"
#include "test_util.hpp"

namespace sg = stcast::grid;
namespace si = stcast::ingest;

namespace {

si::EventRecord event_at(stcast::EpochHour h, double lat, double lon, int minute = 17) {
  return {"x", h * 3600 + minute * 60, std::nullopt, lat, lon};
}

}  // namespace

TEST(GridSpec, DefaultWindow) {
  const auto s = sg::default_la_gridspec();
  EXPECT_EQ(s, (sg::GridSpec{33.6927, 34.3837, -118.7051, -118.1157, 16, 16}));
  EXPECT_NO_THROW(s.validate());
  EXPECT_LT(s.lat_min, s.lat_max);
  EXPECT_LT(s.lon_min, s.lon_max);
}

TEST(GridSpec, CellAreaNearPublishedValue) {
  const double a = sg::cell_area_km2(sg::default_la_gridspec());
  EXPECT_NEAR(a, 17.8, 0.1 * 17.8);
}

TEST(GridSpec, InvalidSpecsRejected) {
  EXPECT_THROW((sg::GridSpec{1, 0, 0, 1, 2, 2}.validate()), stcast::ConfigError);
  EXPECT_THROW((sg::GridSpec{0, 1, 0, 1, 0, 2}.validate()), stcast::ConfigError);
  EXPECT_THROW((sg::GridSpec{-91, 1, 0, 1, 2, 2}.validate()), stcast::ConfigError);
}

TEST(BinEvents, CenterOfFirstCell) {
  const auto s = sg::default_la_gridspec();
  const double lat = 0.5 * (s.lat_edge(0) + s.lat_edge(1));
  const double lon = 0.5 * (s.lon_edge(0) + s.lon_edge(1));
  const stcast::EpochHour h0 = 400000;
  std::vector<si::EventRecord> ev = {event_at(h0 + 3, lat, lon)};
  auto res = sg::bin_events(ev, s, {h0, h0 + 10});
  EXPECT_EQ(res.out_of_range(), 0u);
  double total = 0;
  for (double v : res.cube.values) total += v;
  EXPECT_EQ(total, 1.0);
  EXPECT_EQ(res.cube.at(3, 0, 0), 1.0);
  EXPECT_EQ(res.cube.state, sg::CubeState::raw);
}

TEST(BinEvents, MaxCornerGoesToLastCell) {
  const auto s = sg::default_la_gridspec();
  std::vector<si::EventRecord> ev = {event_at(5, s.lat_max, s.lon_max)};
  auto res = sg::bin_events(ev, s, {0, 10});
  EXPECT_EQ(res.cube.at(5, s.rows - 1, s.cols - 1), 1.0);
}

TEST(BinEvents, OutsideWindowAndRangeAreCounted) {
  const auto s = sg::default_la_gridspec();
  std::vector<si::EventRecord> ev = {event_at(5, s.lat_min - 0.01, s.lon_min + 0.1),
                                     event_at(5, s.lat_min + 0.1, s.lon_max + 0.01),
                                     event_at(50, s.lat_min + 0.1, s.lon_min + 0.1),
                                     event_at(-1, s.lat_min + 0.1, s.lon_min + 0.1)};
  auto res = sg::bin_events(ev, s, {0, 10});
  EXPECT_EQ(res.outside_grid, 2u);
  EXPECT_EQ(res.outside_range, 2u);
  for (double v : res.cube.values) EXPECT_EQ(v, 0.0);
}

TEST(BinEvents, EmptyRangeThrows) {
  EXPECT_THROW(sg::bin_events({}, sg::default_la_gridspec(), {5, 5}), stcast::DataError);
}

class BinProperties : public ::testing::Test {
 protected:
  void SetUp() override {
    spec = sg::default_la_gridspec();
    std::mt19937_64 rng(42);
    // Generator output, plus some events just outside the box and the window.
    si::SynthConfig cfg;
    cfg.rows = spec.rows;
    cfg.cols = spec.cols;
    cfg.days = 2;
    cfg.start_hour = 400000;
    cfg.base_rates = si::constant_rates(spec.rows, spec.cols, 0.006);
    cfg.seed = 8;
    events = si::synth_events(cfg);
    events.resize(std::min<std::size_t>(events.size(), 450));
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    std::uniform_int_distribution<int> hr(-10, 60);
    while (events.size() < 500)
      events.push_back(event_at(cfg.start_hour + hr(rng), spec.lat_min + u(rng) + 0.2,
                                spec.lon_max + u(rng)));
    range = {cfg.start_hour, cfg.start_hour + 48};
  }
  sg::GridSpec spec;
  std::vector<si::EventRecord> events;
  si::HourRange range;
};

TEST_F(BinProperties, Conservation) {
  ASSERT_EQ(events.size(), 500u);
  auto res = sg::bin_events(events, spec, range);
  double total = 0;
  for (double v : res.cube.values) {
    EXPECT_EQ(v, std::floor(v));
    total += v;
  }
  EXPECT_EQ(total + static_cast<double>(res.out_of_range()), 500.0);
  EXPECT_GT(res.out_of_range(), 0u);
}

TEST_F(BinProperties, PermutationInvariant) {
  auto base = sg::bin_events(events, spec, range);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(events.begin(), events.end(), rng);
    auto res = sg::bin_events(events, spec, range);
    EXPECT_EQ(res.cube, base.cube);
    EXPECT_EQ(res.outside_grid, base.outside_grid);
    EXPECT_EQ(res.outside_range, base.outside_range);
  }
}

TEST_F(BinProperties, EventsFallInsideTheirCell) {
  for (const auto& e : events) {
    auto r = sg::row_of(spec, e.lat);
    auto c = sg::col_of(spec, e.lon);
    if (!r || !c) {
      EXPECT_TRUE(e.lat < spec.lat_min || e.lat > spec.lat_max || e.lon < spec.lon_min ||
                  e.lon > spec.lon_max);
      continue;
    }
    EXPECT_GE(e.lat, spec.lat_edge(*r));
    EXPECT_GE(e.lon, spec.lon_edge(*c));
    if (*r + 1 < spec.rows) EXPECT_LT(e.lat, spec.lat_edge(*r + 1));
    else EXPECT_LE(e.lat, spec.lat_max);
    if (*c + 1 < spec.cols) EXPECT_LT(e.lon, spec.lon_edge(*c + 1));
    else EXPECT_LE(e.lon, spec.lon_max);
  }
}

TEST(BinEvents, EdgesBelongToUpperCell) {
  const sg::GridSpec s{0.0, 1.0, 0.0, 1.0, 10, 10};
  for (std::size_t i = 1; i < 10; ++i) {
    EXPECT_EQ(*sg::row_of(s, s.lat_edge(i)), i);
    EXPECT_EQ(*sg::col_of(s, s.lon_edge(i)), i);
  }
  EXPECT_EQ(*sg::row_of(s, 1.0), 9u);
  EXPECT_FALSE(sg::row_of(s, std::nextafter(1.0, 2.0)).has_value());
}

TEST(CrimeCube, ExportImportRoundTrip) {
  stcast::testing::TempDir dir("cube");
  std::mt19937_64 rng(4);
  auto cube = stcast::testing::random_count_cube(rng, 5, 3, 4);
  cube.start_hour = 123456;
  sg::export_cube(cube, dir / "raw");
  EXPECT_EQ(sg::import_cube(dir / "raw"), cube);

  sg::CrimeCube scaled = cube;
  for (double& v : scaled.values) v = v / 7.0 - 0.3;
  scaled.state = sg::CubeState::scaled;
  scaled.scale_meta = sg::ScaleMeta{-2.5, 2.5, sg::CubeState::upsampled_cumulative};
  sg::export_cube(scaled, dir / "scaled");
  EXPECT_EQ(sg::import_cube(dir / "scaled"), scaled);
}

TEST(CrimeCube, ImportMissingDirectoryThrows) {
  stcast::testing::TempDir dir("cube");
  EXPECT_THROW(sg::import_cube(dir / "nope"), stcast::FormatError);
}

TEST(CrimeCube, SliceAndSeries) {
  std::mt19937_64 rng(5);
  auto cube = stcast::testing::random_count_cube(rng, 6, 2, 3);
  auto s = cube.slice(2, 3);
  EXPECT_EQ(s.start_hour, cube.start_hour + 2);
  EXPECT_EQ(s.at(0, 1, 2), cube.at(2, 1, 2));
  auto ser = cube.series(1, 1);
  for (std::size_t t = 0; t < 6; ++t) EXPECT_EQ(ser[t], cube.at(t, 1, 1));
  EXPECT_THROW(cube.slice(4, 3), stcast::ShapeError);
}
