#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "stcast/ingest.hpp"

namespace si = stcast::ingest;
using stcast::parse_iso_datetime;

namespace {

si::EventParseResult parse(const std::string& text) {
  std::istringstream in(text);
  return si::parse_events(in);
}

si::WeatherRow weather_at(stcast::EpochHour h, int minute, double temp) {
  si::WeatherRow w;
  w.ts = h * stcast::kSecondsPerHour + minute * 60;
  w.temp = temp;
  w.wind = 2.0;
  return w;
}

}  // namespace

TEST(ParseEvents, MissingEndIsAbsent) {
  auto res = parse("id,start,end,lat,lon\ne1,2015-12-20T13:05:00Z,,34.0,-118.3\n");
  ASSERT_TRUE(res.rejected.empty());
  ASSERT_EQ(res.records.size(), 1u);
  const auto& e = res.records[0];
  EXPECT_EQ(e.id, "e1");
  EXPECT_EQ(e.start, *parse_iso_datetime("2015-12-20T13:05:00Z"));
  EXPECT_FALSE(e.end.has_value());
  EXPECT_DOUBLE_EQ(e.lat, 34.0);
  EXPECT_DOUBLE_EQ(e.lon, -118.3);
}

TEST(ParseEvents, LatitudeOutOfRangeIsRowError) {
  auto res = parse(
      "id,start,end,lat,lon\n"
      "a,2015-12-20T13:05:00Z,,95,-118.3\n"
      "b,2015-12-20T14:05:00Z,,34.1,-118.3\n");
  ASSERT_EQ(res.rejected.size(), 1u);
  EXPECT_EQ(res.rejected[0].row, 2u);
  ASSERT_EQ(res.records.size(), 1u);
  EXPECT_EQ(res.records[0].id, "b");
}

TEST(ParseEvents, PreservesFileOrder) {
  auto res = parse(
      "id,start,end,lat,lon\n"
      "z,2015-12-21T00:00:00Z,2015-12-21T01:00:00Z,34.0,-118.3\n"
      "a,2015-12-20T00:00:00Z,,34.1,-118.2\n"
      "m,2015-12-22T00:00:00Z,,34.2,-118.1\n");
  ASSERT_EQ(res.records.size(), 3u);
  EXPECT_EQ(res.records[0].id, "z");
  EXPECT_EQ(res.records[1].id, "a");
  EXPECT_EQ(res.records[2].id, "m");
  EXPECT_TRUE(res.records[0].end.has_value());
}

TEST(ParseEvents, MissingHeaderThrows) {
  EXPECT_THROW(parse("e1,2015-12-20T13:05:00Z,,34.0,-118.3\n"), stcast::FormatError);
}

TEST(ParseEvents, EmptyFileGivesEmptyList) {
  auto res = parse("");
  EXPECT_TRUE(res.records.empty());
  EXPECT_TRUE(res.rejected.empty());
}

TEST(ParseEvents, RejectsBadRowsWithLineNumbers) {
  auto res = parse(
      "id,start,end,lat,lon\n"
      "a,not-a-time,,34,-118\n"
      "b,2015-12-20T13:00:00Z,2015-12-20T12:00:00Z,34,-118\n"
      "c,2015-12-20T13:00:00Z,,34,-190\n"
      "d,2015-12-20T13:00:00Z,,x,-118\n"
      "e,2015-12-20T13:00:00Z,,34\n");
  EXPECT_TRUE(res.records.empty());
  ASSERT_EQ(res.rejected.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(res.rejected[i].row, i + 2);
}

TEST(ParseEvents, WriteThenParseRoundTrips) {
  std::vector<si::EventRecord> events = {
      {"e1", 1450616700, std::nullopt, 34.0, -118.3},
      {"e2", 1450620000, 1450623600, 33.987654321, -118.123456789},
      {"e3", 0, 0, -89.5, 179.25},
  };
  std::ostringstream out;
  si::write_events(out, events);
  auto res = parse(out.str());
  ASSERT_TRUE(res.rejected.empty());
  EXPECT_EQ(res.records, events);
}

TEST(FeatureTable, AveragesRowsWithinAnHour) {
  const stcast::EpochHour h = 400000;
  std::vector<si::WeatherRow> w = {weather_at(h, 5, 10.0), weather_at(h, 35, 14.0),
                                   weather_at(h + 1, 0, 20.0)};
  auto t = si::build_feature_table(w, {}, {h, h + 2});
  ASSERT_EQ(t.hours(), 2u);
  const double raw = t.row(0)[si::kTemperature] * t.temperature.stddev + t.temperature.mean;
  EXPECT_NEAR(raw, 12.0, 1e-12);
}

TEST(FeatureTable, InterpolatesMissingHour) {
  const stcast::EpochHour h = 400000;
  std::vector<si::WeatherRow> w = {weather_at(h - 1, 0, 10.0), weather_at(h + 1, 0, 14.0)};
  auto t = si::build_feature_table(w, {}, {h - 1, h + 2});
  ASSERT_EQ(t.hours(), 3u);
  const double raw = t.row(1)[si::kTemperature] * t.temperature.stddev + t.temperature.mean;
  EXPECT_NEAR(raw, 12.0, 1e-12);
}

TEST(FeatureTable, ConstantTemperatureScoresZero) {
  const stcast::EpochHour h = 400000;
  std::vector<si::WeatherRow> w;
  for (int i = 0; i < 10; ++i) w.push_back(weather_at(h + i, 0, 21.5));
  auto t = si::build_feature_table(w, {}, {h, h + 10});
  for (std::size_t r = 0; r < t.hours(); ++r) EXPECT_EQ(t.row(r)[si::kTemperature], 0.0);
}

TEST(FeatureTable, NoRowsInRangeThrows) {
  const stcast::EpochHour h = 400000;
  std::vector<si::WeatherRow> w = {weather_at(h + 50, 0, 10.0)};
  EXPECT_THROW(si::build_feature_table(w, {}, {h, h + 10}), stcast::DataError);
  EXPECT_THROW(si::build_feature_table({}, {}, {h, h + 10}), stcast::DataError);
}

TEST(FeatureTable, NonFiniteValueThrows) {
  const stcast::EpochHour h = 400000;
  std::vector<si::WeatherRow> w = {weather_at(h, 0, std::nan(""))};
  EXPECT_THROW(si::build_feature_table(w, {}, {h, h + 1}), stcast::DataError);
}

TEST(FeatureTable, FlagsAreThresholdedAndCopiedFromNearerNeighbour) {
  const stcast::EpochHour h = 400000;
  auto a = weather_at(h, 0, 10), b = weather_at(h, 30, 10), c = weather_at(h + 3, 0, 10);
  a.rain = 1.0;
  b.rain = 0.0;  // mean 0.5 thresholds to 1
  c.rain = 0.0;
  c.fog = 1.0;
  auto t = si::build_feature_table(std::vector{a, b, c}, {}, {h, h + 4});
  EXPECT_EQ(t.row(0)[si::kRain], 1.0);
  EXPECT_EQ(t.row(1)[si::kRain], 1.0);  // nearer to h
  EXPECT_EQ(t.row(2)[si::kRain], 0.0);  // nearer to h+3
  EXPECT_EQ(t.row(2)[si::kFog], 1.0);
  EXPECT_EQ(t.row(3)[si::kFog], 1.0);
}

TEST(FeatureTable, TieGoesToEarlierNeighbour) {
  const stcast::EpochHour h = 400000;
  auto a = weather_at(h, 0, 10), c = weather_at(h + 2, 0, 10);
  a.thunder = 1.0;
  auto t = si::build_feature_table(std::vector{a, c}, {}, {h, h + 3});
  EXPECT_EQ(t.row(1)[si::kThunder], 1.0);
}

TEST(FeatureTable, EdgeGapsCopyNearestAndHolidayFlag) {
  const auto day = *stcast::parse_iso_date("2015-07-04");
  const stcast::EpochHour h = day * 24;
  std::vector<si::WeatherRow> w = {weather_at(h + 5, 0, 10.0), weather_at(h + 6, 0, 20.0)};
  auto t = si::build_feature_table(w, {day}, {h - 2, h + 10});
  ASSERT_EQ(t.hours(), 12u);
  auto raw = [&](std::size_t r) {
    return t.row(r)[si::kTemperature] * t.temperature.stddev + t.temperature.mean;
  };
  EXPECT_NEAR(raw(0), 10.0, 1e-9);
  EXPECT_NEAR(raw(11), 20.0, 1e-9);
  EXPECT_EQ(t.row(0)[si::kHoliday], 0.0);  // previous day
  EXPECT_EQ(t.row(2)[si::kHoliday], 1.0);
  EXPECT_NEAR(t.row(2)[si::kHourSin], 0.0, 1e-12);
  EXPECT_NEAR(t.row(2)[si::kHourCos], 1.0, 1e-12);
}

TEST(FeatureTable, InterpolatedValuesLieBetweenFlanks) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> temp(-5, 35);
  std::bernoulli_distribution keep(0.3);
  const stcast::EpochHour h = 420000;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<si::WeatherRow> w;
    std::vector<std::optional<double>> known(48);
    for (int i = 0; i < 48; ++i)
      if (keep(rng) || i == 0 || i == 47) {
        known[i] = temp(rng);
        w.push_back(weather_at(h + i, 0, *known[i]));
      }
    auto t = si::build_feature_table(w, {}, {h, h + 48});
    ASSERT_EQ(t.hours(), 48u);
    for (int i = 0; i < 48; ++i) {
      if (known[i]) continue;
      int lo = i, hi = i;
      while (!known[lo]) --lo;
      while (!known[hi]) ++hi;
      const double v = t.row(i)[si::kTemperature] * t.temperature.stddev + t.temperature.mean;
      EXPECT_GE(v, std::min(*known[lo], *known[hi]) - 1e-9);
      EXPECT_LE(v, std::max(*known[lo], *known[hi]) + 1e-9);
    }
  }
}

TEST(FeatureTable, WriteReadRoundTrip) {
  const stcast::EpochHour h = 400000;
  auto w = si::synth_weather(h, 30, 11);
  auto t = si::build_feature_table(w, {stcast::day_of_hour(h)}, {h, h + 30});
  std::stringstream io;
  si::write_features(io, t);
  auto back = si::read_features(io);
  EXPECT_EQ(back.start_hour, t.start_hour);
  EXPECT_EQ(back.values, t.values);
  EXPECT_EQ(back.temperature.mean, t.temperature.mean);
  EXPECT_EQ(back.wind.stddev, t.wind.stddev);
}

TEST(Weather, ParseRejectsBadFlag) {
  std::istringstream ok("ts,temp,wind,fog,rain,thunder\n2015-07-01T00:00:00Z,20,3,0,1,0\n");
  EXPECT_EQ(si::parse_weather(ok).size(), 1u);
  std::istringstream bad("ts,temp,wind,fog,rain,thunder\n2015-07-01T00:00:00Z,20,3,0,0.5,0\n");
  EXPECT_THROW(si::parse_weather(bad), stcast::FormatError);
  std::istringstream nohdr("2015-07-01T00:00:00Z,20,3,0,1,0\n");
  EXPECT_THROW(si::parse_weather(nohdr), stcast::FormatError);
}

TEST(Holidays, ParsesDatesAndSkipsComments) {
  std::istringstream in("# fixed\n2015-07-04\n\n2015-12-25\n");
  auto d = si::parse_holidays(in);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_TRUE(d.contains(*stcast::parse_iso_date("2015-12-25")));
  std::istringstream bad("2015-13-04\n");
  EXPECT_THROW(si::parse_holidays(bad), stcast::FormatError);
}

namespace {

si::SynthConfig constant_config(double rate, std::size_t days, std::uint64_t seed) {
  si::SynthConfig cfg;
  cfg.rows = 8;
  cfg.cols = 8;
  cfg.days = days;
  cfg.start_hour = *stcast::parse_iso_date("2015-07-01") * 24;
  cfg.base_rates = si::constant_rates(8, 8, rate);
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(SynthEvents, ZeroRatesGiveNoEvents) {
  auto cfg = constant_config(0.0, 10, 1);
  cfg.excitation.branching_ratio = 0.5;
  EXPECT_TRUE(si::synth_events(cfg).empty());
}

TEST(SynthEvents, DeterministicForSeed) {
  auto cfg = constant_config(0.3, 5, 99);
  cfg.excitation = {0.4, 2.0, 1.0};
  auto a = si::synth_events(cfg);
  auto b = si::synth_events(cfg);
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  cfg.seed = 100;
  EXPECT_NE(si::synth_events(cfg), a);
}

TEST(SynthEvents, SupercriticalBranchingRejected) {
  auto cfg = constant_config(0.1, 1, 1);
  cfg.excitation.branching_ratio = 1.0;
  EXPECT_THROW(si::synth_events(cfg), stcast::ConfigError);
  cfg.excitation.branching_ratio = 1.5;
  EXPECT_THROW(si::synth_events(cfg), stcast::ConfigError);
  cfg.excitation.branching_ratio = 0.2;
  cfg.base_rates[3] = -1.0;
  EXPECT_THROW(si::synth_events(cfg), stcast::ConfigError);
}

TEST(SynthEvents, TotalCountMatchesPoissonMean) {
  auto cfg = constant_config(2.0, 90, 2024);
  const double mean = 2.0 * 64 * 24 * 90;
  ASSERT_EQ(mean, 276480.0);
  const double sigma = std::sqrt(mean);
  const auto n = static_cast<double>(si::synth_events(cfg).size());
  EXPECT_LE(std::abs(n - mean), 3.0 * sigma);
}

TEST(SynthEvents, EventsSortedInsideHorizonAndBox) {
  auto cfg = constant_config(0.2, 7, 5);
  cfg.excitation = {0.5, 3.0, 1.5};
  auto ev = si::synth_events(cfg);
  const auto t0 = cfg.start_hour * stcast::kSecondsPerHour;
  const auto t1 = t0 + 7 * 24 * stcast::kSecondsPerHour;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (i) EXPECT_LE(ev[i - 1].start, ev[i].start);
    EXPECT_GE(ev[i].start, t0);
    EXPECT_LT(ev[i].start, t1);
    EXPECT_GE(ev[i].lat, cfg.bounds.lat_min);
    EXPECT_LE(ev[i].lat, cfg.bounds.lat_max);
    EXPECT_GE(ev[i].lon, cfg.bounds.lon_min);
    EXPECT_LE(ev[i].lon, cfg.bounds.lon_max);
    EXPECT_EQ(ev[i].id, "e" + std::to_string(i + 1));
  }
}

TEST(SynthEvents, PerCellHourlyMeanConvergesToRate) {
  si::SynthConfig cfg;
  cfg.rows = 2;
  cfg.cols = 2;
  cfg.days = 90;
  cfg.start_hour = *stcast::parse_iso_date("2015-07-01") * 24;
  cfg.base_rates = si::diurnal_rates(2, 2, 1.0, 0.8, 20);
  cfg.seed = 17;
  auto ev = si::synth_events(cfg);
  std::vector<double> counts(2 * 2 * 24, 0.0);
  const auto box = stcast::grid::GridSpec{cfg.bounds.lat_min, cfg.bounds.lat_max,
                                          cfg.bounds.lon_min, cfg.bounds.lon_max, 2, 2};
  for (const auto& e : ev) {
    const std::size_t r = e.lat < box.lat_edge(1) ? 0 : 1;
    const std::size_t c = e.lon < box.lon_edge(1) ? 0 : 1;
    const auto hod = static_cast<std::size_t>(stcast::hour_of(e.start) % 24);
    counts[(r * 2 + c) * 24 + hod] += 1.0;
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double lambda = cfg.base_rates[i];
    const double mean = counts[i] / 90.0;
    const double se = std::sqrt(lambda / 90.0);
    EXPECT_LE(std::abs(mean - lambda), 3.0 * se) << "cell-hour " << i;
  }
}

TEST(SynthWeather, HourlyRowsWithBinaryFlags) {
  auto w = si::synth_weather(1000, 48, 3);
  ASSERT_EQ(w.size(), 48u);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(w[i].ts, (1000 + static_cast<stcast::EpochHour>(i)) * 3600);
    for (double f : {w[i].fog, w[i].rain, w[i].thunder}) EXPECT_TRUE(f == 0.0 || f == 1.0);
  }
}
