#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace stcast {

// Seconds since 1970-01-01T00:00:00Z.
using EpochSeconds = std::int64_t;
// Hours since the epoch, floor(seconds / 3600).
using EpochHour = std::int64_t;

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kHoursPerDay = 24;

// Howard Hinnant's civil-from-days / days-from-civil.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

constexpr CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

constexpr EpochHour hour_of(EpochSeconds s) { return floor_div(s, kSecondsPerHour); }

constexpr std::int64_t day_of_hour(EpochHour h) { return floor_div(h, kHoursPerDay); }

// 0 = Monday ... 6 = Sunday. 1970-01-01 was a Thursday.
constexpr int weekday_of_day(std::int64_t day) {
  return static_cast<int>(((day % 7) + 7 + 3) % 7);
}

namespace detail {

inline bool take_int(std::string_view& s, std::size_t digits, int& out) {
  if (s.size() < digits) return false;
  int v = 0;
  for (std::size_t i = 0; i < digits; ++i) {
    const char c = s[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  s.remove_prefix(digits);
  return true;
}

inline bool take_char(std::string_view& s, char c) {
  if (s.empty() || s.front() != c) return false;
  s.remove_prefix(1);
  return true;
}

inline constexpr unsigned days_in_month(std::int64_t y, unsigned m) {
  constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  return m == 2 && leap ? 29u : kDays[m - 1];
}

}  // namespace detail

// Parses YYYY-MM-DD into days since the epoch.
inline std::optional<std::int64_t> parse_iso_date(std::string_view s) {
  int y = 0, m = 0, d = 0;
  if (!detail::take_int(s, 4, y) || !detail::take_char(s, '-') || !detail::take_int(s, 2, m) ||
      !detail::take_char(s, '-') || !detail::take_int(s, 2, d) || !s.empty())
    return std::nullopt;
  if (m < 1 || m > 12 || d < 1 || static_cast<unsigned>(d) > detail::days_in_month(y, m))
    return std::nullopt;
  return days_from_civil(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

// Accepts YYYY-MM-DD[(T| )HH:MM[:SS[.fff]]][Z|±HH:MM]; offsets are folded into
// UTC, fractional seconds are truncated. A bare date means midnight UTC.
inline std::optional<EpochSeconds> parse_iso_datetime(std::string_view s) {
  if (s.size() < 10) return std::nullopt;
  auto day = parse_iso_date(s.substr(0, 10));
  if (!day) return std::nullopt;
  s.remove_prefix(10);
  EpochSeconds t = *day * 86400;
  if (s.empty()) return t;
  if (!detail::take_char(s, 'T') && !detail::take_char(s, ' ')) return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  if (!detail::take_int(s, 2, hh) || !detail::take_char(s, ':') || !detail::take_int(s, 2, mm))
    return std::nullopt;
  if (detail::take_char(s, ':')) {
    if (!detail::take_int(s, 2, ss)) return std::nullopt;
    if (detail::take_char(s, '.')) {
      std::size_t n = 0;
      while (n < s.size() && s[n] >= '0' && s[n] <= '9') ++n;
      if (n == 0) return std::nullopt;
      s.remove_prefix(n);
    }
  }
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  t += hh * 3600 + mm * 60 + ss;
  if (s.empty() || (s.size() == 1 && s.front() == 'Z')) return t;
  const char sign = s.front();
  if (sign != '+' && sign != '-') return std::nullopt;
  s.remove_prefix(1);
  int oh = 0, om = 0;
  if (!detail::take_int(s, 2, oh)) return std::nullopt;
  detail::take_char(s, ':');
  if (!detail::take_int(s, 2, om) || !s.empty() || oh > 23 || om > 59) return std::nullopt;
  const EpochSeconds off = oh * 3600 + om * 60;
  return sign == '+' ? t - off : t + off;
}

inline std::string format_iso_date(std::int64_t day) {
  const auto c = civil_from_days(day);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(c.year), c.month,
                c.day);
  return buf;
}

inline std::string format_iso_datetime(EpochSeconds t) {
  const std::int64_t day = floor_div(t, 86400);
  const std::int64_t rem = t - day * 86400;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%sT%02lld:%02lld:%02lldZ", format_iso_date(day).c_str(),
                static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace stcast
