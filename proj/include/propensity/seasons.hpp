#pragma once

#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace propensity {

struct DateTime {
  int year = 0;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;

  auto operator<=>(const DateTime&) const = default;
};

inline bool is_leap_year(int y) {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline int days_in_month(int year, int month) {
  static constexpr int d[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2 && is_leap_year(year)) return 29;
  return d[month - 1];
}

// http://howardhinnant.github.io/date_algorithms.html
inline long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

inline DateTime civil_from_days(long z) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  DateTime dt;
  dt.year = static_cast<int>(y + (m <= 2));
  dt.month = static_cast<int>(m);
  dt.day = static_cast<int>(d);
  return dt;
}

// Accepts YYYY-MM-DD with optional THH:MM[:SS] and optional trailing Z.
inline std::optional<DateTime> parse_iso8601(std::string_view s) {
  if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
  DateTime dt;
  auto digits = [&](std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      char c = s[pos + i];
      if (c < '0' || c > '9') return false;
      v = v * 10 + (c - '0');
    }
    out = v;
    return true;
  };
  if (!digits(0, 4, dt.year) || s.size() < 10) return std::nullopt;
  if (s[4] != '-' || s[7] != '-') return std::nullopt;
  if (!digits(5, 2, dt.month) || !digits(8, 2, dt.day)) return std::nullopt;
  if (dt.month < 1 || dt.month > 12) return std::nullopt;
  if (dt.day < 1 || dt.day > days_in_month(dt.year, dt.month)) return std::nullopt;
  if (s.size() == 10) return dt;
  if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
  if (s.size() < 16 || s[13] != ':') return std::nullopt;
  if (!digits(11, 2, dt.hour) || !digits(14, 2, dt.minute)) return std::nullopt;
  if (s.size() == 16) {
    // minutes precision
  } else if (s.size() == 19 && s[16] == ':') {
    if (!digits(17, 2, dt.second)) return std::nullopt;
  } else {
    return std::nullopt;
  }
  if (dt.hour > 23 || dt.minute > 59 || dt.second > 59) return std::nullopt;
  return dt;
}

inline std::string format_iso8601(const DateTime& dt) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", dt.year,
                dt.month, dt.day, dt.hour, dt.minute, dt.second);
  return buf;
}

// Heating season: Oct 1 of start_year through May 31 of start_year + 1.
struct HeatingSeason {
  int start_year = 0;

  auto operator<=>(const HeatingSeason&) const = default;

  std::string label() const {
    return std::to_string(start_year) + "-" + std::to_string(start_year + 1);
  }
};

// Oct-Dec belong to the season starting that year, Jan-May to the season
// started the year before. Jun-Sep fall outside every season.
inline std::optional<HeatingSeason> season_of(const DateTime& dt) {
  if (dt.month >= 10) return HeatingSeason{dt.year};
  if (dt.month <= 5) return HeatingSeason{dt.year - 1};
  return std::nullopt;
}

}  // namespace propensity
