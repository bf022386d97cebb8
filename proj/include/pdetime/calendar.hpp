#pragma once

// Timestamps are naive (zone-less) wall-clock times stored as seconds since
// 1970-01-01 00:00:00, which is how the ETT-style CSV files record them.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace pdetime {

using Timestamp = std::chrono::sys_seconds;

struct CalendarFields {
  int year, month, day;      // month 1-12, day 1-31
  int hour, minute, second;
  int day_of_year;           // 1-366
  int day_of_week;           // 0 = Monday
};

/// Parses "YYYY-MM-DD HH:MM:SS" (seconds optional). Returns nullopt on any
/// malformed or out-of-range field.
inline std::optional<Timestamp> parse_timestamp(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char tail = 0;
  const std::string buf(text);
  const int n = std::sscanf(buf.c_str(), "%4d-%2d-%2d %2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s, &tail);
  if (n != 6 && n != 5) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59) return std::nullopt;
  return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{s};
}

inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto days = floor<std::chrono::days>(t);
  const year_month_day ymd{days};
  const hh_mm_ss hms{t - days};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

inline CalendarFields calendar_fields(Timestamp t) {
  using namespace std::chrono;
  const auto days = floor<std::chrono::days>(t);
  const year_month_day ymd{days};
  const hh_mm_ss hms{t - days};
  const sys_days jan1{ymd.year() / January / 1};
  CalendarFields f{};
  f.year = static_cast<int>(ymd.year());
  f.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
  f.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
  f.hour = static_cast<int>(hms.hours().count());
  f.minute = static_cast<int>(hms.minutes().count());
  f.second = static_cast<int>(hms.seconds().count());
  f.day_of_year = static_cast<int>((days - jan1).count()) + 1;
  f.day_of_week = static_cast<int>(weekday{days}.iso_encoding()) - 1;
  return f;
}

}  // namespace pdetime
