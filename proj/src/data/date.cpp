#include "fslstm/data/date.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "fslstm/errors.hpp"

namespace fslstm::data {

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

}  // namespace

Day parse_date(std::string_view text) {
  int y = 0, m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_int(text.substr(0, 4), y) ||
      !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d))
    throw DataError("malformed date '" + std::string(text) + "', expected YYYY-MM-DD");
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
  return static_cast<Day>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

std::string format_date(Day day) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int day_of_year(Day day) {
  const std::chrono::sys_days sd{std::chrono::days{day}};
  const std::chrono::year_month_day ymd{sd};
  const std::chrono::sys_days jan1{ymd.year() / std::chrono::January / 1};
  return static_cast<int>((sd - jan1).count()) + 1;
}

}  // namespace fslstm::data
