#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fslstm::data {

/// Calendar day as a count of days since 1970-01-01.
using Day = std::int32_t;

/// Parses YYYY-MM-DD; throws DataError on anything else or an impossible date.
Day parse_date(std::string_view text);
std::string format_date(Day day);

/// Day of the year, 1-based.
int day_of_year(Day day);

struct DateRange {
  Day first = 0;
  Day last = 0;  ///< inclusive

  bool contains(Day d) const { return d >= first && d <= last; }
  bool overlaps(const DateRange& o) const { return first <= o.last && o.first <= last; }
};

}  // namespace fslstm::data
