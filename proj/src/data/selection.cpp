#include <algorithm>

#include "fslstm/data/gauge.hpp"

namespace fslstm::data {

bool BoundingBox::contains(double lon, double lat) const {
  return lon >= std::min(lon_a, lon_b) && lon <= std::max(lon_a, lon_b) &&
         lat >= std::min(lat_a, lat_b) && lat <= std::max(lat_a, lat_b);
}

std::size_t quality_days(const GaugeRecord& record) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < record.days(); ++i) n += record.quality_day(i) ? 1 : 0;
  return n;
}

std::vector<std::string> select_gauges(const std::vector<GaugeRecord>& records,
                                       const BoundingBox& box, double min_years) {
  std::vector<std::string> ids;
  const double needed = 365.0 * min_years;
  for (const GaugeRecord& r : records) {
    if (!box.contains(r.attributes.lon, r.attributes.lat)) continue;
    if (static_cast<double>(quality_days(r)) < needed) continue;
    ids.push_back(r.id);
  }
  return ids;
}

}  // namespace fslstm::data
