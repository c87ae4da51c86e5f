#pragma once

// One gauge's daily series and static catchment descriptors, plus the CSV
// formats they are exchanged in.
//
// Gauge CSV (one file per gauge, the file stem is the gauge id):
//   date,precip_mm,soil_moisture_kgm2,tmin_c,tmean_c,tmax_c,streamflow_mm,quality
// Streamflow is catchment-depth mm/day; soil moisture is the top-layer
// kg/m2. An empty field is a gap. quality is 1 for a passing observation.
//
// Attributes CSV (one row per gauge):
//   gauge_id,lat,lon,<kAttributeNames...>

#include <array>
#include <cmath>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fslstm/data/date.hpp"

namespace fslstm::data {

inline constexpr std::size_t kStaticCount = 17;

inline constexpr std::array<std::string_view, kStaticCount> kAttributeNames = {
    "elev_mean",      "slope_mean",  "area",          "forest_perc",    "bedrock_depth",
    "water_table_depth", "sand_perc", "silt_perc",    "clay_perc",      "geol_permeability",
    "pressure_mean",  "pet_mean",    "aridity",       "high_prec_freq", "high_prec_dur",
    "low_prec_freq",  "low_prec_dur"};

inline constexpr std::array<std::string_view, 8> kGaugeColumns = {
    "date",   "precip_mm", "soil_moisture_kgm2", "tmin_c", "tmean_c",
    "tmax_c", "streamflow_mm", "quality"};

struct StaticAttributes {
  double lat = 0.0;
  double lon = 0.0;
  std::array<double, kStaticCount> values{};
};

/// Quality value stored for a row whose quality field is empty.
inline constexpr int kQualityMissing = -1;

/// Daily rows on a contiguous calendar starting at `start`. Missing values
/// are NaN; calendar days absent from the source file are present here as
/// all-missing rows, so row i is always day start + i.
struct GaugeRecord {
  std::string id;
  StaticAttributes attributes;
  Day start = 0;
  std::vector<double> precip;
  std::vector<double> soil_moisture;
  std::vector<double> tmin;
  std::vector<double> tmean;
  std::vector<double> tmax;
  std::vector<double> streamflow;
  std::vector<int> quality;

  std::size_t days() const { return precip.size(); }
  Day date(std::size_t i) const { return start + static_cast<Day>(i); }
  Day end() const { return start + static_cast<Day>(days()) - 1; }

  /// Every model input (precipitation, soil moisture, temperatures) is present.
  bool inputs_present(std::size_t i) const {
    return !std::isnan(precip[i]) && !std::isnan(soil_moisture[i]) && !std::isnan(tmin[i]) &&
           !std::isnan(tmean[i]) && !std::isnan(tmax[i]);
  }
  /// Streamflow present and flagged as passing.
  bool target_ok(std::size_t i) const { return !std::isnan(streamflow[i]) && quality[i] == 1; }
  bool quality_day(std::size_t i) const { return inputs_present(i) && target_ok(i); }

  void resize(std::size_t n);
  /// Keeps only rows whose dates fall in `range`.
  GaugeRecord slice(const DateRange& range) const;

  friend bool operator==(const GaugeRecord& a, const GaugeRecord& b);
};

using AttributeTable = std::map<std::string, StaticAttributes, std::less<>>;

/// Throws DataError naming the missing column, the row of a malformed value
/// or a duplicate gauge id.
AttributeTable read_attributes(std::istream& in);
AttributeTable load_attributes(const std::filesystem::path& path);
void write_attributes(std::ostream& out, const std::vector<GaugeRecord>& records);

/// Parses a gauge CSV. Dates must be strictly increasing; skipped dates become
/// gap rows. Throws DataError naming the missing column, or the row number of
/// a duplicate or decreasing date, malformed number or negative
/// precipitation/streamflow.
GaugeRecord read_gauge_csv(std::istream& in, std::string id, const StaticAttributes& attributes);
GaugeRecord load_gauge_csv(const std::filesystem::path& path,
                           const std::filesystem::path& attributes_path);
GaugeRecord load_gauge_csv(const std::filesystem::path& path, const AttributeTable& attributes);
void write_gauge_csv(std::ostream& out, const GaugeRecord& record);

/// Formats a double with the shortest text that parses back to the same bits.
std::string format_value(double v);

/// Closed longitude/latitude box; the two corners may be given in any order.
struct BoundingBox {
  double lon_a = 0.0;
  double lat_a = 0.0;
  double lon_b = 0.0;
  double lat_b = 0.0;

  bool contains(double lon, double lat) const;
};

std::size_t quality_days(const GaugeRecord& record);

/// Ids of the gauges inside `box` with at least min_years * 365 quality
/// days, in input order. An empty result is not an error.
std::vector<std::string> select_gauges(const std::vector<GaugeRecord>& records,
                                       const BoundingBox& box, double min_years);

}  // namespace fslstm::data
