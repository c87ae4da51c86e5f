#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "fslstm/data/gauge.hpp"
#include "fslstm/errors.hpp"

namespace fslstm::data {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? comma : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string row_prefix(std::size_t row) { return "row " + std::to_string(row) + ": "; }

double parse_number(std::string_view field, std::string_view column, std::size_t row) {
  double v = 0.0;
  const char* first = field.data();
  if (!field.empty() && field.front() == '+') ++first;
  auto r = std::from_chars(first, field.data() + field.size(), v);
  if (r.ec != std::errc() || r.ptr != field.data() + field.size() || !std::isfinite(v))
    throw DataError(row_prefix(row) + "malformed " + std::string(column) + " value '" +
                    std::string(field) + "'");
  return v;
}

double parse_optional(std::string_view field, std::string_view column, std::size_t row) {
  return field.empty() ? kNaN : parse_number(field, column, row);
}

// Maps each wanted column to its index in the header, naming the first one
// that is absent.
template <std::size_t N>
std::array<std::size_t, N> locate(const std::vector<std::string_view>& header,
                                  const std::array<std::string_view, N>& wanted,
                                  std::string_view what) {
  std::array<std::size_t, N> idx{};
  for (std::size_t k = 0; k < N; ++k) {
    std::size_t j = 0;
    while (j < header.size() && header[j] != wanted[k]) ++j;
    if (j == header.size())
      throw DataError(std::string(what) + ": missing column '" + std::string(wanted[k]) + "'");
    idx[k] = j;
  }
  return idx;
}

std::vector<std::string_view> read_header(std::istream& in, std::string& line,
                                          std::string_view what) {
  if (!std::getline(in, line)) throw DataError(std::string(what) + ": empty file, no header");
  // Tolerate a UTF-8 byte-order mark.
  if (line.size() >= 3 && std::memcmp(line.data(), "\xEF\xBB\xBF", 3) == 0) line.erase(0, 3);
  return split(line);
}

}  // namespace

std::string format_value(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void GaugeRecord::resize(std::size_t n) {
  precip.resize(n, kNaN);
  soil_moisture.resize(n, kNaN);
  tmin.resize(n, kNaN);
  tmean.resize(n, kNaN);
  tmax.resize(n, kNaN);
  streamflow.resize(n, kNaN);
  quality.resize(n, kQualityMissing);
}

GaugeRecord GaugeRecord::slice(const DateRange& range) const {
  GaugeRecord out;
  out.id = id;
  out.attributes = attributes;
  const Day first = std::max(range.first, start);
  const Day last = std::min(range.last, end());
  out.start = first;
  if (days() == 0 || first > last) return out;
  const auto a = static_cast<std::size_t>(first - start);
  const auto b = static_cast<std::size_t>(last - start) + 1;
  auto cut = [&](const auto& v) { return std::decay_t<decltype(v)>(v.begin() + a, v.begin() + b); };
  out.precip = cut(precip);
  out.soil_moisture = cut(soil_moisture);
  out.tmin = cut(tmin);
  out.tmean = cut(tmean);
  out.tmax = cut(tmax);
  out.streamflow = cut(streamflow);
  out.quality = cut(quality);
  return out;
}

namespace {
bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}
}  // namespace

bool operator==(const GaugeRecord& a, const GaugeRecord& b) {
  return a.id == b.id && a.start == b.start && a.attributes.lat == b.attributes.lat &&
         a.attributes.lon == b.attributes.lon && a.attributes.values == b.attributes.values &&
         same_bits(a.precip, b.precip) && same_bits(a.soil_moisture, b.soil_moisture) &&
         same_bits(a.tmin, b.tmin) && same_bits(a.tmean, b.tmean) && same_bits(a.tmax, b.tmax) &&
         same_bits(a.streamflow, b.streamflow) && a.quality == b.quality;
}

AttributeTable read_attributes(std::istream& in) {
  std::string header_line, line;
  const auto header = read_header(in, header_line, "attributes");
  std::array<std::string_view, kStaticCount + 3> wanted{};
  wanted[0] = "gauge_id";
  wanted[1] = "lat";
  wanted[2] = "lon";
  for (std::size_t k = 0; k < kStaticCount; ++k) wanted[k + 3] = kAttributeNames[k];
  const auto idx = locate(header, wanted, "attributes");

  AttributeTable table;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() < header.size())
      throw DataError("attributes " + row_prefix(row) + "expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    StaticAttributes a;
    const std::string id(fields[idx[0]]);
    if (id.empty()) throw DataError("attributes " + row_prefix(row) + "empty gauge_id");
    a.lat = parse_number(fields[idx[1]], "lat", row);
    a.lon = parse_number(fields[idx[2]], "lon", row);
    for (std::size_t k = 0; k < kStaticCount; ++k)
      a.values[k] = parse_number(fields[idx[k + 3]], kAttributeNames[k], row);
    if (!table.emplace(id, a).second)
      throw DataError("attributes " + row_prefix(row) + "duplicate gauge_id '" + id + "'");
  }
  return table;
}

AttributeTable load_attributes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open attributes file " + path.string());
  try {
    return read_attributes(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_attributes(std::ostream& out, const std::vector<GaugeRecord>& records) {
  out << "gauge_id,lat,lon";
  for (auto name : kAttributeNames) out << ',' << name;
  out << '\n';
  for (const GaugeRecord& r : records) {
    out << r.id << ',' << format_value(r.attributes.lat) << ',' << format_value(r.attributes.lon);
    for (double v : r.attributes.values) out << ',' << format_value(v);
    out << '\n';
  }
}

GaugeRecord read_gauge_csv(std::istream& in, std::string id, const StaticAttributes& attributes) {
  std::string header_line, line;
  const auto header = read_header(in, header_line, "gauge " + id);
  const auto idx = locate(header, kGaugeColumns, "gauge " + id);

  GaugeRecord rec;
  rec.id = std::move(id);
  rec.attributes = attributes;
  bool first = true;
  Day last = 0;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() < header.size())
      throw DataError(row_prefix(row) + "expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(f.size()));
    Day day = 0;
    try {
      day = parse_date(f[idx[0]]);
    } catch (const DataError& e) {
      throw DataError(row_prefix(row) + e.what());
    }
    if (first) {
      rec.start = day;
      first = false;
    } else if (day == last) {
      throw DataError(row_prefix(row) + "duplicate date " + format_date(day));
    } else if (day < last) {
      throw DataError(row_prefix(row) + "date " + format_date(day) + " is not after " +
                      format_date(last));
    }
    last = day;
    const std::size_t i = static_cast<std::size_t>(day - rec.start);
    rec.resize(i + 1);  // fills any skipped days with gap rows

    const double p = parse_optional(f[idx[1]], kGaugeColumns[1], row);
    const double q = parse_optional(f[idx[6]], kGaugeColumns[6], row);
    if (p < 0.0) throw DataError(row_prefix(row) + "negative precipitation " + format_value(p));
    if (q < 0.0) throw DataError(row_prefix(row) + "negative streamflow " + format_value(q));
    rec.precip[i] = p;
    rec.soil_moisture[i] = parse_optional(f[idx[2]], kGaugeColumns[2], row);
    rec.tmin[i] = parse_optional(f[idx[3]], kGaugeColumns[3], row);
    rec.tmean[i] = parse_optional(f[idx[4]], kGaugeColumns[4], row);
    rec.tmax[i] = parse_optional(f[idx[5]], kGaugeColumns[5], row);
    rec.streamflow[i] = q;
    const std::string_view qf = f[idx[7]];
    if (qf.empty()) {
      rec.quality[i] = kQualityMissing;
    } else {
      const double flag = parse_number(qf, kGaugeColumns[7], row);
      if (flag != std::floor(flag))
        throw DataError(row_prefix(row) + "quality flag must be an integer");
      rec.quality[i] = static_cast<int>(flag);
    }
  }
  return rec;
}

GaugeRecord load_gauge_csv(const std::filesystem::path& path, const AttributeTable& attributes) {
  const std::string id = path.stem().string();
  auto it = attributes.find(id);
  if (it == attributes.end()) throw DataError(path.string() + ": gauge '" + id + "' has no attributes row");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open gauge file " + path.string());
  try {
    return read_gauge_csv(in, id, it->second);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

GaugeRecord load_gauge_csv(const std::filesystem::path& path,
                           const std::filesystem::path& attributes_path) {
  return load_gauge_csv(path, load_attributes(attributes_path));
}

void write_gauge_csv(std::ostream& out, const GaugeRecord& r) {
  for (std::size_t k = 0; k < kGaugeColumns.size(); ++k)
    out << (k ? "," : "") << kGaugeColumns[k];
  out << '\n';
  auto field = [&](double v) {
    out << ',';
    if (!std::isnan(v)) out << format_value(v);
  };
  for (std::size_t i = 0; i < r.days(); ++i) {
    out << format_date(r.date(i));
    field(r.precip[i]);
    field(r.soil_moisture[i]);
    field(r.tmin[i]);
    field(r.tmean[i]);
    field(r.tmax[i]);
    field(r.streamflow[i]);
    out << ',';
    if (r.quality[i] != kQualityMissing) out << r.quality[i];
    out << '\n';
  }
}

}  // namespace fslstm::data
