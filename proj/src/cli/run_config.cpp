#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include "fslstm/cli/cli.hpp"
#include "fslstm/errors.hpp"

namespace fslstm::cli {

namespace {

std::string number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, std::string_view value) {
  double v = 0;
  auto r = std::from_chars(value.data(), value.data() + value.size(), v);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size() || !std::isfinite(v))
    throw ConfigError(key + ": expected a number, got '" + std::string(value) + "'");
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  auto r = std::from_chars(value.data(), value.data() + value.size(), v);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size())
    throw ConfigError(key + ": expected a nonnegative integer, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

data::Day parse_day(const std::string& key, const std::string& value) {
  try {
    return data::parse_date(value);
  } catch (const DataError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

const std::vector<std::string> kRunKeys = {
    "data_dir",        "attributes",       "output_dir",      "checkpoint",
    "bbox",            "min_years",        "train_start",     "train_end",
    "validation_start", "validation_end",  "test_start",      "test_end",
    "deterministic",    "synthetic_alpha", "synthetic_beta",
    "synthetic_gamma", "synthetic_noise_sd", "synthetic_days", "synthetic_gauges"};

}  // namespace

std::filesystem::path RunConfig::attributes_path() const {
  return attributes.empty() ? data_dir / "attributes.csv" : attributes;
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? output_dir / "checkpoint.txt" : checkpoint;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out = kRunKeys;
  for (const auto& [k, v] : train::TrainConfig{}.to_map()) out.push_back(k);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (train::TrainConfig::is_key(key)) return train.apply(key, value);
  if (key == "data_dir") data_dir = value;
  else if (key == "attributes") attributes = value;
  else if (key == "output_dir") output_dir = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "bbox") {
    std::array<double, 4> v{};
    std::string_view rest = value;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto comma = rest.find(',');
      if ((k < 3) == (comma == std::string_view::npos))
        throw ConfigError("bbox: expected lon_a,lat_a,lon_b,lat_b, got '" + value + "'");
      v[k] = parse_double(key, rest.substr(0, comma));
      if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
    }
    bbox = {v[0], v[1], v[2], v[3]};
  } else if (key == "min_years") min_years = parse_double(key, value);
  else if (key == "train_start") split.train.first = parse_day(key, value);
  else if (key == "train_end") split.train.last = parse_day(key, value);
  else if (key == "validation_start") split.validation.first = parse_day(key, value);
  else if (key == "validation_end") split.validation.last = parse_day(key, value);
  else if (key == "test_start") split.test.first = parse_day(key, value);
  else if (key == "test_end") split.test.last = parse_day(key, value);
  else if (key == "deterministic") deterministic = parse_bool(key, value);
  else if (key == "synthetic_alpha") synthetic_alpha = parse_double(key, value);
  else if (key == "synthetic_beta") synthetic_beta = parse_double(key, value);
  else if (key == "synthetic_gamma") synthetic_gamma = parse_double(key, value);
  else if (key == "synthetic_noise_sd") synthetic_noise_sd = parse_double(key, value);
  else if (key == "synthetic_days") synthetic_days = parse_size(key, value);
  else if (key == "synthetic_gauges") synthetic_gauges = parse_size(key, value);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> m = train.to_map();
  m["data_dir"] = data_dir.string();
  m["attributes"] = attributes.string();
  m["output_dir"] = output_dir.string();
  m["checkpoint"] = checkpoint.string();
  m["bbox"] = number(bbox.lon_a) + "," + number(bbox.lat_a) + "," + number(bbox.lon_b) + "," +
              number(bbox.lat_b);
  m["min_years"] = number(min_years);
  m["train_start"] = data::format_date(split.train.first);
  m["train_end"] = data::format_date(split.train.last);
  m["validation_start"] = data::format_date(split.validation.first);
  m["validation_end"] = data::format_date(split.validation.last);
  m["test_start"] = data::format_date(split.test.first);
  m["test_end"] = data::format_date(split.test.last);
  m["deterministic"] = deterministic ? "true" : "false";
  m["synthetic_alpha"] = number(synthetic_alpha);
  m["synthetic_beta"] = number(synthetic_beta);
  m["synthetic_gamma"] = number(synthetic_gamma);
  m["synthetic_noise_sd"] = number(synthetic_noise_sd);
  m["synthetic_days"] = std::to_string(synthetic_days);
  m["synthetic_gauges"] = std::to_string(synthetic_gauges);
  return m;
}

void apply_config_text(RunConfig& cfg, std::istream& in) {
  std::string line;
  for (std::size_t row = 1; std::getline(in, line); ++row) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(row) + ": expected key=value");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(row) + ": " + e.what());
    }
  }
}

void write_config(std::ostream& out, const RunConfig& cfg) {
  for (const auto& [k, v] : cfg.to_map()) out << k << '=' << v << '\n';
}

}  // namespace fslstm::cli
