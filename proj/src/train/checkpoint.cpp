#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fslstm/cells/checkpoint_io.hpp"
#include "fslstm/errors.hpp"
#include "fslstm/train/train.hpp"

namespace fslstm::train {

// Layout:
//   fslstm-checkpoint 1
//   epoch <n>
//   validation_loss <hex>
//   config <k>        then k lines key=value (threads excluded)
//   stats             then temperature, static, mass and streamflow lines
//   params            then the cells parameter container to end of file

namespace {

constexpr const char* kMagic = "fslstm-checkpoint 1";

void write_stat(std::ostream& out, const data::FeatureStats& s) {
  out << ' ' << cells::format_exact(s.mean) << ' ' << cells::format_exact(s.sd);
}

std::string next_line(std::istream& in, std::string_view what) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint truncated before " + std::string(what));
  return line;
}

std::vector<std::string> words(const std::string& line) {
  std::istringstream s(line);
  std::vector<std::string> out;
  for (std::string w; s >> w;) out.push_back(w);
  return out;
}

data::FeatureStats read_stat(const std::vector<std::string>& w, std::size_t at) {
  if (w.size() < at + 2) throw DataError("checkpoint statistics line is short");
  return {cells::parse_exact(w[at]), cells::parse_exact(w[at + 1])};
}

std::vector<std::string> expect(std::istream& in, std::string_view tag, std::size_t count) {
  auto w = words(next_line(in, tag));
  if (w.empty() || w[0] != tag || w.size() != count)
    throw DataError("checkpoint: expected '" + std::string(tag) + "' line");
  return w;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  out << kMagic << '\n';
  out << "epoch " << c.epoch << '\n';
  out << "validation_loss " << cells::format_exact(c.validation_loss) << '\n';
  auto cfg = c.config.to_map();
  cfg.erase("threads");
  out << "config " << cfg.size() << '\n';
  for (const auto& [k, v] : cfg) out << k << '=' << v << '\n';
  out << "stats\n";
  for (const auto& t : c.stats.temperature) {
    out << "temperature";
    write_stat(out, t);
    out << '\n';
  }
  for (const auto& t : c.stats.statics) {
    out << "static";
    write_stat(out, t);
    out << '\n';
  }
  out << "mass_rms " << cells::format_exact(c.stats.mass_rms[0]) << ' '
      << cells::format_exact(c.stats.mass_rms[1]) << '\n';
  out << "streamflow_pooled";
  write_stat(out, c.stats.streamflow_pooled);
  out << "\nstreamflow " << c.stats.streamflow.size() << '\n';
  for (const auto& [id, s] : c.stats.streamflow) {
    out << "gauge " << id;
    write_stat(out, s);
    out << '\n';
  }
  out << "params\n";
  cells::write_params(out, c.params);
}

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint c;
  if (next_line(in, "header") != kMagic) throw DataError("not a checkpoint file");
  c.epoch = std::stoul(expect(in, "epoch", 2)[1]);
  c.validation_loss = cells::parse_exact(expect(in, "validation_loss", 2)[1]);
  const std::size_t n = std::stoul(expect(in, "config", 2)[1]);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string line = next_line(in, "config entry");
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint config line lacks '='");
    try {
      c.config.apply(line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw DataError(std::string("checkpoint config: ") + e.what());
    }
  }
  expect(in, "stats", 1);
  for (auto& t : c.stats.temperature) t = read_stat(expect(in, "temperature", 3), 1);
  for (auto& t : c.stats.statics) t = read_stat(expect(in, "static", 3), 1);
  {
    const auto w = expect(in, "mass_rms", 3);
    c.stats.mass_rms = {cells::parse_exact(w[1]), cells::parse_exact(w[2])};
  }
  c.stats.streamflow_pooled = read_stat(expect(in, "streamflow_pooled", 3), 1);
  const std::size_t gauges = std::stoul(expect(in, "streamflow", 2)[1]);
  for (std::size_t i = 0; i < gauges; ++i) {
    const auto w = expect(in, "gauge", 4);
    c.stats.streamflow[w[1]] = read_stat(w, 2);
  }
  expect(in, "params", 1);
  c.params = cells::read_params(in);
  if (c.params.dims != c.config.dims())
    throw DataError("checkpoint parameters do not match its configuration");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  write_checkpoint(out, c);
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const std::invalid_argument&) {
    throw DataError(path.string() + ": malformed checkpoint count");
  } catch (const std::out_of_range&) {
    throw DataError(path.string() + ": malformed checkpoint count");
  }
}

}  // namespace fslstm::train
