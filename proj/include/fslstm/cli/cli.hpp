#pragma once

// Run configuration and the subcommands behind the `fslstm` executable.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numerical failure.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fslstm/data/dataset.hpp"
#include "fslstm/data/gauge.hpp"
#include "fslstm/train/train.hpp"

namespace fslstm::cli {

enum ExitCode { kOk = 0, kUsage = 1, kDataFailure = 2, kNumericFailure = 3 };

/// Every setting a run can take, resolved from defaults, a key=value file
/// and command-line flags, in increasing precedence.
struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path attributes;  ///< empty: <data_dir>/attributes.csv
  std::filesystem::path output_dir = "out";
  std::filesystem::path checkpoint;  ///< empty: <output_dir>/checkpoint.txt
  data::BoundingBox bbox{-54.0, -19.5, -43.5, -27.0};
  double min_years = 10.0;
  data::SplitSpec split = data::SplitSpec::defaults();
  /// Runs are always reproducible; the flag is recorded with the outputs.
  bool deterministic = true;
  train::TrainConfig train;

  double synthetic_alpha = 0.5;
  double synthetic_beta = 0.3;
  double synthetic_gamma = 0.1;
  double synthetic_noise_sd = 0.05;
  std::size_t synthetic_days = 5000;
  std::size_t synthetic_gauges = 1;

  std::filesystem::path attributes_path() const;
  std::filesystem::path checkpoint_path() const;

  /// Sets one key; throws ConfigError for an unknown key or a bad value.
  void set(const std::string& key, const std::string& value);
  /// Every key with its current value, in a stable order.
  std::map<std::string, std::string> to_map() const;
  static std::vector<std::string> keys();
};

/// Parses key=value lines; '#' starts a comment, blank lines are skipped.
/// Throws ConfigError naming the line of an unknown key or malformed entry.
void apply_config_text(RunConfig& cfg, std::istream& in);
void write_config(std::ostream& out, const RunConfig& cfg);

/// Gauges that pass selection, with their data.
struct Manifest {
  std::vector<std::string> gauge_ids;
};
Manifest read_manifest(const std::filesystem::path& path);

int cmd_ingest(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_evaluate(const RunConfig& cfg, std::ostream& log);
int cmd_simulate(const RunConfig& cfg, std::ostream& log);
int cmd_report(const RunConfig& cfg, std::ostream& log);

/// Full command-line entry point; errors are reported on `err` and mapped
/// to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fslstm::cli
