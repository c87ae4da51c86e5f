#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "fslstm/cli/cli.hpp"
#include "fslstm/errors.hpp"
#include "fslstm/metrics/metrics.hpp"

namespace fslstm::cli {

namespace fs = std::filesystem;

namespace {

const char* const kManifestName = "manifest.csv";

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void archive_config(const RunConfig& cfg, const fs::path& dir) {
  auto out = open_out(dir / "run_config.txt");
  write_config(out, cfg);
}

/// Gauge files in the data directory, sorted by name; the attributes table
/// is not a gauge.
std::vector<fs::path> gauge_files(const RunConfig& cfg) {
  const fs::path attrs = fs::weakly_canonical(cfg.attributes_path());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(cfg.data_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    if (fs::weakly_canonical(entry.path()) == attrs) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<data::GaugeRecord> load_gauges(const RunConfig& cfg,
                                           const std::vector<std::string>* only) {
  if (!fs::is_directory(cfg.data_dir))
    throw ConfigError("data directory " + cfg.data_dir.string() + " does not exist");
  const auto attributes = data::load_attributes(cfg.attributes_path());
  std::vector<data::GaugeRecord> records;
  if (only) {
    for (const auto& id : *only)
      records.push_back(data::load_gauge_csv(cfg.data_dir / (id + ".csv"), attributes));
  } else {
    for (const auto& path : gauge_files(cfg))
      records.push_back(data::load_gauge_csv(path, attributes));
  }
  return records;
}

std::vector<data::GaugeRecord> load_manifest_gauges(const RunConfig& cfg) {
  const auto manifest = read_manifest(cfg.output_dir / kManifestName);
  return load_gauges(cfg, &manifest.gauge_ids);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("no manifest at " + path.string() + "; run `fslstm ingest` first");
  std::string line;
  if (!std::getline(in, line) || line.rfind("gauge_id,", 0) != 0)
    throw DataError(path.string() + ": missing gauge_id header");
  Manifest m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    m.gauge_ids.push_back(line.substr(0, line.find(',')));
  }
  if (m.gauge_ids.empty()) throw DataError(path.string() + ": lists no gauges");
  return m;
}

int cmd_ingest(const RunConfig& cfg, std::ostream& log) {
  const auto records = load_gauges(cfg, nullptr);
  const auto selected_ids = data::select_gauges(records, cfg.bbox, cfg.min_years);
  log << "ingest: " << records.size() << " gauge files, " << selected_ids.size() << " selected\n";
  if (selected_ids.empty()) {
    log << "ingest: no gauge lies inside bbox " << cfg.to_map().at("bbox") << " with at least "
        << cfg.min_years << " years (" << static_cast<std::size_t>(cfg.min_years * 365)
        << " days) of complete, quality-passing rows\n";
    return kDataFailure;
  }
  std::vector<data::GaugeRecord> selected;
  for (const auto& r : records)
    if (std::find(selected_ids.begin(), selected_ids.end(), r.id) != selected_ids.end())
      selected.push_back(r);

  const auto stats = data::fit_stats(selected, cfg.split);
  const auto ds = data::build_dataset(selected, cfg.split, stats);

  auto manifest = open_out(cfg.output_dir / kManifestName);
  manifest << "gauge_id,rows,quality_days,train_samples,validation_samples,test_samples\n";
  for (std::size_t g = 0; g < ds.gauges.size(); ++g) {
    const auto& rec = *std::find_if(selected.begin(), selected.end(),
                                    [&](const auto& r) { return r.id == ds.gauges[g].id; });
    const auto& k = ds.skips[g].kept;
    manifest << rec.id << ',' << rec.days() << ',' << data::quality_days(rec) << ',' << k[0]
             << ',' << k[1] << ',' << k[2] << '\n';
    if (ds.skips[g].lacks_validation)
      log << "ingest: warning: gauge " << rec.id << " has no validation samples\n";
  }
  auto skips = open_out(cfg.output_dir / "skip_report.txt");
  data::write_skip_report(skips, ds);
  archive_config(cfg, cfg.output_dir);
  log << "ingest: samples train " << ds.split(data::Split::Train).size() << ", validation "
      << ds.split(data::Split::Validation).size() << ", test "
      << ds.split(data::Split::Test).size() << "\n";
  return kOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  // Refuse a bad config before touching the data.
  for (const auto& w : cfg.train.validate()) log << "train: warning: " << w << '\n';

  const auto records = load_manifest_gauges(cfg);
  const auto stats = data::fit_stats(records, cfg.split);
  const auto ds = data::build_dataset(records, cfg.split, stats);
  log << "train: " << cells::to_string(cfg.train.model) << " on " << ds.gauges.size()
      << " gauges, " << ds.split(data::Split::Train).size() << " training samples, "
      << train::resolve_threads(cfg.train.threads) << " threads\n";

  auto result = train::train(ds, stats, cfg.train, [&](const train::EpochLog& e) {
    log << "epoch " << e.epoch << " train " << fixed(e.train_loss) << " valid "
        << fixed(e.valid_loss) << " (" << fixed(e.seconds, 1) << " s)\n";
  });
  for (const auto& w : result.warnings) log << "train: warning: " << w << '\n';

  train::save_checkpoint(cfg.checkpoint_path(), result.best);
  auto log_csv = open_out(cfg.output_dir / "train_log.csv");
  train::write_log_csv(log_csv, result.log);
  archive_config(cfg, cfg.output_dir);
  log << "train: kept epoch " << result.best.epoch << ", checkpoint "
      << cfg.checkpoint_path().string() << '\n';
  return kOk;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  const auto ckpt = train::load_checkpoint(cfg.checkpoint_path());
  const auto records = load_manifest_gauges(cfg);
  // Normalization comes from the checkpoint, never from the test data.
  const auto ds = data::build_dataset(records, cfg.split, ckpt.stats);
  const auto ev = train::evaluate(ckpt, ds, data::Split::Test, cfg.train.threads);
  for (const auto& id : ev.without_windows)
    log << "evaluate: gauge " << id << " has no test windows\n";
  if (ev.gauges.empty()) throw DataError("no gauge has a test window");

  std::vector<metrics::ScoreReport> reports;
  for (const auto& g : ev.gauges) {
    auto pred = open_out(cfg.output_dir / "predictions" / (g.gauge_id + ".csv"));
    train::write_predictions_csv(pred, g);
    const auto paired = metrics::pair_series(g.observed, g.predicted);
    reports.push_back(metrics::score_gauge(g.gauge_id, paired));
    auto obs = open_out(cfg.output_dir / "fdc" / (g.gauge_id + "_observed.csv"));
    metrics::write_fdc_csv(obs, metrics::fdc(paired.observed));
    auto sim = open_out(cfg.output_dir / "fdc" / (g.gauge_id + "_predicted.csv"));
    metrics::write_fdc_csv(sim, metrics::fdc(paired.simulated));
  }
  auto scores = open_out(cfg.output_dir / "scores.csv");
  metrics::write_scores_csv(scores, reports);
  const auto summary = metrics::summarize(reports);
  auto summary_out = open_out(cfg.output_dir / "summary.csv");
  metrics::write_summary_csv(summary_out, summary);
  archive_config(cfg, cfg.output_dir);

  for (const auto& s : summary)
    log << "evaluate: " << metrics::column_name(s.metric) << " mean " << fixed(s.mean) << " over "
        << s.count << " gauges\n";
  return kOk;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  if (cfg.synthetic_gauges == 0) throw ConfigError("synthetic_gauges must be at least 1");
  std::vector<data::GaugeRecord> records;
  for (std::size_t g = 0; g < cfg.synthetic_gauges; ++g) {
    auto r = data::generate_synthetic(cfg.synthetic_alpha, cfg.synthetic_beta,
                                      cfg.synthetic_gamma, cfg.synthetic_noise_sd,
                                      cfg.synthetic_days, cfg.train.seed + g);
    if (cfg.synthetic_gauges > 1) {
      char id[32];
      std::snprintf(id, sizeof(id), "synthetic_%03zu", g);
      r.id = id;
    }
    records.push_back(std::move(r));
  }
  for (const auto& r : records) {
    auto out = open_out(cfg.data_dir / (r.id + ".csv"));
    data::write_gauge_csv(out, r);
  }
  auto attrs = open_out(cfg.attributes_path());
  data::write_attributes(attrs, records);
  archive_config(cfg, cfg.data_dir);
  log << "simulate: wrote " << records.size() << " gauge(s) of " << cfg.synthetic_days
      << " days to " << cfg.data_dir.string() << '\n';
  return kOk;
}

int cmd_report(const RunConfig& cfg, std::ostream& log) {
  const fs::path path = cfg.output_dir / "summary.csv";
  std::ifstream in(path);
  if (!in) throw ConfigError("no summary at " + path.string() + "; run `fslstm evaluate` first");
  log << "summary (" << path.string() << ")\n";
  std::string line;
  while (std::getline(in, line)) log << "  " << line << '\n';
  log << "published reference, 32 gauges, 30 epochs (not reproducible at desk scale):\n"
      << "  FS-LSTM mean NSE 0.70 (EA-LSTM 0.68), mean RMSE 1.43 mm/day, mean KGE 0.79\n";
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fast-slow mass-conserving LSTM streamflow models", "fslstm"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "key=value run configuration file");
  bool deterministic_flag = false;
  app.add_flag("--deterministic", deterministic_flag, "Record deterministic=true (runs are always reproducible)");

  std::vector<std::pair<std::string, CLI::Option*>> overrides;
  std::map<std::string, std::string> values;
  const RunConfig defaults;
  const auto default_map = defaults.to_map();
  for (const auto& key : RunConfig::keys()) {
    if (key == "deterministic") continue;
    auto* opt = app.add_option("--" + key, values[key], "default: " + default_map.at(key));
    if (key == "model") opt->check(CLI::IsMember({"lstm", "mclstm", "fslstm"}));
    overrides.emplace_back(key, opt);
  }

  using Command = int (*)(const RunConfig&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"ingest", "Select gauges and write the manifest and skip report", cmd_ingest},
      {"train", "Train on the manifest gauges and write a checkpoint", cmd_train},
      {"evaluate", "Score the checkpoint on the test period", cmd_evaluate},
      {"simulate", "Write synthetic gauge CSVs into the data directory", cmd_simulate},
      {"report", "Print the score summary next to the published numbers", cmd_report}};
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file " + config_path);
      apply_config_text(cfg, in);
    }
    for (const auto& [key, opt] : overrides)
      if (opt->count() > 0) cfg.set(key, values[key]);
    if (deterministic_flag) cfg.deterministic = true;
    cfg.split.validate();

    for (const auto& [name, help, fn] : commands)
      if (app.got_subcommand(name)) return fn(cfg, out);
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataFailure;
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const ShapeError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataFailure;
  }
}

}  // namespace fslstm::cli
