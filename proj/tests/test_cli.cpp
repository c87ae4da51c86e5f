#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fslstm/cli/cli.hpp"
#include "fslstm/errors.hpp"

using namespace fslstm;
using namespace fslstm::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("fslstm_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "fslstm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// A run small enough for unit tests: 1500 synthetic days starting 1990-10-01.
fs::path write_small_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path cfg = dir / "run.cfg";
  std::ofstream out(cfg);
  out << "data_dir = " << (dir / "data").string() << "\n"
      << "output_dir = " << (dir / "out").string() << "\n"
      << "synthetic_days = 1500\nmin_years = 3\n"
      << "train_start = 1991-10-01\ntrain_end = 1993-03-31\n"
      << "validation_start = 1993-04-01\nvalidation_end = 1993-09-30\n"
      << "test_start = 1993-10-01\ntest_end = 1994-11-08\n"
      << "cells = 8\nepochs = 2\nwindow = 30\nlearning_rate = 0.01\nseed = 7\n"
      << extra;
  return cfg;
}

}  // namespace

TEST_CASE("config text: comments, whitespace and every key round-trips") {
  RunConfig cfg;
  std::istringstream text("# header\n\n  cells = 32  # trailing\nbbox=-50,-20,-45,-25\nmodel=mclstm\n");
  apply_config_text(cfg, text);
  CHECK(cfg.train.cells == 32);
  CHECK(cfg.train.model == cells::ModelKind::McLstm);
  CHECK(cfg.bbox.lon_a == -50.0);
  CHECK(cfg.bbox.lat_b == -25.0);

  std::ostringstream dumped;
  write_config(dumped, cfg);
  RunConfig again;
  std::istringstream back(dumped.str());
  apply_config_text(again, back);
  CHECK(again.to_map() == cfg.to_map());
  CHECK(cfg.to_map().size() == RunConfig::keys().size());
}

TEST_CASE("config text: unknown keys and bad values name the line") {
  RunConfig cfg;
  std::istringstream unknown("cells = 8\n\nlearnign_rate = 0.1\n");
  CHECK_THROWS_WITH_AS(apply_config_text(cfg, unknown),
                       "config line 3: unknown configuration key 'learnign_rate'", ConfigError);
  std::istringstream no_eq("cells 8\n");
  CHECK_THROWS_AS(apply_config_text(cfg, no_eq), ConfigError);
  CHECK_THROWS_AS(cfg.set("bbox", "1,2,3"), ConfigError);
  CHECK_THROWS_AS(cfg.set("bbox", "1,2,3,4,5"), ConfigError);
  CHECK_THROWS_AS(cfg.set("min_years", "ten"), ConfigError);
  CHECK_THROWS_AS(cfg.set("train_start", "2001-02-30"), ConfigError);
  CHECK_THROWS_AS(cfg.set("deterministic", "maybe"), ConfigError);
  CHECK_THROWS_AS(cfg.set("synthetic_days", "-5"), ConfigError);
}

TEST_CASE("flags override the config file, which overrides defaults") {
  TempDir dir("precedence");
  const auto cfg = write_small_config(dir.path);
  REQUIRE(invoke({"simulate", "--config", cfg.string(), "--synthetic_days", "1600"}).code == kOk);
  const auto archived = slurp(dir.path / "data" / "run_config.txt");
  CHECK(archived.find("synthetic_days=1600\n") != std::string::npos);  // flag
  CHECK(archived.find("cells=8\n") != std::string::npos);              // file
  CHECK(archived.find("batch=256\n") != std::string::npos);            // default
  CHECK(archived.find("deterministic=true\n") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  CHECK(invoke({}).code == kUsage);
  CHECK(invoke({"frobnicate"}).code == kUsage);
  CHECK(invoke({"train", "--model", "gru"}).code == kUsage);
  CHECK(invoke({"ingest", "--config", "/nonexistent/run.cfg"}).code == kUsage);
  CHECK(invoke({"report", "--output_dir", "/nonexistent/out"}).code == kUsage);
  CHECK(invoke({"ingest", "--data_dir", "/nonexistent/data"}).code == kUsage);
  // An overlapping split is a configuration error.
  CHECK(invoke({"ingest", "--test_start", "1992-01-01"}).code == kUsage);
}

TEST_CASE("simulate: identical files across runs, conform to the schema, zero skips") {
  TempDir dir("simulate");
  const auto cfg = write_small_config(dir.path);
  REQUIRE(invoke({"simulate", "--config", cfg.string()}).code == kOk);
  const auto first = slurp(dir.path / "data" / "synthetic.csv");
  const auto attrs = slurp(dir.path / "data" / "attributes.csv");
  REQUIRE(invoke({"simulate", "--config", cfg.string()}).code == kOk);
  CHECK(slurp(dir.path / "data" / "synthetic.csv") == first);
  CHECK(slurp(dir.path / "data" / "attributes.csv") == attrs);
  CHECK(first_line(dir.path / "data" / "synthetic.csv") ==
        "date,precip_mm,soil_moisture_kgm2,tmin_c,tmean_c,tmax_c,streamflow_mm,quality");

  // A different seed changes the data.
  REQUIRE(invoke({"simulate", "--config", cfg.string(), "--seed", "8"}).code == kOk);
  CHECK(slurp(dir.path / "data" / "synthetic.csv") != first);
  REQUIRE(invoke({"simulate", "--config", cfg.string()}).code == kOk);

  const auto ingest = invoke({"ingest", "--config", cfg.string()});
  REQUIRE(ingest.code == kOk);
  std::ifstream report(dir.path / "out" / "skip_report.txt");
  std::string header, id;
  std::getline(report, header);
  std::size_t train = 0, valid = 0, test = 0, gap = 9, target = 9, short_history = 9;
  report >> id >> train >> valid >> test >> gap >> target >> short_history;
  CHECK(id == "synthetic");
  CHECK(train > 0);
  CHECK(valid > 0);
  CHECK(test > 0);
  CHECK(gap == 0);
  CHECK(target == 0);
  CHECK(short_history == 0);
}

TEST_CASE("simulate: gamma-only flow is a constant column") {
  TempDir dir("gamma");
  const auto cfg = write_small_config(dir.path);
  REQUIRE(invoke({"simulate", "--config", cfg.string(), "--synthetic_alpha", "0",
                  "--synthetic_beta", "0", "--synthetic_noise_sd", "0", "--synthetic_gamma", "0.25"})
              .code == kOk);
  const auto rec = data::load_gauge_csv(dir.path / "data" / "synthetic.csv",
                                        dir.path / "data" / "attributes.csv");
  REQUIRE(rec.days() == 1500);
  for (double q : rec.streamflow) CHECK(q == 0.25);
}

TEST_CASE("simulate: degenerate parameters are refused") {
  TempDir dir("degenerate");
  const auto cfg = write_small_config(dir.path);
  CHECK(invoke({"simulate", "--config", cfg.string(), "--synthetic_days", "100"}).code == kUsage);
  CHECK(invoke({"simulate", "--config", cfg.string(), "--synthetic_noise_sd", "-1"}).code == kUsage);
  CHECK(invoke({"simulate", "--config", cfg.string(), "--synthetic_gauges", "0"}).code == kUsage);
  // Mostly negative flow would need clamping on most days.
  CHECK(invoke({"simulate", "--config", cfg.string(), "--synthetic_gamma", "-5"}).code ==
        kDataFailure);
}

TEST_CASE("ingest: two-gauge fixture, determinism and an empty selection") {
  TempDir dir("ingest");
  const auto cfg = write_small_config(dir.path, "synthetic_gauges = 2\n");
  REQUIRE(invoke({"simulate", "--config", cfg.string()}).code == kOk);
  REQUIRE(invoke({"ingest", "--config", cfg.string()}).code == kOk);
  const auto manifest = slurp(dir.path / "out" / "manifest.csv");
  CHECK(first_line(dir.path / "out" / "manifest.csv") ==
        "gauge_id,rows,quality_days,train_samples,validation_samples,test_samples");
  const auto m = read_manifest(dir.path / "out" / "manifest.csv");
  CHECK(m.gauge_ids == std::vector<std::string>{"synthetic_000", "synthetic_001"});
  CHECK(fs::exists(dir.path / "out" / "run_config.txt"));

  REQUIRE(invoke({"ingest", "--config", cfg.string()}).code == kOk);
  CHECK(slurp(dir.path / "out" / "manifest.csv") == manifest);

  const auto none = invoke({"ingest", "--config", cfg.string(), "--bbox", "10,10,20,20",
                            "--output_dir", (dir.path / "none").string()});
  CHECK(none.code == kDataFailure);
  CHECK(none.out.find("no gauge lies inside bbox 10,10,20,20") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.path / "none" / "manifest.csv"));

  // Too short a record fails the history requirement.
  CHECK(invoke({"ingest", "--config", cfg.string(), "--min_years", "10", "--output_dir",
                (dir.path / "none").string()})
            .code == kDataFailure);
}

TEST_CASE("train refuses n_r above the bound and prints it") {
  TempDir dir("bound");
  const auto r = invoke({"train", "--output_dir", dir.path.string(), "--n_r", "20"});
  CHECK(r.code == kUsage);
  CHECK(r.err.find("exceeds the projection bound 19") != std::string::npos);
  CHECK(invoke({"train", "--output_dir", dir.path.string()}).code == kUsage);  // no manifest
}

TEST_CASE("pipeline: train, evaluate and report with documented outputs") {
  TempDir dir("pipeline");
  const auto cfg = write_small_config(dir.path);
  const fs::path out = dir.path / "out";
  REQUIRE(invoke({"simulate", "--config", cfg.string()}).code == kOk);
  REQUIRE(invoke({"ingest", "--config", cfg.string()}).code == kOk);

  CHECK(invoke({"evaluate", "--config", cfg.string()}).code == kUsage);  // no checkpoint yet

  const auto trained = invoke({"train", "--config", cfg.string(), "--threads", "2"});
  REQUIRE(trained.code == kOk);
  CHECK(trained.out.find("epoch 2 train") != std::string::npos);
  const auto ckpt = train::load_checkpoint(out / "checkpoint.txt");
  CHECK(std::isfinite(ckpt.validation_loss));
  CHECK(ckpt.config.epochs == 2);
  CHECK(first_line(out / "train_log.csv") == "epoch,train_loss,valid_loss,seconds");

  REQUIRE(invoke({"evaluate", "--config", cfg.string()}).code == kOk);
  CHECK(first_line(out / "scores.csv") ==
        "gauge_id,nse,kge,rmse_mm,biasfhv_pct,biasfms_pct,biasflv_pct");
  CHECK(first_line(out / "summary.csv") == "metric,mean,sd,count,undefined,within_25pct");
  CHECK(first_line(out / "predictions" / "synthetic.csv") == "date,observed_mm,predicted_mm");
  CHECK(first_line(out / "fdc" / "synthetic_observed.csv") == "exceedance_prob,flow_mm");
  CHECK(first_line(out / "fdc" / "synthetic_predicted.csv") == "exceedance_prob,flow_mm");

  // Bias rows carry the |bias| <= 25% share; the others leave it empty.
  std::istringstream summary(slurp(out / "summary.csv"));
  std::string line;
  std::getline(summary, line);
  std::size_t rows = 0;
  while (std::getline(summary, line)) {
    ++rows;
    const bool bias = line.rfind("bias", 0) == 0;
    CHECK((line.back() == ',') != bias);
  }
  CHECK(rows == 6);

  const auto rep = invoke({"report", "--config", cfg.string()});
  CHECK(rep.code == kOk);
  CHECK(rep.out.find("mean NSE 0.70") != std::string::npos);
  CHECK(rep.out.find("1.43 mm/day") != std::string::npos);
}

TEST_CASE("same seed twice gives identical checkpoints, predictions and scores") {
  TempDir dir("determinism");
  const auto cfg = write_small_config(dir.path);
  REQUIRE(invoke({"simulate", "--config", cfg.string()}).code == kOk);
  std::array<std::array<std::string, 3>, 2> files;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto out = dir.path / ("out" + std::to_string(k));
    const std::string threads = k == 0 ? "1" : "3";
    REQUIRE(invoke({"ingest", "--config", cfg.string(), "--output_dir", out.string()}).code == kOk);
    REQUIRE(invoke({"train", "--config", cfg.string(), "--output_dir", out.string(), "--threads",
                    threads, "--deterministic"})
                .code == kOk);
    REQUIRE(invoke({"evaluate", "--config", cfg.string(), "--output_dir", out.string()}).code ==
            kOk);
    files[k] = {slurp(out / "checkpoint.txt"), slurp(out / "predictions" / "synthetic.csv"),
                slurp(out / "scores.csv")};
  }
  CHECK(files[0][0] == files[1][0]);
  CHECK(files[0][1] == files[1][1]);
  CHECK(files[0][2] == files[1][2]);
}

TEST_CASE("numerical failure exits 3") {
  TempDir dir("diverge");
  const auto cfg = write_small_config(dir.path);
  REQUIRE(invoke({"simulate", "--config", cfg.string()}).code == kOk);
  REQUIRE(invoke({"ingest", "--config", cfg.string()}).code == kOk);
  const auto r = invoke({"train", "--config", cfg.string(), "--learning_rate", "1e200"});
  CHECK(r.code == kNumericFailure);
  CHECK(r.err.find("epoch 1 batch 1") != std::string::npos);
}

TEST_CASE("malformed gauge data exits 2") {
  TempDir dir("malformed");
  const auto cfg = write_small_config(dir.path);
  REQUIRE(invoke({"simulate", "--config", cfg.string()}).code == kOk);
  {
    std::ofstream bad(dir.path / "data" / "synthetic.csv", std::ios::app);
    bad << "1994-11-09,-1,0.5,10,15,20,1,1\n";
  }
  const auto r = invoke({"ingest", "--config", cfg.string()});
  CHECK(r.code == kDataFailure);
  CHECK(r.err.find("row 1502") != std::string::npos);
}
