#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "fslstm/errors.hpp"
#include "fslstm/metrics/metrics.hpp"
#include "fslstm/train/train.hpp"

using namespace fslstm;
using namespace fslstm::train;
using data::Split;

namespace {

// A small synthetic problem: ~2.7 years, split into train/validation/test.
struct Problem {
  std::vector<data::GaugeRecord> records;
  data::SplitSpec split;
  data::NormalizationStats stats;
  data::Dataset ds;
};

Problem make_problem(std::size_t gauges = 1, std::size_t T = 1000) {
  Problem p;
  for (std::size_t g = 0; g < gauges; ++g) {
    auto r = data::generate_synthetic(0.5, 0.3, 0.1, 0.05, T, 7 + g);
    r.id = "s" + std::to_string(g);
    p.records.push_back(std::move(r));
  }
  const data::Day s = p.records[0].start;
  p.split = {{s + 500, s + 799}, {s + 400, s + 499}, {s + 800, s + 999}};
  p.stats = data::fit_stats(p.records, p.split);
  p.ds = data::build_dataset(p.records, p.split, p.stats);
  return p;
}

TrainConfig small_config() {
  TrainConfig c;
  c.cells = 4;
  c.n_r = 2;
  c.fastslow = {4, 2};
  c.epochs = 3;
  c.batch = 40;
  c.window = 20;
  c.learning_rate = 1e-2;
  c.seed = 3;
  c.threads = 2;
  return c;
}

std::string checkpoint_text(const Checkpoint& c) {
  std::ostringstream out;
  write_checkpoint(out, c);
  return out.str();
}

}  // namespace

TEST_CASE("Adam: zero gradient leaves parameters and decays moments") {
  ParamSet p;
  p.add("x", Tensor({2}, std::vector<double>{1.5, -2.0}));
  AdamState st;
  st.m["x"] = Tensor({2}, std::vector<double>{0.2, 0.4});
  st.v["x"] = Tensor({2}, std::vector<double>{0.0, 0.0});
  Gradients g{{"x", Tensor({2})}};
  AdamState fresh;
  ParamSet q = p;
  adam_step(q, g, fresh, {});
  CHECK(q == p);
  adam_step(p, g, st, {});
  CHECK(st.m["x"][0] == doctest::Approx(0.18));
  CHECK(st.m["x"][1] == doctest::Approx(0.36));
}

TEST_CASE("Adam: first step from zero moments") {
  for (double g : {3.0, -0.25, 1e-9}) {
    ParamSet p;
    p.add("x", Tensor::scalar(0.5));
    AdamState st;
    const AdamHyper h{1e-3};
    adam_step(p, Gradients{{"x", Tensor::scalar(g)}}, st, h);
    // m_hat = g and v_hat = g^2 after bias correction at t = 1.
    const double expect = 0.5 - h.lr * g / (std::abs(g) + h.eps);
    CHECK(std::abs(p.get("x")[0] - expect) <= 1e-15);
    CHECK(st.t == 1);
  }
}

TEST_CASE("Adam: constant gradient steps approach lr in size") {
  ParamSet p;
  p.add("x", Tensor::scalar(0.0));
  AdamState st;
  double prev = 0.0, step = 0.0;
  for (int i = 0; i < 3000; ++i) {
    adam_step(p, Gradients{{"x", Tensor::scalar(-0.3)}}, st, {0.01});
    step = p.get("x")[0] - prev;
    prev = p.get("x")[0];
  }
  CHECK(step > 0.0);
  CHECK(std::abs(step - 0.01) < 1e-6);
}

TEST_CASE("Adam rejects bad gradients; clipping") {
  ParamSet p;
  p.add("x", Tensor::scalar(1.0));
  AdamState st;
  CHECK_THROWS_AS(adam_step(p, Gradients{{"x", Tensor::scalar(std::nan(""))}}, st, {}),
                  NumericError);
  CHECK_THROWS_AS(adam_step(p, Gradients{{"y", Tensor::scalar(1)}}, st, {}), ShapeError);
  CHECK_THROWS_AS(adam_step(p, Gradients{{"x", Tensor({2})}}, st, {}), ShapeError);
  CHECK(p.get("x")[0] == 1.0);

  Gradients g{{"a", Tensor({2}, std::vector<double>{3, 0})}, {"b", Tensor::scalar(4)}};
  CHECK(clip_global_norm(g, 1.0) == 5.0);
  CHECK(g["a"][0] == doctest::Approx(0.6));
  CHECK(g["b"][0] == doctest::Approx(0.8));
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(1.0));
  CHECK(g["b"][0] == doctest::Approx(0.8));
}

TEST_CASE("configuration keys, validation and the projection bound") {
  TrainConfig c;
  CHECK(c.validate().empty());
  TrainConfig d;
  for (const auto& [k, v] : c.to_map()) {
    CHECK(TrainConfig::is_key(k));
    d.apply(k, v);
  }
  CHECK(d == c);
  CHECK_THROWS_AS(d.apply("nonsense", "1"), ConfigError);
  CHECK_THROWS_AS(d.apply("epochs", "-3"), ConfigError);
  CHECK_THROWS_AS(d.apply("loss", "mae"), ConfigError);

  c.n_r = 20;
  try {
    c.validate();
    FAIL("expected a refusal");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bound 19") != std::string::npos);
  }
  c.allow_large_projection = true;
  CHECK(c.validate().size() == 1);
  c.n_r = 19;
  c.allow_large_projection = false;
  CHECK(c.validate().empty());
  c.window = 366;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("mse loss is squared error in standardized streamflow") {
  Problem p = make_problem();
  TrainConfig cfg = small_config();
  cells::ModelParams params = cells::init_params(cfg.dims(), 5);
  set_input_scale(params, p.stats);
  const double loss = split_loss(params, p.ds, p.stats, Split::Validation, cfg);

  const Evaluation ev = evaluate(p.ds, Split::Validation, model_predictor(params, cfg.window), 1);
  const data::FeatureStats& q = p.stats.streamflow_for("s0");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& g : ev.gauges)
    for (std::size_t i = 0; i < g.observed.size(); ++i, ++n) {
      const double e = q.z(g.predicted[i]) - q.z(g.observed[i]);
      sum += e * e;
    }
  CHECK(std::abs(loss - sum / static_cast<double>(n)) <= 1e-12 * loss);

  cfg.loss = LossKind::NseBasin;
  const double nb = split_loss(params, p.ds, p.stats, Split::Validation, cfg);
  CHECK(std::isfinite(nb));
  CHECK(nb == doctest::Approx(loss * (q.sd * q.sd) / ((q.sd + 0.1) * (q.sd + 0.1))));
}

TEST_CASE("training is deterministic and independent of the thread count") {
  Problem p = make_problem();
  TrainConfig cfg = small_config();
  const TrainResult a = train::train(p.ds, p.stats, cfg);
  const TrainResult b = train::train(p.ds, p.stats, cfg);
  cfg.threads = 1;
  const TrainResult c = train::train(p.ds, p.stats, cfg);
  REQUIRE(a.log.size() == 4);
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    CHECK(a.log[e].train_loss == b.log[e].train_loss);
    CHECK(a.log[e].valid_loss == b.log[e].valid_loss);
    CHECK(a.log[e].train_loss == c.log[e].train_loss);
  }
  CHECK(a.best.params.set == b.best.params.set);
  CHECK(a.best.params.set == c.best.params.set);
  CHECK(checkpoint_text(a.best) == checkpoint_text(b.best));
  // The chosen epoch has the lowest validation loss.
  for (std::size_t e = 1; e < a.log.size(); ++e) CHECK(a.best.validation_loss <= a.log[e].valid_loss);
  CHECK(a.log[a.best.epoch].valid_loss == a.best.validation_loss);
}

TEST_CASE("gauge order does not change results") {
  Problem p = make_problem(2);
  std::vector<data::GaugeRecord> reversed(p.records.rbegin(), p.records.rend());
  const auto stats = data::fit_stats(reversed, p.split);
  const auto ds = data::build_dataset(reversed, p.split, stats);
  TrainConfig cfg = small_config();
  cfg.epochs = 2;
  CHECK(checkpoint_text(train::train(p.ds, p.stats, cfg).best) == checkpoint_text(train::train(ds, stats, cfg).best));
}

TEST_CASE("learning rate zero leaves parameters unchanged") {
  Problem p = make_problem();
  TrainConfig cfg = small_config();
  cfg.learning_rate = 0.0;
  const TrainResult r = train::train(p.ds, p.stats, cfg);
  cells::ModelParams init = cells::init_params(cfg.dims(), cfg.seed);
  set_input_scale(init, p.stats);
  CHECK(r.best.params.set == init.set);
  CHECK(r.log.back().valid_loss == r.log.front().valid_loss);
}

TEST_CASE("training reduces the loss on a synthetic catchment") {
  Problem p = make_problem(1, 1500);
  TrainConfig cfg = small_config();
  cfg.cells = 8;
  cfg.n_r = 4;
  cfg.epochs = 12;
  cfg.batch = 32;
  const TrainResult r = train::train(p.ds, p.stats, cfg);
  CHECK(r.log.back().train_loss <= 0.5 * r.log.front().train_loss);
  CHECK(r.best.validation_loss < r.log.front().valid_loss);
}

TEST_CASE("training errors") {
  Problem p = make_problem();
  TrainConfig cfg = small_config();
  cfg.epochs = 1;

  SUBCASE("empty validation falls back to the final epoch with a warning") {
    data::Dataset ds = p.ds;
    ds.samples[static_cast<int>(Split::Validation)].clear();
    cfg.epochs = 2;
    const TrainResult r = train::train(ds, p.stats, cfg);
    CHECK(r.best.epoch == 2);
    CHECK(std::isnan(r.best.validation_loss));
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("validation") != std::string::npos);
  }
  SUBCASE("empty training set") {
    data::Dataset ds = p.ds;
    ds.samples[static_cast<int>(Split::Train)].clear();
    CHECK_THROWS_AS(train::train(ds, p.stats, cfg), ConfigError);
  }
  SUBCASE("non-finite initial loss names epoch 0") {
    data::Dataset ds = p.ds;
    const auto& ref = ds.split(Split::Train)[7];
    ds.gauges[ref.gauge].target[ref.end] = 1e200;
    try {
      train::train(ds, p.stats, cfg);
      FAIL("expected a numeric failure");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
    }
  }
  SUBCASE("divergence names epoch and batch") {
    cfg.learning_rate = 1e200;
    try {
      train::train(p.ds, p.stats, cfg);
      FAIL("expected a numeric failure");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("epoch 1 batch 1") != std::string::npos);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  Problem p = make_problem();
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  const TrainResult r = train::train(p.ds, p.stats, cfg);
  const std::string text = checkpoint_text(r.best);
  std::istringstream in(text);
  const Checkpoint back = read_checkpoint(in);
  CHECK(back.params.set == r.best.params.set);
  CHECK(back.stats == r.best.stats);
  CHECK(back.epoch == r.best.epoch);
  CHECK(back.validation_loss == r.best.validation_loss);
  TrainConfig expect = cfg;
  expect.threads = 0;  // not part of the checkpoint
  CHECK(back.config == expect);
  CHECK(checkpoint_text(back) == text);

  // Reload reproduces the validation score and the evaluation exactly.
  CHECK(split_loss(back.params, p.ds, back.stats, Split::Validation, back.config) ==
        r.best.validation_loss);
  const Evaluation a = evaluate(r.best, p.ds, Split::Test, 2);
  const Evaluation b = evaluate(back, p.ds, Split::Test, 1);
  REQUIRE(a.gauges.size() == 1);
  CHECK(a.gauges[0].predicted == b.gauges[0].predicted);

  std::istringstream bad("fslstm-checkpoint 1\nepoch x\n");
  CHECK_THROWS(read_checkpoint(bad));
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.txt"), ConfigError);
}

TEST_CASE("evaluation") {
  Problem p = make_problem(2);

  SUBCASE("oracle predictor scores NSE 1") {
    PredictorFactory oracle = [] {
      return [](const data::Dataset& ds, const data::SampleRef& r) { return ds.target(r); };
    };
    const Evaluation ev = evaluate(p.ds, Split::Test, oracle, 3);
    REQUIRE(ev.gauges.size() == 2);
    for (const auto& g : ev.gauges) {
      CHECK(metrics::nse(metrics::pair_series(g.observed, g.predicted)) == 1.0);
      CHECK(g.dates.size() == 200);
    }
  }
  SUBCASE("all-zero FS-LSTM predicts zero") {
    TrainConfig cfg = small_config();
    const cells::ModelParams zero = cells::zero_params(cfg.dims());
    const Evaluation ev = evaluate(p.ds, Split::Test, model_predictor(zero, 30), 2);
    for (const auto& g : ev.gauges)
      for (double q : g.predicted) CHECK(q == 0.0);
  }
  SUBCASE("mass-conserving predictions are nonnegative; LSTM is clamped") {
    for (auto kind : {cells::ModelKind::FsLstm, cells::ModelKind::McLstm, cells::ModelKind::Lstm}) {
      TrainConfig cfg = small_config();
      cfg.model = kind;
      const cells::ModelParams params = cells::init_params(cfg.dims(), 11);
      const Evaluation ev = evaluate(p.ds, Split::Test, model_predictor(params, 25), 2);
      for (const auto& g : ev.gauges)
        for (double q : g.predicted) CHECK(q >= 0.0);
    }
  }
  SUBCASE("gaps and windowless gauges") {
    std::vector<data::GaugeRecord> recs = p.records;
    recs[0].precip[900] = std::nan("");
    recs[1].quality.assign(recs[1].quality.size(), 0);
    const auto ds = data::build_dataset(recs, p.split, p.stats);
    PredictorFactory oracle = [] {
      return [](const data::Dataset& d, const data::SampleRef& r) { return d.target(r); };
    };
    const Evaluation ev = evaluate(ds, Split::Test, oracle, 1);
    REQUIRE(ev.gauges.size() == 1);
    CHECK(ev.gauges[0].dates.size() == 100);  // windows ending 800..899 avoid the gap
    CHECK(ds.skips[0].gap == 100);
    CHECK(ev.without_windows == std::vector<std::string>{"s1"});
  }
  SUBCASE("predictions CSV") {
    GaugePredictions g{"x", {data::parse_date("2000-01-02")}, {1.5}, {2.0}};
    std::ostringstream out;
    write_predictions_csv(out, g);
    CHECK(out.str() == "date,observed_mm,predicted_mm\n2000-01-02,1.5,2\n");
  }
}

TEST_CASE("training log CSV") {
  std::ostringstream out;
  write_log_csv(out, {{0, 1.5, std::nan(""), 0.25}, {1, 1.0, 0.5, 2}});
  CHECK(out.str() == "epoch,train_loss,valid_loss,seconds\n0,1.5,,0.25\n1,1,0.5,2\n");
}
