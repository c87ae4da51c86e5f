#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <ostream>
#include <random>
#include <thread>

#include "fslstm/errors.hpp"
#include "fslstm/train/train.hpp"

namespace fslstm::train {

using cells::ModelKind;
using data::Dataset;
using data::SampleRef;
using data::Split;

// ---------------------------------------------------------------- config

std::string_view to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "nse_basin"; }

LossKind parse_loss_kind(std::string_view text) {
  if (text == "mse") return LossKind::Mse;
  if (text == "nse_basin") return LossKind::NseBasin;
  throw ConfigError("unknown loss '" + std::string(text) + "', expected mse or nse_basin");
}

cells::ModelDims TrainConfig::dims() const {
  cells::ModelDims d;
  d.kind = model;
  d.n_c = cells;
  d.n_a = data::kAuxWidth;
  d.n_m = 2;
  d.n_r = n_r;
  d.fastslow = fastslow;
  return d;
}

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> warnings;
  if (cells == 0 || epochs == 0 || batch == 0 || n_r == 0 || fastslow.units == 0 ||
      fastslow.layers == 0)
    throw ConfigError("cells, epochs, batch, n_r and fast-slow sizes must all be positive");
  if (window == 0 || window > data::kWindow)
    throw ConfigError("window must be in [1, " + std::to_string(data::kWindow) + "], got " +
                      std::to_string(window));
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be finite and >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (model == ModelKind::FsLstm) {
    const auto bound = cells::max_projection_dim(cells, data::kAuxWidth);
    if (n_r > bound) {
      const std::string msg = "n_r = " + std::to_string(n_r) + " exceeds the projection bound " +
                              std::to_string(bound) + " for " + std::to_string(cells) +
                              " cells and " + std::to_string(data::kAuxWidth) +
                              " auxiliary inputs";
      if (!allow_large_projection) throw ConfigError(msg + " (set allow_large_projection to override)");
      warnings.push_back(msg + "; continuing because allow_large_projection is set");
    }
  }
  return warnings;
}

namespace {

std::string number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  auto r = std::from_chars(value.data(), value.data() + value.size(), v);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size())
    throw ConfigError(key + ": expected a nonnegative integer, got '" + value + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0;
  auto r = std::from_chars(value.data(), value.data() + value.size(), v);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size())
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

constexpr std::array<std::string_view, 14> kKeys = {
    "model",   "cells", "epochs",         "batch",          "window",
    "learning_rate",    "seed",           "loss",           "n_r",
    "fastslow_units",   "fastslow_layers", "allow_large_projection", "clip_norm", "threads"};

}  // namespace

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"model", std::string(cells::to_string(model))},
          {"cells", std::to_string(cells)},
          {"epochs", std::to_string(epochs)},
          {"batch", std::to_string(batch)},
          {"window", std::to_string(window)},
          {"learning_rate", number(learning_rate)},
          {"seed", std::to_string(seed)},
          {"loss", std::string(to_string(loss))},
          {"n_r", std::to_string(n_r)},
          {"fastslow_units", std::to_string(fastslow.units)},
          {"fastslow_layers", std::to_string(fastslow.layers)},
          {"allow_large_projection", allow_large_projection ? "true" : "false"},
          {"clip_norm", number(clip_norm)},
          {"threads", std::to_string(threads)}};
}

bool TrainConfig::is_key(std::string_view key) {
  return std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end();
}

void TrainConfig::apply(const std::string& key, const std::string& value) {
  if (key == "model") model = cells::parse_model_kind(value);
  else if (key == "cells") cells = parse_size(key, value);
  else if (key == "epochs") epochs = parse_size(key, value);
  else if (key == "batch") batch = parse_size(key, value);
  else if (key == "window") window = parse_size(key, value);
  else if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "seed") seed = parse_size(key, value);
  else if (key == "loss") loss = parse_loss_kind(value);
  else if (key == "n_r") n_r = parse_size(key, value);
  else if (key == "fastslow_units") fastslow.units = parse_size(key, value);
  else if (key == "fastslow_layers") fastslow.layers = parse_size(key, value);
  else if (key == "allow_large_projection") allow_large_projection = parse_bool(key, value);
  else if (key == "clip_norm") clip_norm = parse_double(key, value);
  else if (key == "threads") threads = parse_size(key, value);
  else throw ConfigError("unknown training key '" + key + "'");
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------- workers

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` threads. Exceptions are
// collected per index and the lowest-index one is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&](std::size_t worker) {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(worker, i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t extra = std::min(threads, n) > 0 ? std::min(threads, n) - 1 : 0;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < extra; ++w) pool.emplace_back(work, w + 1);
  work(0);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Binds the last `window` days of a sample.
void bind_sample(const cells::SequenceModel& model, Session& s, const Dataset& ds,
                 const SampleRef& ref) {
  const std::size_t window = model.steps();
  const std::size_t skip = data::kWindow - window;
  const std::size_t mw = ds.gauges[ref.gauge].mass_width;
  const auto mass = ds.mass_window(ref).subspan(skip * mw);
  const auto aux = ds.aux_window(ref).subspan(skip * data::kAuxWidth);
  model.bind_initial(s, {});
  for (std::size_t t = 0; t < window; ++t)
    model.bind_step(s, t, mass.subspan(t * mw, mw), aux.subspan(t * data::kAuxWidth, data::kAuxWidth));
}

Gradients zero_grads(const ParamSet& params) {
  Gradients g;
  for (const auto& [name, e] : params)
    if (e.trainable) g.emplace(name, Tensor(e.value.shape()));
  return g;
}

void zero(Gradients& g) {
  for (auto& [name, t] : g) std::fill(t.values().begin(), t.values().end(), 0.0);
}

// Shared machinery for loss and gradient evaluation over sample lists. The
// work is cut into a fixed number of contiguous chunks and reduced in chunk
// order, so results do not depend on the thread count.
class Engine {
 public:
  static constexpr std::size_t kChunks = 16;

  Engine(const TrainConfig& cfg, const Dataset& ds, const data::NormalizationStats& stats)
      : cfg_(cfg), ds_(ds), threads_(resolve_threads(cfg.threads)),
        model_(cfg.dims(), cfg.window, true) {
    for (std::size_t w = 0; w < threads_; ++w) sessions_.emplace_back(model_.graph());
    weights_.reserve(ds.gauges.size());
    for (const auto& g : ds.gauges)
      weights_.push_back(sample_weight(cfg.loss, stats.streamflow_for(g.id)));
  }

  double weight(const SampleRef& r) const { return weights_[r.gauge]; }

  // Mean loss over `refs` (forward only).
  double mean_loss(const ParamSet& params, std::span<const SampleRef> refs) {
    if (refs.empty()) return std::nan("");
    constexpr std::size_t kBlock = 32;
    const std::size_t blocks = (refs.size() + kBlock - 1) / kBlock;
    std::vector<double> sums(blocks, 0.0);
    parallel_for(blocks, threads_, [&](std::size_t w, std::size_t b) {
      Session& s = sessions_[w];
      const std::size_t end = std::min(refs.size(), (b + 1) * kBlock);
      for (std::size_t i = b * kBlock; i < end; ++i) sums[b] += forward(s, params, refs[i]);
    });
    double total = 0.0;
    for (double v : sums) total += v;
    return total / static_cast<double>(refs.size());
  }

  // Mean loss and its gradient over one batch.
  double batch_gradient(const ParamSet& params, std::span<const SampleRef> batch, Gradients& out) {
    if (chunk_grads_.empty()) chunk_grads_.assign(kChunks, zero_grads(params));
    const std::size_t chunks = std::min(kChunks, batch.size());
    std::vector<double> sums(chunks, 0.0);
    const double scale = 1.0 / static_cast<double>(batch.size());
    parallel_for(chunks, threads_, [&](std::size_t w, std::size_t c) {
      Session& s = sessions_[w];
      Gradients& g = chunk_grads_[c];
      zero(g);
      const std::size_t lo = c * batch.size() / chunks, hi = (c + 1) * batch.size() / chunks;
      for (std::size_t i = lo; i < hi; ++i) {
        sums[c] += forward(s, params, batch[i]);
        s.backward_accumulate(model_.loss(), scale, g);
      }
    });
    zero(out);
    double total = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
      total += sums[c];
      for (auto& [name, t] : out) {
        const Tensor& src = chunk_grads_[c].at(name);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += src[i];
      }
    }
    return total * scale;
  }

 private:
  double forward(Session& s, const ParamSet& params, const SampleRef& r) {
    bind_sample(model_, s, ds_, r);
    model_.bind_loss(s, ds_.target(r), weight(r));
    s.forward(params);
    return s.value(model_.loss())[0];
  }

  const TrainConfig& cfg_;
  const Dataset& ds_;
  std::size_t threads_;
  cells::SequenceModel model_;
  std::vector<Session> sessions_;
  std::vector<double> weights_;
  std::vector<Gradients> chunk_grads_;
};

// Uniform draw in [0, n) without modulo bias; portable across standard
// libraries, unlike std::uniform_int_distribution.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = rng(); while (x >= limit);
  return x % n;
}

void shuffle(std::vector<SampleRef>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_below(rng, i)]);
}

}  // namespace

void set_input_scale(cells::ModelParams& params, const data::NormalizationStats& stats) {
  if (params.dims.kind != ModelKind::FsLstm) return;
  Tensor& scale = params.set.get_mutable("fastslow.input_scale");
  scale[0] = 1.0 / stats.mass_rms[0];
  scale[1] = 1.0 / stats.mass_rms[1];
}

double split_loss(const cells::ModelParams& params, const Dataset& dataset,
                  const data::NormalizationStats& stats, Split split, const TrainConfig& config) {
  Engine engine(config, dataset, stats);
  return engine.mean_loss(params.set, dataset.split(split));
}

TrainResult train(const Dataset& dataset, const data::NormalizationStats& stats,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  TrainResult result;
  result.warnings = config.validate();
  const auto& train_refs = dataset.split(Split::Train);
  const auto& valid_refs = dataset.split(Split::Validation);
  if (train_refs.empty()) throw ConfigError("no training samples");
  for (const auto& g : dataset.gauges)
    if (g.mass_width != config.dims().mass_width())
      throw ConfigError("gauge '" + g.id + "' provides " + std::to_string(g.mass_width) +
                        " mass inputs, the model takes " +
                        std::to_string(config.dims().mass_width()));
  if (valid_refs.empty())
    result.warnings.push_back("no validation samples; keeping the final epoch");

  using Clock = std::chrono::steady_clock;
  Engine engine(config, dataset, stats);
  cells::ModelParams params = cells::init_params(config.dims(), config.seed);
  set_input_scale(params, stats);
  AdamState adam;
  const AdamHyper hyper{config.learning_rate};
  Gradients grads = zero_grads(params.set);
  std::mt19937_64 rng(config.seed);

  auto log_epoch = [&](const EpochLog& e) {
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
  };

  auto t0 = Clock::now();
  EpochLog initial;
  try {
    initial.train_loss = engine.mean_loss(params.set, train_refs);
    initial.valid_loss = engine.mean_loss(params.set, valid_refs);
  } catch (const NumericError& e) {
    throw NumericError(std::string("epoch 0 (initial evaluation): ") + e.what());
  }
  initial.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  log_epoch(initial);

  bool have_best = false;
  std::vector<SampleRef> order(train_refs.begin(), train_refs.end());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    t0 = Clock::now();
    shuffle(order, rng);
    double loss_sum = 0.0;
    const std::size_t batches = (order.size() + config.batch - 1) / config.batch;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * config.batch;
      const std::size_t n = std::min(config.batch, order.size() - lo);
      const std::span<const SampleRef> batch(order.data() + lo, n);
      const std::string where =
          "epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": ";
      double loss = 0.0;
      try {
        loss = engine.batch_gradient(params.set, batch, grads);
        if (!std::isfinite(loss)) throw NumericError("non-finite loss " + number(loss));
        clip_global_norm(grads, config.clip_norm);
        adam_step(params.set, grads, adam, hyper);
      } catch (const NumericError& e) {
        throw NumericError(where + e.what());
      }
      loss_sum += loss * static_cast<double>(n);
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(order.size());
    try {
      e.valid_loss = engine.mean_loss(params.set, valid_refs);
    } catch (const NumericError& err) {
      throw NumericError("epoch " + std::to_string(epoch) + " validation: " + err.what());
    }
    e.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool better = valid_refs.empty() ? epoch == config.epochs
                                           : !have_best || e.valid_loss < result.best.validation_loss;
    if (better) {
      result.best = Checkpoint{params, stats, config, epoch, e.valid_loss};
      have_best = true;
    }
    log_epoch(e);
  }
  return result;
}

void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,train_loss,valid_loss,seconds\n";
  for (const EpochLog& e : log) {
    out << e.epoch << ',' << number(e.train_loss) << ',';
    if (!std::isnan(e.valid_loss)) out << number(e.valid_loss);
    out << ',' << number(e.seconds) << '\n';
  }
}

}  // namespace fslstm::train
