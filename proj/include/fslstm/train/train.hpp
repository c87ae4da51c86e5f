#pragma once

// Pooled-gauge mini-batch training, checkpoints and test-period evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fslstm/cells/cells.hpp"
#include "fslstm/cells/model.hpp"
#include "fslstm/data/dataset.hpp"

namespace fslstm::train {

enum class LossKind { Mse, NseBasin };
std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view text);

struct TrainConfig {
  cells::ModelKind model = cells::ModelKind::FsLstm;
  std::size_t cells = 64;
  std::size_t epochs = 30;
  std::size_t batch = 256;
  std::size_t window = data::kWindow;  ///< steps unrolled; the last `window` days of each sample
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::Mse;
  std::size_t n_r = 10;
  cells::FastSlowDims fastslow{10, 2};
  /// Accept an n_r above the projection bound (a warning is logged).
  bool allow_large_projection = false;
  double clip_norm = 1.0;
  std::size_t threads = 0;  ///< 0 = hardware concurrency

  cells::ModelDims dims() const;
  /// Throws ConfigError for zero sizes, a window outside [1, 365], a
  /// negative or non-finite rate, or an n_r above the bound without the
  /// override. Returns warnings to report.
  std::vector<std::string> validate() const;

  /// Flat key=value form, one entry per field.
  std::map<std::string, std::string> to_map() const;
  /// Applies the keys it knows; throws ConfigError on a bad value. Unknown
  /// keys are left to the caller.
  void apply(const std::string& key, const std::string& value);
  static bool is_key(std::string_view key);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::size_t resolve_threads(std::size_t requested);

// ---------------------------------------------------------------- optimizer

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  NamedTensors m;
  NamedTensors v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update of every trainable tensor in `grads`.
/// Throws NumericError on a non-finite gradient and ShapeError on a
/// mismatched or unknown tensor.
void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, const AdamHyper& hyper);

/// Scales `grads` in place so their global L2 norm is at most max_norm.
/// Returns the norm before scaling.
double clip_global_norm(Gradients& grads, double max_norm);

// ---------------------------------------------------------------- loss

/// Weight of one sample's squared error: 1/sd^2 (error in standardized
/// streamflow) for mse, 1/(sd + 0.1)^2 for nse_basin, sd being the gauge's
/// training-period streamflow sd.
double sample_weight(LossKind kind, const data::FeatureStats& streamflow);

// ---------------------------------------------------------------- checkpoint

struct Checkpoint {
  cells::ModelParams params;
  data::NormalizationStats stats;
  TrainConfig config;
  std::size_t epoch = 0;
  double validation_loss = 0.0;  ///< NaN when there was no validation set
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws ConfigError when the file is missing, DataError when malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------- training

/// Sets the FS-LSTM's frozen fast-slow input scale to 1 / training RMS of
/// (w, p). No effect on other model kinds.
void set_input_scale(cells::ModelParams& params, const data::NormalizationStats& stats);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;  ///< NaN without validation samples
  double seconds = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;  ///< epoch 0 holds the losses before any update
  std::vector<std::string> warnings;
};

/// Called after each epoch (including epoch 0) as it is logged.
using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains on dataset.split(Train), selecting the epoch with the lowest
/// validation loss. Throws ConfigError for an empty training set and
/// NumericError naming epoch and batch on a non-finite loss or gradient.
TrainResult train(const data::Dataset& dataset, const data::NormalizationStats& stats,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean weighted loss over one split (forward passes only).
double split_loss(const cells::ModelParams& params, const data::Dataset& dataset,
                  const data::NormalizationStats& stats, data::Split split,
                  const TrainConfig& config);

void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log);

// ---------------------------------------------------------------- evaluation

/// Per-thread prediction function: streamflow in mm/day for one sample.
using PredictFn = std::function<double(const data::Dataset&, const data::SampleRef&)>;
/// Creates one PredictFn per worker thread.
using PredictorFactory = std::function<PredictFn()>;

/// Runs the model over the last `window` days of each sample. LSTM outputs
/// are clamped at zero; the conserving models cannot go negative.
PredictorFactory model_predictor(const cells::ModelParams& params, std::size_t window);

struct GaugePredictions {
  std::string gauge_id;
  std::vector<data::Day> dates;
  std::vector<double> observed;
  std::vector<double> predicted;
};

struct Evaluation {
  std::vector<GaugePredictions> gauges;     ///< gauges with at least one window
  std::vector<std::string> without_windows; ///< gauges reported, not fatal
};

Evaluation evaluate(const data::Dataset& dataset, data::Split split, const PredictorFactory& predictor,
                    std::size_t threads);
Evaluation evaluate(const Checkpoint& ckpt, const data::Dataset& dataset, data::Split split,
                    std::size_t threads);

void write_predictions_csv(std::ostream& out, const GaugePredictions& g);

}  // namespace fslstm::train
