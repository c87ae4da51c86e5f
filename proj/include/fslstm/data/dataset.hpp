#pragma once

// Train/validation/test splits, normalization statistics and 365-day sample
// windows over prepared per-gauge feature matrices.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fslstm/data/gauge.hpp"

namespace fslstm::data {

inline constexpr std::size_t kWindow = 365;
/// Auxiliary features per step: tmin, tmean, tmax, then the static attributes.
inline constexpr std::size_t kAuxWidth = 3 + kStaticCount;
inline constexpr double kMinSd = 1e-8;

enum class Split { Train = 0, Validation = 1, Test = 2 };
inline constexpr std::array<Split, 3> kSplits = {Split::Train, Split::Validation, Split::Test};
const char* to_string(Split s);

struct SplitSpec {
  DateRange train;
  DateRange validation;
  DateRange test;

  /// Training 1999-10-01..2008-09-30, validation 1990-10-01..1994-09-30,
  /// test 1994-10-01..1999-09-30.
  static SplitSpec defaults();
  const DateRange& range(Split s) const;
  /// Throws ConfigError unless every range is non-empty and the three are
  /// pairwise disjoint.
  void validate() const;
  std::optional<Split> split_of(Day day) const;
};

struct FeatureStats {
  double mean = 0.0;
  double sd = 1.0;  ///< population sd, floored at kMinSd

  double z(double v) const { return (v - mean) / sd; }
  friend bool operator==(const FeatureStats&, const FeatureStats&) = default;
};

struct NormalizationStats {
  std::array<FeatureStats, 3> temperature;         ///< tmin, tmean, tmax
  std::array<FeatureStats, kStaticCount> statics;  ///< across gauges
  /// Root mean square of soil moisture and precipitation over training rows;
  /// scales the fast-slow net's input without shifting it.
  std::array<double, 2> mass_rms{1.0, 1.0};
  FeatureStats streamflow_pooled;
  std::map<std::string, FeatureStats, std::less<>> streamflow;  ///< per gauge

  /// Per-gauge streamflow stats, or the pooled ones for an unseen gauge.
  const FeatureStats& streamflow_for(std::string_view gauge) const;

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// Fits every statistic on rows whose date lies in the training range.
/// Temperatures pool all training rows with the value present; streamflow
/// uses training rows that pass the target check. Static attributes are
/// pooled across the given gauges. Throws DataError if no gauge has a
/// training row.
NormalizationStats fit_stats(const std::vector<GaugeRecord>& records, const SplitSpec& split);

/// Which observations feed the mass inputs: (w, p) or precipitation alone.
enum class MassInputs { SoilAndPrecip, PrecipOnly };
inline std::size_t mass_width(MassInputs m) { return m == MassInputs::PrecipOnly ? 1 : 2; }

/// One gauge's model-ready rows. Row i is day start + i.
struct PreparedGauge {
  std::string id;
  Day start = 0;
  std::size_t mass_width = 2;
  std::vector<double> mass;    ///< days x mass_width, physical units
  std::vector<double> aux;     ///< days x kAuxWidth, z-scored
  std::vector<double> target;  ///< streamflow mm/day, NaN when unusable

  std::size_t days() const { return target.size(); }
};

/// A window ending (inclusive) at row `end` of gauge `gauge`.
struct SampleRef {
  std::uint32_t gauge = 0;
  std::uint32_t end = 0;

  friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

struct SkipCounts {
  std::size_t gap = 0;            ///< an input gap inside the window
  std::size_t target = 0;         ///< target missing or failing quality
  std::size_t short_history = 0;  ///< fewer than kWindow rows before the target
  std::array<std::size_t, 3> kept{};
  bool lacks_validation = false;  ///< no validation sample at all
};

struct GaugeSamples {
  PreparedGauge gauge;
  std::array<std::vector<std::uint32_t>, 3> ends;  ///< window end rows per split
  SkipCounts skips;
};

/// Windows one record. A window belongs to the split containing its target
/// date; inputs may reach back across split boundaries. A candidate whose
/// target is outside every split is ignored, not counted.
GaugeSamples build_samples(const GaugeRecord& record, const SplitSpec& split,
                           const NormalizationStats& stats,
                           MassInputs mass = MassInputs::SoilAndPrecip);

/// Samples pooled over gauges in a canonical order: gauges sorted by id,
/// windows by end date.
struct Dataset {
  std::vector<PreparedGauge> gauges;
  std::array<std::vector<SampleRef>, 3> samples;
  std::vector<SkipCounts> skips;  ///< parallel to gauges

  const std::vector<SampleRef>& split(Split s) const { return samples[static_cast<int>(s)]; }
  std::span<const double> mass_window(const SampleRef& r) const;
  std::span<const double> aux_window(const SampleRef& r) const;
  double target(const SampleRef& r) const { return gauges[r.gauge].target[r.end]; }
  Day target_date(const SampleRef& r) const {
    return gauges[r.gauge].start + static_cast<Day>(r.end);
  }
};

Dataset build_dataset(const std::vector<GaugeRecord>& records, const SplitSpec& split,
                      const NormalizationStats& stats,
                      MassInputs mass = MassInputs::SoilAndPrecip);

/// Plain-text per-gauge counts.
void write_skip_report(std::ostream& out, const Dataset& dataset);

/// Synthetic catchment driven by Q = alpha w p + beta w + gamma + noise.
/// Starts 1990-10-01 with every row quality-passing. Throws ConfigError for
/// T < 366 or a negative noise sd, and DataError when more than 1% of days
/// had to be clamped at zero.
GaugeRecord generate_synthetic(double alpha, double beta, double gamma, double noise_sd,
                               std::size_t T, std::uint64_t seed);

}  // namespace fslstm::data
