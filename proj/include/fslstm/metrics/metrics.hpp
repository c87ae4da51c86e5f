#pragma once

// Streamflow skill scores, flow-duration curves and multi-gauge summaries.
// Flows are mm/day throughout.

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fslstm/errors.hpp"

namespace fslstm::metrics {

/// A score whose formula has a zero denominator or too few values.
class UndefinedScore : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Observed/simulated values aligned by day; pairs with a NaN on either
/// side are dropped.
struct PairedSeries {
  std::vector<double> observed;
  std::vector<double> simulated;

  std::size_t size() const { return observed.size(); }
};

/// Throws ShapeError when the inputs differ in length.
PairedSeries pair_series(std::span<const double> observed, std::span<const double> simulated);

double nse(const PairedSeries& s);
double kge(const PairedSeries& s);
double rmse(const PairedSeries& s);

/// Flows sorted descending with Weibull exceedance probabilities i/(N+1).
struct Fdc {
  std::vector<double> flows;
  std::vector<double> probability;

  /// Linear interpolation in probability, held flat beyond the end points.
  double quantile(double p) const;
};

Fdc fdc(std::span<const double> flows);

/// Floor applied to flows before taking logarithms.
inline constexpr double kLogFloor = 1e-6;
/// Exceedance probability bounds of the high, mid and low segments.
inline constexpr double kHighEnd = 0.2;
inline constexpr double kLowStart = 0.7;

/// Percent bias of the high-flow volume, mid-segment slope and low-flow
/// volume. Segments are taken from each series' own curve.
double bias_fhv(const PairedSeries& s);
double bias_fms(const PairedSeries& s);
double bias_flv(const PairedSeries& s);

enum class Metric { Nse, Kge, Rmse, Fhv, Fms, Flv };
inline constexpr std::array<Metric, 6> kMetrics = {Metric::Nse, Metric::Kge, Metric::Rmse,
                                                   Metric::Fhv, Metric::Fms, Metric::Flv};
/// Column name in the scores CSV.
std::string_view column_name(Metric m);
bool is_bias(Metric m);

struct ScoreReport {
  std::string gauge_id;
  std::array<std::optional<double>, 6> scores;  ///< empty when undefined

  const std::optional<double>& operator[](Metric m) const {
    return scores[static_cast<std::size_t>(m)];
  }
};

/// Computes every score, marking the ones that are undefined for this series.
ScoreReport score_gauge(std::string gauge_id, const PairedSeries& s);

struct MetricSummary {
  Metric metric = Metric::Nse;
  double mean = 0.0;
  double sd = 0.0;  ///< population sd
  std::size_t count = 0;
  std::size_t undefined = 0;
  /// Share of defined values with |v| <= 25; bias metrics only.
  std::optional<double> within_25pct;
};

/// Throws ConfigError for an empty report list.
std::vector<MetricSummary> summarize(std::span<const ScoreReport> reports);

/// Scores CSV; undefined scores are empty fields.
void write_scores_csv(std::ostream& out, std::span<const ScoreReport> reports);
void write_summary_csv(std::ostream& out, std::span<const MetricSummary> summary);
void write_fdc_csv(std::ostream& out, const Fdc& curve);

}  // namespace fslstm::metrics
