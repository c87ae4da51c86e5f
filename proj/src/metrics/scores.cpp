#include <algorithm>
#include <cmath>
#include <functional>

#include "fslstm/metrics/metrics.hpp"

namespace fslstm::metrics {

namespace {

void require_pairs(const PairedSeries& s, std::size_t min, const char* what) {
  if (s.observed.size() != s.simulated.size())
    throw ShapeError(std::string(what) + ": observed and simulated lengths differ");
  if (s.size() < min)
    throw UndefinedScore(std::string(what) + " needs at least " + std::to_string(min) +
                         " paired values, got " + std::to_string(s.size()));
}

double mean(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

double floored_log(double q) { return std::log(std::max(q, kLogFloor)); }

// Sum over the curve points whose exceedance probability lies in [lo, hi].
double segment_sum(const Fdc& c, double lo, double hi, const std::function<double(double)>& f,
                   std::size_t& count) {
  double sum = 0.0;
  count = 0;
  for (std::size_t i = 0; i < c.flows.size(); ++i) {
    if (c.probability[i] < lo || c.probability[i] > hi) continue;
    sum += f(c.flows[i]);
    ++count;
  }
  return sum;
}

}  // namespace

PairedSeries pair_series(std::span<const double> observed, std::span<const double> simulated) {
  if (observed.size() != simulated.size())
    throw ShapeError("observed has " + std::to_string(observed.size()) + " values, simulated " +
                     std::to_string(simulated.size()));
  PairedSeries s;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (std::isnan(observed[i]) || std::isnan(simulated[i])) continue;
    s.observed.push_back(observed[i]);
    s.simulated.push_back(simulated[i]);
  }
  return s;
}

double nse(const PairedSeries& s) {
  require_pairs(s, 2, "NSE");
  const double mo = mean(s.observed);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    num += (s.simulated[i] - s.observed[i]) * (s.simulated[i] - s.observed[i]);
    den += (s.observed[i] - mo) * (s.observed[i] - mo);
  }
  if (den == 0.0) throw UndefinedScore("NSE undefined: observed series has zero variance");
  return 1.0 - num / den;
}

double kge(const PairedSeries& s) {
  require_pairs(s, 2, "KGE");
  const double mo = mean(s.observed), ms = mean(s.simulated);
  double so = 0.0, ss = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double a = s.observed[i] - mo, b = s.simulated[i] - ms;
    so += a * a;
    ss += b * b;
    cov += a * b;
  }
  if (mo == 0.0) throw UndefinedScore("KGE undefined: observed mean is zero");
  if (so == 0.0 || ss == 0.0) throw UndefinedScore("KGE undefined: a series has zero variance");
  const double r = cov / std::sqrt(so * ss);
  const double alpha = std::sqrt(ss / so);
  const double beta = ms / mo;
  return 1.0 - std::sqrt((r - 1) * (r - 1) + (alpha - 1) * (alpha - 1) + (beta - 1) * (beta - 1));
}

double rmse(const PairedSeries& s) {
  require_pairs(s, 1, "RMSE");
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    sum += (s.simulated[i] - s.observed[i]) * (s.simulated[i] - s.observed[i]);
  return std::sqrt(sum / static_cast<double>(s.size()));
}

Fdc fdc(std::span<const double> flows) {
  Fdc c;
  c.flows.assign(flows.begin(), flows.end());
  std::sort(c.flows.begin(), c.flows.end(), std::greater<>());
  const double n1 = static_cast<double>(flows.size() + 1);
  for (std::size_t i = 0; i < flows.size(); ++i)
    c.probability.push_back(static_cast<double>(i + 1) / n1);
  return c;
}

double Fdc::quantile(double p) const {
  if (flows.empty()) throw UndefinedScore("quantile of an empty flow-duration curve");
  if (p <= probability.front()) return flows.front();
  if (p >= probability.back()) return flows.back();
  const auto it = std::upper_bound(probability.begin(), probability.end(), p);
  const std::size_t hi = static_cast<std::size_t>(it - probability.begin());
  const std::size_t lo = hi - 1;
  const double t = (p - probability[lo]) / (probability[hi] - probability[lo]);
  return flows[lo] + t * (flows[hi] - flows[lo]);
}

double bias_fhv(const PairedSeries& s) {
  require_pairs(s, 2, "%BiasFHV");
  const Fdc o = fdc(s.observed), m = fdc(s.simulated);
  std::size_t no = 0, nm = 0;
  const auto id = [](double q) { return q; };
  const double obs = segment_sum(o, 0.0, kHighEnd, id, no);
  const double sim = segment_sum(m, 0.0, kHighEnd, id, nm);
  if (no == 0) throw UndefinedScore("%BiasFHV undefined: high-flow segment is empty");
  if (obs == 0.0) throw UndefinedScore("%BiasFHV undefined: zero observed high-flow volume");
  return 100.0 * (sim - obs) / obs;
}

double bias_fms(const PairedSeries& s) {
  require_pairs(s, 2, "%BiasFMS");
  const Fdc o = fdc(s.observed), m = fdc(s.simulated);
  const double obs = floored_log(o.quantile(kHighEnd)) - floored_log(o.quantile(kLowStart));
  const double sim = floored_log(m.quantile(kHighEnd)) - floored_log(m.quantile(kLowStart));
  if (obs == 0.0) throw UndefinedScore("%BiasFMS undefined: flat observed mid segment");
  return 100.0 * (sim - obs) / obs;
}

double bias_flv(const PairedSeries& s) {
  require_pairs(s, 2, "%BiasFLV");
  const Fdc o = fdc(s.observed), m = fdc(s.simulated);
  // The segment minimum is the last point of a descending curve.
  const double lo_min = floored_log(o.flows.back());
  const double ls_min = floored_log(m.flows.back());
  std::size_t no = 0, nm = 0;
  const double obs = segment_sum(
      o, kLowStart, 1.0, [&](double q) { return floored_log(q) - lo_min; }, no);
  const double sim = segment_sum(
      m, kLowStart, 1.0, [&](double q) { return floored_log(q) - ls_min; }, nm);
  if (no == 0) throw UndefinedScore("%BiasFLV undefined: low-flow segment is empty");
  if (obs == 0.0) throw UndefinedScore("%BiasFLV undefined: flat observed low segment");
  return -100.0 * (sim - obs) / obs;
}

std::string_view column_name(Metric m) {
  switch (m) {
    case Metric::Nse: return "nse";
    case Metric::Kge: return "kge";
    case Metric::Rmse: return "rmse_mm";
    case Metric::Fhv: return "biasfhv_pct";
    case Metric::Fms: return "biasfms_pct";
    case Metric::Flv: return "biasflv_pct";
  }
  return "?";
}

bool is_bias(Metric m) { return m == Metric::Fhv || m == Metric::Fms || m == Metric::Flv; }

ScoreReport score_gauge(std::string gauge_id, const PairedSeries& s) {
  using Fn = double (*)(const PairedSeries&);
  static constexpr std::array<Fn, 6> fns = {nse, kge, rmse, bias_fhv, bias_fms, bias_flv};
  ScoreReport r;
  r.gauge_id = std::move(gauge_id);
  for (std::size_t k = 0; k < fns.size(); ++k) {
    try {
      const double v = fns[k](s);
      if (std::isfinite(v)) r.scores[k] = v;
    } catch (const UndefinedScore&) {
    }
  }
  return r;
}

}  // namespace fslstm::metrics
