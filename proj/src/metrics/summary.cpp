#include <charconv>
#include <cmath>
#include <ostream>

#include "fslstm/metrics/metrics.hpp"

namespace fslstm::metrics {

namespace {

std::string number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::vector<MetricSummary> summarize(std::span<const ScoreReport> reports) {
  if (reports.empty()) throw ConfigError("summarize needs at least one score report");
  std::vector<MetricSummary> out;
  for (Metric m : kMetrics) {
    MetricSummary s;
    s.metric = m;
    double sum = 0.0;
    std::size_t within = 0;
    for (const ScoreReport& r : reports) {
      if (!r[m]) {
        ++s.undefined;
        continue;
      }
      sum += *r[m];
      ++s.count;
      within += std::abs(*r[m]) <= 25.0 ? 1 : 0;
    }
    if (s.count > 0) {
      s.mean = sum / static_cast<double>(s.count);
      double ss = 0.0;
      for (const ScoreReport& r : reports)
        if (r[m]) ss += (*r[m] - s.mean) * (*r[m] - s.mean);
      s.sd = std::sqrt(ss / static_cast<double>(s.count));
      if (is_bias(m)) s.within_25pct = static_cast<double>(within) / static_cast<double>(s.count);
    } else {
      s.mean = s.sd = std::nan("");
    }
    out.push_back(s);
  }
  return out;
}

void write_scores_csv(std::ostream& out, std::span<const ScoreReport> reports) {
  out << "gauge_id";
  for (Metric m : kMetrics) out << ',' << column_name(m);
  out << '\n';
  for (const ScoreReport& r : reports) {
    out << r.gauge_id;
    for (Metric m : kMetrics) {
      out << ',';
      if (r[m]) out << number(*r[m]);
    }
    out << '\n';
  }
}

void write_summary_csv(std::ostream& out, std::span<const MetricSummary> summary) {
  out << "metric,mean,sd,count,undefined,within_25pct\n";
  for (const MetricSummary& s : summary) {
    out << column_name(s.metric) << ',';
    if (s.count > 0) out << number(s.mean) << ',' << number(s.sd);
    else out << ',';
    out << ',' << s.count << ',' << s.undefined << ',';
    if (s.within_25pct) out << number(*s.within_25pct);
    out << '\n';
  }
}

void write_fdc_csv(std::ostream& out, const Fdc& curve) {
  out << "exceedance_prob,flow_mm\n";
  for (std::size_t i = 0; i < curve.flows.size(); ++i)
    out << number(curve.probability[i]) << ',' << number(curve.flows[i]) << '\n';
}

}  // namespace fslstm::metrics
