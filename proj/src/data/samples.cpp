#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "fslstm/data/dataset.hpp"
#include "fslstm/errors.hpp"

namespace fslstm::data {

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

SplitSpec SplitSpec::defaults() {
  return {{parse_date("1999-10-01"), parse_date("2008-09-30")},
          {parse_date("1990-10-01"), parse_date("1994-09-30")},
          {parse_date("1994-10-01"), parse_date("1999-09-30")}};
}

const DateRange& SplitSpec::range(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Validation: return validation;
    case Split::Test: return test;
  }
  return train;
}

void SplitSpec::validate() const {
  for (Split s : kSplits) {
    const DateRange& r = range(s);
    if (r.first > r.last)
      throw ConfigError(std::string(to_string(s)) + " period is empty (" + format_date(r.first) +
                        " after " + format_date(r.last) + ")");
  }
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b)
      if (range(kSplits[a]).overlaps(range(kSplits[b])))
        throw ConfigError(std::string(to_string(kSplits[a])) + " and " + to_string(kSplits[b]) +
                          " periods overlap");
}

std::optional<Split> SplitSpec::split_of(Day day) const {
  for (Split s : kSplits)
    if (range(s).contains(day)) return s;
  return std::nullopt;
}

const FeatureStats& NormalizationStats::streamflow_for(std::string_view gauge) const {
  auto it = streamflow.find(gauge);
  return it == streamflow.end() ? streamflow_pooled : it->second;
}

namespace {

// Two-pass population moments; order of accumulation is the caller's order.
class Moments {
 public:
  void add(double v) { values_.push_back(v); }
  bool empty() const { return values_.empty(); }
  FeatureStats finish() const {
    FeatureStats s;
    if (values_.empty()) return s;
    const double n = static_cast<double>(values_.size());
    double sum = 0.0;
    for (double v : values_) sum += v;
    s.mean = sum / n;
    double ss = 0.0;
    for (double v : values_) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::max(std::sqrt(ss / n), kMinSd);
    return s;
  }

 private:
  std::vector<double> values_;
};

std::vector<const GaugeRecord*> by_id(const std::vector<GaugeRecord>& records) {
  std::vector<const GaugeRecord*> order;
  for (const GaugeRecord& r : records) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const GaugeRecord* a, const GaugeRecord* b) { return a->id < b->id; });
  return order;
}

}  // namespace

NormalizationStats fit_stats(const std::vector<GaugeRecord>& records, const SplitSpec& split) {
  NormalizationStats stats;
  std::array<Moments, 3> temps;
  std::array<Moments, kStaticCount> statics;
  std::array<Moments, 2> mass;
  Moments pooled_q;
  bool any = false;
  for (const GaugeRecord* r : by_id(records)) {
    Moments q;
    for (std::size_t i = 0; i < r->days(); ++i) {
      if (!split.train.contains(r->date(i))) continue;
      any = true;
      const double t[3] = {r->tmin[i], r->tmean[i], r->tmax[i]};
      for (std::size_t k = 0; k < 3; ++k)
        if (!std::isnan(t[k])) temps[k].add(t[k]);
      if (!std::isnan(r->soil_moisture[i])) mass[0].add(r->soil_moisture[i]);
      if (!std::isnan(r->precip[i])) mass[1].add(r->precip[i]);
      if (r->target_ok(i)) {
        q.add(r->streamflow[i]);
        pooled_q.add(r->streamflow[i]);
      }
    }
    for (std::size_t k = 0; k < kStaticCount; ++k) statics[k].add(r->attributes.values[k]);
    if (!q.empty()) stats.streamflow[r->id] = q.finish();
  }
  if (!any) throw DataError("no gauge has rows inside the training period");
  for (std::size_t k = 0; k < 3; ++k) stats.temperature[k] = temps[k].finish();
  for (std::size_t k = 0; k < kStaticCount; ++k) stats.statics[k] = statics[k].finish();
  stats.streamflow_pooled = pooled_q.finish();
  for (std::size_t k = 0; k < 2; ++k) {
    if (mass[k].empty()) continue;
    const FeatureStats m = mass[k].finish();
    stats.mass_rms[k] = std::max(std::sqrt(m.mean * m.mean + m.sd * m.sd), kMinSd);
  }
  return stats;
}

GaugeSamples build_samples(const GaugeRecord& record, const SplitSpec& split,
                           const NormalizationStats& stats, MassInputs mass) {
  GaugeSamples out;
  PreparedGauge& g = out.gauge;
  const std::size_t n = record.days();
  g.id = record.id;
  g.start = record.start;
  g.mass_width = mass_width(mass);
  g.mass.resize(n * g.mass_width);
  g.aux.resize(n * kAuxWidth);
  g.target.resize(n);

  std::array<double, kStaticCount> zs{};
  for (std::size_t k = 0; k < kStaticCount; ++k)
    zs[k] = stats.statics[k].z(record.attributes.values[k]);

  // missing[i] counts rows before i with any input absent.
  std::vector<std::uint32_t> missing(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    missing[i + 1] = missing[i] + (record.inputs_present(i) ? 0 : 1);
    double* m = g.mass.data() + i * g.mass_width;
    if (mass == MassInputs::PrecipOnly) {
      m[0] = record.precip[i];
    } else {
      m[0] = record.soil_moisture[i];
      m[1] = record.precip[i];
    }
    double* a = g.aux.data() + i * kAuxWidth;
    a[0] = stats.temperature[0].z(record.tmin[i]);
    a[1] = stats.temperature[1].z(record.tmean[i]);
    a[2] = stats.temperature[2].z(record.tmax[i]);
    std::copy(zs.begin(), zs.end(), a + 3);
    g.target[i] = record.target_ok(i) ? record.streamflow[i]
                                      : std::numeric_limits<double>::quiet_NaN();
  }

  for (std::size_t end = 0; end < n; ++end) {
    const auto s = split.split_of(record.date(end));
    if (!s) continue;
    if (!record.target_ok(end)) {
      ++out.skips.target;
    } else if (end + 1 < kWindow) {
      ++out.skips.short_history;
    } else if (missing[end + 1] != missing[end + 1 - kWindow]) {
      ++out.skips.gap;
    } else {
      out.ends[static_cast<int>(*s)].push_back(static_cast<std::uint32_t>(end));
    }
  }
  for (std::size_t k = 0; k < 3; ++k) out.skips.kept[k] = out.ends[k].size();
  out.skips.lacks_validation = out.ends[static_cast<int>(Split::Validation)].empty();
  return out;
}

std::span<const double> Dataset::mass_window(const SampleRef& r) const {
  const PreparedGauge& g = gauges[r.gauge];
  const std::size_t first = r.end + 1 - kWindow;
  return {g.mass.data() + first * g.mass_width, kWindow * g.mass_width};
}

std::span<const double> Dataset::aux_window(const SampleRef& r) const {
  const PreparedGauge& g = gauges[r.gauge];
  const std::size_t first = r.end + 1 - kWindow;
  return {g.aux.data() + first * kAuxWidth, kWindow * kAuxWidth};
}

Dataset build_dataset(const std::vector<GaugeRecord>& records, const SplitSpec& split,
                      const NormalizationStats& stats, MassInputs mass) {
  split.validate();
  Dataset ds;
  for (const GaugeRecord* r : by_id(records)) {
    if (!ds.gauges.empty() && ds.gauges.back().id == r->id)
      throw DataError("gauge '" + r->id + "' given twice");
    GaugeSamples gs = build_samples(*r, split, stats, mass);
    const auto gi = static_cast<std::uint32_t>(ds.gauges.size());
    for (std::size_t k = 0; k < 3; ++k)
      for (std::uint32_t e : gs.ends[k]) ds.samples[k].push_back({gi, e});
    ds.gauges.push_back(std::move(gs.gauge));
    ds.skips.push_back(gs.skips);
  }
  return ds;
}

void write_skip_report(std::ostream& out, const Dataset& ds) {
  out << "gauge_id train validation test skipped_gap skipped_target skipped_short_history\n";
  for (std::size_t i = 0; i < ds.gauges.size(); ++i) {
    const SkipCounts& s = ds.skips[i];
    out << ds.gauges[i].id << ' ' << s.kept[0] << ' ' << s.kept[1] << ' ' << s.kept[2] << ' '
        << s.gap << ' ' << s.target << ' ' << s.short_history;
    if (s.lacks_validation) out << " (no validation coverage)";
    out << '\n';
  }
}

}  // namespace fslstm::data
