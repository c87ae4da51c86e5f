#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <memory>
#include <ostream>
#include <thread>

#include "fslstm/errors.hpp"
#include "fslstm/train/train.hpp"

namespace fslstm::train {

using data::Dataset;
using data::SampleRef;

PredictorFactory model_predictor(const cells::ModelParams& params, std::size_t window) {
  if (window == 0 || window > data::kWindow)
    throw ConfigError("window must be in [1, " + std::to_string(data::kWindow) + "]");
  auto shared = std::make_shared<const cells::ModelParams>(params);
  auto model = std::make_shared<const cells::SequenceModel>(params.dims, window);
  return [shared, model]() -> PredictFn {
    auto session = std::make_shared<Session>(model->graph());
    return [shared, model, session](const Dataset& ds, const SampleRef& ref) {
      const std::size_t steps = model->steps();
      const std::size_t skip = data::kWindow - steps;
      const std::size_t mw = ds.gauges[ref.gauge].mass_width;
      const auto mass = ds.mass_window(ref).subspan(skip * mw);
      const auto aux = ds.aux_window(ref).subspan(skip * data::kAuxWidth);
      model->bind_initial(*session, {});
      for (std::size_t t = 0; t < steps; ++t)
        model->bind_step(*session, t, mass.subspan(t * mw, mw),
                         aux.subspan(t * data::kAuxWidth, data::kAuxWidth));
      session->forward(shared->set);
      const double q = session->value(model->q_last())[0];
      return shared->dims.kind == cells::ModelKind::Lstm ? std::max(q, 0.0) : q;
    };
  };
}

Evaluation evaluate(const Dataset& ds, data::Split split, const PredictorFactory& predictor,
                    std::size_t threads) {
  const auto& refs = ds.split(split);
  std::vector<double> predicted(refs.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(resolve_threads(threads), refs.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      PredictFn fn = predictor();
      for (std::size_t i; (i = next.fetch_add(1)) < refs.size();) predicted[i] = fn(ds, refs[i]);
    } catch (...) {
      errors[w] = std::current_exception();
      next = refs.size();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  Evaluation out;
  std::vector<std::size_t> slot(ds.gauges.size(), SIZE_MAX);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const SampleRef& r = refs[i];
    if (slot[r.gauge] == SIZE_MAX) {
      slot[r.gauge] = out.gauges.size();
      out.gauges.push_back({ds.gauges[r.gauge].id, {}, {}, {}});
    }
    GaugePredictions& g = out.gauges[slot[r.gauge]];
    g.dates.push_back(ds.target_date(r));
    g.observed.push_back(ds.target(r));
    g.predicted.push_back(predicted[i]);
  }
  for (std::size_t gi = 0; gi < ds.gauges.size(); ++gi)
    if (slot[gi] == SIZE_MAX) out.without_windows.push_back(ds.gauges[gi].id);
  return out;
}

Evaluation evaluate(const Checkpoint& ckpt, const Dataset& ds, data::Split split,
                    std::size_t threads) {
  return evaluate(ds, split, model_predictor(ckpt.params, ckpt.config.window), threads);
}

void write_predictions_csv(std::ostream& out, const GaugePredictions& g) {
  auto number = [](double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
  };
  out << "date,observed_mm,predicted_mm\n";
  for (std::size_t i = 0; i < g.dates.size(); ++i)
    out << data::format_date(g.dates[i]) << ',' << number(g.observed[i]) << ','
        << number(g.predicted[i]) << '\n';
}

}  // namespace fslstm::train
