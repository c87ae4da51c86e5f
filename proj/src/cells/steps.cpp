#include <cmath>

#include "fslstm/cells/cells.hpp"
#include "fslstm/errors.hpp"

namespace fslstm::cells {

namespace {

void require_kind(const ModelParams& params, ModelKind kind) {
  if (params.dims.kind != kind)
    throw ConfigError("parameters are for " + std::string(to_string(params.dims.kind)) +
                      ", step needs " + std::string(to_string(kind)));
}

void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw ShapeError(std::string(what) + " has " + std::to_string(got) + " values, expected " +
                     std::to_string(want));
}

std::vector<double> to_vector(std::span<const double> v) { return {v.begin(), v.end()}; }

StepOutput conserving_step(const ModelParams& params, const CellState& c_prev,
                           std::span<const double> mass, std::span<const double> aux) {
  const ModelDims& d = params.dims;
  require_size(c_prev.c.size(), d.n_c, "cell state");
  require_size(mass.size(), d.mass_width(), "mass input");
  require_size(aux.size(), d.n_a, "auxiliary input");

  const SequenceModel model(d, 1);
  Session session(model.graph());
  model.bind_initial(session, c_prev.c);
  model.bind_step(session, 0, mass, aux);
  session.forward(params.set);

  StepOutput out;
  out.c_next.c = to_vector(session.value(model.c_node(0)));
  out.h = to_vector(session.value(model.h_node(0)));
  out.q = session.value(model.q_node(0))[0];
  out.mass_in = session.value(model.step_mass_node(0))[0];
  return out;
}

}  // namespace

StepOutput mclstm_step(const ModelParams& params, const CellState& c_prev,
                       std::span<const double> x_mass, std::span<const double> aux) {
  require_kind(params, ModelKind::McLstm);
  return conserving_step(params, c_prev, x_mass, aux);
}

StepOutput fslstm_step(const ModelParams& params, const CellState& c_prev, double w, double p,
                       std::span<const double> aux) {
  require_kind(params, ModelKind::FsLstm);
  if (!std::isfinite(w) || !std::isfinite(p)) throw NumericError("fslstm_step: non-finite (w, p)");
  const double wp[2] = {w, p};
  return conserving_step(params, c_prev, wp, aux);
}

std::pair<double, double> fastslow_forward(const FastSlowParams& params, double w, double p) {
  if (!std::isfinite(w) || !std::isfinite(p))
    throw NumericError("fastslow_forward: non-finite input");
  Graph g;
  const NodeId wp = g.input("wp", {2});
  const NodeId out = build_fastslow(g, params.dims, wp, "");
  Session session(g);
  const double in[2] = {w, p};
  session.bind(wp, in);
  session.forward(params.set);
  auto v = session.value(out);
  return {v[0], v[1]};
}

LstmStepResult vanilla_lstm_step(const ModelParams& params, const LstmState& state,
                                 std::span<const double> x_all) {
  require_kind(params, ModelKind::Lstm);
  const ModelDims& d = params.dims;
  require_size(state.h.size(), d.n_c, "hidden state");
  require_size(state.c.size(), d.n_c, "cell state");
  require_size(x_all.size(), d.n_m + d.n_a, "input");

  const SequenceModel model(d, 1);
  Session session(model.graph());
  model.bind_initial(session, state.c, state.h);
  model.bind_step(session, 0, x_all.subspan(0, d.n_m), x_all.subspan(d.n_m));
  session.forward(params.set);

  LstmStepResult r;
  r.state.h = to_vector(session.value(model.h_node(0)));
  r.state.c = to_vector(session.value(model.c_node(0)));
  r.prediction = session.value(model.q_node(0))[0];
  return r;
}

}  // namespace fslstm::cells
