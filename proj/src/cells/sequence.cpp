#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fslstm/cells/cells.hpp"
#include "fslstm/errors.hpp"

namespace fslstm::cells {

double MassLedger::relative_residual() const {
  return std::abs(residual()) / std::max(inflow, 1.0);
}

SequenceModel::SequenceModel(const ModelDims& dims, std::size_t steps, bool with_loss)
    : dims_(dims), steps_(steps), with_loss_(with_loss) {
  dims_.validate();
  if (steps == 0) throw ConfigError("sequence needs at least one step");
  Graph& g = graph_;
  const std::size_t nc = dims_.n_c;
  c0_ = g.input("c0", {nc});
  if (dims_.kind == ModelKind::Lstm) h0_ = g.input("h0", {nc});

  NodeId c = c0_;
  NodeId h = h0_;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::string tag = "[" + std::to_string(t) + "]";
    const std::string prefix = "t" + std::to_string(t) + "/";
    const NodeId mass = g.input("mass" + tag, {dims_.mass_width()});
    const NodeId aux = g.input("aux" + tag, {dims_.n_a});
    mass_in_.push_back(mass);
    aux_in_.push_back(aux);
    switch (dims_.kind) {
      case ModelKind::McLstm:
      case ModelKind::FsLstm: {
        const CellStepNodes s = dims_.kind == ModelKind::McLstm
                                    ? build_mclstm_step(g, dims_, c, mass, aux, prefix)
                                    : build_fslstm_step(g, dims_, c, mass, aux, prefix);
        c = s.c_next;
        q_.push_back(s.q);
        c_.push_back(s.c_next);
        h_.push_back(s.h);
        step_mass_.push_back(s.mass_in);
        break;
      }
      case ModelKind::Lstm: {
        const NodeId parts[] = {mass, aux};
        const NodeId x = g.concat(parts, prefix + "x");
        const LstmStepNodes s = build_lstm_step(g, dims_, h, c, x, prefix);
        c = s.c;
        h = s.h;
        q_.push_back(s.y);
        c_.push_back(s.c);
        h_.push_back(s.h);
        break;
      }
    }
  }
  g.set_output("q_last", q_.back());
  g.set_output("c_final", c_.back());

  if (with_loss_) {
    target_ = g.input("target", {1});
    weight_ = g.input("weight", {1});
    const NodeId err = g.sub(q_.back(), target_, "error");
    loss_ = g.mul(weight_, g.square(err, "error_sq"), "loss");
    g.set_output("loss", loss_);
  }
}

void SequenceModel::bind_step(Session& session, std::size_t t, std::span<const double> mass,
                              std::span<const double> aux) const {
  if (t >= steps_) throw ConfigError("timestep " + std::to_string(t) + " outside sequence");
  if (dims_.kind != ModelKind::Lstm) {
    for (double m : mass)
      if (m < 0.0)
        throw DataError("timestep " + std::to_string(t) + ": negative mass input " +
                        std::to_string(m));
  }
  try {
    session.bind(mass_in_[t], mass);
    session.bind(aux_in_[t], aux);
  } catch (const ShapeError& e) {
    throw ShapeError("timestep " + std::to_string(t) + ": " + e.what());
  }
}

void SequenceModel::bind_initial(Session& session, std::span<const double> c0,
                                 std::span<const double> h0) const {
  const std::vector<double> zeros(dims_.n_c, 0.0);
  if (c0.empty()) c0 = zeros;
  if (dims_.kind != ModelKind::Lstm) {
    for (double v : c0)
      if (!(v >= 0.0)) throw DataError("initial cell state must be nonnegative");
  }
  session.bind(c0_, c0);
  if (dims_.kind == ModelKind::Lstm) session.bind(h0_, h0.empty() ? std::span<const double>(zeros) : h0);
}

void SequenceModel::bind_loss(Session& session, double target, double weight) const {
  if (!with_loss_) throw ConfigError("sequence model was built without a loss head");
  session.bind(target_, std::span<const double>(&target, 1));
  session.bind(weight_, std::span<const double>(&weight, 1));
}

void SequenceModel::bind(Session& session, const SequenceInputs& inputs,
                         std::span<const double> c0) const {
  const std::size_t mw = dims_.mass_width(), na = dims_.n_a;
  if (inputs.steps != steps_)
    throw ShapeError("sequence has " + std::to_string(inputs.steps) + " steps, model expects " +
                     std::to_string(steps_));
  if (inputs.mass.size() != steps_ * mw || inputs.aux.size() != steps_ * na)
    throw ShapeError("sequence inputs do not match steps x (" + std::to_string(mw) + " mass, " +
                     std::to_string(na) + " aux)");
  bind_initial(session, c0);
  for (std::size_t t = 0; t < steps_; ++t)
    bind_step(session, t, std::span<const double>(inputs.mass).subspan(t * mw, mw),
              std::span<const double>(inputs.aux).subspan(t * na, na));
}

SequenceResult SequenceModel::collect(const Session& session) const {
  SequenceResult r;
  r.q.reserve(steps_);
  for (NodeId q : q_) r.q.push_back(session.value(q)[0]);
  auto last_c = session.value(c_.back());
  r.final_c.assign(last_c.begin(), last_c.end());
  if (dims_.kind == ModelKind::Lstm) {
    auto last_h = session.value(h_.back());
    r.final_h.assign(last_h.begin(), last_h.end());
    return r;
  }
  auto c0 = session.value(c0_);
  r.ledger.initial = std::accumulate(c0.begin(), c0.end(), 0.0);
  double min_state = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < steps_; ++t) {
    r.ledger.inflow += session.value(step_mass_[t])[0];
    for (double v : session.value(h_[t])) {
      r.ledger.outflow += v;
      min_state = std::min(min_state, v);
    }
    for (double v : session.value(c_[t])) min_state = std::min(min_state, v);
  }
  r.ledger.final = std::accumulate(r.final_c.begin(), r.final_c.end(), 0.0);
  r.min_state = min_state;
  return r;
}

SequenceResult SequenceModel::run(Session& session, const ParamSet& params,
                                  const SequenceInputs& inputs, std::span<const double> c0) const {
  bind(session, inputs, c0);
  if (with_loss_) bind_loss(session, 0.0, 0.0);
  session.forward(params);
  return collect(session);
}

SequenceResult run_sequence(const ModelParams& params, std::span<const double> c0,
                            const SequenceInputs& inputs) {
  SequenceModel model(params.dims, inputs.steps);
  Session session(model.graph());
  return model.run(session, params.set, inputs, c0);
}

}  // namespace fslstm::cells
