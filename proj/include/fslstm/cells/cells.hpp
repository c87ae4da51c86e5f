#pragma once

// Mass-conserving recurrent cells (MC-LSTM, FS-LSTM), the vanilla LSTM
// baseline, the fast/slow perceptron and the sequence runner.
//
// Mass bookkeeping for both conserving cells, per step:
//   m_tot  = R c_prev + i x        R, i column-stochastic
//   h      = o * m_tot             outflow
//   c_next = m_tot - h
//   q      = sum(h) - h[n_c - 1]   the last cell is the trash cell

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fslstm/cells/model.hpp"
#include "fslstm/numerics/graph.hpp"

namespace fslstm::cells {

// ---------------------------------------------------------------- graph builders

struct CellStepNodes {
  NodeId c_next;
  NodeId h;
  NodeId q;
  NodeId mass_in;
  NodeId m_tot;
  NodeId i_gate;
  NodeId o_gate;
  NodeId redistribution;
};

struct LstmStepNodes {
  NodeId h;
  NodeId c;
  NodeId y;  ///< linear head on h
};

/// Appends the fast/slow perceptron applied to the [2] node `wp` = (w, p).
/// Returns the [2] node (Q_fast, Q_slow).
NodeId build_fastslow(Graph& g, const FastSlowDims& dims, NodeId wp, const std::string& prefix);

CellStepNodes build_mclstm_step(Graph& g, const ModelDims& dims, NodeId c_prev, NodeId mass,
                                NodeId aux, const std::string& prefix);
CellStepNodes build_fslstm_step(Graph& g, const ModelDims& dims, NodeId c_prev, NodeId wp,
                                NodeId aux, const std::string& prefix);
LstmStepNodes build_lstm_step(Graph& g, const ModelDims& dims, NodeId h_prev, NodeId c_prev,
                              NodeId x, const std::string& prefix);

// ---------------------------------------------------------------- single steps

struct CellState {
  std::vector<double> c;  ///< stored mass per cell, mm
};

struct StepOutput {
  CellState c_next;
  std::vector<double> h;  ///< outflow per cell, mm/day
  double q = 0.0;         ///< streamflow, mm/day
  double mass_in = 0.0;   ///< mass added this step
};

StepOutput mclstm_step(const ModelParams& params, const CellState& c_prev,
                       std::span<const double> x_mass, std::span<const double> aux);

StepOutput fslstm_step(const ModelParams& params, const CellState& c_prev, double w, double p,
                       std::span<const double> aux);

/// (Q_fast, Q_slow); both are squares and therefore >= 0.
std::pair<double, double> fastslow_forward(const FastSlowParams& params, double w, double p);

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};

struct LstmStepResult {
  LstmState state;
  double prediction = 0.0;  ///< head applied to the new hidden state
};

LstmStepResult vanilla_lstm_step(const ModelParams& params, const LstmState& state,
                                 std::span<const double> x_all);

// ---------------------------------------------------------------- sequences

/// Row-major per-step inputs: mass is steps x mass_width, aux is steps x n_a.
struct SequenceInputs {
  std::size_t steps = 0;
  std::vector<double> mass;
  std::vector<double> aux;
};

struct MassLedger {
  double initial = 0.0;  ///< sum c_0
  double inflow = 0.0;   ///< sum over steps of mass_in
  double outflow = 0.0;  ///< sum over steps of sum h
  double final = 0.0;    ///< sum c_T

  double residual() const { return final + outflow - initial - inflow; }
  /// |residual| / max(inflow, 1).
  double relative_residual() const;
};

struct SequenceResult {
  std::vector<double> q;        ///< per-step streamflow (LSTM: head output)
  std::vector<double> final_c;  ///< c_T
  std::vector<double> final_h;  ///< LSTM hidden state; empty otherwise
  MassLedger ledger;            ///< zero for the LSTM
  double min_state = 0.0;       ///< smallest c or h component seen (conserving cells)
};

/// An unrolled model of fixed length, built once and replayed through
/// Sessions. With a loss head the graph also takes inputs "target" and
/// "weight" and exposes output "loss" = weight * (q_T - target)^2.
class SequenceModel {
 public:
  SequenceModel(const ModelDims& dims, std::size_t steps, bool with_loss = false);

  const Graph& graph() const { return graph_; }
  const ModelDims& dims() const { return dims_; }
  std::size_t steps() const { return steps_; }
  bool has_loss() const { return with_loss_; }

  NodeId mass_input(std::size_t t) const { return mass_in_[t]; }
  NodeId aux_input(std::size_t t) const { return aux_in_[t]; }
  NodeId q_node(std::size_t t) const { return q_[t]; }
  NodeId q_last() const { return q_.back(); }
  NodeId c_node(std::size_t t) const { return c_[t]; }
  NodeId h_node(std::size_t t) const { return h_[t]; }
  NodeId step_mass_node(std::size_t t) const { return step_mass_[t]; }
  NodeId loss() const { return loss_; }
  NodeId target() const { return target_; }
  NodeId weight() const { return weight_; }

  /// Validates and binds one sequence; c0 may be empty (zero initial store).
  void bind(Session& session, const SequenceInputs& inputs, std::span<const double> c0) const;
  /// Binds a single step's inputs directly (no copy of the whole sequence).
  void bind_step(Session& session, std::size_t t, std::span<const double> mass,
                 std::span<const double> aux) const;
  /// Empty spans mean a zero initial state; h0 is only used by the LSTM.
  void bind_initial(Session& session, std::span<const double> c0,
                    std::span<const double> h0 = {}) const;
  void bind_loss(Session& session, double target, double weight) const;

  /// Runs bind + forward and gathers q, final state and the mass ledger.
  SequenceResult run(Session& session, const ParamSet& params, const SequenceInputs& inputs,
                     std::span<const double> c0 = {}) const;
  SequenceResult collect(const Session& session) const;

 private:
  ModelDims dims_;
  std::size_t steps_;
  bool with_loss_;
  Graph graph_;
  NodeId c0_ = 0;
  NodeId h0_ = 0;
  NodeId target_ = 0;
  NodeId weight_ = 0;
  NodeId loss_ = 0;
  std::vector<NodeId> mass_in_;
  std::vector<NodeId> aux_in_;
  std::vector<NodeId> q_;
  std::vector<NodeId> c_;
  std::vector<NodeId> h_;
  std::vector<NodeId> step_mass_;
};

/// Builds a SequenceModel for inputs.steps and runs it once.
SequenceResult run_sequence(const ModelParams& params, std::span<const double> c0,
                            const SequenceInputs& inputs);

// ---------------------------------------------------------------- accounting

/// Closed-form weight counts, biases excluded:
///   MC-LSTM  2 n_c (n_a + n_c) + n_c^2 (n_a + n_c)
///   FS-LSTM  2 n_c (n_r + n_c) + n_c^2 (n_r + n_c) + n_r n_a
std::uint64_t param_count_paper(ModelKind kind, std::uint64_t n_c, std::uint64_t n_a,
                                std::uint64_t n_r);

/// Largest projection width for which the FS-LSTM count stays below the
/// MC-LSTM count: floor(n_a k / (k + n_a)) with k = n_c^2 + 2 n_c.
std::uint64_t max_projection_dim(std::uint64_t n_c, std::uint64_t n_a);

struct ParamCount {
  std::size_t weights = 0;
  std::size_t biases = 0;
  std::size_t total() const { return weights + biases; }
};

/// Trainable element count of an instantiated model, biases reported separately.
ParamCount param_count_actual(const ModelParams& params);
ParamCount param_count_actual(const FastSlowParams& params);

}  // namespace fslstm::cells
