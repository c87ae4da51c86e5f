#include "fslstm/cells/cells.hpp"

namespace fslstm::cells {

namespace {

NodeId affine3(Graph& g, NodeId w, NodeId x, NodeId u, NodeId s, NodeId b,
               const std::string& name) {
  return g.affine(w, x, u, s, b, name + ".logits");
}

}  // namespace

NodeId build_fastslow(Graph& g, const FastSlowDims& dims, NodeId wp, const std::string& prefix) {
  const NodeId scale = g.param("fastslow.input_scale", {2});
  NodeId x = g.mul(wp, scale, prefix + "fastslow.in");
  std::size_t in = 2;
  for (std::size_t l = 1; l <= dims.layers; ++l) {
    const std::string k = std::to_string(l);
    const NodeId w = g.param("fastslow.W" + k, {dims.units, in});
    const NodeId b = g.param("fastslow.b" + k, {dims.units});
    x = g.tanh(g.add(g.matvec(w, x, prefix + "fastslow.z" + k), b, prefix + "fastslow.a" + k),
               prefix + "fastslow.h" + k);
    in = dims.units;
  }
  const std::string k = std::to_string(dims.layers + 1);
  const NodeId w = g.param("fastslow.W" + k, {2, in});
  const NodeId b = g.param("fastslow.b" + k, {2});
  const NodeId pre = g.add(g.matvec(w, x, prefix + "fastslow.z" + k), b, prefix + "fastslow.pre");
  return g.square(pre, prefix + "fastslow.out");
}

CellStepNodes build_mclstm_step(Graph& g, const ModelDims& d, NodeId c_prev, NodeId mass,
                                NodeId aux, const std::string& prefix) {
  const std::size_t nc = d.n_c, na = d.n_a, nm = d.n_m;
  const NodeId c_norm = g.l1_normalize(c_prev, prefix + "c_norm");

  CellStepNodes s{};
  s.i_gate = g.col_softmax(
      affine3(g, g.param("mc.W_i", {nc, nm, na}), aux, g.param("mc.U_i", {nc, nm, nc}), c_norm,
              g.param("mc.b_i", {nc, nm}), prefix + "i"),
      prefix + "i");
  s.o_gate = g.sigmoid(affine3(g, g.param("mc.W_o", {nc, na}), aux, g.param("mc.U_o", {nc, nc}),
                               c_norm, g.param("mc.b_o", {nc}), prefix + "o"),
                       prefix + "o");
  s.redistribution = g.col_softmax(
      affine3(g, g.param("mc.W_r", {nc, nc, na}), aux, g.param("mc.U_r", {nc, nc, nc}), c_norm,
              g.param("mc.B_r", {nc, nc}), prefix + "R"),
      prefix + "R");

  const NodeId stored = g.matvec(s.redistribution, c_prev, prefix + "Rc");
  const NodeId added = g.matvec(s.i_gate, mass, prefix + "ix");
  s.m_tot = g.add(stored, added, prefix + "m_tot");
  s.h = g.mul(s.o_gate, s.m_tot, prefix + "h");
  s.c_next = g.sub(s.m_tot, s.h, prefix + "c");
  s.q = g.sum(s.h, 0, nc - 1, prefix + "q");
  s.mass_in = g.sum(mass, prefix + "mass_in");
  return s;
}

CellStepNodes build_fslstm_step(Graph& g, const ModelDims& d, NodeId c_prev, NodeId wp,
                                NodeId aux, const std::string& prefix) {
  const std::size_t nc = d.n_c, na = d.n_a, nr = d.n_r;
  const NodeId r = g.matvec(g.param("fs.P", {nr, na}), aux, prefix + "r");
  const NodeId c_sum = g.sum(c_prev, prefix + "c_sum");

  CellStepNodes s{};
  s.i_gate = g.col_softmax(affine3(g, g.param("fs.W_i", {nc, 2, nr}), r,
                                   g.param("fs.u_i", {nc, 2, 1}), c_sum,
                                   g.param("fs.b_i", {nc, 2}), prefix + "i"),
                           prefix + "i");
  s.o_gate = g.sigmoid(affine3(g, g.param("fs.W_o", {nc, nr}), r, g.param("fs.u_o", {nc, 1}),
                               c_sum, g.param("fs.b_o", {nc}), prefix + "o"),
                       prefix + "o");
  s.redistribution = g.col_softmax(affine3(g, g.param("fs.W_r", {nc, nc, nr}), r,
                                           g.param("fs.u_r", {nc, nc, 1}), c_sum,
                                           g.param("fs.B_r", {nc, nc}), prefix + "R"),
                                   prefix + "R");

  const NodeId flows = build_fastslow(g, d.fastslow, wp, prefix);
  const NodeId stored = g.matvec(s.redistribution, c_prev, prefix + "Rc");
  const NodeId added = g.matvec(s.i_gate, flows, prefix + "iL");
  s.m_tot = g.add(stored, added, prefix + "m_tot");
  s.h = g.mul(s.o_gate, s.m_tot, prefix + "h");
  s.c_next = g.sub(s.m_tot, s.h, prefix + "c");
  s.q = g.sum(s.h, 0, nc - 1, prefix + "q");
  s.mass_in = g.sum(flows, prefix + "mass_in");
  return s;
}

LstmStepNodes build_lstm_step(Graph& g, const ModelDims& d, NodeId h_prev, NodeId c_prev,
                              NodeId x, const std::string& prefix) {
  const std::size_t nc = d.n_c, nin = d.n_m + d.n_a;
  auto gate = [&](const std::string& k) {
    return affine3(g, g.param("lstm.W_" + k, {nc, nin}), x, g.param("lstm.U_" + k, {nc, nc}),
                   h_prev, g.param("lstm.b_" + k, {nc}), prefix + k);
  };
  const NodeId f = g.sigmoid(gate("f"), prefix + "f");
  const NodeId i = g.sigmoid(gate("i"), prefix + "i");
  const NodeId o = g.sigmoid(gate("o"), prefix + "o");
  const NodeId cand = g.tanh(gate("g"), prefix + "g");

  LstmStepNodes s{};
  s.c = g.add(g.mul(f, c_prev, prefix + "fc"), g.mul(i, cand, prefix + "ig"), prefix + "c");
  s.h = g.mul(o, g.tanh(s.c, prefix + "tanh_c"), prefix + "h");
  s.y = g.add(g.matvec(g.param("lstm.head_w", {1, nc}), s.h, prefix + "head"),
              g.param("lstm.head_b", {1}), prefix + "y");
  return s;
}

}  // namespace fslstm::cells
