#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <cstring>
#include <vector>

#include "fslstm/errors.hpp"
#include "fslstm/numerics/graph.hpp"
#include "fslstm/numerics/kernels.hpp"

namespace fslstm {

namespace {
constexpr double kNormGuard = 1e-12;

// Exponent-field test; a branch-free integer reduction that vectorizes.
bool finite(const double* p, std::size_t n) {
  constexpr std::uint64_t exp_mask = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(p[i]);
    bad |= static_cast<std::uint64_t>((bits & exp_mask) == exp_mask);
  }
  return bad == 0;
}
}  // namespace

Session::Session(const Graph& graph) : graph_(&graph) {
  offsets_.resize(graph.size() + 1);
  std::size_t total = 0;
  for (NodeId id = 0; id < graph.size(); ++id) {
    offsets_[id] = total;
    total += graph.node(id).size;
  }
  offsets_[graph.size()] = total;
  values_.assign(total, 0.0);
  adjoints_.assign(total, 0.0);
  needs_grad_.assign(graph.size(), 0);
  bound_.assign(graph.size(), 0);
  live_.assign(graph.size(), 0);
  deferred_.resize(graph.size());
  for (NodeId id = 0; id < graph.size(); ++id) {
    const Node& n = graph.node(id);
    if (n.op == Op::Constant) std::copy(n.constant.values().begin(), n.constant.values().end(), val(id));
  }
}

void Session::bind(NodeId input, std::span<const double> values) {
  const Node& n = graph_->node(input);
  if (n.op != Op::Input) throw ConfigError("node " + n.name + " is not an input");
  if (values.size() != n.size)
    throw ShapeError("input " + n.name + " expects " + std::to_string(n.size) + " values (" +
                     shape_string(n.shape) + "), got " + std::to_string(values.size()));
  std::copy(values.begin(), values.end(), val(input));
  bound_[input] = 1;
  evaluated_ = false;
}

void Session::bind_params(const ParamSet& params) {
  trainable_.clear();
  for (const auto& [name, id] : graph_->params()) {
    const Node& n = graph_->node(id);
    if (!params.contains(name)) throw ConfigError("missing parameter " + name);
    const Tensor& t = params.get(name);
    if (t.shape() != n.shape)
      throw ShapeError("parameter " + name + " has shape " + shape_string(t.shape()) +
                       ", graph expects " + shape_string(n.shape));
    std::copy(t.values().begin(), t.values().end(), val(id));
    const bool tr = params.trainable(name);
    needs_grad_[id] = tr ? 1 : 0;
    if (tr) trainable_.emplace_back(name, id);
  }
  for (NodeId id = 0; id < graph_->size(); ++id) {
    const Node& n = graph_->node(id);
    if (n.op == Op::Param) continue;
    char ng = 0;
    for (NodeId a : n.args) ng |= needs_grad_[a];
    needs_grad_[id] = ng;
  }
}

void Session::forward(const ParamSet& params, const NamedTensors& inputs) {
  for (const auto& [name, id] : graph_->inputs()) {
    auto it = inputs.find(name);
    if (it == inputs.end()) throw ConfigError("missing input " + name);
    if (it->second.shape() != graph_->node(id).shape)
      throw ShapeError("input " + name + " has shape " + shape_string(it->second.shape()) +
                       ", graph expects " + shape_string(graph_->node(id).shape));
    bind(id, it->second.values());
  }
  forward(params);
}

void Session::forward(const ParamSet& params) {
  for (const auto& [name, id] : graph_->inputs())
    if (!bound_[id]) throw ConfigError("missing input " + name);
  bind_params(params);
  run_forward();
  evaluated_ = true;
}

void Session::run_forward() {
  const kernels::KernelTable& k = kernels::active();
  for (NodeId id = 0; id < graph_->size(); ++id) {
    const Node& n = graph_->node(id);
    double* y = val(id);
    const std::size_t sz = n.size;
    switch (n.op) {
      case Op::Input:
      case Op::Param:
      case Op::Constant:
        break;
      case Op::MatVec: {
        const std::size_t cols = graph_->node(n.args[1]).size;
        k.matvec(val(n.args[0]), val(n.args[1]), y, sz, cols);
        break;
      }
      case Op::Add: {
        const double* a = val(n.args[0]);
        const double* b = val(n.args[1]);
        for (std::size_t i = 0; i < sz; ++i) y[i] = a[i] + b[i];
        for (std::size_t j = 2; j < n.args.size(); ++j) {
          const double* c = val(n.args[j]);
          for (std::size_t i = 0; i < sz; ++i) y[i] += c[i];
        }
        break;
      }
      case Op::Sub: {
        const double* a = val(n.args[0]);
        const double* b = val(n.args[1]);
        for (std::size_t i = 0; i < sz; ++i) y[i] = a[i] - b[i];
        break;
      }
      case Op::Mul: {
        const double* a = val(n.args[0]);
        const double* b = val(n.args[1]);
        for (std::size_t i = 0; i < sz; ++i) y[i] = a[i] * b[i];
        break;
      }
      case Op::Sigmoid: {
        const double* x = val(n.args[0]);
        for (std::size_t i = 0; i < sz; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
        break;
      }
      case Op::Tanh: {
        const double* x = val(n.args[0]);
        for (std::size_t i = 0; i < sz; ++i) y[i] = std::tanh(x[i]);
        break;
      }
      case Op::Square: {
        const double* x = val(n.args[0]);
        for (std::size_t i = 0; i < sz; ++i) y[i] = x[i] * x[i];
        break;
      }
      case Op::ColSoftmax:
        k.col_softmax(val(n.args[0]), y, n.shape[0], n.shape[1]);
        break;
      case Op::Sum: {
        const double* x = val(n.args[0]);
        double s = 0.0;
        for (std::size_t i = n.begin; i < n.end; ++i) s += x[i];
        y[0] = s;
        break;
      }
      case Op::Concat: {
        double* dst = y;
        for (NodeId a : n.args) {
          const std::size_t m = graph_->node(a).size;
          std::memcpy(dst, val(a), m * sizeof(double));
          dst += m;
        }
        break;
      }
      case Op::Affine: {
        const auto& a = n.args;
        thread_local std::vector<double> us;
        us.resize(sz);
        k.matvec(val(a[0]), val(a[1]), y, sz, graph_->node(a[1]).size);
        k.matvec(val(a[2]), val(a[3]), us.data(), sz, graph_->node(a[3]).size);
        const double* b = val(a[4]);
        for (std::size_t i = 0; i < sz; ++i) y[i] = (y[i] + us[i]) + b[i];
        break;
      }
      case Op::L1Normalize: {
        const double* x = val(n.args[0]);
        double s = 0.0;
        for (std::size_t i = 0; i < sz; ++i) s += std::abs(x[i]);
        if (s < kNormGuard) {
          std::fill(y, y + sz, 0.0);
        } else {
          for (std::size_t i = 0; i < sz; ++i) y[i] = x[i] / s;
        }
        break;
      }
    }
    if (!finite(y, sz)) {
      evaluated_ = false;
      throw NumericError("non-finite value at node " + n.name);
    }
  }
}

std::span<const double> Session::value(NodeId id) const {
  if (!evaluated_) throw ConfigError("value requested before forward");
  return {val(id), graph_->node(id).size};
}

Tensor Session::value_tensor(NodeId id) const {
  auto v = value(id);
  return Tensor(graph_->node(id).shape, std::vector<double>(v.begin(), v.end()));
}

Tensor Session::output(std::string_view name) const { return value_tensor(graph_->output(name)); }

void Session::run_backward(NodeId out, double seed) {
  if (!evaluated_) throw ConfigError("backward called before forward");
  const Node& on = graph_->node(out);
  if (on.size != 1)
    throw ShapeError("backward needs a scalar output; " + on.name + " has shape " +
                     shape_string(on.shape));
  // Adjoints are zeroed lazily on first accumulation; a node whose adjoint
  // was never touched contributes nothing and is skipped.
  std::fill(live_.begin(), live_.begin() + out + 1, 0);
  if (!needs_grad_[out]) return;
  acc(out)[0] = seed;
  for (auto& d : deferred_) {
    d.g.clear();
    d.x.clear();
  }

  const kernels::KernelTable& k = kernels::active();
  for (NodeId id = out + 1; id-- > 0;) {
    if (!live_[id] || !needs_grad_[id]) continue;
    const Node& n = graph_->node(id);
    const double* g = adj(id);
    const std::size_t sz = n.size;
    switch (n.op) {
      case Op::Input:
      case Op::Param:
      case Op::Constant:
        break;
      case Op::MatVec:
        matvec_backward(n.args[0], n.args[1], g, sz);
        break;
      case Op::Affine:
        matvec_backward(n.args[0], n.args[1], g, sz);
        matvec_backward(n.args[2], n.args[3], g, sz);
        if (needs_grad_[n.args[4]]) accumulate(n.args[4], sz, [g](std::size_t i) { return g[i]; });
        break;
      case Op::Add:
        for (NodeId a : n.args)
          if (needs_grad_[a]) accumulate(a, sz, [g](std::size_t i) { return g[i]; });
        break;
      case Op::Sub:
        if (needs_grad_[n.args[0]]) accumulate(n.args[0], sz, [g](std::size_t i) { return g[i]; });
        if (needs_grad_[n.args[1]])
          accumulate(n.args[1], sz, [g](std::size_t i) { return -g[i]; });
        break;
      case Op::Mul: {
        const NodeId a = n.args[0], b = n.args[1];
        if (needs_grad_[a]) {
          const double* vb = val(b);
          accumulate(a, sz, [g, vb](std::size_t i) { return g[i] * vb[i]; });
        }
        if (needs_grad_[b]) {
          const double* va = val(a);
          accumulate(b, sz, [g, va](std::size_t i) { return g[i] * va[i]; });
        }
        break;
      }
      case Op::Sigmoid: {
        const double* y = val(id);
        accumulate(n.args[0], sz, [g, y](std::size_t i) { return g[i] * y[i] * (1.0 - y[i]); });
        break;
      }
      case Op::Tanh: {
        const double* y = val(id);
        accumulate(n.args[0], sz, [g, y](std::size_t i) { return g[i] * (1.0 - y[i] * y[i]); });
        break;
      }
      case Op::Square: {
        const double* x = val(n.args[0]);
        accumulate(n.args[0], sz, [g, x](std::size_t i) { return 2.0 * x[i] * g[i]; });
        break;
      }
      case Op::ColSoftmax:
        k.col_softmax_backward(val(id), g, acc(n.args[0]), n.shape[0], n.shape[1]);
        break;
      case Op::Sum: {
        double* d = acc(n.args[0]);
        for (std::size_t i = n.begin; i < n.end; ++i) d[i] += g[0];
        break;
      }
      case Op::Concat: {
        const double* src = g;
        for (NodeId a : n.args) {
          const std::size_t m = graph_->node(a).size;
          if (needs_grad_[a]) accumulate(a, m, [src](std::size_t i) { return src[i]; });
          src += m;
        }
        break;
      }
      case Op::L1Normalize: {
        const double* x = val(n.args[0]);
        const double* y = val(id);
        double s = 0.0;
        for (std::size_t i = 0; i < sz; ++i) s += std::abs(x[i]);
        if (s < kNormGuard) break;
        double gy = 0.0;
        for (std::size_t i = 0; i < sz; ++i) gy += g[i] * y[i];
        double* d = acc(n.args[0]);
        for (std::size_t i = 0; i < sz; ++i) {
          const double sign = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
          d[i] += (g[i] - sign * gy) / s;
        }
        break;
      }
    }
  }
  // Weight gradients of shared matrices are summed over all uses at once.
  for (const auto& [name, id] : trainable_) {
    Deferred& d = deferred_[id];
    if (d.g.empty()) continue;
    const std::size_t cols = graph_->node(id).shape.back();
    k.outer_acc_sum(d.g.data(), d.x.data(), d.g.size(), acc(id), graph_->node(id).size / cols, cols);
  }
}

void Session::matvec_backward(NodeId a, NodeId x, const double* g, std::size_t rows) {
  const kernels::KernelTable& k = kernels::active();
  const std::size_t cols = graph_->node(x).size;
  if (needs_grad_[a]) {
    if (graph_->node(a).op == Op::Param) {
      defer_outer(a, g, val(x));
    } else {
      k.outer_acc(g, val(x), acc(a), rows, cols);
    }
  }
  if (needs_grad_[x]) k.matvec_t_acc(val(a), g, acc(x), rows, cols);
}

void Session::defer_outer(NodeId param, const double* g, const double* x) {
  Deferred& d = deferred_[param];
  d.g.push_back(g);
  d.x.push_back(x);
}

Gradients Session::backward(std::string_view scalar_output) {
  return backward(graph_->output(scalar_output));
}

Gradients Session::backward(NodeId scalar_output) {
  run_backward(scalar_output, 1.0);
  for (const auto& [name, id] : trainable_) acc(id);
  Gradients grads;
  for (const auto& [name, id] : trainable_) {
    const Node& n = graph_->node(id);
    grads.emplace(name, Tensor(n.shape, std::vector<double>(adj(id), adj(id) + n.size)));
  }
  return grads;
}

void Session::backward_accumulate(NodeId scalar_output, double scale, Gradients& into) {
  run_backward(scalar_output, scale);
  for (const auto& [name, id] : trainable_) {
    if (!live_[id]) continue;
    auto it = into.find(name);
    if (it == into.end() || it->second.size() != graph_->node(id).size)
      throw ShapeError("gradient accumulator missing or mis-shaped for " + name);
    double* dst = it->second.data();
    const double* src = adj(id);
    for (std::size_t i = 0; i < it->second.size(); ++i) dst[i] += src[i];
  }
}

NamedTensors forward(Session& session, const ParamSet& params, const NamedTensors& inputs) {
  session.forward(params, inputs);
  NamedTensors out;
  for (const auto& [name, id] : session.graph().outputs()) out.emplace(name, session.value_tensor(id));
  return out;
}

Gradients backward(Session& session, std::string_view scalar_output) {
  return session.backward(scalar_output);
}

bool bit_identical(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && bit_identical(a.values(), b.values());
}

}  // namespace fslstm
