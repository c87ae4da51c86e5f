#pragma once

// A recorded program over a closed set of tensor primitives. The graph is
// built once (define-then-run), is immutable afterwards and can be replayed by
// any number of Sessions, each holding its own value and adjoint buffers.

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fslstm/numerics/tensor.hpp"

namespace fslstm {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  Input,
  Param,
  Constant,
  MatVec,       // contracts the last axis of arg0 with the vector arg1
  Add,
  Sub,
  Mul,
  Sigmoid,
  Tanh,
  Square,
  ColSoftmax,   // softmax down each column of a [rows, cols] tensor
  Sum,          // sum of flat elements [begin, end), shape [1]
  Concat,       // 1-D concatenation of flattened args
  L1Normalize,  // x / sum|x|, or zeros when sum|x| < 1e-12
  Affine,       // W x + U s + b, args {W, x, U, s, b}
};

std::string_view op_name(Op op);

struct Node {
  Op op;
  std::vector<NodeId> args;
  Shape shape;
  std::size_t size = 0;
  std::string name;
  std::size_t begin = 0;  // Sum range
  std::size_t end = 0;
  Tensor constant;
};

class Graph {
 public:
  NodeId input(std::string name, Shape shape);
  /// Returns the existing node when the parameter was already declared with the same shape.
  NodeId param(std::string name, Shape shape);
  NodeId constant(Tensor value, std::string name = {});

  NodeId matvec(NodeId a, NodeId x, std::string name = {});
  NodeId add(NodeId a, NodeId b, std::string name = {});
  /// Elementwise sum of two or more equally shaped operands.
  NodeId add(std::span<const NodeId> terms, std::string name = {});
  NodeId sub(NodeId a, NodeId b, std::string name = {});
  NodeId mul(NodeId a, NodeId b, std::string name = {});
  NodeId sigmoid(NodeId x, std::string name = {});
  NodeId tanh(NodeId x, std::string name = {});
  NodeId square(NodeId x, std::string name = {});
  NodeId col_softmax(NodeId x, std::string name = {});
  NodeId sum(NodeId x, std::string name = {});
  NodeId sum(NodeId x, std::size_t begin, std::size_t end, std::string name = {});
  NodeId concat(std::span<const NodeId> parts, std::string name = {});
  NodeId l1_normalize(NodeId x, std::string name = {});
  /// W x + U s + b in one node; same values as matvec, matvec, add.
  NodeId affine(NodeId w, NodeId x, NodeId u, NodeId s, NodeId b, std::string name = {});

  void set_output(std::string name, NodeId id);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  const Shape& shape(NodeId id) const { return nodes_.at(id).shape; }

  /// Throws ConfigError when the name is unknown.
  NodeId output(std::string_view name) const;
  NodeId input_id(std::string_view name) const;
  bool has_output(std::string_view name) const { return outputs_.find(name) != outputs_.end(); }

  const std::map<std::string, NodeId, std::less<>>& inputs() const { return inputs_; }
  const std::map<std::string, NodeId, std::less<>>& params() const { return params_; }
  const std::map<std::string, NodeId, std::less<>>& outputs() const { return outputs_; }

 private:
  NodeId push(Node node);
  void check(NodeId id) const;
  std::string auto_name(Op op, std::string name) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId, std::less<>> inputs_;
  std::map<std::string, NodeId, std::less<>> params_;
  std::map<std::string, NodeId, std::less<>> outputs_;
};

/// Value and adjoint buffers for one evaluation of a Graph.
///
/// forward() binds parameters and inputs and evaluates every node in record
/// order; backward() seeds a scalar node and returns gradients for every
/// trainable parameter. A Session is not thread-safe; use one per thread.
class Session {
 public:
  explicit Session(const Graph& graph);

  /// Rejects missing or mis-shaped inputs and parameters, and any non-finite
  /// intermediate, naming the offending node.
  void forward(const ParamSet& params, const NamedTensors& inputs);

  /// Fast path for hot loops: copy raw values into an input node, then call
  /// forward(params) to evaluate with the bound inputs.
  void bind(NodeId input, std::span<const double> values);
  void forward(const ParamSet& params);

  std::span<const double> value(NodeId id) const;
  Tensor value_tensor(NodeId id) const;
  Tensor output(std::string_view name) const;
  bool evaluated() const { return evaluated_; }

  /// Gradients of a scalar node with respect to every trainable parameter.
  Gradients backward(std::string_view scalar_output);
  Gradients backward(NodeId scalar_output);

  /// Adds d(scale * output)/d(theta) into `into`, which must already hold a
  /// correctly shaped tensor for every trainable parameter.
  void backward_accumulate(NodeId scalar_output, double scale, Gradients& into);

  const Graph& graph() const { return *graph_; }

 private:
  void bind_params(const ParamSet& params);
  void run_forward();
  void run_backward(NodeId out, double seed);
  void defer_outer(NodeId param, const double* g, const double* x);
  void matvec_backward(NodeId a, NodeId x, const double* g, std::size_t rows);

  struct Deferred {
    std::vector<const double*> g;
    std::vector<const double*> x;
  };
  double* val(NodeId id) { return values_.data() + offsets_[id]; }
  const double* val(NodeId id) const { return values_.data() + offsets_[id]; }
  double* adj(NodeId id) { return adjoints_.data() + offsets_[id]; }
  double* acc(NodeId id) {
    if (!live_[id]) {
      std::fill(adj(id), adj(id + 1), 0.0);
      live_[id] = 1;
    }
    return adj(id);
  }
  template <class F>
  void accumulate(NodeId id, std::size_t n, F f) {
    double* d = acc(id);
    for (std::size_t i = 0; i < n; ++i) d[i] += f(i);
  }

  const Graph* graph_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::vector<char> needs_grad_;
  std::vector<char> bound_;
  std::vector<char> live_;
  std::vector<Deferred> deferred_;
  std::vector<std::pair<std::string, NodeId>> trainable_;
  bool evaluated_ = false;
};

// Free-function forms of the Session API.
NamedTensors forward(Session& session, const ParamSet& params, const NamedTensors& inputs);
Gradients backward(Session& session, std::string_view scalar_output);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Central-difference check of backward() for every trainable parameter.
/// Relative error is |analytic - numeric| / max(|numeric|, 1e-8). When
/// max_per_tensor > 0 only that many evenly spaced elements of each tensor
/// are perturbed.
GradCheckResult finite_difference_check(const Graph& graph, const ParamSet& params,
                                        const NamedTensors& inputs,
                                        std::string_view scalar_output, double epsilon,
                                        std::size_t max_per_tensor = 0);

bool bit_identical(std::span<const double> a, std::span<const double> b);
bool bit_identical(const Tensor& a, const Tensor& b);

}  // namespace fslstm
