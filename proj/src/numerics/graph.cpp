#include "fslstm/numerics/graph.hpp"

#include "fslstm/errors.hpp"

namespace fslstm {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::Constant: return "constant";
    case Op::MatVec: return "matvec";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Square: return "square";
    case Op::ColSoftmax: return "col_softmax";
    case Op::Sum: return "sum";
    case Op::Concat: return "concat";
    case Op::L1Normalize: return "l1_normalize";
    case Op::Affine: return "affine";
  }
  return "?";
}

std::string Graph::auto_name(Op op, std::string name) const {
  if (!name.empty()) return name;
  return std::string(op_name(op)) + "#" + std::to_string(nodes_.size());
}

NodeId Graph::push(Node node) {
  node.size = element_count(node.shape);
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check(NodeId id) const {
  if (id >= nodes_.size()) throw ConfigError("graph node id out of range: " + std::to_string(id));
}

NodeId Graph::input(std::string name, Shape shape) {
  if (inputs_.contains(name)) throw ConfigError("duplicate graph input: " + name);
  const NodeId id = push(Node{Op::Input, {}, std::move(shape), 0, name});
  inputs_.emplace(std::move(name), id);
  return id;
}

NodeId Graph::param(std::string name, Shape shape) {
  if (auto it = params_.find(name); it != params_.end()) {
    if (nodes_[it->second].shape != shape)
      throw ShapeError("parameter " + name + " redeclared as " + shape_string(shape) +
                       ", was " + shape_string(nodes_[it->second].shape));
    return it->second;
  }
  const NodeId id = push(Node{Op::Param, {}, std::move(shape), 0, name});
  params_.emplace(std::move(name), id);
  return id;
}

NodeId Graph::constant(Tensor value, std::string name) {
  Node n{Op::Constant, {}, value.shape(), 0, auto_name(Op::Constant, std::move(name))};
  n.constant = std::move(value);
  return push(std::move(n));
}

NodeId Graph::matvec(NodeId a, NodeId x, std::string name) {
  check(a);
  check(x);
  name = auto_name(Op::MatVec, std::move(name));
  const Shape& sa = nodes_[a].shape;
  const Shape& sx = nodes_[x].shape;
  if (sa.size() < 2 || sx.size() != 1 || sa.back() != sx[0])
    throw ShapeError(name + ": cannot contract " + shape_string(sa) + " with " + shape_string(sx));
  Shape out(sa.begin(), sa.end() - 1);
  return push(Node{Op::MatVec, {a, x}, std::move(out), 0, std::move(name)});
}

namespace {
Shape same_shape(const Node& a, const Node& b, const std::string& name) {
  if (a.shape != b.shape)
    throw ShapeError(name + ": operand shapes " + shape_string(a.shape) + " and " +
                     shape_string(b.shape) + " differ");
  return a.shape;
}
}  // namespace

NodeId Graph::add(NodeId a, NodeId b, std::string name) {
  check(a);
  check(b);
  name = auto_name(Op::Add, std::move(name));
  Shape s = same_shape(nodes_[a], nodes_[b], name);
  return push(Node{Op::Add, {a, b}, std::move(s), 0, std::move(name)});
}

NodeId Graph::add(std::span<const NodeId> terms, std::string name) {
  name = auto_name(Op::Add, std::move(name));
  if (terms.size() < 2) throw ShapeError(name + ": add needs at least two operands");
  for (NodeId t : terms) check(t);
  Shape s = nodes_[terms[0]].shape;
  for (NodeId t : terms.subspan(1)) same_shape(nodes_[terms[0]], nodes_[t], name);
  return push(Node{Op::Add, {terms.begin(), terms.end()}, std::move(s), 0, std::move(name)});
}

NodeId Graph::sub(NodeId a, NodeId b, std::string name) {
  check(a);
  check(b);
  name = auto_name(Op::Sub, std::move(name));
  Shape s = same_shape(nodes_[a], nodes_[b], name);
  return push(Node{Op::Sub, {a, b}, std::move(s), 0, std::move(name)});
}

NodeId Graph::mul(NodeId a, NodeId b, std::string name) {
  check(a);
  check(b);
  name = auto_name(Op::Mul, std::move(name));
  Shape s = same_shape(nodes_[a], nodes_[b], name);
  return push(Node{Op::Mul, {a, b}, std::move(s), 0, std::move(name)});
}

NodeId Graph::sigmoid(NodeId x, std::string name) {
  check(x);
  return push(Node{Op::Sigmoid, {x}, nodes_[x].shape, 0, auto_name(Op::Sigmoid, std::move(name))});
}

NodeId Graph::tanh(NodeId x, std::string name) {
  check(x);
  return push(Node{Op::Tanh, {x}, nodes_[x].shape, 0, auto_name(Op::Tanh, std::move(name))});
}

NodeId Graph::square(NodeId x, std::string name) {
  check(x);
  return push(Node{Op::Square, {x}, nodes_[x].shape, 0, auto_name(Op::Square, std::move(name))});
}

NodeId Graph::col_softmax(NodeId x, std::string name) {
  check(x);
  name = auto_name(Op::ColSoftmax, std::move(name));
  const Shape& s = nodes_[x].shape;
  if (s.size() != 2 || s[0] == 0 || s[1] == 0)
    throw ShapeError(name + ": column softmax needs a non-empty matrix, got " + shape_string(s));
  return push(Node{Op::ColSoftmax, {x}, s, 0, std::move(name)});
}

NodeId Graph::sum(NodeId x, std::string name) {
  check(x);
  return sum(x, 0, nodes_[x].size, std::move(name));
}

NodeId Graph::sum(NodeId x, std::size_t begin, std::size_t end, std::string name) {
  check(x);
  name = auto_name(Op::Sum, std::move(name));
  if (begin > end || end > nodes_[x].size)
    throw ShapeError(name + ": sum range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + shape_string(nodes_[x].shape));
  Node n{Op::Sum, {x}, Shape{1}, 0, std::move(name)};
  n.begin = begin;
  n.end = end;
  return push(std::move(n));
}

NodeId Graph::concat(std::span<const NodeId> parts, std::string name) {
  name = auto_name(Op::Concat, std::move(name));
  if (parts.empty()) throw ShapeError(name + ": nothing to concatenate");
  std::size_t total = 0;
  for (NodeId p : parts) {
    check(p);
    total += nodes_[p].size;
  }
  return push(Node{Op::Concat, {parts.begin(), parts.end()}, Shape{total}, 0, std::move(name)});
}

NodeId Graph::l1_normalize(NodeId x, std::string name) {
  check(x);
  return push(
      Node{Op::L1Normalize, {x}, nodes_[x].shape, 0, auto_name(Op::L1Normalize, std::move(name))});
}

NodeId Graph::affine(NodeId w, NodeId x, NodeId u, NodeId s, NodeId b, std::string name) {
  for (NodeId id : {w, x, u, s, b}) check(id);
  name = auto_name(Op::Affine, std::move(name));
  auto contract = [&](NodeId a, NodeId v) {
    const Shape& sa = nodes_[a].shape;
    const Shape& sv = nodes_[v].shape;
    if (sa.size() < 2 || sv.size() != 1 || sa.back() != sv[0])
      throw ShapeError(name + ": cannot contract " + shape_string(sa) + " with " + shape_string(sv));
    return Shape(sa.begin(), sa.end() - 1);
  };
  Shape out = contract(w, x);
  if (contract(u, s) != out || nodes_[b].shape != out)
    throw ShapeError(name + ": terms of shape " + shape_string(out) + ", " +
                     shape_string(contract(u, s)) + " and " + shape_string(nodes_[b].shape) +
                     " differ");
  return push(Node{Op::Affine, {w, x, u, s, b}, std::move(out), 0, std::move(name)});
}

void Graph::set_output(std::string name, NodeId id) {
  check(id);
  outputs_[std::move(name)] = id;
}

NodeId Graph::output(std::string_view name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw ConfigError("unknown graph output: " + std::string(name));
  return it->second;
}

NodeId Graph::input_id(std::string_view name) const {
  auto it = inputs_.find(name);
  if (it == inputs_.end()) throw ConfigError("unknown graph input: " + std::string(name));
  return it->second;
}

}  // namespace fslstm
