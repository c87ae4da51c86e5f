#include "fslstm/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "fslstm/errors.hpp"

namespace fslstm {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != element_count(shape_))
    throw ShapeError("tensor of shape " + shape_string(shape_) + " given " +
                     std::to_string(values_.size()) + " values");
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void ParamSet::add(std::string name, Tensor value, bool trainable) {
  if (entries_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
  entries_.emplace(std::move(name), Entry{std::move(value), trainable});
}

bool ParamSet::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const Tensor& ParamSet::get(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second.value;
}

Tensor& ParamSet::get_mutable(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second.value;
}

bool ParamSet::trainable(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second.trainable;
}

void ParamSet::set_trainable(std::string_view name, bool trainable) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  it->second.trainable = trainable;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamSet::trainable_elements() const {
  std::size_t n = 0;
  for (const auto& [name, entry] : entries_)
    if (entry.trainable) n += entry.value.size();
  return n;
}

bool operator==(const ParamSet::Entry& a, const ParamSet::Entry& b) {
  return a.trainable == b.trainable && a.value == b.value;
}

bool operator==(const ParamSet& a, const ParamSet& b) { return a.entries_ == b.entries_; }

}  // namespace fslstm
