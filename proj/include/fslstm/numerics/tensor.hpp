#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fslstm {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  /// Throws ShapeError unless values.size() matches the shape.
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rank() const { return shape_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

using NamedTensors = std::map<std::string, Tensor, std::less<>>;

/// Named tensors each flagged trainable or frozen; iteration is ordered by name.
class ParamSet {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };

  /// Throws ConfigError on a duplicate name.
  void add(std::string name, Tensor value, bool trainable = true);

  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get_mutable(std::string_view name);
  bool trainable(std::string_view name) const;
  void set_trainable(std::string_view name, bool trainable);

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  /// Total element count over trainable entries.
  std::size_t trainable_elements() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::map<std::string, Entry, std::less<>> entries_;
};

bool operator==(const ParamSet::Entry& a, const ParamSet::Entry& b);

/// Gradient per trainable parameter name.
using Gradients = NamedTensors;

}  // namespace fslstm
