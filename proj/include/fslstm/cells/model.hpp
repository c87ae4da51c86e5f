#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fslstm/numerics/tensor.hpp"

namespace fslstm::cells {

enum class ModelKind { Lstm, McLstm, FsLstm };

std::string_view to_string(ModelKind kind);
/// Accepts "lstm", "mclstm", "fslstm"; throws ConfigError otherwise.
ModelKind parse_model_kind(std::string_view text);

/// Shape of the fast/slow mass-input perceptron: (w, p) -> hidden tanh
/// layers -> squared (Q_fast, Q_slow).
struct FastSlowDims {
  std::size_t units = 10;
  std::size_t layers = 2;

  friend bool operator==(const FastSlowDims&, const FastSlowDims&) = default;
};

struct ModelDims {
  ModelKind kind = ModelKind::FsLstm;
  std::size_t n_c = 64;  ///< memory cells (hidden units for the LSTM)
  std::size_t n_a = 20;  ///< auxiliary inputs
  std::size_t n_m = 2;   ///< mass inputs; the FS-LSTM always takes exactly (w, p)
  std::size_t n_r = 10;  ///< projection width, FS-LSTM only
  FastSlowDims fastslow;

  /// Mass values consumed per step by this model kind.
  std::size_t mass_width() const { return kind == ModelKind::FsLstm ? 2 : n_m; }
  /// Throws ConfigError on zero extents.
  void validate() const;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// One entry of a model's parameter layout.
struct ParamSpec {
  std::string name;
  Shape shape;
  bool bias = false;
  bool trainable = true;
};

/// Every tensor the model kind owns, in declaration order.
std::vector<ParamSpec> param_layout(const ModelDims& dims);
std::vector<ParamSpec> fastslow_layout(const FastSlowDims& dims);

struct ModelParams {
  ModelDims dims;
  ParamSet set;
};

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] where fan_in is the
/// contracted (last) extent; biases zero; frozen input scales one.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);
/// All trainable tensors zero; frozen input scales one.
ModelParams zero_params(const ModelDims& dims);

/// Throws ShapeError when `params.set` does not match the layout for `params.dims`.
void validate_params(const ModelParams& params);

struct FastSlowParams {
  FastSlowDims dims;
  ParamSet set;
};

FastSlowParams init_fastslow_params(const FastSlowDims& dims, std::uint64_t seed);
FastSlowParams zero_fastslow_params(const FastSlowDims& dims);

}  // namespace fslstm::cells
