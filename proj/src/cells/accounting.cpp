#include "fslstm/cells/cells.hpp"
#include "fslstm/errors.hpp"

namespace fslstm::cells {

std::uint64_t param_count_paper(ModelKind kind, std::uint64_t n_c, std::uint64_t n_a,
                                std::uint64_t n_r) {
  if (n_c == 0 || n_a == 0) throw ConfigError("param_count_paper: dimensions must be positive");
  switch (kind) {
    case ModelKind::McLstm:
      return 2 * n_c * (n_a + n_c) + n_c * n_c * (n_a + n_c);
    case ModelKind::FsLstm:
      if (n_r == 0) throw ConfigError("param_count_paper: n_r must be positive");
      return 2 * n_c * (n_r + n_c) + n_c * n_c * (n_r + n_c) + n_r * n_a;
    case ModelKind::Lstm:
      break;
  }
  throw ConfigError("param_count_paper: no closed form for the LSTM baseline");
}

std::uint64_t max_projection_dim(std::uint64_t n_c, std::uint64_t n_a) {
  if (n_c == 0 || n_a == 0) throw ConfigError("max_projection_dim: dimensions must be positive");
  const std::uint64_t k = n_c * n_c + 2 * n_c;
  return n_a * k / (k + n_a);
}

namespace {

ParamCount count(const ParamSet& set, const std::vector<ParamSpec>& layout) {
  ParamCount c;
  for (const auto& spec : layout) {
    if (!set.contains(spec.name) || !set.trainable(spec.name)) continue;
    const std::size_t n = set.get(spec.name).size();
    (spec.bias ? c.biases : c.weights) += n;
  }
  return c;
}

}  // namespace

ParamCount param_count_actual(const ModelParams& params) {
  return count(params.set, param_layout(params.dims));
}

ParamCount param_count_actual(const FastSlowParams& params) {
  return count(params.set, fastslow_layout(params.dims));
}

}  // namespace fslstm::cells
