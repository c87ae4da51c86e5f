#include <algorithm>
#include <cmath>

#include "fslstm/errors.hpp"
#include "fslstm/numerics/graph.hpp"

namespace fslstm {

GradCheckResult finite_difference_check(const Graph& graph, const ParamSet& params,
                                        const NamedTensors& inputs,
                                        std::string_view scalar_output, double epsilon,
                                        std::size_t max_per_tensor) {
  if (!(epsilon > 0.0)) throw ConfigError("finite_difference_check: epsilon must be > 0");
  for (const auto& [name, entry] : params)
    if (entry.trainable && !entry.value.all_finite())
      throw NumericError("finite_difference_check: parameter " + name + " is not finite");

  const NodeId out = graph.output(scalar_output);
  Session session(graph);
  session.forward(params, inputs);
  const Gradients analytic = session.backward(out);

  ParamSet probe = params;
  auto eval = [&]() {
    session.forward(probe);
    const double v = session.value(out)[0];
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite perturbation");
    return v;
  };

  GradCheckResult result;
  for (const auto& [name, grad] : analytic) {
    Tensor& t = probe.get_mutable(name);
    const std::size_t n = t.size();
    const std::size_t count = (max_per_tensor == 0 || max_per_tensor >= n) ? n : max_per_tensor;
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t idx = count == n ? j : (j * n) / count;
      const double orig = t[idx];
      t[idx] = orig + epsilon;
      const double fp = eval();
      t[idx] = orig - epsilon;
      const double fm = eval();
      t[idx] = orig;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double rel = std::abs(grad[idx] - numeric) / std::max(std::abs(numeric), 1e-8);
      ++result.checked;
      if (result.worst_param.empty() || rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_param = name;
        result.worst_index = idx;
        result.worst_analytic = grad[idx];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace fslstm
