#include <cmath>

#include "fslstm/errors.hpp"
#include "fslstm/train/train.hpp"

namespace fslstm::train {

void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, const AdamHyper& h) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) throw ShapeError("gradient for unknown parameter '" + name + "'");
    if (params.get(name).shape() != g.shape())
      throw ShapeError("gradient shape mismatch for parameter '" + name + "'");
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (const auto& [name, g] : grads) {
    if (!params.trainable(name)) continue;
    Tensor& p = params.get_mutable(name);
    auto [mi, new_m] = state.m.try_emplace(name, Tensor(g.shape()));
    auto [vi, new_v] = state.v.try_emplace(name, Tensor(g.shape()));
    double* m = mi->second.data();
    double* v = vi->second.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
}

double clip_global_norm(Gradients& grads, double max_norm) {
  double ss = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.values()) ss += x * x;
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& x : g.values()) x *= scale;
  }
  return norm;
}

double sample_weight(LossKind kind, const data::FeatureStats& q) {
  const double d = kind == LossKind::Mse ? q.sd : q.sd + 0.1;
  return 1.0 / (d * d);
}

}  // namespace fslstm::train
