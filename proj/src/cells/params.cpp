#include <cmath>
#include <random>

#include "fslstm/cells/model.hpp"
#include "fslstm/errors.hpp"

namespace fslstm::cells {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Lstm: return "lstm";
    case ModelKind::McLstm: return "mclstm";
    case ModelKind::FsLstm: return "fslstm";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "lstm") return ModelKind::Lstm;
  if (text == "mclstm") return ModelKind::McLstm;
  if (text == "fslstm") return ModelKind::FsLstm;
  throw ConfigError("unknown model kind '" + std::string(text) + "' (expected lstm, mclstm or fslstm)");
}

void ModelDims::validate() const {
  if (n_c == 0) throw ConfigError("model needs at least one cell");
  if (n_a == 0) throw ConfigError("model needs at least one auxiliary input");
  if (kind == ModelKind::McLstm && n_m == 0) throw ConfigError("MC-LSTM needs at least one mass input");
  if (kind == ModelKind::FsLstm) {
    if (n_r == 0) throw ConfigError("FS-LSTM projection width must be positive");
    if (fastslow.units == 0 || fastslow.layers == 0)
      throw ConfigError("fast/slow network needs at least one hidden layer with one unit");
  }
}

std::vector<ParamSpec> fastslow_layout(const FastSlowDims& d) {
  std::vector<ParamSpec> out;
  out.push_back({"fastslow.input_scale", {2}, false, false});
  std::size_t in = 2;
  for (std::size_t l = 1; l <= d.layers; ++l) {
    const std::string k = std::to_string(l);
    out.push_back({"fastslow.W" + k, {d.units, in}});
    out.push_back({"fastslow.b" + k, {d.units}, true});
    in = d.units;
  }
  const std::string k = std::to_string(d.layers + 1);
  out.push_back({"fastslow.W" + k, {2, in}});
  out.push_back({"fastslow.b" + k, {2}, true});
  return out;
}

std::vector<ParamSpec> param_layout(const ModelDims& d) {
  d.validate();
  const std::size_t nc = d.n_c, na = d.n_a;
  std::vector<ParamSpec> out;
  switch (d.kind) {
    case ModelKind::McLstm: {
      const std::size_t nm = d.n_m;
      out = {
          {"mc.W_i", {nc, nm, na}},       {"mc.U_i", {nc, nm, nc}}, {"mc.b_i", {nc, nm}, true},
          {"mc.W_o", {nc, na}},           {"mc.U_o", {nc, nc}},     {"mc.b_o", {nc}, true},
          {"mc.W_r", {nc, nc, na}},       {"mc.U_r", {nc, nc, nc}}, {"mc.B_r", {nc, nc}, true},
      };
      break;
    }
    case ModelKind::FsLstm: {
      const std::size_t nr = d.n_r;
      out = {
          {"fs.P", {nr, na}},
          {"fs.W_i", {nc, 2, nr}}, {"fs.u_i", {nc, 2, 1}},  {"fs.b_i", {nc, 2}, true},
          {"fs.W_o", {nc, nr}},    {"fs.u_o", {nc, 1}},     {"fs.b_o", {nc}, true},
          {"fs.W_r", {nc, nc, nr}}, {"fs.u_r", {nc, nc, 1}}, {"fs.B_r", {nc, nc}, true},
      };
      for (auto& s : fastslow_layout(d.fastslow)) out.push_back(std::move(s));
      break;
    }
    case ModelKind::Lstm: {
      const std::size_t nin = d.n_m + na;
      for (const char* gate : {"f", "i", "o", "g"}) {
        const std::string s = gate;
        out.push_back({"lstm.W_" + s, {nc, nin}});
        out.push_back({"lstm.U_" + s, {nc, nc}});
        out.push_back({"lstm.b_" + s, {nc}, true});
      }
      out.push_back({"lstm.head_w", {1, nc}});
      out.push_back({"lstm.head_b", {1}, true});
      break;
    }
  }
  return out;
}

namespace {

ParamSet instantiate(const std::vector<ParamSpec>& layout, std::mt19937_64* rng) {
  ParamSet set;
  for (const auto& spec : layout) {
    Tensor t(spec.shape, 0.0);
    if (!spec.trainable) {
      std::fill(t.values().begin(), t.values().end(), 1.0);
    } else if (!spec.bias && rng != nullptr) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.shape.back()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.values()) v = dist(*rng);
    }
    set.add(spec.name, std::move(t), spec.trainable);
  }
  return set;
}

}  // namespace

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {dims, instantiate(param_layout(dims), &rng)};
}

ModelParams zero_params(const ModelDims& dims) { return {dims, instantiate(param_layout(dims), nullptr)}; }

void validate_params(const ModelParams& params) {
  const auto layout = param_layout(params.dims);
  if (layout.size() != params.set.size())
    throw ShapeError("parameter set has " + std::to_string(params.set.size()) + " tensors, " +
                     std::string(to_string(params.dims.kind)) + " expects " +
                     std::to_string(layout.size()));
  for (const auto& spec : layout) {
    if (!params.set.contains(spec.name)) throw ShapeError("missing parameter " + spec.name);
    const Tensor& t = params.set.get(spec.name);
    if (t.shape() != spec.shape)
      throw ShapeError("parameter " + spec.name + " has shape " + shape_string(t.shape()) +
                       ", expected " + shape_string(spec.shape));
  }
}

FastSlowParams init_fastslow_params(const FastSlowDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {dims, instantiate(fastslow_layout(dims), &rng)};
}

FastSlowParams zero_fastslow_params(const FastSlowDims& dims) {
  return {dims, instantiate(fastslow_layout(dims), nullptr)};
}

}  // namespace fslstm::cells
