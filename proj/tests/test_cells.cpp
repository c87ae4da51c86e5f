#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fslstm/cells/cells.hpp"
#include "fslstm/cells/checkpoint_io.hpp"
#include "fslstm/errors.hpp"

using namespace fslstm;
using namespace fslstm::cells;

namespace {

ModelDims small_dims(ModelKind kind) {
  ModelDims d;
  d.kind = kind;
  d.n_c = 4;
  d.n_a = 3;
  d.n_m = 2;
  d.n_r = 2;
  d.fastslow = {4, 2};
  return d;
}

SequenceInputs random_inputs(const ModelDims& d, std::size_t steps, std::mt19937_64& rng,
                             double mass_hi = 5.0) {
  std::uniform_real_distribution<double> mass(0.0, mass_hi), aux(-1.0, 1.0);
  SequenceInputs in{steps, std::vector<double>(steps * d.mass_width()),
                    std::vector<double>(steps * d.n_a)};
  for (double& v : in.mass) v = mass(rng);
  for (double& v : in.aux) v = aux(rng);
  return in;
}

// Gives every trainable tensor, biases included, nonzero random values so
// that no gradient path is trivially zero.
ModelParams randomized(const ModelDims& d, std::uint64_t seed, double scale = 0.5) {
  ModelParams p = init_params(d, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& [name, e] : p.set)
    if (e.trainable)
      for (double& v : e.value.values()) v = u(rng);
  return p;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

NamedTensors sequence_feed(const SequenceModel& m, const SequenceInputs& in, double target) {
  const ModelDims& d = m.dims();
  NamedTensors feed;
  feed.emplace("c0", Tensor({d.n_c}));
  if (d.kind == ModelKind::Lstm) feed.emplace("h0", Tensor({d.n_c}));
  const std::size_t mw = d.mass_width();
  for (std::size_t t = 0; t < in.steps; ++t) {
    const std::string tag = "[" + std::to_string(t) + "]";
    feed.emplace("mass" + tag, Tensor({mw}, std::vector<double>(in.mass.begin() + t * mw,
                                                                in.mass.begin() + (t + 1) * mw)));
    feed.emplace("aux" + tag, Tensor({d.n_a}, std::vector<double>(in.aux.begin() + t * d.n_a,
                                                                 in.aux.begin() + (t + 1) * d.n_a)));
  }
  feed.emplace("target", Tensor::scalar(target));
  feed.emplace("weight", Tensor::scalar(1.0));
  return feed;
}

}  // namespace

TEST_CASE("mclstm uniform-gate example") {
  ModelDims d;
  d.kind = ModelKind::McLstm;
  d.n_c = 2;
  d.n_m = 1;
  d.n_a = 3;
  const ModelParams p = zero_params(d);
  const double x[] = {2.0};
  const double a[] = {0.3, -1.0, 7.0};
  const StepOutput s = mclstm_step(p, CellState{{1.0, 1.0}}, x, a);
  CHECK(s.c_next.c == std::vector<double>{1.0, 1.0});
  CHECK(s.h == std::vector<double>{1.0, 1.0});
  CHECK(s.q == 1.0);
  CHECK(s.mass_in == 2.0);

  const double none[] = {0.0};
  const StepOutput e = mclstm_step(p, CellState{{0.0, 0.0}}, none, a);
  CHECK(e.c_next.c == std::vector<double>{0.0, 0.0});
  CHECK(e.h == std::vector<double>{0.0, 0.0});
  CHECK(e.q == 0.0);
}

TEST_CASE("fslstm zero-weight example") {
  ModelDims d;
  d.kind = ModelKind::FsLstm;
  d.n_c = 2;
  d.n_a = 3;
  d.n_r = 1;
  const ModelParams p = zero_params(d);
  const double a[] = {1.0, 2.0, 3.0};
  const StepOutput s = fslstm_step(p, CellState{{4.0, 0.0}}, 0.7, 3.0, a);
  CHECK(s.mass_in == 0.0);
  CHECK(s.c_next.c == std::vector<double>{1.0, 1.0});
  CHECK(s.h == std::vector<double>{1.0, 1.0});
  CHECK(s.q == 1.0);
}

TEST_CASE("fslstm with an empty store conserves the fast/slow inflow") {
  const ModelDims d = small_dims(ModelKind::FsLstm);
  const ModelParams p = randomized(d, 42, 1.0);
  FastSlowParams fs{d.fastslow, {}};
  for (const auto& [name, e] : p.set)
    if (name.rfind("fastslow.", 0) == 0) fs.set.add(name, e.value, e.trainable);
  const auto [qa, qb] = fastslow_forward(fs, 0.4, 2.5);
  const double a[] = {0.1, 0.2, 0.3};
  const StepOutput s = fslstm_step(p, CellState{std::vector<double>(d.n_c, 0.0)}, 0.4, 2.5, a);
  CHECK(s.mass_in == doctest::Approx(qa + qb).epsilon(1e-15));
  CHECK(std::abs(sum(s.c_next.c) + sum(s.h) - (qa + qb)) <= 1e-12);
}

TEST_CASE("fastslow perceptron") {
  const FastSlowDims dims;
  SUBCASE("zero weights emit zero") {
    const auto [qf, qs] = fastslow_forward(zero_fastslow_params(dims), 0.3, 1.2);
    CHECK(qf == 0.0);
    CHECK(qs == 0.0);
  }
  SUBCASE("outputs are nonnegative") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int seed = 0; seed < 20; ++seed) {
      const FastSlowParams p = init_fastslow_params(dims, seed);
      const auto [qf, qs] = fastslow_forward(p, u(rng), u(rng));
      CHECK(qf >= 0.0);
      CHECK(qs >= 0.0);
    }
  }
  SUBCASE("matches a straight-line evaluation") {
    FastSlowParams p = init_fastslow_params(dims, 42);
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (const char* b : {"fastslow.b1", "fastslow.b2", "fastslow.b3"})
      for (double& v : p.set.get_mutable(b).values()) v = u(rng);
    p.set.get_mutable("fastslow.input_scale")[1] = 0.5;

    const double w = 0.3, pr = 1.2;
    const Tensor& s = p.set.get("fastslow.input_scale");
    const double in[2] = {w * s[0], pr * s[1]};
    const Tensor& W1 = p.set.get("fastslow.W1");
    const Tensor& b1 = p.set.get("fastslow.b1");
    const Tensor& W2 = p.set.get("fastslow.W2");
    const Tensor& b2 = p.set.get("fastslow.b2");
    const Tensor& W3 = p.set.get("fastslow.W3");
    const Tensor& b3 = p.set.get("fastslow.b3");
    double h1[10], h2[10], out[2];
    for (int j = 0; j < 10; ++j) h1[j] = std::tanh(W1[j * 2] * in[0] + W1[j * 2 + 1] * in[1] + b1[j]);
    for (int j = 0; j < 10; ++j) {
      double z = b2[j];
      for (int k = 0; k < 10; ++k) z += W2[j * 10 + k] * h1[k];
      h2[j] = std::tanh(z);
    }
    for (int j = 0; j < 2; ++j) {
      double z = b3[j];
      for (int k = 0; k < 10; ++k) z += W3[j * 10 + k] * h2[k];
      out[j] = z * z;
    }
    const auto [qf, qs] = fastslow_forward(p, w, pr);
    CHECK(qf == doctest::Approx(out[0]).epsilon(1e-13));
    CHECK(qs == doctest::Approx(out[1]).epsilon(1e-13));
  }
  SUBCASE("rejects non-finite input") {
    CHECK_THROWS_AS(fastslow_forward(zero_fastslow_params(dims), NAN, 1.0), NumericError);
  }
}

TEST_CASE("conservation over long random sequences") {
  std::mt19937_64 rng(42);
  SUBCASE("mclstm, 100 steps") {
    ModelDims d;
    d.kind = ModelKind::McLstm;
    const ModelParams p = init_params(d, 42);
    const auto in = random_inputs(d, 100, rng);
    const SequenceResult r = run_sequence(p, {}, in);
    CHECK(std::abs(r.ledger.residual()) <= 1e-10);
    CHECK(r.min_state >= 0.0);
    for (double q : r.q) CHECK(q >= 0.0);
  }
  SUBCASE("fslstm, 365 steps") {
    ModelDims d;
    const ModelParams p = init_params(d, 42);
    const auto in = random_inputs(d, 365, rng);
    const SequenceResult r = run_sequence(p, {}, in);
    CHECK(std::abs(r.ledger.residual()) <= 1e-10);
    CHECK(r.min_state >= 0.0);
    for (double q : r.q) CHECK(q >= 0.0);
  }
}

TEST_CASE("per-step invariants for every parameter draw") {
  for (ModelKind kind : {ModelKind::McLstm, ModelKind::FsLstm}) {
    CAPTURE(to_string(kind));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const ModelDims d = small_dims(kind);
      const ModelParams p = randomized(d, seed, 3.0);
      Graph g;
      const NodeId c = g.input("c", {d.n_c});
      const NodeId mass = g.input("mass", {d.mass_width()});
      const NodeId aux = g.input("aux", {d.n_a});
      const CellStepNodes s = kind == ModelKind::McLstm
                                  ? build_mclstm_step(g, d, c, mass, aux, "")
                                  : build_fslstm_step(g, d, c, mass, aux, "");
      std::mt19937_64 rng(seed);
      const auto in = random_inputs(d, 1, rng, 20.0);
      Session sess(g);
      std::vector<double> c0(d.n_c);
      std::uniform_real_distribution<double> u(0.0, 10.0);
      for (double& v : c0) v = u(rng);
      sess.bind(c, c0);
      sess.bind(mass, in.mass);
      sess.bind(aux, in.aux);
      sess.forward(p.set);

      for (NodeId m : {s.i_gate, s.redistribution}) {
        const Shape& sh = g.shape(m);
        auto v = sess.value(m);
        for (std::size_t j = 0; j < sh[1]; ++j) {
          double col = 0.0;
          for (std::size_t i = 0; i < sh[0]; ++i) col += v[i * sh[1] + j];
          CHECK(std::abs(col - 1.0) <= 1e-12);
        }
      }
      auto h = sess.value(s.h);
      auto cn = sess.value(s.c_next);
      const double q = sess.value(s.q)[0];
      double partial = 0.0;
      for (std::size_t i = 0; i + 1 < d.n_c; ++i) partial += h[i];
      CHECK(q == partial);
      const double total_h = std::accumulate(h.begin(), h.end(), 0.0);
      CHECK(std::abs(q - (total_h - h[d.n_c - 1])) <= 1e-12 * std::max(1.0, total_h));

      const double before = sum(c0) + sess.value(s.mass_in)[0];
      const double after = std::accumulate(cn.begin(), cn.end(), 0.0) + total_h;
      CHECK(std::abs(after - before) <= 1e-10);
      for (double v : sess.value(s.m_tot)) CHECK(v >= 0.0);
      for (double v : h) CHECK(v >= 0.0);
      for (double v : cn) CHECK(v >= 0.0);
      CHECK(q >= 0.0);
    }
  }
}

TEST_CASE("gradients through ten steps match finite differences") {
  for (ModelKind kind : {ModelKind::McLstm, ModelKind::FsLstm, ModelKind::Lstm}) {
    CAPTURE(to_string(kind));
    const ModelDims d = small_dims(kind);
    const ModelParams p = randomized(d, 42);
    std::mt19937_64 rng(7);
    const auto in = random_inputs(d, 10, rng);
    const SequenceModel m(d, 10, true);
    const auto r = finite_difference_check(m.graph(), p.set, sequence_feed(m, in, 0.7), "loss", 1e-5);
    CAPTURE(r.worst_param);
    CAPTURE(r.worst_index);
    CAPTURE(r.worst_analytic);
    CAPTURE(r.worst_numeric);
    CHECK(r.checked == p.set.trainable_elements());
    CHECK(r.max_relative_error <= 1e-4);
  }
}

TEST_CASE("sequence runner") {
  std::mt19937_64 rng(9);
  SUBCASE("one step equals the single-step call") {
    const ModelDims d = small_dims(ModelKind::McLstm);
    const ModelParams p = randomized(d, 3);
    const auto in = random_inputs(d, 1, rng);
    const std::vector<double> c0{1.0, 0.5, 0.0, 2.0};
    const SequenceResult r = run_sequence(p, c0, in);
    const StepOutput s = mclstm_step(p, CellState{c0}, in.mass, in.aux);
    CHECK(r.q.size() == 1);
    CHECK(r.q[0] == s.q);
    CHECK(r.final_c == s.c_next.c);
  }
  SUBCASE("no mass, no store, no flow") {
    for (ModelKind kind : {ModelKind::McLstm, ModelKind::FsLstm}) {
      ModelDims d = small_dims(kind);
      ModelParams p = randomized(d, 5);
      auto in = random_inputs(d, 30, rng);
      std::fill(in.mass.begin(), in.mass.end(), 0.0);
      if (kind == ModelKind::FsLstm) {
        // Zero the perceptron's output layer so (w, p) = 0 carries no mass.
        for (double& v : p.set.get_mutable("fastslow.W3").values()) v = 0.0;
        for (double& v : p.set.get_mutable("fastslow.b3").values()) v = 0.0;
      }
      const SequenceResult r = run_sequence(p, {}, in);
      for (double q : r.q) CHECK(q == 0.0);
    }
  }
  SUBCASE("errors carry the timestep") {
    const ModelDims d = small_dims(ModelKind::McLstm);
    const ModelParams p = randomized(d, 1);
    auto in = random_inputs(d, 5, rng);
    in.mass[3 * d.n_m + 1] = -0.1;
    CHECK_THROWS_WITH_AS(run_sequence(p, {}, in), doctest::Contains("timestep 3"), DataError);
    in.mass[3 * d.n_m + 1] = 0.1;
    in.aux.pop_back();
    CHECK_THROWS_AS(run_sequence(p, {}, in), ShapeError);
    const SequenceModel m(d, 5);
    Session s(m.graph());
    const double bad_aux[] = {1.0};
    const double mass[] = {1.0, 1.0};
    CHECK_THROWS_WITH_AS(m.bind_step(s, 2, mass, bad_aux), doctest::Contains("timestep 2"),
                         ShapeError);
    const std::vector<double> neg{-1.0, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(m.bind_initial(s, neg), DataError);
  }
  SUBCASE("step argument checks") {
    const ModelDims d = small_dims(ModelKind::FsLstm);
    const ModelParams p = randomized(d, 1);
    const double a[] = {0.0, 0.0, 0.0};
    CHECK_THROWS_AS(fslstm_step(p, CellState{{0.0, 0.0}}, 1.0, 1.0, a), ShapeError);
    CHECK_THROWS_AS(fslstm_step(p, CellState{std::vector<double>(4)}, NAN, 1.0, a), NumericError);
    CHECK_THROWS_AS(mclstm_step(p, CellState{std::vector<double>(4)}, a, a), ConfigError);
  }
}

TEST_CASE("vanilla lstm") {
  const ModelDims d = small_dims(ModelKind::Lstm);
  SUBCASE("zero weights keep a zero state") {
    const ModelParams p = zero_params(d);
    const std::vector<double> x{1.0, -2.0, 3.0, 0.5, 4.0};
    const LstmStepResult r = vanilla_lstm_step(p, LstmState{std::vector<double>(4), std::vector<double>(4)}, x);
    CHECK(r.state.h == std::vector<double>(4, 0.0));
    CHECK(r.state.c == std::vector<double>(4, 0.0));
    CHECK(r.prediction == 0.0);
  }
  SUBCASE("deterministic for a seed") {
    std::mt19937_64 rng(2);
    const auto in = random_inputs(d, 40, rng);
    const SequenceResult a = run_sequence(init_params(d, 11), {}, in);
    const SequenceResult b = run_sequence(init_params(d, 11), {}, in);
    CHECK(bit_identical(a.final_h, b.final_h));
    CHECK(bit_identical(a.final_c, b.final_c));
    CHECK(bit_identical(a.q, b.q));
  }
  SUBCASE("shape mismatch") {
    const ModelParams p = zero_params(d);
    const std::vector<double> x{1.0};
    CHECK_THROWS_AS(vanilla_lstm_step(p, LstmState{std::vector<double>(4), std::vector<double>(4)}, x),
                    ShapeError);
  }
}

TEST_CASE("parameter accounting") {
  CHECK(param_count_paper(ModelKind::McLstm, 64, 20, 0) == 354816);
  CHECK(param_count_paper(ModelKind::FsLstm, 64, 20, 10) == 312776);
  CHECK(max_projection_dim(64, 20) == 19);
  CHECK(max_projection_dim(2, 8) == 4);
  CHECK(max_projection_dim(1, 1) == 0);
  CHECK_THROWS_AS(param_count_paper(ModelKind::FsLstm, 0, 20, 10), ConfigError);
  CHECK_THROWS_AS(max_projection_dim(4, 0), ConfigError);

  // The bound is inclusive: at equality the two counts coincide.
  for (std::uint64_t nc = 1; nc <= 12; ++nc) {
    for (std::uint64_t na = 1; na <= 30; ++na) {
      const std::uint64_t k = nc * nc + 2 * nc;
      for (std::uint64_t nr = 1; nr <= max_projection_dim(nc, na); ++nr) {
        const auto fs = param_count_paper(ModelKind::FsLstm, nc, na, nr);
        const auto mc = param_count_paper(ModelKind::McLstm, nc, na, 0);
        if (nr * (k + na) < na * k) {
          CHECK(fs < mc);
        } else {
          CHECK(fs == mc);
        }
      }
      const std::uint64_t above = max_projection_dim(nc, na) + 1;
      CHECK(param_count_paper(ModelKind::FsLstm, nc, na, above) >
            param_count_paper(ModelKind::McLstm, nc, na, 0));
    }
  }

  const ParamCount fs = param_count_actual(init_fastslow_params(FastSlowDims{}, 1));
  CHECK(fs.weights == 140);
  CHECK(fs.biases == 22);

  ModelDims mc;
  mc.kind = ModelKind::McLstm;
  mc.n_m = 1;
  ModelDims fsd;
  const ParamCount mc_count = param_count_actual(init_params(mc, 1));
  const ParamCount fs_count = param_count_actual(init_params(fsd, 1));
  CHECK(fs_count.total() < mc_count.total());
  // With a single mass input the instantiated MC-LSTM matches the closed form.
  CHECK(mc_count.weights == 354816);

  ModelDims tiny;
  tiny.kind = ModelKind::McLstm;
  tiny.n_c = 1;
  tiny.n_a = 1;
  tiny.n_m = 1;
  CHECK(param_count_actual(init_params(tiny, 1)).weights > 0);
  tiny.n_c = 0;
  CHECK_THROWS_AS(init_params(tiny, 1), ConfigError);
}

TEST_CASE("initialization") {
  const ModelDims d;
  const ModelParams a = init_params(d, 42);
  const ModelParams b = init_params(d, 42);
  CHECK(a.set == b.set);
  CHECK_FALSE(a.set == init_params(d, 43).set);
  CHECK_FALSE(a.set.trainable("fastslow.input_scale"));
  for (const ParamSpec& spec : param_layout(d)) {
    CAPTURE(spec.name);
    const Tensor& t = a.set.get(spec.name);
    CHECK(t.shape() == spec.shape);
    if (spec.bias) {
      for (double v : t.values()) CHECK(v == 0.0);
    } else if (spec.trainable) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.shape.back()));
      for (double v : t.values()) CHECK(std::abs(v) <= bound);
    }
  }
  ModelParams broken = a;
  broken.set.get_mutable("fs.P") = Tensor({3, 3});
  CHECK_THROWS_AS(validate_params(broken), ShapeError);
}

TEST_CASE("checkpoint text round trip is bit-exact") {
  for (ModelKind kind : {ModelKind::McLstm, ModelKind::FsLstm, ModelKind::Lstm}) {
    const ModelDims d = small_dims(kind);
    ModelParams p = randomized(d, 77);
    p.set.get_mutable(p.set.names().front())[0] = 1.0 / 3.0;
    std::stringstream ss;
    write_params(ss, p);
    const ModelParams back = read_params(ss);
    CHECK(back.dims == p.dims);
    CHECK(back.set == p.set);
  }
  for (double v : {0.0, -0.0, 1e-310, 1.0 / 3.0, -2.5e300, 5e-324}) {
    const double r = parse_exact(format_exact(v));
    CHECK(bit_identical(std::span<const double>(&v, 1), std::span<const double>(&r, 1)));
  }
  CHECK_THROWS_AS(parse_exact("nope"), DataError);
  std::stringstream junk("model fslstm\ndims 1 2\n");
  CHECK_THROWS_AS(read_params(junk), DataError);
}
