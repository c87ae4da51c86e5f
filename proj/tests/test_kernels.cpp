// Scalar reference kernels against the AVX2 variants.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fslstm/numerics/kernels.hpp"

using namespace fslstm::kernels;

namespace {

constexpr double kTol = 1e-12;

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -2.0,
                               double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Relative to the magnitude of the reference with an absolute floor, since
// reassociated sums can differ by a few ulps of the largest term.
void check_close(const std::vector<double>& ref, const std::vector<double>& got, double scale) {
  REQUIRE(ref.size() == got.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(std::abs(ref[i] - got[i]) <= kTol * std::max(scale, std::abs(ref[i])));
}

const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 10, 13, 16, 17, 20, 33, 64, 70};

}  // namespace

TEST_CASE("dispatch exposes a scalar table and names") {
  CHECK(scalar_table().isa == Isa::Scalar);
  CHECK(name(Isa::Scalar) == "scalar");
  CHECK(name(Isa::Avx2) == "avx2");
  CHECK(cpu_supports(Isa::Scalar));
  force(Isa::Scalar);
  CHECK(active().isa == Isa::Scalar);
  if (cpu_supports(Isa::Avx2)) {
    force(Isa::Avx2);
    CHECK(active().isa == Isa::Avx2);
  }
}

TEST_CASE("avx2 kernels match the scalar reference") {
  if (!cpu_supports(Isa::Avx2)) {
    MESSAGE("AVX2 unavailable; equivalence not exercised");
    return;
  }
  const KernelTable& s = scalar_table();
  const KernelTable& v = *avx2_table();
  std::mt19937_64 rng(11);

  for (std::size_t rows : kSizes) {
    for (std::size_t cols : kSizes) {
      CAPTURE(rows);
      CAPTURE(cols);
      const auto a = random_vec(rows * cols, rng);
      const auto x = random_vec(cols, rng);
      const auto g = random_vec(rows, rng);
      const double scale = 4.0 * static_cast<double>(std::max(rows, cols));

      std::vector<double> y1(rows), y2(rows);
      s.matvec(a.data(), x.data(), y1.data(), rows, cols);
      v.matvec(a.data(), x.data(), y2.data(), rows, cols);
      check_close(y1, y2, scale);

      auto d1 = random_vec(cols, rng), d2 = d1;
      s.matvec_t_acc(a.data(), g.data(), d1.data(), rows, cols);
      v.matvec_t_acc(a.data(), g.data(), d2.data(), rows, cols);
      check_close(d1, d2, scale);

      auto o1 = random_vec(rows * cols, rng), o2 = o1;
      s.outer_acc(g.data(), x.data(), o1.data(), rows, cols);
      v.outer_acc(g.data(), x.data(), o2.data(), rows, cols);
      check_close(o1, o2, scale);

      std::vector<std::vector<double>> gs, xs;
      std::vector<const double*> gp, xp;
      for (int k = 0; k < 5; ++k) {
        gs.push_back(random_vec(rows, rng));
        xs.push_back(random_vec(cols, rng));
      }
      for (int k = 0; k < 5; ++k) {
        gp.push_back(gs[k].data());
        xp.push_back(xs[k].data());
      }
      auto m1 = random_vec(rows * cols, rng), m2 = m1;
      s.outer_acc_sum(gp.data(), xp.data(), gp.size(), m1.data(), rows, cols);
      v.outer_acc_sum(gp.data(), xp.data(), gp.size(), m2.data(), rows, cols);
      check_close(m1, m2, scale);

      const auto z = random_vec(rows * cols, rng, -30.0, 30.0);
      std::vector<double> p1(rows * cols), p2(rows * cols);
      s.col_softmax(z.data(), p1.data(), rows, cols);
      v.col_softmax(z.data(), p2.data(), rows, cols);
      check_close(p1, p2, 1.0);

      const auto gz = random_vec(rows * cols, rng);
      auto b1 = random_vec(rows * cols, rng), b2 = b1;
      s.col_softmax_backward(p1.data(), gz.data(), b1.data(), rows, cols);
      v.col_softmax_backward(p1.data(), gz.data(), b2.data(), rows, cols);
      check_close(b1, b2, scale);
    }
  }
}

TEST_CASE("avx2 vector kernels match on every length") {
  if (!cpu_supports(Isa::Avx2)) return;
  const KernelTable& s = scalar_table();
  const KernelTable& v = *avx2_table();
  std::mt19937_64 rng(5);
  for (std::size_t n = 0; n <= 67; ++n) {
    CAPTURE(n);
    const auto x = random_vec(n, rng);
    const auto y = random_vec(n, rng);
    const double d1 = s.dot(x.data(), y.data(), n);
    const double d2 = v.dot(x.data(), y.data(), n);
    CHECK(std::abs(d1 - d2) <= kTol * std::max(1.0, 4.0 * static_cast<double>(n)));

    auto a1 = y, a2 = y;
    s.axpy(0.75, x.data(), a1.data(), n);
    v.axpy(0.75, x.data(), a2.data(), n);
    check_close(a1, a2, 1.0);
  }
}

TEST_CASE("avx2 exp is accurate across the double range") {
  if (!cpu_supports(Isa::Avx2)) return;
  const KernelTable& v = *avx2_table();
  std::vector<double> x;
  for (double t = -750.0; t <= 712.0; t += 0.37) x.push_back(t);
  x.insert(x.end(), {0.0, -0.0, 1e-300, -1e-300, 708.0, -708.0, 709.7, -745.2,
                     std::numeric_limits<double>::infinity(),
                     -std::numeric_limits<double>::infinity()});
  while (x.size() % 4 != 1) x.push_back(0.5);
  std::vector<double> y(x.size());
  v.exp(x.data(), y.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CAPTURE(x[i]);
    const double ref = std::exp(x[i]);
    if (std::isinf(ref) || ref == 0.0) {
      CHECK(y[i] == ref);
    } else {
      CHECK(std::abs(y[i] - ref) <= 4e-16 * ref);
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double nan_out = 0.0;
  v.exp(&nan, &nan_out, 1);
  CHECK(std::isnan(nan_out));
}

TEST_CASE("column softmax is column-stochastic for extreme logits") {
  for (const KernelTable* t : {&scalar_table(), avx2_table()}) {
    if (t == nullptr || !cpu_supports(t->isa)) continue;
    const std::size_t rows = 6, cols = 9;
    std::vector<double> z(rows * cols), y(rows * cols);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (i % 2 ? 700.0 : -700.0) + double(i);
    t->col_softmax(z.data(), y.data(), rows, cols);
    for (std::size_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows; ++i) {
        CHECK(y[i * cols + j] >= 0.0);
        s += y[i * cols + j];
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
}
