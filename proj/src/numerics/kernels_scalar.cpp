#include "fslstm/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fslstm::kernels {
namespace {

void matvec(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = a + i * cols;
    double acc = 0.0;
    for (std::size_t k = 0; k < cols; ++k) acc += row[k] * x[k];
    y[i] = acc;
  }
}

void matvec_t_acc(const double* a, const double* g, double* dx, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double gi = g[i];
    const double* row = a + i * cols;
    for (std::size_t k = 0; k < cols; ++k) dx[k] += row[k] * gi;
  }
}

void outer_acc(const double* g, const double* x, double* da, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double gi = g[i];
    double* row = da + i * cols;
    for (std::size_t k = 0; k < cols; ++k) row[k] += gi * x[k];
  }
}

void outer_acc_sum(const double* const* g, const double* const* x, std::size_t count, double* da,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t k = 0; k < count; ++k) outer_acc(g[k], x[k], da, rows, cols);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void vexp(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void col_softmax(const double* z, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j) {
    double mx = z[j];
    for (std::size_t i = 1; i < rows; ++i) mx = std::max(mx, z[i * cols + j]);
    double sum = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double e = std::exp(z[i * cols + j] - mx);
      y[i * cols + j] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < rows; ++i) y[i * cols + j] /= sum;
  }
}

void col_softmax_backward(const double* y, const double* g, double* dz, std::size_t rows,
                          std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += y[i * cols + j] * g[i * cols + j];
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t k = i * cols + j;
      dz[k] += y[k] * (g[k] - s);
    }
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::Scalar, matvec, matvec_t_acc,  outer_acc,
                                 outer_acc_sum, axpy, dot, vexp,
                                 col_softmax, col_softmax_backward};
  return table;
}

}  // namespace fslstm::kernels
