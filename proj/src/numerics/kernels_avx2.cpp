// AVX2/FMA variants of the kernel table. This translation unit is compiled
// with -mavx2 -mfma and only entered after a runtime CPU check.

#include <immintrin.h>

#include <cmath>
#include <vector>

#include "fslstm/numerics/kernels.hpp"

namespace fslstm::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// exp on [-708, 708] by range reduction x = n ln2 + r, |r| <= ln2/2, and a
// degree-12 Taylor polynomial in r (truncation error below 2e-16 relative).
// Lanes outside that range are recomputed with std::exp so overflow and
// subnormal results match the reference.
inline __m256d exp_pd(__m256d x) {
  const __m256d lim = _mm256_set1_pd(708.0);
  const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  const __m256d out_of_range = _mm256_cmp_pd(_mm256_and_pd(x, abs_mask), lim, _CMP_NLE_UQ);
  if (_mm256_movemask_pd(out_of_range) != 0) {
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, x);
    for (double& v : lanes) v = std::exp(v);
    return _mm256_load_pd(lanes);
  }

  const __m256d fx = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634074)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(fx, _mm256_set1_pd(6.93145751953125E-1), x);
  r = _mm256_fnmadd_pd(fx, _mm256_set1_pd(1.42860682030941723212E-6), r);

  static constexpr double inv_fact[] = {
      1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0, 1.0 / 40320.0,
      1.0 / 5040.0,      1.0 / 720.0,      1.0 / 120.0,     1.0 / 24.0,     1.0 / 6.0,
      0.5,               1.0,              1.0};
  __m256d p = _mm256_set1_pd(inv_fact[0]);
  for (int j = 1; j < 13; ++j) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(inv_fact[j]));

  __m256i n = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(fx));
  n = _mm256_slli_epi64(_mm256_add_epi64(n, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(n));
}

inline __m256i tail_mask(std::size_t tail) {
  return _mm256_setr_epi64x(tail > 0 ? -1 : 0, tail > 1 ? -1 : 0, tail > 2 ? -1 : 0, 0);
}

// Loads block b of a short row; the last block may be partial.
template <int NB>
inline __m256d load_block(const double* p, int b, std::size_t tail, __m256i mask) {
  if (b == NB - 1 && tail != 0) return _mm256_maskload_pd(p + 4 * b, mask);
  return _mm256_loadu_pd(p + 4 * b);
}

template <int NB>
inline void store_block(double* p, int b, std::size_t tail, __m256i mask, __m256d v) {
  if (b == NB - 1 && tail != 0)
    _mm256_maskstore_pd(p + 4 * b, mask, v);
  else
    _mm256_storeu_pd(p + 4 * b, v);
}

void matvec(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols) {
  if (cols == 1) {
    const __m256d xv = _mm256_set1_pd(x[0]);
    std::size_t i = 0;
    for (; i + 4 <= rows; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), xv));
    for (; i < rows; ++i) y[i] = a[i] * x[0];
    return;
  }
  const std::size_t vec_cols = cols & ~std::size_t{3};
  const std::size_t tail = cols - vec_cols;
  const __m256i mask = tail_mask(tail);
  const __m256d xt = tail ? _mm256_maskload_pd(x + vec_cols, mask) : _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= rows; i += 4) {
    const double* r0 = a + i * cols;
    const double* r1 = r0 + cols;
    const double* r2 = r1 + cols;
    const double* r3 = r2 + cols;
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    for (std::size_t k = 0; k < vec_cols; k += 4) {
      const __m256d xv = _mm256_loadu_pd(x + k);
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(r0 + k), xv, acc0);
      acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(r1 + k), xv, acc1);
      acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(r2 + k), xv, acc2);
      acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(r3 + k), xv, acc3);
    }
    if (tail) {
      acc0 = _mm256_fmadd_pd(_mm256_maskload_pd(r0 + vec_cols, mask), xt, acc0);
      acc1 = _mm256_fmadd_pd(_mm256_maskload_pd(r1 + vec_cols, mask), xt, acc1);
      acc2 = _mm256_fmadd_pd(_mm256_maskload_pd(r2 + vec_cols, mask), xt, acc2);
      acc3 = _mm256_fmadd_pd(_mm256_maskload_pd(r3 + vec_cols, mask), xt, acc3);
    }
    const __m256d s01 = _mm256_hadd_pd(acc0, acc1);
    const __m256d s23 = _mm256_hadd_pd(acc2, acc3);
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_permute2f128_pd(s01, s23, 0x20),
                                          _mm256_permute2f128_pd(s01, s23, 0x31)));
  }
  for (; i < rows; ++i) {
    const double* row = a + i * cols;
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t k = 0; k < vec_cols; k += 4)
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(row + k), _mm256_loadu_pd(x + k), acc);
    if (tail) acc = _mm256_fmadd_pd(_mm256_maskload_pd(row + vec_cols, mask), xt, acc);
    y[i] = hsum(acc);
  }
}

double dot(const double* a, const double* b, std::size_t n);

// Short rows: the whole accumulator lives in registers, two row phases keep
// independent FMA chains in flight.
template <int NB>
void matvec_t_acc_short(const double* a, const double* g, double* dx, std::size_t rows,
                        std::size_t cols) {
  const std::size_t tail = cols % 4;
  const __m256i mask = tail_mask(tail);
  __m256d even[NB], odd[NB];
  for (int b = 0; b < NB; ++b) even[b] = odd[b] = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= rows; i += 2) {
    const __m256d g0 = _mm256_broadcast_sd(g + i);
    const __m256d g1 = _mm256_broadcast_sd(g + i + 1);
    const double* r0 = a + i * cols;
    const double* r1 = r0 + cols;
    for (int b = 0; b < NB; ++b) {
      even[b] = _mm256_fmadd_pd(load_block<NB>(r0, b, tail, mask), g0, even[b]);
      odd[b] = _mm256_fmadd_pd(load_block<NB>(r1, b, tail, mask), g1, odd[b]);
    }
  }
  if (i < rows) {
    const __m256d g0 = _mm256_broadcast_sd(g + i);
    for (int b = 0; b < NB; ++b)
      even[b] = _mm256_fmadd_pd(load_block<NB>(a + i * cols, b, tail, mask), g0, even[b]);
  }
  for (int b = 0; b < NB; ++b)
    store_block<NB>(dx, b, tail, mask,
                    _mm256_add_pd(load_block<NB>(dx, b, tail, mask), _mm256_add_pd(even[b], odd[b])));
}

void matvec_t_acc(const double* a, const double* g, double* dx, std::size_t rows,
                  std::size_t cols) {
  switch ((cols + 3) / 4) {
    case 0:
      return;
    case 1:
      if (cols == 1) {
        dx[0] += dot(a, g, rows);
        return;
      }
      return matvec_t_acc_short<1>(a, g, dx, rows, cols);
    case 2:
      return matvec_t_acc_short<2>(a, g, dx, rows, cols);
    case 3:
      return matvec_t_acc_short<3>(a, g, dx, rows, cols);
    case 4:
      return matvec_t_acc_short<4>(a, g, dx, rows, cols);
    default:
      break;
  }
  // Wide rows: 16-column blocks streamed over all rows.
  const std::size_t vec_cols = cols & ~std::size_t{3};
  std::size_t k0 = 0;
  for (; k0 + 16 <= vec_cols; k0 += 16) {
    __m256d d0 = _mm256_loadu_pd(dx + k0);
    __m256d d1 = _mm256_loadu_pd(dx + k0 + 4);
    __m256d d2 = _mm256_loadu_pd(dx + k0 + 8);
    __m256d d3 = _mm256_loadu_pd(dx + k0 + 12);
    for (std::size_t i = 0; i < rows; ++i) {
      const __m256d gi = _mm256_broadcast_sd(g + i);
      const double* row = a + i * cols + k0;
      d0 = _mm256_fmadd_pd(_mm256_loadu_pd(row), gi, d0);
      d1 = _mm256_fmadd_pd(_mm256_loadu_pd(row + 4), gi, d1);
      d2 = _mm256_fmadd_pd(_mm256_loadu_pd(row + 8), gi, d2);
      d3 = _mm256_fmadd_pd(_mm256_loadu_pd(row + 12), gi, d3);
    }
    _mm256_storeu_pd(dx + k0, d0);
    _mm256_storeu_pd(dx + k0 + 4, d1);
    _mm256_storeu_pd(dx + k0 + 8, d2);
    _mm256_storeu_pd(dx + k0 + 12, d3);
  }
  for (; k0 < vec_cols; k0 += 4) {
    __m256d d0 = _mm256_loadu_pd(dx + k0);
    for (std::size_t i = 0; i < rows; ++i)
      d0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i * cols + k0), _mm256_broadcast_sd(g + i), d0);
    _mm256_storeu_pd(dx + k0, d0);
  }
  for (std::size_t k = vec_cols; k < cols; ++k) {
    double s = dx[k];
    for (std::size_t i = 0; i < rows; ++i) s += a[i * cols + k] * g[i];
    dx[k] = s;
  }
}

void axpy(double alpha, const double* x, double* y, std::size_t n);

template <int NB>
void outer_acc_short(const double* g, const double* x, double* da, std::size_t rows,
                     std::size_t cols) {
  const std::size_t tail = cols % 4;
  const __m256i mask = tail_mask(tail);
  __m256d xv[NB];
  for (int b = 0; b < NB; ++b) xv[b] = load_block<NB>(x, b, tail, mask);
  for (std::size_t i = 0; i < rows; ++i) {
    const __m256d gi = _mm256_broadcast_sd(g + i);
    double* row = da + i * cols;
    for (int b = 0; b < NB; ++b)
      store_block<NB>(row, b, tail, mask,
                      _mm256_fmadd_pd(gi, xv[b], load_block<NB>(row, b, tail, mask)));
  }
}

// R rows of dA are held in registers while every (g, x) pair streams past,
// so dA itself is read and written once.
template <int NB, int R>
void outer_acc_sum_short(const double* const* g, const double* const* x, std::size_t count,
                         double* da, std::size_t rows, std::size_t cols) {
  const std::size_t tail = cols % 4;
  const __m256i mask = tail_mask(tail);
  std::size_t i = 0;
  for (; i + R <= rows; i += R) {
    __m256d acc[R][NB];
    for (int r = 0; r < R; ++r)
      for (int b = 0; b < NB; ++b) acc[r][b] = _mm256_setzero_pd();
    for (std::size_t k = 0; k < count; ++k) {
      __m256d xv[NB];
      for (int b = 0; b < NB; ++b) xv[b] = load_block<NB>(x[k], b, tail, mask);
      const double* gk = g[k] + i;
      for (int r = 0; r < R; ++r) {
        const __m256d gr = _mm256_broadcast_sd(gk + r);
        for (int b = 0; b < NB; ++b) acc[r][b] = _mm256_fmadd_pd(gr, xv[b], acc[r][b]);
      }
    }
    for (int r = 0; r < R; ++r) {
      double* row = da + (i + r) * cols;
      for (int b = 0; b < NB; ++b)
        store_block<NB>(row, b, tail, mask,
                        _mm256_add_pd(load_block<NB>(row, b, tail, mask), acc[r][b]));
    }
  }
  if (i < rows) {
    for (std::size_t k = 0; k < count; ++k)
      outer_acc_short<NB>(g[k] + i, x[k], da + i * cols, rows - i, cols);
  }
}

void outer_acc(const double* g, const double* x, double* da, std::size_t rows, std::size_t cols);

void outer_acc_sum(const double* const* g, const double* const* x, std::size_t count, double* da,
                   std::size_t rows, std::size_t cols) {
  switch ((cols + 3) / 4) {
    case 1:
      if (cols > 1) return outer_acc_sum_short<1, 4>(g, x, count, da, rows, cols);
      break;
    case 2:
      return outer_acc_sum_short<2, 4>(g, x, count, da, rows, cols);
    case 3:
      return outer_acc_sum_short<3, 4>(g, x, count, da, rows, cols);
    case 4:
      return outer_acc_sum_short<4, 2>(g, x, count, da, rows, cols);
    default:
      break;
  }
  for (std::size_t k = 0; k < count; ++k) outer_acc(g[k], x[k], da, rows, cols);
}

void outer_acc(const double* g, const double* x, double* da, std::size_t rows, std::size_t cols) {
  switch ((cols + 3) / 4) {
    case 0:
      return;
    case 1:
      if (cols == 1) return axpy(x[0], g, da, rows);
      return outer_acc_short<1>(g, x, da, rows, cols);
    case 2:
      return outer_acc_short<2>(g, x, da, rows, cols);
    case 3:
      return outer_acc_short<3>(g, x, da, rows, cols);
    case 4:
      return outer_acc_short<4>(g, x, da, rows, cols);
    default:
      break;
  }
  for (std::size_t i = 0; i < rows; ++i) axpy(g[i], x, da + i * cols, cols);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void vexp(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, exp_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = std::exp(x[i]);
}

// Vectorised across columns: each pass walks the rows contiguously.
void col_softmax(const double* z, double* y, std::size_t rows, std::size_t cols) {
  thread_local std::vector<double> scratch;
  scratch.assign(cols, 0.0);
  double* colmax = scratch.data();
  const std::size_t vec_cols = cols & ~std::size_t{3};

  for (std::size_t j = 0; j < cols; ++j) colmax[j] = z[j];
  for (std::size_t i = 1; i < rows; ++i) {
    const double* row = z + i * cols;
    std::size_t j = 0;
    for (; j < vec_cols; j += 4)
      _mm256_storeu_pd(colmax + j, _mm256_max_pd(_mm256_loadu_pd(colmax + j),
                                                 _mm256_loadu_pd(row + j)));
    for (; j < cols; ++j) colmax[j] = colmax[j] < row[j] ? row[j] : colmax[j];
  }

  thread_local std::vector<double> sums;
  sums.assign(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* zr = z + i * cols;
    double* yr = y + i * cols;
    std::size_t j = 0;
    for (; j < vec_cols; j += 4) {
      const __m256d e =
          exp_pd(_mm256_sub_pd(_mm256_loadu_pd(zr + j), _mm256_loadu_pd(colmax + j)));
      _mm256_storeu_pd(yr + j, e);
      _mm256_storeu_pd(sums.data() + j, _mm256_add_pd(_mm256_loadu_pd(sums.data() + j), e));
    }
    for (; j < cols; ++j) {
      const double e = std::exp(zr[j] - colmax[j]);
      yr[j] = e;
      sums[j] += e;
    }
  }

  for (std::size_t j = 0; j < cols; ++j) sums[j] = 1.0 / sums[j];
  for (std::size_t i = 0; i < rows; ++i) {
    double* yr = y + i * cols;
    std::size_t j = 0;
    for (; j < vec_cols; j += 4)
      _mm256_storeu_pd(yr + j,
                       _mm256_mul_pd(_mm256_loadu_pd(yr + j), _mm256_loadu_pd(sums.data() + j)));
    for (; j < cols; ++j) yr[j] *= sums[j];
  }
}

void col_softmax_backward(const double* y, const double* g, double* dz, std::size_t rows,
                          std::size_t cols) {
  thread_local std::vector<double> s;
  s.assign(cols, 0.0);
  const std::size_t vec_cols = cols & ~std::size_t{3};
  for (std::size_t i = 0; i < rows; ++i) {
    const double* yr = y + i * cols;
    const double* gr = g + i * cols;
    std::size_t j = 0;
    for (; j < vec_cols; j += 4)
      _mm256_storeu_pd(s.data() + j, _mm256_fmadd_pd(_mm256_loadu_pd(yr + j),
                                                      _mm256_loadu_pd(gr + j),
                                                      _mm256_loadu_pd(s.data() + j)));
    for (; j < cols; ++j) s[j] += yr[j] * gr[j];
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const double* yr = y + i * cols;
    const double* gr = g + i * cols;
    double* dr = dz + i * cols;
    std::size_t j = 0;
    for (; j < vec_cols; j += 4) {
      const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(gr + j), _mm256_loadu_pd(s.data() + j));
      _mm256_storeu_pd(dr + j,
                       _mm256_fmadd_pd(_mm256_loadu_pd(yr + j), diff, _mm256_loadu_pd(dr + j)));
    }
    for (; j < cols; ++j) dr[j] += yr[j] * (gr[j] - s[j]);
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::Avx2,   matvec, matvec_t_acc, outer_acc,
                                 outer_acc_sum, axpy, dot, vexp,
                                 col_softmax, col_softmax_backward};
  return &table;
}

}  // namespace fslstm::kernels
