#pragma once

// Dense inner-loop kernels used by the tape. Every kernel has a scalar
// reference implementation; when the CPU supports it an AVX2/FMA variant is
// selected at runtime. The variants are equivalence-tested against the
// scalar table, not required to be bit-identical to it.

#include <cstddef>
#include <string_view>

namespace fslstm::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;

  /// y = A x, A row-major rows x cols.
  void (*matvec)(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols);
  /// dx += A^T g.
  void (*matvec_t_acc)(const double* a, const double* g, double* dx, std::size_t rows,
                       std::size_t cols);
  /// dA += g x^T.
  void (*outer_acc)(const double* g, const double* x, double* da, std::size_t rows,
                    std::size_t cols);
  /// dA += sum_k g[k] x[k]^T over `count` pairs.
  void (*outer_acc_sum)(const double* const* g, const double* const* x, std::size_t count,
                        double* da, std::size_t rows, std::size_t cols);
  /// y += alpha x.
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y = exp(x), elementwise.
  void (*exp)(const double* x, double* y, std::size_t n);
  /// Softmax down every column of a rows x cols matrix (max-subtracted).
  void (*col_softmax)(const double* z, double* y, std::size_t rows, std::size_t cols);
  /// dz += y * (g - colsum(y * g)); the adjoint of col_softmax.
  void (*col_softmax_backward)(const double* y, const double* g, double* dz, std::size_t rows,
                               std::size_t cols);
};

const KernelTable& scalar_table();

/// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

/// The table in use. Chosen on first call: the best supported ISA, unless the
/// environment variable FSLSTM_ISA=scalar forces the reference kernels.
const KernelTable& active();

/// Pin the active table. Throws std::invalid_argument if the ISA is unavailable.
void force(Isa isa);

std::string_view name(Isa isa);

}  // namespace fslstm::kernels
