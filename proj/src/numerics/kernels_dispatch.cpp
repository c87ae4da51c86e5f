#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "fslstm/numerics/kernels.hpp"

namespace fslstm::kernels {

#ifndef FSLSTM_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

namespace {

const KernelTable* pick_default() {
  if (const char* env = std::getenv("FSLSTM_ISA")) {
    if (std::string(env) == "scalar") return &scalar_table();
  }
  if (cpu_supports(Isa::Avx2)) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{pick_default()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void force(Isa isa) {
  if (!cpu_supports(isa))
    throw std::invalid_argument("kernel ISA not available: " + std::string(name(isa)));
  slot().store(isa == Isa::Scalar ? &scalar_table() : avx2_table(), std::memory_order_release);
}

std::string_view name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace fslstm::kernels
