#include <atomic>

#include "riskspan/error.hpp"
#include "riskspan/kernels.hpp"

namespace riskspan::kernels {

namespace {

constexpr KernelTable kScalar = {scalar::dot, scalar::axpy, scalar::gemv_t,
                                 scalar::gemv, scalar::ger, scalar::sum_squares};
#if RISKSPAN_HAVE_AVX2_KERNELS
constexpr KernelTable kAvx2 = {avx2::dot, avx2::axpy, avx2::gemv_t,
                               avx2::gemv, avx2::ger, avx2::sum_squares};
#endif

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if RISKSPAN_HAVE_AVX2_KERNELS
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa detect_isa() { return isa_available(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar; }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw Error(ErrorCode::InvalidArgument, std::string("kernel set '") + std::string(isa_name(isa)) +
                                                "' is not supported on this CPU");
  }
  current().store(isa, std::memory_order_relaxed);
}

const KernelTable& table_for(Isa isa) {
#if RISKSPAN_HAVE_AVX2_KERNELS
  if (isa == Isa::Avx2) return kAvx2;
#endif
  (void)isa;
  return kScalar;
}

const KernelTable& active() { return table_for(active_isa()); }

}  // namespace riskspan::kernels
