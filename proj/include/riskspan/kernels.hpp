#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense double-precision primitives behind the encoder and heads.
//
// Every kernel has a scalar reference in `riskspan::kernels::scalar` and, on
// x86-64, an AVX2+FMA variant in `riskspan::kernels::avx2` compiled with a
// per-function target attribute. The free functions in `riskspan::kernels`
// dispatch through a table chosen once at startup from CPUID; `force_isa`
// pins a specific table (tests and the CLI `--kernels` flag use it).
//
// Variants are numerically equivalent up to summation order and fused
// multiply-add rounding; they are not bit-identical to each other.

namespace riskspan::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

/// Best ISA supported by this CPU and build.
Isa detect_isa();
bool isa_available(Isa isa);
/// Currently active table.
Isa active_isa();
/// Pins the dispatch table. Throws riskspan::Error if unavailable.
void force_isa(Isa isa);

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// y = W^T x for row-major W [rows x cols]; x has `rows`, y has `cols` entries.
  void (*gemv_t)(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols);
  /// y = W x for row-major W [rows x cols]; x has `cols`, y has `rows` entries.
  void (*gemv)(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols);
  /// W += x y^T, W [rows x cols] row-major.
  void (*ger)(const double* x, const double* y, double* w, std::size_t rows, std::size_t cols);
  double (*sum_squares)(const double* a, std::size_t n);
};

const KernelTable& table_for(Isa isa);
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline double sum_squares(std::span<const double> a) {
  return active().sum_squares(a.data(), a.size());
}

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemv_t(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols);
void gemv(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols);
void ger(const double* x, const double* y, double* w, std::size_t rows, std::size_t cols);
double sum_squares(const double* a, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define RISKSPAN_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemv_t(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols);
void gemv(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols);
void ger(const double* x, const double* y, double* w, std::size_t rows, std::size_t cols);
double sum_squares(const double* a, std::size_t n);
}  // namespace avx2
#else
#define RISKSPAN_HAVE_AVX2_KERNELS 0
#endif

}  // namespace riskspan::kernels
