#include "riskspan/kernels.hpp"

namespace riskspan::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_t(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j) y[j] = 0.0;
  for (std::size_t i = 0; i < rows; ++i) axpy(x[i], w + i * cols, y, cols);
}

void gemv(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = dot(w + i * cols, x, cols);
}

void ger(const double* x, const double* y, double* w, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) axpy(x[i], y, w + i * cols, cols);
}

double sum_squares(const double* a, std::size_t n) { return dot(a, a, n); }

}  // namespace riskspan::kernels::scalar
