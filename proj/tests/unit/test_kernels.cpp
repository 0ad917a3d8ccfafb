#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "riskspan/kernels.hpp"

using namespace riskspan;
using kernels::Isa;

namespace {

std::vector<double> random_vec(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(gen);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= 1e-12 * (1.0 + std::abs(a[i])));
  }
}

// Lengths straddle the 4-wide vector width and its remainders.
const std::size_t kLengths[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 32, 33, 64, 65, 130};

}  // namespace

TEST_CASE("scalar kernels match naive loops exactly") {
  std::mt19937_64 gen(1);
  const auto& s = kernels::table_for(Isa::Scalar);
  for (std::size_t n : kLengths) {
    const auto a = random_vec(gen, n), b = random_vec(gen, n);
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += a[i] * b[i];
    CHECK(s.dot(a.data(), b.data(), n) == dot);
    CHECK(s.sum_squares(a.data(), n) == s.dot(a.data(), a.data(), n));
    auto y = b;
    s.axpy(0.5, a.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == b[i] + 0.5 * a[i]);
  }
}

TEST_CASE("scalar matrix kernels follow their row-major contracts") {
  std::mt19937_64 gen(2);
  const auto& s = kernels::table_for(Isa::Scalar);
  const std::size_t rows = 5, cols = 7;
  const auto w = random_vec(gen, rows * cols);
  const auto xr = random_vec(gen, rows), xc = random_vec(gen, cols);

  std::vector<double> yt(cols, 99.0), y(rows, 99.0);
  s.gemv_t(w.data(), xr.data(), yt.data(), rows, cols);
  s.gemv(w.data(), xc.data(), y.data(), rows, cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += w[i * cols + j] * xr[i];
    CHECK(yt[j] == doctest::Approx(acc).epsilon(1e-14));
  }
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += w[i * cols + j] * xc[j];
    CHECK(y[i] == doctest::Approx(acc).epsilon(1e-14));
  }
  auto g = w;
  s.ger(xr.data(), xc.data(), g.data(), rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) CHECK(g[i * cols + j] == w[i * cols + j] + xr[i] * xc[j]);
  }
}

TEST_CASE("avx2 kernels agree with scalar kernels") {
  if (!kernels::isa_available(Isa::Avx2)) {
    MESSAGE("avx2 unavailable on this CPU; equivalence not exercised");
    CHECK_THROWS(kernels::force_isa(Isa::Avx2));
    return;
  }
  std::mt19937_64 gen(3);
  const auto& s = kernels::table_for(Isa::Scalar);
  const auto& v = kernels::table_for(Isa::Avx2);
  for (std::size_t n : kLengths) {
    const auto a = random_vec(gen, n), b = random_vec(gen, n);
    const double ds = s.dot(a.data(), b.data(), n), dv = v.dot(a.data(), b.data(), n);
    CHECK(std::abs(ds - dv) <= 1e-12 * (1.0 + std::abs(ds)));
    const double ss = s.sum_squares(a.data(), n), sv = v.sum_squares(a.data(), n);
    CHECK(std::abs(ss - sv) <= 1e-12 * (1.0 + ss));
    auto ys = b, yv = b;
    s.axpy(-1.25, a.data(), ys.data(), n);
    v.axpy(-1.25, a.data(), yv.data(), n);
    check_close(ys, yv);
  }
  for (std::size_t rows : {1u, 3u, 8u, 13u}) {
    for (std::size_t cols : {1u, 4u, 6u, 17u, 64u}) {
      const auto w = random_vec(gen, rows * cols);
      const auto xr = random_vec(gen, rows), xc = random_vec(gen, cols);
      std::vector<double> a(cols), b(cols);
      s.gemv_t(w.data(), xr.data(), a.data(), rows, cols);
      v.gemv_t(w.data(), xr.data(), b.data(), rows, cols);
      check_close(a, b);
      std::vector<double> c(rows), e(rows);
      s.gemv(w.data(), xc.data(), c.data(), rows, cols);
      v.gemv(w.data(), xc.data(), e.data(), rows, cols);
      check_close(c, e);
      auto gs = w, gv = w;
      s.ger(xr.data(), xc.data(), gs.data(), rows, cols);
      v.ger(xr.data(), xc.data(), gv.data(), rows, cols);
      check_close(gs, gv);
    }
  }
}

TEST_CASE("dispatch selects and restores kernel sets") {
  const Isa original = kernels::active_isa();
  kernels::force_isa(Isa::Scalar);
  CHECK(kernels::active_isa() == Isa::Scalar);
  CHECK(&kernels::active() == &kernels::table_for(Isa::Scalar));
  CHECK(kernels::isa_name(Isa::Scalar) == "scalar");
  CHECK(kernels::isa_name(Isa::Avx2) == "avx2");
  kernels::force_isa(original);
  CHECK(kernels::active_isa() == original);
  CHECK(kernels::detect_isa() == (kernels::isa_available(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar));
}
