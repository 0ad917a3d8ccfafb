#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace riskspan {

/// Row-major dense array of doubles, rank 1 or 2.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::size_t n) : shape{n}, data(n, 0.0) {}
  Tensor(std::size_t rows, std::size_t cols) : shape{rows, cols}, data(rows * cols, 0.0) {}

  bool empty() const { return data.empty(); }
  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  std::span<double> row(std::size_t r) {
    assert(r < rows());
    return {data.data() + r * cols(), cols()};
  }
  std::span<const double> row(std::size_t r) const {
    assert(r < rows());
    return {data.data() + r * cols(), cols()};
  }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  Tensor zeros_like() const {
    Tensor t;
    t.shape = shape;
    t.data.assign(data.size(), 0.0);
    return t;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace riskspan
