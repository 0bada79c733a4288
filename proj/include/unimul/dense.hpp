#pragma once

#include "unimul/tiling.hpp"

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace unimul {

// Non-owning row-major 2D view with a leading dimension.
template <typename T> struct MatrixView {
  T *data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t ld = 0;

  T &operator()(std::size_t r, std::size_t c) const {
    assert(r < rows && c < cols);
    return data[r * ld + c];
  }

  // Sub-block [rows.lo, rows.hi) x [cols.lo, cols.hi) in view coordinates.
  MatrixView sub(const Bounds2D &b) const {
    assert(b.rows.hi <= rows && b.cols.hi <= cols);
    return {data + b.rows.lo * ld + b.cols.lo, b.rows.size(), b.cols.size(),
            ld};
  }

  operator MatrixView<const T>() const { return {data, rows, cols, ld}; }
};

using ConstView = MatrixView<const double>;
using MutView = MatrixView<double>;

inline MutView make_view(std::span<double> data, Shape2D shape) {
  assert(data.size() >= shape.size());
  return {data.data(), shape.rows, shape.cols, shape.cols};
}

inline ConstView make_view(std::span<const double> data, Shape2D shape) {
  assert(data.size() >= shape.size());
  return {data.data(), shape.rows, shape.cols, shape.cols};
}

class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Shape2D shape() const { return {rows_, cols_}; }

  double &operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  MutView view() { return {data_.data(), rows_, cols_, cols_}; }
  ConstView view() const { return {data_.data(), rows_, cols_, cols_}; }

  friend bool operator==(const DenseMatrix &, const DenseMatrix &) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ||x - ref||_F / ||ref||_F, falling back to the absolute norm when ref = 0.
double relative_frobenius_error(const DenseMatrix &x, const DenseMatrix &ref);

// Serial i-l-j triple loop, C = A * B. Used as the verification oracle.
DenseMatrix reference_multiply(const DenseMatrix &a, const DenseMatrix &b);

} // namespace unimul
