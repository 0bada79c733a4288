#include "unimul/dense.hpp"

#include "unimul/errors.hpp"

#include <cmath>
#include <fmt/format.h>

namespace unimul {

double relative_frobenius_error(const DenseMatrix &x, const DenseMatrix &ref) {
  if (x.shape() != ref.shape()) {
    throw ContractError("error norm of matrices with different shapes");
  }
  double diff = 0.0;
  double norm = 0.0;
  auto xs = x.data();
  auto rs = ref.data();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double d = xs[i] - rs[i];
    diff += d * d;
    norm += rs[i] * rs[i];
  }
  if (norm == 0.0) {
    return std::sqrt(diff);
  }
  return std::sqrt(diff / norm);
}

DenseMatrix reference_multiply(const DenseMatrix &a, const DenseMatrix &b) {
  if (a.cols() != b.rows()) {
    throw ContractError(fmt::format("cannot multiply {}x{} by {}x{}", a.rows(),
                                    a.cols(), b.rows(), b.cols()));
  }
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double sum = 0.0;
      for (std::size_t l = 0; l < a.cols(); ++l) {
        sum += a(i, l) * b(l, j);
      }
      c(i, j) = sum;
    }
  }
  return c;
}

} // namespace unimul
