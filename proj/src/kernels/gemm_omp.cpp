#include "unimul/kernels.hpp"

#include "unimul/errors.hpp"

#include <fmt/format.h>
#include <omp.h>

namespace unimul {

namespace kernels {

void gemm_omp(ConstView a, ConstView b, MutView c) {
  const auto rows = static_cast<std::ptrdiff_t>(c.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double *crow = c.data + i * c.ld;
    const double *arow = a.data + i * a.ld;
    for (std::size_t l = 0; l < a.cols; ++l) {
      const double ail = arow[l];
      const double *brow = b.data + l * b.ld;
#pragma omp simd
      for (std::size_t j = 0; j < c.cols; ++j) {
        crow[j] += ail * brow[j];
      }
    }
  }
}

} // namespace kernels

std::uint64_t local_gemm(ConstView a, ConstView b, MutView c) {
  if (a.rows != c.rows || b.cols != c.cols || a.cols != b.rows) {
    throw ContractError(fmt::format(
        "local gemm dims do not conform: a {}x{}, b {}x{}, c {}x{}", a.rows,
        a.cols, b.rows, b.cols, c.rows, c.cols));
  }
  const std::uint64_t mac =
      static_cast<std::uint64_t>(c.rows) * a.cols * c.cols;
  if (mac >= kParallelGemmThreshold && !omp_in_parallel()) {
    kernels::gemm_omp(a, b, c);
  } else {
    kernels::gemm_serial(a, b, c);
  }
  return 2 * mac;
}

} // namespace unimul
