#include "unimul/kernels.hpp"

namespace unimul::kernels {

void gemm_serial(ConstView a, ConstView b, MutView c) {
  for (std::size_t i = 0; i < c.rows; ++i) {
    double *crow = c.data + i * c.ld;
    const double *arow = a.data + i * a.ld;
    for (std::size_t l = 0; l < a.cols; ++l) {
      const double ail = arow[l];
      const double *brow = b.data + l * b.ld;
      for (std::size_t j = 0; j < c.cols; ++j) {
        crow[j] += ail * brow[j];
      }
    }
  }
}

} // namespace unimul::kernels
