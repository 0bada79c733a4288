#pragma once

// Local GEMM kernels: c += a * b over row-major strided views.
//
// gemm_serial is the reference. gemm_omp splits the rows of c across
// OpenMP threads; every element is summed over l in the same order as the
// serial kernel, so both produce bit-identical results.

#include "unimul/dense.hpp"

#include <cstdint>

namespace unimul {

namespace kernels {

void gemm_serial(ConstView a, ConstView b, MutView c);
void gemm_omp(ConstView a, ConstView b, MutView c);

} // namespace kernels

// Below this many multiply-adds the OpenMP kernel is not worth a fork.
inline constexpr std::uint64_t kParallelGemmThreshold = 1u << 15;

// c += a * b. Throws ContractError on mismatched dimensions. Returns the
// flops performed (2 m k n) for the caller to charge to its counters.
std::uint64_t local_gemm(ConstView a, ConstView b, MutView c);

} // namespace unimul
