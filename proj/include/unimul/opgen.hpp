#pragma once

// Slicing-based generation of each rank's local multiply ops.
//
// For the chosen stationary operand, a rank walks the tiles of that operand
// it owns in its own replica, finds the overlapping tiles of the other two
// operands with overlapping_tiles(), and intersects tile bounds to get the
// exact m/k/n slices to multiply. Tiles need not align. Moving operands are
// always read from (or accumulated into) the caller's own replica, so ops
// carry no replica indices.

#include "unimul/distmatrix.hpp"
#include "unimul/tiling.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace unimul {

enum class Stationarity { A, B, C };

std::string_view to_string(Stationarity s);

// C[m, n] += A[m, k] * B[k, n] over slices of one tile of each operand.
struct LocalMatMulOp {
  TileIdx a;
  TileIdx b;
  TileIdx c;
  Range m;
  Range k;
  Range n;
  // Slices in tile-local coordinates.
  Bounds2D a_local;
  Bounds2D b_local;
  Bounds2D c_local;

  std::uint64_t flops() const { return 2ull * m.size() * k.size() * n.size(); }
  friend bool operator==(const LocalMatMulOp &, const LocalMatMulOp &) = default;
};

struct Operands {
  const MatrixLayout &a;
  const MatrixLayout &b;
  const MatrixLayout &c;
};

// Throws ConfigError unless A is m x k, B is k x n, C is m x n and all three
// live on the same number of ranks.
void check_conforming(const Operands &ops);

std::vector<LocalMatMulOp> generate_stationary_c(const Operands &ops,
                                                 Rank caller);
std::vector<LocalMatMulOp> generate_stationary_b(const Operands &ops,
                                                 Rank caller);
std::vector<LocalMatMulOp> generate_stationary_a(const Operands &ops,
                                                 Rank caller);
std::vector<LocalMatMulOp> generate_ops(Stationarity s, const Operands &ops,
                                        Rank caller);

// Chunk `replica` of `inner` when it is split into `replication` contiguous
// chunks of floor(size / c) elements, the remainder going to the last one.
Range restrict_for_replication(Range inner, std::size_t replication,
                               std::size_t replica);

// Shift `global` into the coordinates of the tile covering `tile`.
Bounds2D global_to_local(const Bounds2D &global, const Bounds2D &tile);

// `a=(i,j) b=(i,j) c=(i,j) m=[lo,hi) k=[lo,hi) n=[lo,hi)`
std::string format_op(const LocalMatMulOp &op);

} // namespace unimul
