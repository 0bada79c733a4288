#pragma once

// Index arithmetic for tiled matrices: tile grids, tile bounds, overlap
// queries and tile-to-process ownership. Everything here is a pure function
// of its arguments. Indices are global, zero-based and row-major.

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

namespace unimul {

using Rank = std::size_t;

struct Shape2D {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const Shape2D &, const Shape2D &) = default;
};

// Half-open index interval [lo, hi).
struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;

  std::size_t size() const { return hi - lo; }
  bool empty() const { return hi == lo; }
  bool contains(const Range &other) const {
    return lo <= other.lo && other.hi <= hi;
  }
  friend bool operator==(const Range &, const Range &) = default;
};

struct Bounds2D {
  Range rows;
  Range cols;

  Shape2D shape() const { return {rows.size(), cols.size()}; }
  bool empty() const { return rows.empty() || cols.empty(); }
  bool contains(const Bounds2D &other) const {
    return rows.contains(other.rows) && cols.contains(other.cols);
  }
  friend bool operator==(const Bounds2D &, const Bounds2D &) = default;
};

struct TileIdx {
  std::size_t i = 0;
  std::size_t j = 0;

  friend bool operator==(const TileIdx &, const TileIdx &) = default;
  friend auto operator<=>(const TileIdx &, const TileIdx &) = default;
};

struct GridShape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool contains(TileIdx t) const { return t.i < rows && t.j < cols; }
  friend bool operator==(const GridShape &, const GridShape &) = default;
};

enum class Mapping { Block, BlockCyclic };

// Tile shape + process grid + mapping rule for one replica of a matrix,
// following ScaLAPACK's conventions. Edge tiles are clipped, never padded.
class PartitionSpec {
public:
  PartitionSpec(Shape2D tile_shape, Shape2D proc_grid,
                Mapping mapping = Mapping::Block);

  // Row block over p processes: tiles of ceil(m/p) full rows.
  static PartitionSpec row_block(Shape2D global, std::size_t nprocs);
  // Column block over p processes: tiles of ceil(n/p) full columns.
  static PartitionSpec col_block(Shape2D global, std::size_t nprocs);
  // 2D block over the most-square process grid (see factor_grid).
  static PartitionSpec block_2d(Shape2D global, std::size_t nprocs);

  Shape2D tile_shape() const { return tile_shape_; }
  Shape2D proc_grid() const { return proc_grid_; }
  Mapping mapping() const { return mapping_; }
  std::size_t nprocs() const { return proc_grid_.rows * proc_grid_.cols; }

  friend bool operator==(const PartitionSpec &,
                         const PartitionSpec &) = default;

private:
  Shape2D tile_shape_;
  Shape2D proc_grid_;
  Mapping mapping_;
};

// Most-square factorization rows x cols of p with rows <= cols.
Shape2D factor_grid(std::size_t nprocs);

GridShape grid_shape(const PartitionSpec &part, Shape2D global);

Bounds2D tile_bounds(const PartitionSpec &part, Shape2D global, TileIdx t);

// Tiles whose bounds intersect `slice` with nonzero area, row-major order.
std::vector<TileIdx> overlapping_tiles(const PartitionSpec &part,
                                       Shape2D global, const Bounds2D &slice);

// Empty intersections collapse to [max(lo), max(lo)).
Range intersect(const Range &a, const Range &b);
Bounds2D intersect(const Bounds2D &a, const Bounds2D &b);

Rank owner_of(const PartitionSpec &part, GridShape grid, TileIdx t,
              std::size_t nprocs_in_replica);

std::string to_string(const Range &r);
std::string to_string(TileIdx t);
std::ostream &operator<<(std::ostream &os, const Range &r);
std::ostream &operator<<(std::ostream &os, TileIdx t);
std::ostream &operator<<(std::ostream &os, const Bounds2D &b);

inline std::size_t ceil_div(std::size_t a, std::size_t b) {
  return (a + b - 1) / b;
}

} // namespace unimul
