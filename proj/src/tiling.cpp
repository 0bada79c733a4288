#include "unimul/tiling.hpp"

#include "unimul/errors.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace unimul {

PartitionSpec::PartitionSpec(Shape2D tile_shape, Shape2D proc_grid,
                             Mapping mapping)
    : tile_shape_(tile_shape), proc_grid_(proc_grid), mapping_(mapping) {
  if (tile_shape.rows == 0 || tile_shape.cols == 0) {
    throw ConfigError("tile shape dimensions must be >= 1");
  }
  if (proc_grid.rows == 0 || proc_grid.cols == 0) {
    throw ConfigError("process grid dimensions must be >= 1");
  }
}

PartitionSpec PartitionSpec::row_block(Shape2D global, std::size_t nprocs) {
  if (nprocs == 0) {
    throw ConfigError("row block needs at least one process");
  }
  return PartitionSpec({std::max<std::size_t>(1, ceil_div(global.rows, nprocs)),
                        std::max<std::size_t>(1, global.cols)},
                       {nprocs, 1});
}

PartitionSpec PartitionSpec::col_block(Shape2D global, std::size_t nprocs) {
  if (nprocs == 0) {
    throw ConfigError("column block needs at least one process");
  }
  return PartitionSpec({std::max<std::size_t>(1, global.rows),
                        std::max<std::size_t>(1, ceil_div(global.cols, nprocs))},
                       {1, nprocs});
}

PartitionSpec PartitionSpec::block_2d(Shape2D global, std::size_t nprocs) {
  auto grid = factor_grid(nprocs);
  return PartitionSpec(
      {std::max<std::size_t>(1, ceil_div(global.rows, grid.rows)),
       std::max<std::size_t>(1, ceil_div(global.cols, grid.cols))},
      grid);
}

Shape2D factor_grid(std::size_t nprocs) {
  if (nprocs == 0) {
    throw ConfigError("process count must be >= 1");
  }
  // Largest divisor not exceeding sqrt(p) gives the most-square grid with
  // rows <= cols.
  std::size_t best = 1;
  for (std::size_t r = 1; r * r <= nprocs; ++r) {
    if (nprocs % r == 0) {
      best = r;
    }
  }
  return {best, nprocs / best};
}

GridShape grid_shape(const PartitionSpec &part, Shape2D global) {
  auto tile = part.tile_shape();
  return {ceil_div(global.rows, tile.rows), ceil_div(global.cols, tile.cols)};
}

Bounds2D tile_bounds(const PartitionSpec &part, Shape2D global, TileIdx t) {
  auto grid = grid_shape(part, global);
  if (!grid.contains(t)) {
    throw IndexError(fmt::format("tile {} outside {}x{} tile grid",
                                 to_string(t), grid.rows, grid.cols));
  }
  auto tile = part.tile_shape();
  return {{t.i * tile.rows, std::min((t.i + 1) * tile.rows, global.rows)},
          {t.j * tile.cols, std::min((t.j + 1) * tile.cols, global.cols)}};
}

std::vector<TileIdx> overlapping_tiles(const PartitionSpec &part,
                                       Shape2D global, const Bounds2D &slice) {
  if (slice.rows.hi > global.rows || slice.cols.hi > global.cols ||
      slice.rows.lo > slice.rows.hi || slice.cols.lo > slice.cols.hi) {
    throw IndexError(fmt::format("slice {}x{} outside {}x{} matrix",
                                 to_string(slice.rows), to_string(slice.cols),
                                 global.rows, global.cols));
  }
  std::vector<TileIdx> tiles;
  if (slice.empty()) {
    return tiles;
  }
  auto tile = part.tile_shape();
  std::size_t i_lo = slice.rows.lo / tile.rows;
  std::size_t i_hi = ceil_div(slice.rows.hi, tile.rows);
  std::size_t j_lo = slice.cols.lo / tile.cols;
  std::size_t j_hi = ceil_div(slice.cols.hi, tile.cols);
  tiles.reserve((i_hi - i_lo) * (j_hi - j_lo));
  for (std::size_t i = i_lo; i < i_hi; ++i) {
    for (std::size_t j = j_lo; j < j_hi; ++j) {
      tiles.push_back({i, j});
    }
  }
  return tiles;
}

Range intersect(const Range &a, const Range &b) {
  std::size_t lo = std::max(a.lo, b.lo);
  std::size_t hi = std::min(a.hi, b.hi);
  if (lo >= hi) {
    return {lo, lo};
  }
  return {lo, hi};
}

Bounds2D intersect(const Bounds2D &a, const Bounds2D &b) {
  return {intersect(a.rows, b.rows), intersect(a.cols, b.cols)};
}

Rank owner_of(const PartitionSpec &part, GridShape grid, TileIdx t,
              std::size_t nprocs_in_replica) {
  auto pg = part.proc_grid();
  if (pg.rows * pg.cols != nprocs_in_replica) {
    throw ConfigError(fmt::format(
        "process grid {}x{} does not match {} processes per replica", pg.rows,
        pg.cols, nprocs_in_replica));
  }
  if (!grid.contains(t)) {
    throw IndexError(fmt::format("tile {} outside {}x{} tile grid",
                                 to_string(t), grid.rows, grid.cols));
  }
  if (part.mapping() == Mapping::BlockCyclic) {
    return (t.i % pg.rows) * pg.cols + (t.j % pg.cols);
  }
  std::size_t per_row = ceil_div(grid.rows, pg.rows);
  std::size_t per_col = ceil_div(grid.cols, pg.cols);
  return (t.i / per_row) * pg.cols + (t.j / per_col);
}

std::string to_string(const Range &r) {
  return fmt::format("[{},{})", r.lo, r.hi);
}

std::string to_string(TileIdx t) { return fmt::format("({},{})", t.i, t.j); }

std::ostream &operator<<(std::ostream &os, const Range &r) {
  return os << to_string(r);
}

std::ostream &operator<<(std::ostream &os, TileIdx t) {
  return os << to_string(t);
}

std::ostream &operator<<(std::ostream &os, const Bounds2D &b) {
  return os << to_string(b.rows) << "x" << to_string(b.cols);
}

} // namespace unimul
