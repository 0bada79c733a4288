#include "unimul/distmatrix.hpp"

#include "unimul/errors.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace unimul {

MatrixLayout::MatrixLayout(Shape2D shape, PartitionSpec part,
                           std::size_t replication, std::size_t nprocs)
    : shape_(shape), part_(part), replication_(replication), nprocs_(nprocs),
      grid_(unimul::grid_shape(part, shape)) {
  if (shape.rows == 0 || shape.cols == 0) {
    throw ConfigError("matrix dimensions must be >= 1");
  }
  if (replication == 0 || nprocs == 0 || nprocs % replication != 0) {
    throw ConfigError(fmt::format(
        "replication must divide process count (c={}, p={})", replication,
        nprocs));
  }
  if (part.nprocs() != nprocs / replication) {
    auto pg = part.proc_grid();
    throw ConfigError(fmt::format(
        "process grid {}x{} does not match {} processes per replica", pg.rows,
        pg.cols, nprocs / replication));
  }
}

Bounds2D MatrixLayout::tile_bounds(TileIdx t) const {
  return unimul::tile_bounds(part_, shape_, t);
}

std::vector<TileIdx>
MatrixLayout::overlapping_tiles(const Bounds2D &slice) const {
  return unimul::overlapping_tiles(part_, shape_, slice);
}

std::size_t MatrixLayout::replica_of(Rank rank) const {
  if (rank >= nprocs_) {
    throw IndexError(fmt::format("rank {} outside [0,{})", rank, nprocs_));
  }
  return rank / ranks_per_replica();
}

Rank MatrixLayout::owner(TileIdx t, std::size_t replica) const {
  if (replica >= replication_) {
    throw IndexError(fmt::format("replica {} outside [0,{})", replica,
                                 replication_));
  }
  return owner_of(part_, grid_, t, ranks_per_replica()) +
         replica * ranks_per_replica();
}

std::size_t MatrixLayout::max_tile_elements() const {
  auto tile = part_.tile_shape();
  return std::min(tile.rows, shape_.rows) * std::min(tile.cols, shape_.cols);
}

TileCopy PendingTile::wait() {
  pending_.wait();
  return std::move(copy_);
}

DistributedMatrix DistributedMatrix::create(Fabric &fabric, std::string name,
                                            Shape2D shape, PartitionSpec part,
                                            std::size_t replication,
                                            const ElementInit &init) {
  DistributedMatrix m(fabric, std::move(name),
                      MatrixLayout(shape, part, replication, fabric.nprocs()));
  auto grid = m.grid_shape();
  m.segments_.reserve(replication * grid.size());
  for (std::size_t r = 0; r < replication; ++r) {
    for (std::size_t i = 0; i < grid.rows; ++i) {
      for (std::size_t j = 0; j < grid.cols; ++j) {
        TileIdx t{i, j};
        auto b = m.tile_bounds(t);
        Rank owner = m.layout_.owner(t, r);
        auto seg = fabric.allocate(owner, b.shape().size());
        auto data = fabric.local_view(seg, owner);
        std::size_t n = 0;
        for (std::size_t row = b.rows.lo; row < b.rows.hi; ++row) {
          for (std::size_t col = b.cols.lo; col < b.cols.hi; ++col) {
            data[n++] = init ? init(row, col) : 0.0;
          }
        }
        m.segments_.push_back(seg);
      }
    }
  }
  return m;
}

void DistributedMatrix::check_replica(std::size_t replica) const {
  if (replica >= replication()) {
    throw IndexError(fmt::format("replica {} outside [0,{}) of {}", replica,
                                 replication(), name_));
  }
}

std::size_t
DistributedMatrix::resolve_replica(std::optional<std::size_t> replica,
                                   Rank caller) const {
  std::size_t r = replica.value_or(layout_.replica_of(caller));
  check_replica(r);
  return r;
}

SegmentId DistributedMatrix::segment(TileIdx t, std::size_t replica) const {
  check_replica(replica);
  if (!grid_shape().contains(t)) {
    throw IndexError(fmt::format("tile {} outside {}x{} grid of {}",
                                 to_string(t), grid_shape().rows,
                                 grid_shape().cols, name_));
  }
  return segments_[replica * grid_shape().size() + layout_.linear(t)];
}

TileView DistributedMatrix::tile(TileIdx t, std::optional<std::size_t> replica,
                                 Rank caller) const {
  auto r = resolve_replica(replica, caller);
  auto seg = segment(t, r);
  if (fabric_->owner(seg) != caller) {
    throw OwnershipError(fmt::format("rank {} does not own tile {} of {}[{}]",
                                     caller, to_string(t), name_, r));
  }
  return {t, r, tile_bounds(t), fabric_->local_view(seg, caller)};
}

TileCopy DistributedMatrix::get_tile(TileIdx t,
                                     std::optional<std::size_t> replica,
                                     Rank caller) const {
  return get_tile_async(t, replica, caller).wait();
}

PendingTile DistributedMatrix::get_tile_async(TileIdx t,
                                              std::optional<std::size_t> replica,
                                              Rank caller) const {
  auto r = resolve_replica(replica, caller);
  auto b = tile_bounds(t);
  TileCopy copy{t, r, b, std::vector<double>(b.shape().size())};
  auto pending = get_tile_async_into(t, r, caller, copy.data);
  return PendingTile(std::move(copy), std::move(pending));
}

PendingCopy DistributedMatrix::get_tile_async_into(
    TileIdx t, std::optional<std::size_t> replica, Rank caller,
    std::span<double> dst) const {
  auto r = resolve_replica(replica, caller);
  auto seg = segment(t, r);
  auto n = fabric_->length(seg);
  if (dst.size() < n) {
    throw ContractError(fmt::format("buffer of {} too small for tile of {}",
                                    dst.size(), n));
  }
  return fabric_->get_async(seg, Region::contiguous({0, n}), caller,
                            dst.first(n));
}

void DistributedMatrix::accumulate_tile(std::size_t replica, TileIdx t,
                                        std::span<const double> values,
                                        const Bounds2D &slice, Rank caller,
                                        AccumulateMode mode) const {
  auto seg = segment(t, replica);
  auto shape = tile_bounds(t).shape();
  Bounds2D whole{{0, shape.rows}, {0, shape.cols}};
  if (!whole.contains(slice)) {
    throw ContractError(fmt::format("slice {}x{} outside {}x{} tile",
                                    to_string(slice.rows),
                                    to_string(slice.cols), shape.rows,
                                    shape.cols));
  }
  if (values.size() != slice.shape().size()) {
    throw ContractError(fmt::format("{} values for a {}x{} slice",
                                    values.size(), slice.rows.size(),
                                    slice.cols.size()));
  }
  Region region{slice.rows.lo * shape.cols + slice.cols.lo, slice.rows.size(),
                slice.cols.size(), shape.cols};
  fabric_->accumulate(seg, region, values, caller, mode);
}

void DistributedMatrix::reduce_replicas_part(std::size_t origin, Rank caller,
                                             AccumulateMode mode) const {
  check_replica(origin);
  if (replication() == 1 || layout_.replica_of(caller) != origin) {
    return;
  }
  auto grid = grid_shape();
  std::vector<double> staged;
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      TileIdx t{i, j};
      if (layout_.owner(t, origin) != caller) {
        continue;
      }
      auto shape = tile_bounds(t).shape();
      Bounds2D whole{{0, shape.rows}, {0, shape.cols}};
      for (std::size_t r = 0; r < replication(); ++r) {
        if (r == origin) {
          continue;
        }
        staged.resize(shape.size());
        fabric_->get(segment(t, r), Region::contiguous({0, shape.size()}),
                     caller, staged);
        accumulate_tile(origin, t, staged, whole, caller, mode);
      }
    }
  }
}

void DistributedMatrix::reduce_replicas(std::size_t origin,
                                        AccumulateMode mode) const {
  check_replica(origin);
  for (Rank rank = 0; rank < fabric_->nprocs(); ++rank) {
    reduce_replicas_part(origin, rank, mode);
  }
}

void DistributedMatrix::broadcast_replica_part(std::size_t origin,
                                               Rank caller) const {
  check_replica(origin);
  if (replication() == 1 || layout_.replica_of(caller) == origin) {
    return;
  }
  auto mine = layout_.replica_of(caller);
  auto grid = grid_shape();
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      TileIdx t{i, j};
      if (layout_.owner(t, mine) != caller) {
        continue;
      }
      auto seg = segment(t, origin);
      auto dst = fabric_->local_view(segment(t, mine), caller);
      fabric_->get(seg, Region::contiguous({0, dst.size()}), caller, dst);
    }
  }
}

void DistributedMatrix::broadcast_replica(std::size_t origin) const {
  check_replica(origin);
  for (Rank rank = 0; rank < fabric_->nprocs(); ++rank) {
    broadcast_replica_part(origin, rank);
  }
}

DenseMatrix DistributedMatrix::gather(std::size_t replica) const {
  check_replica(replica);
  DenseMatrix out(shape().rows, shape().cols);
  auto grid = grid_shape();
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      TileIdx t{i, j};
      auto b = tile_bounds(t);
      auto data = fabric_->peek(segment(t, replica));
      std::size_t n = 0;
      for (std::size_t row = b.rows.lo; row < b.rows.hi; ++row) {
        for (std::size_t col = b.cols.lo; col < b.cols.hi; ++col) {
          out(row, col) = data[n++];
        }
      }
    }
  }
  return out;
}

} // namespace unimul
