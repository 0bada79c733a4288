#pragma once

// Distributed matrix over the simulated fabric.
//
// A matrix with replication factor c over p ranks keeps c full copies. Copy
// r lives on ranks [r*p/c, (r+1)*p/c) and every copy is tiled with the same
// PartitionSpec. Each tile is one fabric segment, stored row-major.

#include "unimul/dense.hpp"
#include "unimul/fabric.hpp"
#include "unimul/tiling.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace unimul {

// Metadata half of a distributed matrix: shape, partition and replica
// placement. Cheap to copy, no storage.
class MatrixLayout {
public:
  MatrixLayout(Shape2D shape, PartitionSpec part, std::size_t replication,
               std::size_t nprocs);

  Shape2D shape() const { return shape_; }
  const PartitionSpec &partition() const { return part_; }
  std::size_t replication() const { return replication_; }
  std::size_t nprocs() const { return nprocs_; }
  std::size_t ranks_per_replica() const { return nprocs_ / replication_; }
  GridShape grid_shape() const { return grid_; }

  Bounds2D tile_bounds(TileIdx t) const;
  std::vector<TileIdx> overlapping_tiles(const Bounds2D &slice) const;
  Bounds2D full() const { return {{0, shape_.rows}, {0, shape_.cols}}; }

  std::size_t replica_of(Rank rank) const;
  Rank owner(TileIdx t, std::size_t replica) const;
  // Owner of t in the caller's replica.
  Rank local_owner(TileIdx t, Rank caller) const {
    return owner(t, replica_of(caller));
  }
  bool owns(Rank caller, TileIdx t) const {
    return local_owner(t, caller) == caller;
  }
  std::size_t linear(TileIdx t) const { return t.i * grid_.cols + t.j; }
  std::size_t max_tile_elements() const;

private:
  Shape2D shape_;
  PartitionSpec part_;
  std::size_t replication_;
  std::size_t nprocs_;
  GridShape grid_;
};

// Zero-copy view of a tile owned by the calling rank.
struct TileView {
  TileIdx idx;
  std::size_t replica = 0;
  Bounds2D bounds;
  std::span<double> data;

  Shape2D shape() const { return bounds.shape(); }
  MutView view() const { return make_view(data, shape()); }
};

// Private copy of a (possibly remote) tile.
struct TileCopy {
  TileIdx idx;
  std::size_t replica = 0;
  Bounds2D bounds;
  std::vector<double> data;

  Shape2D shape() const { return bounds.shape(); }
  ConstView view() const { return make_view(std::span<const double>(data), shape()); }
};

class PendingTile {
public:
  PendingTile(TileCopy copy, PendingCopy pending)
      : copy_(std::move(copy)), pending_(std::move(pending)) {}
  PendingCopy::State state() const { return pending_.state(); }
  TileCopy wait();

private:
  TileCopy copy_;
  PendingCopy pending_;
};

using ElementInit = std::function<double(std::size_t row, std::size_t col)>;

class DistributedMatrix {
public:
  // Allocates all replicas on `fabric` and fills each identically from
  // init(row, col).
  static DistributedMatrix create(Fabric &fabric, std::string name,
                                  Shape2D shape, PartitionSpec part,
                                  std::size_t replication,
                                  const ElementInit &init);

  const std::string &name() const { return name_; }
  const MatrixLayout &layout() const { return layout_; }
  Shape2D shape() const { return layout_.shape(); }
  std::size_t replication() const { return layout_.replication(); }
  GridShape grid_shape() const { return layout_.grid_shape(); }
  Bounds2D tile_bounds(TileIdx t) const { return layout_.tile_bounds(t); }
  std::vector<TileIdx> overlapping_tiles(const Bounds2D &slice) const {
    return layout_.overlapping_tiles(slice);
  }
  Fabric &fabric() const { return *fabric_; }

  // An omitted replica resolves to the caller's own replica.
  TileView tile(TileIdx t, std::optional<std::size_t> replica,
                Rank caller) const;
  TileCopy get_tile(TileIdx t, std::optional<std::size_t> replica,
                    Rank caller) const;
  PendingTile get_tile_async(TileIdx t, std::optional<std::size_t> replica,
                             Rank caller) const;
  // Async copy into caller-provided storage of at least tile size.
  PendingCopy get_tile_async_into(TileIdx t, std::optional<std::size_t> replica,
                                  Rank caller, std::span<double> dst) const;

  // tile(t, replica)[slice] += values, with `slice` in tile-local
  // coordinates and `values` row-major of slice shape.
  void accumulate_tile(std::size_t replica, TileIdx t,
                       std::span<const double> values, const Bounds2D &slice,
                       Rank caller,
                       AccumulateMode mode = AccumulateMode::PeerAtomic) const;

  // Collective: owners in replica `origin` pull every peer replica's tile
  // and add it locally.
  void reduce_replicas(std::size_t origin,
                       AccumulateMode mode = AccumulateMode::PeerAtomic) const;
  // One rank's share of reduce_replicas.
  void reduce_replicas_part(std::size_t origin, Rank caller,
                            AccumulateMode mode = AccumulateMode::PeerAtomic) const;
  // Collective: owners outside `origin` pull origin's tile and overwrite
  // their own.
  void broadcast_replica(std::size_t origin) const;
  void broadcast_replica_part(std::size_t origin, Rank caller) const;

  // Dense copy of one replica. Requires quiescence.
  DenseMatrix gather(std::size_t replica = 0) const;

private:
  DistributedMatrix(Fabric &fabric, std::string name, MatrixLayout layout)
      : fabric_(&fabric), name_(std::move(name)), layout_(std::move(layout)) {}

  SegmentId segment(TileIdx t, std::size_t replica) const;
  std::size_t resolve_replica(std::optional<std::size_t> replica,
                              Rank caller) const;
  void check_replica(std::size_t replica) const;

  Fabric *fabric_;
  std::string name_;
  MatrixLayout layout_;
  // [replica * grid.size() + linear(tile)]
  std::vector<SegmentId> segments_;
};

} // namespace unimul
