#include "unimul/distmatrix.hpp"
#include "unimul/errors.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace unimul;

namespace {

double cell(std::size_t r, std::size_t c) { return static_cast<double>(r * 100 + c); }
double zero(std::size_t, std::size_t) { return 0.0; }

DistributedMatrix make(Fabric &f, Shape2D shape, std::size_t c,
                       const ElementInit &init = cell) {
  auto part = PartitionSpec::block_2d(shape, f.nprocs() / c);
  return DistributedMatrix::create(f, "M", shape, part, c, init);
}

// Writes `value` into every element of every tile of `replica`.
void fill_replica(const DistributedMatrix &m, std::size_t replica, double value) {
  auto grid = m.grid_shape();
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      auto owner = m.layout().owner({i, j}, replica);
      auto view = m.tile({i, j}, replica, owner);
      std::fill(view.data.begin(), view.data.end(), value);
    }
  }
}

} // namespace

TEST(DistributedMatrix, ReplicasSplitRanks) {
  Fabric f(12);
  auto m = make(f, {12, 12}, 2);
  EXPECT_EQ(m.layout().ranks_per_replica(), 6u);
  auto full = make(f, {12, 12}, 12);
  for (Rank r = 0; r < 12; ++r) {
    EXPECT_EQ(full.layout().replica_of(r), r);
    EXPECT_EQ(full.layout().owner({0, 0}, r), r);
  }
}

TEST(DistributedMatrix, ReplicationMustDivideP) {
  Fabric f(12);
  try {
    make(f, {12, 12}, 5);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("replication must divide process count"),
              std::string::npos);
  }
}

TEST(DistributedMatrix, ProcGridMismatchIsConfigError) {
  Fabric f(4);
  EXPECT_THROW(DistributedMatrix::create(f, "M", {4, 4}, PartitionSpec({2, 2}, {3, 1}),
                                         1, cell),
               ConfigError);
}

TEST(DistributedMatrix, OwnershipPartitionPerReplica) {
  Fabric f(12);
  auto m = make(f, {9, 10}, 3);
  auto grid = m.grid_shape();
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < grid.rows; ++i) {
      for (std::size_t j = 0; j < grid.cols; ++j) {
        auto owner = m.layout().owner({i, j}, r);
        EXPECT_GE(owner, r * 4);
        EXPECT_LT(owner, (r + 1) * 4);
      }
    }
  }
}

TEST(DistributedMatrix, TileViewForOwnerOnly) {
  Fabric f(4);
  auto m = make(f, {4, 4}, 1);
  auto owner = m.layout().owner({1, 0}, 0);
  auto view = m.tile({1, 0}, std::nullopt, owner);
  EXPECT_EQ(view.bounds, m.tile_bounds({1, 0}));
  EXPECT_EQ(view.view()(0, 1), cell(2, 1));
  EXPECT_THROW(m.tile({1, 0}, std::nullopt, (owner + 1) % 4), OwnershipError);
}

TEST(DistributedMatrix, DefaultReplicaIsCallersReplica) {
  Fabric f(12);
  auto m = make(f, {12, 12}, 2);
  EXPECT_EQ(m.layout().replica_of(7), 1u);
  // Rank 7 is rank 1 of replica 1; the tile it owns there resolves without
  // naming the replica.
  auto grid = m.grid_shape();
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      if (m.layout().owner({i, j}, 1) == 7) {
        EXPECT_EQ(m.tile({i, j}, std::nullopt, 7).replica, 1u);
      }
    }
  }
}

TEST(DistributedMatrix, GetTileCountsAndMatchesGather) {
  Fabric f(4);
  auto m = make(f, {4, 4}, 1);
  auto owner = m.layout().owner({1, 1}, 0);
  Rank caller = (owner + 1) % 4;
  f.counters().reset();
  auto copy = m.get_tile({1, 1}, std::nullopt, caller);
  EXPECT_EQ(f.counters().bytes(caller, owner), 32u);
  auto dense = m.gather();
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_EQ(copy.view()(r, c), dense(2 + r, 2 + c));
    }
  }
  auto local = m.get_tile({1, 1}, std::nullopt, owner);
  EXPECT_EQ(local.data, copy.data);
  EXPECT_EQ(f.counters().local_bytes(), 32u);

  auto pending = m.get_tile_async({1, 1}, std::nullopt, caller);
  EXPECT_EQ(pending.wait().data, copy.data);
  EXPECT_THROW(m.get_tile({2, 0}, std::nullopt, caller), IndexError);
}

TEST(DistributedMatrix, AccumulateTile) {
  Fabric f(4);
  auto m = make(f, {4, 4}, 1, zero);
  auto owner = m.layout().owner({0, 0}, 0);
  Rank caller = (owner + 1) % 4;
  m.accumulate_tile(0, {0, 0}, std::vector<double>(4, 1.0), {{0, 2}, {0, 2}}, caller);
  auto t = m.get_tile({0, 0}, 0, owner);
  EXPECT_EQ(t.data, (std::vector<double>{1, 1, 1, 1}));

  m.accumulate_tile(0, {0, 1}, std::vector<double>{5, 6}, {{0, 1}, {0, 2}}, caller);
  EXPECT_EQ(m.get_tile({0, 1}, 0, owner).data, (std::vector<double>{5, 6, 0, 0}));

  EXPECT_THROW(m.accumulate_tile(0, {0, 0}, std::vector<double>(3, 1.0),
                                 {{0, 2}, {0, 2}}, caller),
               ContractError);
}

TEST(DistributedMatrix, DisjointConcurrentAccumulates) {
  Fabric f(4);
  auto m = make(f, {4, 4}, 1, zero);
  std::thread t1([&] {
    m.accumulate_tile(0, {1, 1}, std::vector<double>{1, 2}, {{0, 1}, {0, 2}}, 0);
  });
  std::thread t2([&] {
    m.accumulate_tile(0, {1, 1}, std::vector<double>{3, 4}, {{1, 2}, {0, 2}}, 1);
  });
  t1.join();
  t2.join();
  EXPECT_EQ(m.get_tile({1, 1}, 0, 2).data, (std::vector<double>{1, 2, 3, 4}));
}

TEST(DistributedMatrix, ReduceReplicasTwoTerm) {
  Fabric f(4);
  auto m = make(f, {4, 4}, 2, zero);
  fill_replica(m, 0, 1.0);
  fill_replica(m, 1, 2.0);
  m.reduce_replicas(0);
  auto d0 = m.gather(0);
  auto d1 = m.gather(1);
  for (double x : d0.data()) {
    EXPECT_EQ(x, 3.0);
  }
  for (double x : d1.data()) {
    EXPECT_EQ(x, 2.0);
  }
}

TEST(DistributedMatrix, ReduceReplicasClosedFormSum) {
  Fabric f(8);
  auto m = make(f, {6, 5}, 4, zero);
  for (std::size_t r = 0; r < 4; ++r) {
    fill_replica(m, r, static_cast<double>(r));
  }
  m.reduce_replicas(0);
  auto reduced = m.gather(0);
  for (double x : reduced.data()) {
    EXPECT_EQ(x, 6.0);
  }
  EXPECT_THROW(m.reduce_replicas(4), IndexError);
}

TEST(DistributedMatrix, SingleReplicaReduceIsNoop) {
  Fabric f(4);
  auto m = make(f, {4, 4}, 1);
  auto before = m.gather();
  f.counters().reset();
  m.reduce_replicas(0);
  m.broadcast_replica(0);
  EXPECT_EQ(m.gather(), before);
  EXPECT_EQ(f.counters().comm_bytes(), 0u);
  EXPECT_EQ(f.counters().local_bytes(), 0u);
}

TEST(DistributedMatrix, BroadcastThenReduce) {
  Fabric f(6);
  auto m = make(f, {5, 7}, 3, zero);
  fill_replica(m, 1, 4.0);
  m.broadcast_replica(1);
  EXPECT_EQ(m.gather(0), m.gather(1));
  EXPECT_EQ(m.gather(2), m.gather(1));
  m.reduce_replicas(1);
  auto reduced = m.gather(1);
  for (double x : reduced.data()) {
    EXPECT_EQ(x, 12.0);
  }
  EXPECT_THROW(m.broadcast_replica(3), IndexError);
}

TEST(DistributedMatrix, GatherRoundTrip) {
  Fabric f(4);
  auto m = DistributedMatrix::create(f, "M", {7, 9}, PartitionSpec({3, 4}, {2, 2},
                                                                   Mapping::BlockCyclic),
                                     1, cell);
  auto d = m.gather();
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 9; ++c) {
      EXPECT_EQ(d(r, c), cell(r, c));
    }
  }
  Fabric one(1);
  auto s = DistributedMatrix::create(one, "S", {1, 1}, PartitionSpec({1, 1}, {1, 1}),
                                     1, [](std::size_t, std::size_t) { return 3.5; });
  EXPECT_EQ(s.gather()(0, 0), 3.5);
}
