#pragma once

// Simulated one-sided communication fabric.
//
// Each logical process owns symmetric segments of doubles. Any rank may read
// a segment (get / get_async) or add into it (accumulate) without the owner
// taking part. Every transfer is charged to the (caller, owner) link in
// FabricCounters; transfers with caller == owner are tallied as local
// traffic and excluded from communication-volume queries. The fabric does
// not model time.

#include "unimul/tiling.hpp"

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace unimul {

enum class AccumulateMode {
  // Element-wise atomic adds straight into the peer's memory.
  PeerAtomic,
  // Lock the destination segment, get, add locally, put back.
  LockGetPut,
};

struct SegmentId {
  std::size_t value = 0;
  friend bool operator==(SegmentId, SegmentId) = default;
};

// Strided 2D block inside a segment: `rows` runs of `cols` contiguous
// elements, consecutive runs `stride` apart.
struct Region {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;

  static Region contiguous(Range r) { return {r.lo, 1, r.size(), r.size()}; }
  std::size_t size() const { return rows * cols; }
  std::size_t end() const {
    return rows == 0 || cols == 0 ? offset : offset + (rows - 1) * stride + cols;
  }
};

// Bytes/second between every ordered pair of ranks.
class LinkTable {
public:
  static LinkTable uniform(std::size_t nprocs, double bandwidth);
  // Ranks [g*group, (g+1)*group) form a group; links inside a group use
  // `intra`, links across groups use `inter`.
  static LinkTable two_level(std::size_t nprocs, std::size_t group_size,
                             double intra, double inter);

  std::size_t nprocs() const { return nprocs_; }
  double bandwidth(Rank src, Rank dst) const;
  void set(Rank src, Rank dst, double bandwidth);

private:
  LinkTable(std::size_t nprocs, double bandwidth);

  std::size_t nprocs_;
  std::vector<double> bw_;
};

class FabricCounters {
public:
  explicit FabricCounters(std::size_t nprocs);

  std::size_t nprocs() const { return nprocs_; }
  // Bytes/messages moved by `caller` against memory owned by `peer`.
  std::uint64_t bytes(Rank caller, Rank peer) const;
  std::uint64_t msgs(Rank caller, Rank peer) const;
  std::uint64_t flops(Rank rank) const;

  // Off-process bytes only.
  std::uint64_t comm_bytes() const;
  std::uint64_t local_bytes() const;
  std::uint64_t total_flops() const;
  std::uint64_t max_rank_flops() const;

  void add_transfer(Rank caller, Rank peer, std::uint64_t bytes,
                    std::uint64_t msgs);
  void add_flops(Rank rank, std::uint64_t flops);
  void reset();

  // `src,dst,bytes,msgs`, one row per ordered pair with nonzero traffic.
  void write_links_csv(std::ostream &os) const;
  // `rank,flops`, one row per rank.
  void write_flops_csv(std::ostream &os) const;

private:
  std::size_t nprocs_;
  std::vector<std::atomic<std::uint64_t>> bytes_;
  std::vector<std::atomic<std::uint64_t>> msgs_;
  std::vector<std::atomic<std::uint64_t>> flops_;
};

// Future for an asynchronous get. The destination buffer belongs to the
// caller and its contents are defined only after wait().
class PendingCopy {
public:
  enum class State { InFlight, Complete };

  PendingCopy() = default;
  PendingCopy(PendingCopy &&other) noexcept;
  PendingCopy &operator=(PendingCopy &&other) noexcept;
  PendingCopy(const PendingCopy &) = delete;
  PendingCopy &operator=(const PendingCopy &) = delete;
  ~PendingCopy() = default;

  State state() const { return state_; }
  bool valid() const { return outstanding_ != nullptr; }
  std::span<double> wait();

private:
  friend class Fabric;
  PendingCopy(std::span<double> dst, std::atomic<std::int64_t> *outstanding)
      : dst_(dst), outstanding_(outstanding) {}

  std::span<double> dst_;
  std::atomic<std::int64_t> *outstanding_ = nullptr;
  State state_ = State::InFlight;
};

class Fabric {
public:
  explicit Fabric(std::size_t nprocs);
  Fabric(std::size_t nprocs, LinkTable links);
  Fabric(const Fabric &) = delete;
  Fabric &operator=(const Fabric &) = delete;

  std::size_t nprocs() const { return nprocs_; }
  const LinkTable &links() const { return links_; }
  FabricCounters &counters() { return counters_; }
  const FabricCounters &counters() const { return counters_; }

  // Setup-phase only; not safe concurrently with other fabric calls.
  SegmentId allocate(Rank owner, std::size_t length);
  Rank owner(SegmentId seg) const;
  std::size_t length(SegmentId seg) const;

  std::vector<double> get(SegmentId seg, Range elems, Rank caller) const;
  void get(SegmentId seg, const Region &region, Rank caller,
           std::span<double> dst) const;
  PendingCopy get_async(SegmentId seg, const Region &region, Rank caller,
                        std::span<double> dst) const;

  void accumulate(SegmentId seg, Range elems, std::span<const double> values,
                  Rank caller, AccumulateMode mode);
  void accumulate(SegmentId seg, const Region &region,
                  std::span<const double> values, Rank caller,
                  AccumulateMode mode);

  // Zero-copy access to a segment by its owner. Writes through this span are
  // plain stores; the caller is responsible for ordering them against
  // remote accumulates.
  std::span<double> local_view(SegmentId seg, Rank caller);
  std::span<const double> local_view(SegmentId seg, Rank caller) const;

  // Uninstrumented read for harness code (gather, audits).
  std::span<const double> peek(SegmentId seg) const;

  void add_flops(Rank rank, std::uint64_t flops) {
    counters_.add_flops(rank, flops);
  }
  // Async gets issued but never waited on.
  std::int64_t outstanding_async() const { return outstanding_.load(); }

private:
  struct Segment {
    Rank owner;
    std::size_t length;
    std::unique_ptr<double[]> data;
    std::mutex lock;
  };

  const Segment &segment(SegmentId seg) const;
  Segment &segment(SegmentId seg);
  void check_region(const Segment &s, const Region &region) const;
  void copy_out(const Segment &s, const Region &region,
                std::span<double> dst) const;
  void check_rank(Rank r) const;

  std::size_t nprocs_;
  LinkTable links_;
  mutable FabricCounters counters_;
  std::vector<std::unique_ptr<Segment>> segments_;
  mutable std::atomic<std::int64_t> outstanding_{0};
};

inline constexpr std::size_t kElementBytes = sizeof(double);

} // namespace unimul
