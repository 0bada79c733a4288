#include "unimul/fabric.hpp"

#include "unimul/errors.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <ostream>
#include <utility>

namespace unimul {

LinkTable::LinkTable(std::size_t nprocs, double bandwidth)
    : nprocs_(nprocs), bw_(nprocs * nprocs, bandwidth) {
  if (!(bandwidth > 0)) {
    throw ConfigError("link bandwidth must be positive");
  }
}

LinkTable LinkTable::uniform(std::size_t nprocs, double bandwidth) {
  return LinkTable(nprocs, bandwidth);
}

LinkTable LinkTable::two_level(std::size_t nprocs, std::size_t group_size,
                               double intra, double inter) {
  if (group_size == 0) {
    throw ConfigError("topology group size must be >= 1");
  }
  LinkTable table(nprocs, intra);
  for (Rank src = 0; src < nprocs; ++src) {
    for (Rank dst = 0; dst < nprocs; ++dst) {
      if (src / group_size != dst / group_size) {
        table.set(src, dst, inter);
      }
    }
  }
  return table;
}

double LinkTable::bandwidth(Rank src, Rank dst) const {
  if (src >= nprocs_ || dst >= nprocs_) {
    throw IndexError(fmt::format("link ({},{}) outside {} ranks", src, dst,
                                 nprocs_));
  }
  return bw_[src * nprocs_ + dst];
}

void LinkTable::set(Rank src, Rank dst, double bandwidth) {
  if (!(bandwidth > 0)) {
    throw ConfigError("link bandwidth must be positive");
  }
  if (src >= nprocs_ || dst >= nprocs_) {
    throw IndexError(fmt::format("link ({},{}) outside {} ranks", src, dst,
                                 nprocs_));
  }
  bw_[src * nprocs_ + dst] = bandwidth;
}

FabricCounters::FabricCounters(std::size_t nprocs)
    : nprocs_(nprocs), bytes_(nprocs * nprocs), msgs_(nprocs * nprocs),
      flops_(nprocs) {}

std::uint64_t FabricCounters::bytes(Rank caller, Rank peer) const {
  return bytes_.at(caller * nprocs_ + peer).load(std::memory_order_relaxed);
}

std::uint64_t FabricCounters::msgs(Rank caller, Rank peer) const {
  return msgs_.at(caller * nprocs_ + peer).load(std::memory_order_relaxed);
}

std::uint64_t FabricCounters::flops(Rank rank) const {
  return flops_.at(rank).load(std::memory_order_relaxed);
}

std::uint64_t FabricCounters::comm_bytes() const {
  std::uint64_t total = 0;
  for (Rank s = 0; s < nprocs_; ++s) {
    for (Rank d = 0; d < nprocs_; ++d) {
      if (s != d) {
        total += bytes(s, d);
      }
    }
  }
  return total;
}

std::uint64_t FabricCounters::local_bytes() const {
  std::uint64_t total = 0;
  for (Rank r = 0; r < nprocs_; ++r) {
    total += bytes(r, r);
  }
  return total;
}

std::uint64_t FabricCounters::total_flops() const {
  std::uint64_t total = 0;
  for (Rank r = 0; r < nprocs_; ++r) {
    total += flops(r);
  }
  return total;
}

std::uint64_t FabricCounters::max_rank_flops() const {
  std::uint64_t best = 0;
  for (Rank r = 0; r < nprocs_; ++r) {
    best = std::max(best, flops(r));
  }
  return best;
}

void FabricCounters::add_transfer(Rank caller, Rank peer, std::uint64_t bytes,
                                  std::uint64_t msgs) {
  bytes_[caller * nprocs_ + peer].fetch_add(bytes, std::memory_order_relaxed);
  msgs_[caller * nprocs_ + peer].fetch_add(msgs, std::memory_order_relaxed);
}

void FabricCounters::add_flops(Rank rank, std::uint64_t flops) {
  flops_.at(rank).fetch_add(flops, std::memory_order_relaxed);
}

void FabricCounters::reset() {
  for (auto &b : bytes_) {
    b.store(0);
  }
  for (auto &m : msgs_) {
    m.store(0);
  }
  for (auto &f : flops_) {
    f.store(0);
  }
}

void FabricCounters::write_links_csv(std::ostream &os) const {
  os << "src,dst,bytes,msgs\n";
  for (Rank s = 0; s < nprocs_; ++s) {
    for (Rank d = 0; d < nprocs_; ++d) {
      if (bytes(s, d) != 0 || msgs(s, d) != 0) {
        os << s << ',' << d << ',' << bytes(s, d) << ',' << msgs(s, d) << '\n';
      }
    }
  }
}

void FabricCounters::write_flops_csv(std::ostream &os) const {
  os << "rank,flops\n";
  for (Rank r = 0; r < nprocs_; ++r) {
    os << r << ',' << flops(r) << '\n';
  }
}

PendingCopy::PendingCopy(PendingCopy &&other) noexcept
    : dst_(other.dst_), outstanding_(std::exchange(other.outstanding_, nullptr)),
      state_(other.state_) {}

PendingCopy &PendingCopy::operator=(PendingCopy &&other) noexcept {
  dst_ = other.dst_;
  outstanding_ = std::exchange(other.outstanding_, nullptr);
  state_ = other.state_;
  return *this;
}

std::span<double> PendingCopy::wait() {
  if (outstanding_ == nullptr) {
    throw UsageError("wait on an empty PendingCopy");
  }
  if (state_ == State::Complete) {
    throw UsageError("PendingCopy waited on twice");
  }
  state_ = State::Complete;
  outstanding_->fetch_sub(1);
  return dst_;
}

Fabric::Fabric(std::size_t nprocs)
    : Fabric(nprocs, LinkTable::uniform(nprocs, 1e9)) {}

Fabric::Fabric(std::size_t nprocs, LinkTable links)
    : nprocs_(nprocs), links_(std::move(links)), counters_(nprocs) {
  if (nprocs == 0) {
    throw ConfigError("fabric needs at least one process");
  }
  if (links_.nprocs() != nprocs) {
    throw ConfigError("link table size does not match process count");
  }
}

SegmentId Fabric::allocate(Rank owner, std::size_t length) {
  check_rank(owner);
  auto seg = std::make_unique<Segment>();
  seg->owner = owner;
  seg->length = length;
  seg->data = std::make_unique<double[]>(length);
  segments_.push_back(std::move(seg));
  return {segments_.size() - 1};
}

Rank Fabric::owner(SegmentId seg) const { return segment(seg).owner; }

std::size_t Fabric::length(SegmentId seg) const { return segment(seg).length; }

const Fabric::Segment &Fabric::segment(SegmentId seg) const {
  if (seg.value >= segments_.size()) {
    throw IndexError(fmt::format("unknown segment {}", seg.value));
  }
  return *segments_[seg.value];
}

Fabric::Segment &Fabric::segment(SegmentId seg) {
  return const_cast<Segment &>(std::as_const(*this).segment(seg));
}

void Fabric::check_rank(Rank r) const {
  if (r >= nprocs_) {
    throw IndexError(fmt::format("rank {} outside [0,{})", r, nprocs_));
  }
}

void Fabric::check_region(const Segment &s, const Region &region) const {
  if (region.rows > 1 && region.stride < region.cols) {
    throw ContractError("region stride smaller than its row length");
  }
  if (region.end() > s.length) {
    throw IndexError(fmt::format("region ending at {} outside segment of {}",
                                 region.end(), s.length));
  }
}

void Fabric::copy_out(const Segment &s, const Region &region,
                      std::span<double> dst) const {
  std::size_t out = 0;
  for (std::size_t r = 0; r < region.rows; ++r) {
    double *row = s.data.get() + region.offset + r * region.stride;
    for (std::size_t c = 0; c < region.cols; ++c) {
      // Atomic load so a concurrent accumulate can never tear an element.
      dst[out++] = std::atomic_ref<double>(row[c]).load(std::memory_order_relaxed);
    }
  }
}

std::vector<double> Fabric::get(SegmentId seg, Range elems, Rank caller) const {
  std::vector<double> out(elems.size());
  get(seg, Region::contiguous(elems), caller, out);
  return out;
}

void Fabric::get(SegmentId seg, const Region &region, Rank caller,
                 std::span<double> dst) const {
  check_rank(caller);
  const auto &s = segment(seg);
  check_region(s, region);
  if (dst.size() != region.size()) {
    throw ContractError(fmt::format("get destination holds {} elements, region {}",
                                    dst.size(), region.size()));
  }
  if (region.size() == 0) {
    return;
  }
  copy_out(s, region, dst);
  counters_.add_transfer(caller, s.owner, region.size() * kElementBytes, 1);
}

PendingCopy Fabric::get_async(SegmentId seg, const Region &region, Rank caller,
                              std::span<double> dst) const {
  // The snapshot is taken at issue; completion only publishes it.
  get(seg, region, caller, dst);
  outstanding_.fetch_add(1);
  return PendingCopy(dst, &outstanding_);
}

void Fabric::accumulate(SegmentId seg, Range elems,
                        std::span<const double> values, Rank caller,
                        AccumulateMode mode) {
  accumulate(seg, Region::contiguous(elems), values, caller, mode);
}

void Fabric::accumulate(SegmentId seg, const Region &region,
                        std::span<const double> values, Rank caller,
                        AccumulateMode mode) {
  check_rank(caller);
  auto &s = segment(seg);
  check_region(s, region);
  if (values.size() != region.size()) {
    throw ContractError(fmt::format(
        "accumulate of {} values into a region of {}", values.size(),
        region.size()));
  }
  if (region.size() == 0) {
    return;
  }
  const std::uint64_t payload = region.size() * kElementBytes;
  std::size_t in = 0;
  if (mode == AccumulateMode::PeerAtomic) {
    for (std::size_t r = 0; r < region.rows; ++r) {
      double *row = s.data.get() + region.offset + r * region.stride;
      for (std::size_t c = 0; c < region.cols; ++c) {
        std::atomic_ref<double>(row[c]).fetch_add(values[in++],
                                                  std::memory_order_relaxed);
      }
    }
    counters_.add_transfer(caller, s.owner, payload, 1);
    return;
  }

  // Read-modify-write round trip under one lock per segment. Elements are
  // still touched atomically so concurrent PeerAtomic traffic and gets stay
  // untorn.
  std::lock_guard guard(s.lock);
  std::vector<double> staged(region.size());
  copy_out(s, region, staged);
  for (std::size_t i = 0; i < staged.size(); ++i) {
    staged[i] += values[i];
  }
  for (std::size_t r = 0; r < region.rows; ++r) {
    double *row = s.data.get() + region.offset + r * region.stride;
    for (std::size_t c = 0; c < region.cols; ++c) {
      std::atomic_ref<double>(row[c]).store(staged[in++],
                                            std::memory_order_relaxed);
    }
  }
  counters_.add_transfer(caller, s.owner, 2 * payload, 2);
}

std::span<double> Fabric::local_view(SegmentId seg, Rank caller) {
  auto &s = segment(seg);
  if (s.owner != caller) {
    throw OwnershipError(fmt::format("rank {} does not own segment {} (owner {})",
                                     caller, seg.value, s.owner));
  }
  return {s.data.get(), s.length};
}

std::span<const double> Fabric::local_view(SegmentId seg, Rank caller) const {
  const auto &s = segment(seg);
  if (s.owner != caller) {
    throw OwnershipError(fmt::format("rank {} does not own segment {} (owner {})",
                                     caller, seg.value, s.owner));
  }
  return {s.data.get(), s.length};
}

std::span<const double> Fabric::peek(SegmentId seg) const {
  const auto &s = segment(seg);
  return {s.data.get(), s.length};
}

} // namespace unimul
