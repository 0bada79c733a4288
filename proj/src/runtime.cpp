#include "unimul/runtime.hpp"

#include "unimul/errors.hpp"
#include "unimul/kernels.hpp"
#include "unimul/lowering.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fmt/format.h>
#include <map>
#include <mutex>
#include <thread>

namespace unimul {

void ExecConfig::validate() const {
  if (prefetch_depth == 0 || max_inflight_gemms == 0 ||
      max_inflight_accums == 0) {
    throw ConfigError("prefetch depth and in-flight limits must be >= 1");
  }
  if (pool_capacity != 0 && pool_capacity < 3) {
    throw ConfigError("buffer pool needs room for at least 3 tiles");
  }
}

std::size_t ExecConfig::effective_pool_capacity() const {
  if (pool_capacity != 0) {
    return pool_capacity;
  }
  return 2 * (prefetch_depth + 1) + max_inflight_gemms + max_inflight_accums + 1;
}

BufferPool::BufferPool(std::size_t capacity, std::size_t buffer_elements)
    : capacity_(capacity), elements_(buffer_elements),
      arena_(capacity * buffer_elements) {
  free_.reserve(capacity);
  for (std::size_t i = capacity; i-- > 0;) {
    free_.push_back(i);
  }
}

std::optional<BufferPool::Buffer> BufferPool::try_acquire() {
  if (free_.empty()) {
    return std::nullopt;
  }
  auto slot = free_.back();
  free_.pop_back();
  ++acquired_;
  peak_ = std::max(peak_, capacity_ - free_.size());
  return Buffer(this, slot);
}

BufferPool::Buffer::Buffer(Buffer &&other) noexcept
    : pool_(std::exchange(other.pool_, nullptr)), slot_(other.slot_) {}

BufferPool::Buffer &BufferPool::Buffer::operator=(Buffer &&other) noexcept {
  if (this != &other) {
    release();
    pool_ = std::exchange(other.pool_, nullptr);
    slot_ = other.slot_;
  }
  return *this;
}

BufferPool::Buffer::~Buffer() { release(); }

void BufferPool::Buffer::release() {
  if (pool_ != nullptr) {
    pool_->free_.push_back(slot_);
    ++pool_->released_;
    pool_ = nullptr;
  }
}

std::span<double> BufferPool::Buffer::span() const {
  return {pool_->arena_.data() + slot_ * pool_->elements_, pool_->elements_};
}

std::size_t iteration_offset(TileIdx stationary_tile, std::size_t nops) {
  if (nops == 0) {
    throw ContractError("iteration offset of an empty op list");
  }
  return (stationary_tile.i + stationary_tile.j) % nops;
}

namespace {

TileIdx stationary_tile(const LocalMatMulOp &op, Stationarity s) {
  switch (s) {
  case Stationarity::A:
    return op.a;
  case Stationarity::B:
    return op.b;
  case Stationarity::C:
    return op.c;
  }
  return op.c;
}

} // namespace

std::vector<std::size_t> execution_order(std::span<const LocalMatMulOp> ops,
                                         Stationarity s) {
  std::vector<std::size_t> order;
  order.reserve(ops.size());
  std::size_t begin = 0;
  while (begin < ops.size()) {
    auto tile = stationary_tile(ops[begin], s);
    std::size_t end = begin;
    while (end < ops.size() && stationary_tile(ops[end], s) == tile) {
      ++end;
    }
    auto n = end - begin;
    auto start = iteration_offset(tile, n);
    for (std::size_t q = 0; q < n; ++q) {
      order.push_back(begin + (start + q) % n);
    }
    begin = end;
  }
  return order;
}

std::size_t RunStats::total_ops() const {
  std::size_t n = 0;
  for (const auto &p : processes) {
    n += p.ops;
  }
  return n;
}

void run_processes(std::size_t nprocs, ExecMode mode,
                   const std::function<void(Rank, const Yield &)> &body) {
  std::vector<std::exception_ptr> errors(nprocs);

  if (mode == ExecMode::Threaded) {
    const Yield noop = [] {};
    const auto n = static_cast<std::ptrdiff_t>(nprocs);
#pragma omp parallel for schedule(dynamic, 1) num_threads(static_cast<int>(nprocs))
    for (std::ptrdiff_t r = 0; r < n; ++r) {
      try {
        body(static_cast<Rank>(r), noop);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  } else {
    // Baton passing: exactly one process runs at a time, and yield hands the
    // baton to the next live rank in round-robin order.
    std::mutex mu;
    std::condition_variable cv;
    std::vector<char> alive(nprocs, 1);
    constexpr Rank kNone = static_cast<Rank>(-1);
    Rank turn = 0;

    auto pass_from = [&](Rank r) {
      for (std::size_t step = 1; step <= nprocs; ++step) {
        Rank next = (r + step) % nprocs;
        if (alive[next]) {
          turn = next;
          return;
        }
      }
      turn = kNone;
    };

    std::vector<std::thread> threads;
    threads.reserve(nprocs);
    for (Rank r = 0; r < nprocs; ++r) {
      threads.emplace_back([&, r] {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return turn == r; });
        Yield yield = [&] {
          pass_from(r);
          cv.notify_all();
          cv.wait(lock, [&] { return turn == r; });
        };
        try {
          body(r, yield);
        } catch (...) {
          errors[r] = std::current_exception();
        }
        alive[r] = 0;
        pass_from(r);
        cv.notify_all();
      });
    }
    for (auto &t : threads) {
      t.join();
    }
  }

  for (auto &e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

namespace {

std::size_t pool_buffer_elements(const Matrices &m) {
  return std::max({m.a.layout().max_tile_elements(),
                   m.b.layout().max_tile_elements(),
                   m.c.layout().max_tile_elements()});
}

const DistributedMatrix &operand(const Matrices &m, Operand o) {
  return o == Operand::A ? m.a : o == Operand::B ? m.b : m.c;
}

// A tile an op reads: either a view of local memory or a pooled copy of a
// remote tile.
struct HeldTile {
  std::optional<BufferPool::Buffer> buffer;
  PendingCopy pending;
  ConstView view;
  bool ready = false;
};

class DirectExecutor {
public:
  DirectExecutor(const Matrices &m, std::span<const LocalMatMulOp> ops,
                 const ExecConfig &cfg, Rank caller, const Yield &yield)
      : m_(m), ops_(ops), cfg_(cfg), caller_(caller), yield_(yield),
        pool_(cfg.effective_pool_capacity(), pool_buffer_elements(m)),
        order_(execution_order(ops, cfg.stationarity)), slots_(ops.size()),
        c_replica_(m.c.layout().replica_of(caller)) {}

  ProcessStats run() {
    for (std::size_t pos = 0; pos < order_.size(); ++pos) {
      auto last = std::min(order_.size() - 1, pos + cfg_.prefetch_depth);
      for (std::size_t q = pos; q <= last; ++q) {
        if (!issue(q, q == pos)) {
          break;
        }
      }
      execute(pos);
    }
    while (!gemms_.empty()) {
      complete_oldest_gemm();
    }
    while (!accums_.empty()) {
      retire_oldest_accumulate();
    }
    cache_.clear();

    stats_.rank = caller_;
    stats_.ops = ops_.size();
    stats_.order = order_;
    stats_.pool_acquired = pool_.acquired();
    stats_.pool_released = pool_.released();
    stats_.pool_peak = pool_.peak_in_use();
    return std::move(stats_);
  }

private:
  struct Slot {
    std::shared_ptr<HeldTile> a;
    std::shared_ptr<HeldTile> b;
  };
  struct Gemm {
    std::size_t position;
    std::size_t op;
    std::shared_ptr<HeldTile> a;
    std::shared_ptr<HeldTile> b;
    std::optional<BufferPool::Buffer> scratch;
    MutView target;
  };
  struct Accumulate {
    std::size_t position;
    std::size_t op;
    BufferPool::Buffer scratch;
  };

  // Buffers kept free for the current op's mandatory acquisitions.
  static constexpr std::size_t kReserve = 3;

  void trace(TraceEvent::Kind kind, std::size_t pos, Operand o, TileIdx t) {
    if (cfg_.record_trace) {
      stats_.trace.push_back({kind, pos, order_[pos], o, t});
    }
  }

  // Makes the inputs of position `pos` available or in flight. Speculative
  // issues give up instead of eating into the reserve.
  bool issue(std::size_t pos, bool mandatory) {
    const auto &op = ops_[order_[pos]];
    auto &slot = slots_[pos];
    if (!slot.a) {
      slot.a = input(Operand::A, op.a, pos, mandatory);
      if (!slot.a) {
        return false;
      }
    }
    if (!slot.b) {
      slot.b = input(Operand::B, op.b, pos, mandatory);
      if (!slot.b) {
        return false;
      }
    }
    return true;
  }

  std::shared_ptr<HeldTile> input(Operand o, TileIdx t, std::size_t pos,
                                  bool mandatory) {
    const auto &mat = operand(m_, o);
    auto key = std::pair{o, t};
    if (auto it = cache_.find(key); it != cache_.end()) {
      if (auto held = it->second.lock()) {
        return held;
      }
    }
    auto held = std::make_shared<HeldTile>();
    if (mat.layout().owns(caller_, t)) {
      held->view = mat.tile(t, std::nullopt, caller_).view();
      held->ready = true;
    } else {
      if (mandatory) {
        held->buffer = acquire();
      } else if (pool_.available() > kReserve) {
        held->buffer = pool_.try_acquire();
      }
      if (!held->buffer) {
        return nullptr;
      }
      auto shape = mat.tile_bounds(t).shape();
      held->pending = mat.get_tile_async_into(t, std::nullopt, caller_,
                                              held->buffer->span());
      held->view = make_view(std::span<const double>(held->buffer->span()), shape);
      trace(TraceEvent::Kind::FetchIssue, pos, o, t);
      yield_();
    }
    cache_[key] = held;
    return held;
  }

  BufferPool::Buffer acquire() {
    for (;;) {
      if (auto b = pool_.try_acquire()) {
        return std::move(*b);
      }
      if (!gemms_.empty()) {
        complete_oldest_gemm();
      } else if (!accums_.empty()) {
        retire_oldest_accumulate();
      } else {
        throw std::logic_error(fmt::format(
            "rank {}: buffer pool of {} exhausted with nothing in flight",
            caller_, pool_.capacity()));
      }
    }
  }

  void wait_ready(HeldTile &held) {
    if (!held.ready) {
      held.pending.wait();
      held.ready = true;
    }
  }

  void execute(std::size_t pos) {
    auto idx = order_[pos];
    const auto &op = ops_[idx];
    auto slot = std::move(slots_[pos]);
    wait_ready(*slot.a);
    wait_ready(*slot.b);
    trace(TraceEvent::Kind::InputReady, pos, Operand::A, op.a);
    trace(TraceEvent::Kind::InputReady, pos, Operand::B, op.b);

    Gemm g{pos, idx, std::move(slot.a), std::move(slot.b), std::nullopt, {}};
    bool direct_c = cfg_.stationarity == Stationarity::C &&
                    m_.c.layout().owns(caller_, op.c);
    if (direct_c) {
      g.target = m_.c.tile(op.c, std::nullopt, caller_).view().sub(op.c_local);
    } else {
      g.scratch = acquire();
      auto out = g.scratch->span().first(op.m.size() * op.n.size());
      std::fill(out.begin(), out.end(), 0.0);
      g.target = make_view(out, {op.m.size(), op.n.size()});
    }

    if (gemms_.size() >= cfg_.max_inflight_gemms) {
      complete_oldest_gemm();
    }
    gemms_.push_back(std::move(g));
    stats_.peak_inflight_gemms =
        std::max(stats_.peak_inflight_gemms, gemms_.size());
    trace(TraceEvent::Kind::GemmLaunch, pos, Operand::C, op.c);
    yield_();
  }

  void complete_oldest_gemm() {
    auto g = std::move(gemms_.front());
    gemms_.pop_front();
    const auto &op = ops_[g.op];
    auto flops = local_gemm(g.a->view.sub(op.a_local), g.b->view.sub(op.b_local),
                            g.target);
    m_.c.fabric().add_flops(caller_, flops);
    trace(TraceEvent::Kind::GemmDone, g.position, Operand::C, op.c);
    g.a.reset();
    g.b.reset();
    if (g.scratch) {
      if (accums_.size() >= cfg_.max_inflight_accums) {
        retire_oldest_accumulate();
      }
      auto values = g.scratch->span().first(op.m.size() * op.n.size());
      m_.c.accumulate_tile(c_replica_, op.c, values, op.c_local, caller_,
                           cfg_.accumulate_mode);
      trace(TraceEvent::Kind::AccumulateIssue, g.position, Operand::C, op.c);
      accums_.push_back({g.position, g.op, std::move(*g.scratch)});
      stats_.peak_inflight_accums =
          std::max(stats_.peak_inflight_accums, accums_.size());
    }
    yield_();
  }

  void retire_oldest_accumulate() {
    auto a = std::move(accums_.front());
    accums_.pop_front();
    trace(TraceEvent::Kind::AccumulateRetire, a.position, Operand::C,
          ops_[a.op].c);
  }

  const Matrices &m_;
  std::span<const LocalMatMulOp> ops_;
  const ExecConfig &cfg_;
  Rank caller_;
  const Yield &yield_;
  BufferPool pool_;
  std::vector<std::size_t> order_;
  std::vector<Slot> slots_;
  std::size_t c_replica_;
  std::map<std::pair<Operand, TileIdx>, std::weak_ptr<HeldTile>> cache_;
  std::deque<Gemm> gemms_;
  std::deque<Accumulate> accums_;
  ProcessStats stats_;
};

void finalize_output(const Matrices &m, const ExecConfig &cfg) {
  if (cfg.reduce_output && m.c.replication() > 1) {
    run_processes(m.c.fabric().nprocs(), cfg.mode,
                  [&](Rank r, const Yield &) {
                    m.c.reduce_replicas_part(0, r, cfg.accumulate_mode);
                  });
  }
}

} // namespace

ProcessStats run_direct_process(const Matrices &m,
                                std::span<const LocalMatMulOp> ops,
                                const ExecConfig &cfg, Rank caller,
                                const Yield &yield) {
  return DirectExecutor(m, ops, cfg, caller, yield).run();
}

RunStats run_direct(const Matrices &m, const ExecConfig &cfg) {
  cfg.validate();
  auto layouts = m.layouts();
  check_conforming(layouts);
  const auto nprocs = m.c.fabric().nprocs();
  RunStats stats;
  stats.processes.resize(nprocs);
  run_processes(nprocs, cfg.mode, [&](Rank r, const Yield &yield) {
    auto ops = generate_ops(cfg.stationarity, layouts, r);
    stats.processes[r] = run_direct_process(m, ops, cfg, r, yield);
  });
  finalize_output(m, cfg);
  return stats;
}

CompGraph graph_of(const IrProgram &prog) {
  return {prog.rank, prog.ops, prog.nodes, prog.edges};
}

ProcessStats run_ir_process(const Matrices &m, const IrProgram &prog,
                            const ExecConfig &cfg, const Yield &yield) {
  const Rank caller = prog.rank;
  ProcessStats stats;
  stats.rank = caller;
  stats.ops = prog.ops.size();

  struct Fetched {
    std::vector<double> data;
    PendingCopy pending;
    std::size_t uses = 0;
  };
  std::map<std::size_t, Fetched> fetched;
  std::map<std::size_t, std::vector<double>> results;
  std::vector<std::size_t> uses(prog.nodes.size(), 0);
  for (const auto &e : prog.edges) {
    ++uses[e[0]];
    ++uses[e[1]];
  }
  const auto c_replica = m.c.layout().replica_of(caller);

  auto trace = [&](TraceEvent::Kind kind, std::size_t step, std::size_t op,
                   Operand o, TileIdx t) {
    if (cfg.record_trace) {
      stats.trace.push_back({kind, step, op, o, t});
    }
  };

  auto input_view = [&](std::size_t node_idx) -> ConstView {
    const auto &node = prog.nodes[node_idx];
    const auto &mat = operand(m, node.operand);
    if (node.local) {
      return mat.tile(node.tile, node.replica, caller).view();
    }
    const auto &f = fetched.at(node_idx);
    return make_view(std::span<const double>(f.data),
                     mat.tile_bounds(node.tile).shape());
  };

  for (std::size_t s = 0; s < prog.steps.size(); ++s) {
    const auto &step = prog.steps[s];
    std::vector<std::size_t> issued;
    for (const auto &c : step.comm) {
      if (c.kind != CommOp::Kind::Fetch) {
        continue;
      }
      const auto &node = prog.nodes[c.node];
      const auto &mat = operand(m, node.operand);
      auto &f = fetched[c.node];
      f.data.resize(mat.tile_bounds(node.tile).shape().size());
      f.uses = uses[c.node];
      f.pending = mat.get_tile_async_into(node.tile, node.replica, caller, f.data);
      issued.push_back(c.node);
      trace(TraceEvent::Kind::FetchIssue, s, 0, node.operand, node.tile);
      yield();
    }

    for (auto idx : step.compute) {
      const auto &op = prog.ops[idx];
      const auto &e = prog.edges[idx];
      auto a = input_view(e[0]).sub(op.a_local);
      auto b = input_view(e[1]).sub(op.b_local);
      const auto &cnode = prog.nodes[e[2]];
      trace(TraceEvent::Kind::GemmLaunch, s, idx, Operand::C, op.c);
      std::uint64_t flops = 0;
      if (cnode.local && cfg.stationarity == Stationarity::C) {
        auto target = m.c.tile(op.c, cnode.replica, caller).view().sub(op.c_local);
        flops = local_gemm(a, b, target);
      } else {
        std::vector<double> out(op.m.size() * op.n.size(), 0.0);
        flops = local_gemm(a, b, make_view(std::span<double>(out), Shape2D{op.m.size(), op.n.size()}));
        if (cnode.local) {
          m.c.accumulate_tile(c_replica, op.c, out, op.c_local, caller,
                              cfg.accumulate_mode);
        } else {
          results[idx] = std::move(out);
        }
      }
      m.c.fabric().add_flops(caller, flops);
      trace(TraceEvent::Kind::GemmDone, s, idx, Operand::C, op.c);
      for (auto n : {e[0], e[1]}) {
        if (auto it = fetched.find(n); it != fetched.end() && --it->second.uses == 0) {
          fetched.erase(it);
        }
      }
      yield();
    }

    for (const auto &c : step.comm) {
      if (c.kind != CommOp::Kind::Accumulate) {
        continue;
      }
      const auto &op = prog.ops[c.op];
      auto it = results.find(c.op);
      if (it == results.end()) {
        throw std::logic_error(fmt::format(
            "rank {}: accumulate of op#{} with no computed result", caller, c.op));
      }
      m.c.accumulate_tile(c_replica, op.c, it->second, op.c_local, caller,
                          cfg.accumulate_mode);
      results.erase(it);
      trace(TraceEvent::Kind::AccumulateIssue, s, c.op, Operand::C, op.c);
      yield();
    }

    // A step's transfers land before the next step starts.
    for (auto n : issued) {
      if (auto it = fetched.find(n); it != fetched.end()) {
        it->second.pending.wait();
      }
    }
  }
  return stats;
}

RunStats run_ir(const Matrices &m, std::span<const IrProgram> progs,
                const ExecConfig &cfg) {
  cfg.validate();
  check_conforming(m.layouts());
  const auto nprocs = m.c.fabric().nprocs();
  if (progs.size() != nprocs) {
    throw ContractError(fmt::format("{} IR programs for {} processes",
                                    progs.size(), nprocs));
  }
  for (Rank r = 0; r < nprocs; ++r) {
    if (progs[r].rank != r) {
      throw ContractError(fmt::format("program {} belongs to rank {}", r,
                                      progs[r].rank));
    }
    if (auto v = validate(progs[r], graph_of(progs[r]))) {
      throw ContractError(fmt::format("rank {}: invalid IR program ({}): {}", r,
                                      to_string(v->kind), v->message));
    }
  }
  RunStats stats;
  stats.processes.resize(nprocs);
  run_processes(nprocs, cfg.mode, [&](Rank r, const Yield &yield) {
    stats.processes[r] = run_ir_process(m, progs[r], cfg, yield);
  });
  finalize_output(m, cfg);
  return stats;
}

std::string RunMetrics::csv_header() {
  return "config-id,stationarity,ops,flops,comm_bytes,model_cost_seconds";
}

std::string RunMetrics::csv_row() const {
  return fmt::format("{},{},{},{},{},{:.6e}", config_id, to_string(stationarity),
                     ops, flops, comm_bytes, model_cost_seconds);
}

} // namespace unimul
