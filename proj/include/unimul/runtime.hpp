#pragma once

// Execution of op lists (direct execution) and lowered IR programs over the
// fabric.
//
// Every logical process runs its own action stream. Two ordering rules hold
// inside a stream: a GEMM waits for its input tiles, and the accumulate of a
// GEMM's result is issued only after that GEMM completed. Streams run either
// in lockstep (one action at a time, round-robin, deterministic) or
// threaded (one OpenMP thread per process).

#include "unimul/distmatrix.hpp"
#include "unimul/ir.hpp"
#include "unimul/opgen.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace unimul {

enum class ExecMode { Lockstep, Threaded };

struct ExecConfig {
  Stationarity stationarity = Stationarity::C;
  std::size_t prefetch_depth = 2;
  std::size_t max_inflight_gemms = 2;
  std::size_t max_inflight_accums = 2;
  AccumulateMode accumulate_mode = AccumulateMode::PeerAtomic;
  // 0 picks a size that never forces serialization.
  std::size_t pool_capacity = 0;
  ExecMode mode = ExecMode::Lockstep;
  // Sum replicated C into replica 0 once all processes are done.
  bool reduce_output = true;
  bool record_trace = false;

  void validate() const;
  std::size_t effective_pool_capacity() const;
};

// Fixed arena of equally sized buffers, allocated once.
class BufferPool {
public:
  BufferPool(std::size_t capacity, std::size_t buffer_elements);
  BufferPool(const BufferPool &) = delete;
  BufferPool &operator=(const BufferPool &) = delete;

  class Buffer {
  public:
    Buffer(Buffer &&other) noexcept;
    Buffer &operator=(Buffer &&other) noexcept;
    Buffer(const Buffer &) = delete;
    Buffer &operator=(const Buffer &) = delete;
    ~Buffer();

    std::span<double> span() const;

  private:
    friend class BufferPool;
    Buffer(BufferPool *pool, std::size_t slot) : pool_(pool), slot_(slot) {}
    void release();

    BufferPool *pool_;
    std::size_t slot_;
  };

  // Empty when every buffer is in use.
  std::optional<Buffer> try_acquire();

  std::size_t capacity() const { return capacity_; }
  std::size_t buffer_elements() const { return elements_; }
  std::size_t available() const { return free_.size(); }
  std::size_t acquired() const { return acquired_; }
  std::size_t released() const { return released_; }
  std::size_t peak_in_use() const { return peak_; }

private:
  std::size_t capacity_;
  std::size_t elements_;
  std::vector<double> arena_;
  std::vector<std::size_t> free_;
  std::size_t acquired_ = 0;
  std::size_t released_ = 0;
  std::size_t peak_ = 0;
};

// Start position of the rotated op list for one stationary tile.
std::size_t iteration_offset(TileIdx stationary_tile, std::size_t nops);

// Execution order for `ops`: consecutive ops sharing a stationary tile are
// rotated by iteration_offset. Returns indices into `ops`.
std::vector<std::size_t> execution_order(std::span<const LocalMatMulOp> ops,
                                         Stationarity s);

struct TraceEvent {
  enum class Kind {
    InputReady,
    FetchIssue,
    GemmLaunch,
    GemmDone,
    AccumulateIssue,
    AccumulateRetire,
  };
  Kind kind;
  // Position in the execution order (direct) or step index (IR).
  std::size_t position;
  std::size_t op;
  Operand operand;
  TileIdx tile;
};

struct ProcessStats {
  Rank rank = 0;
  std::size_t ops = 0;
  std::size_t peak_inflight_gemms = 0;
  std::size_t peak_inflight_accums = 0;
  std::size_t pool_acquired = 0;
  std::size_t pool_released = 0;
  std::size_t pool_peak = 0;
  std::vector<std::size_t> order;
  std::vector<TraceEvent> trace;
};

struct RunStats {
  std::vector<ProcessStats> processes;
  std::size_t total_ops() const;
};

struct Matrices {
  const DistributedMatrix &a;
  const DistributedMatrix &b;
  const DistributedMatrix &c;

  Operands layouts() const { return {a.layout(), b.layout(), c.layout()}; }
};

using Yield = std::function<void()>;

// Runs body(rank, yield) for every rank and returns once all have finished
// (the run-level barrier). The first exception thrown by any body is
// rethrown.
void run_processes(std::size_t nprocs, ExecMode mode,
                   const std::function<void(Rank, const Yield &)> &body);

// One rank's direct execution of its op list.
ProcessStats run_direct_process(const Matrices &m,
                                std::span<const LocalMatMulOp> ops,
                                const ExecConfig &cfg, Rank caller,
                                const Yield &yield);

// Generates every rank's ops, executes them, and reduces replicated C.
RunStats run_direct(const Matrices &m, const ExecConfig &cfg);

CompGraph graph_of(const IrProgram &prog);

ProcessStats run_ir_process(const Matrices &m, const IrProgram &prog,
                            const ExecConfig &cfg, const Yield &yield);

// Executes one validated program per rank. Throws ContractError if any
// program fails validation.
RunStats run_ir(const Matrices &m, std::span<const IrProgram> progs,
                const ExecConfig &cfg);

// Per-run metrics record.
struct RunMetrics {
  std::string config_id;
  Stationarity stationarity = Stationarity::C;
  std::size_t ops = 0;
  std::uint64_t flops = 0;
  std::uint64_t comm_bytes = 0;
  double model_cost_seconds = 0.0;

  static std::string csv_header();
  std::string csv_row() const;
};

} // namespace unimul
