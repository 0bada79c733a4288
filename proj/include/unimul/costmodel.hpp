#pragma once

// Roofline compute cost plus bandwidth-only communication cost. A step
// costs the larger of its summed compute and summed communication; a
// program costs the sum of its steps, and a set of per-process programs the
// slowest process.

#include "unimul/fabric.hpp"
#include "unimul/ir.hpp"

#include <algorithm>
#include <span>

namespace unimul {

struct MachineModel {
  double arith_peak;  // flops/s
  double mem_bw;      // bytes/s
  LinkTable links;

  MachineModel(double arith_peak, double mem_bw, LinkTable links);
};

struct Cost {
  double seconds = 0.0;

  friend auto operator<=>(const Cost &, const Cost &) = default;
  Cost &operator+=(Cost o) {
    seconds += o.seconds;
    return *this;
  }
};

Cost compute_cost(std::size_t m_len, std::size_t k_len, std::size_t n_len,
                  const MachineModel &machine);
Cost compute_cost(const LocalMatMulOp &op, const MachineModel &machine);

Cost comm_cost(std::uint64_t bytes, Rank src, Rank dst,
               const MachineModel &machine);

struct StepCost {
  Cost compute;
  Cost comm;
  Cost total() const { return {std::max(compute.seconds, comm.seconds)}; }
};

StepCost step_cost_parts(const IrStep &step, std::span<const LocalMatMulOp> ops,
                         Rank rank, const MachineModel &machine);
Cost step_cost(const IrStep &step, std::span<const LocalMatMulOp> ops,
               Rank rank, const MachineModel &machine);
Cost program_cost(const IrProgram &prog, const MachineModel &machine);
Cost program_cost(std::span<const IrProgram> progs,
                  const MachineModel &machine);

} // namespace unimul
