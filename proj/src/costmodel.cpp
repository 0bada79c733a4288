#include "unimul/costmodel.hpp"

#include "unimul/errors.hpp"

#include <algorithm>

namespace unimul {

MachineModel::MachineModel(double arith_peak, double mem_bw, LinkTable links)
    : arith_peak(arith_peak), mem_bw(mem_bw), links(std::move(links)) {
  if (!(arith_peak > 0) || !(mem_bw > 0)) {
    throw ConfigError("machine peaks must be positive");
  }
}

Cost compute_cost(std::size_t m_len, std::size_t k_len, std::size_t n_len,
                  const MachineModel &machine) {
  double flops = 2.0 * static_cast<double>(m_len) * static_cast<double>(k_len) *
                 static_cast<double>(n_len);
  double bytes = static_cast<double>(kElementBytes) *
                 static_cast<double>(m_len * k_len + k_len * n_len +
                                     m_len * n_len);
  return {std::max(flops / machine.arith_peak, bytes / machine.mem_bw)};
}

Cost compute_cost(const LocalMatMulOp &op, const MachineModel &machine) {
  return compute_cost(op.m.size(), op.k.size(), op.n.size(), machine);
}

Cost comm_cost(std::uint64_t bytes, Rank src, Rank dst,
               const MachineModel &machine) {
  return {static_cast<double>(bytes) / machine.links.bandwidth(src, dst)};
}

StepCost step_cost_parts(const IrStep &step, std::span<const LocalMatMulOp> ops,
                         Rank rank, const MachineModel &machine) {
  StepCost cost;
  for (auto op : step.compute) {
    cost.compute += compute_cost(ops[op], machine);
  }
  for (const auto &c : step.comm) {
    cost.comm += comm_cost(c.bytes, rank, c.peer, machine);
  }
  return cost;
}

Cost step_cost(const IrStep &step, std::span<const LocalMatMulOp> ops,
               Rank rank, const MachineModel &machine) {
  return step_cost_parts(step, ops, rank, machine).total();
}

Cost program_cost(const IrProgram &prog, const MachineModel &machine) {
  Cost total;
  for (const auto &step : prog.steps) {
    total += step_cost(step, prog.ops, prog.rank, machine);
  }
  return total;
}

Cost program_cost(std::span<const IrProgram> progs,
                  const MachineModel &machine) {
  Cost worst;
  for (const auto &p : progs) {
    worst = std::max(worst, program_cost(p, machine));
  }
  return worst;
}

} // namespace unimul
