#include "unimul/ir.hpp"

#include <fmt/format.h>

namespace unimul {

char to_char(Operand o) {
  switch (o) {
  case Operand::A:
    return 'A';
  case Operand::B:
    return 'B';
  case Operand::C:
    return 'C';
  }
  return '?';
}

CommOp CommOp::fetch(const CompGraph &g, std::size_t node) {
  const auto &n = g.nodes[node];
  return {Kind::Fetch, node, 0, n.bytes, n.owner};
}

CommOp CommOp::accumulate(const CompGraph &g, std::size_t op) {
  auto node = g.edges[op][static_cast<std::size_t>(Operand::C)];
  const auto &o = g.ops[op];
  return {Kind::Accumulate, node, op,
          kElementBytes * o.m.size() * o.n.size(), g.nodes[node].owner};
}

std::string format_program(const IrProgram &prog) {
  std::string out;
  for (std::size_t s = 0; s < prog.steps.size(); ++s) {
    const auto &step = prog.steps[s];
    out += fmt::format("step {}: compute=[", s);
    for (std::size_t i = 0; i < step.compute.size(); ++i) {
      out += fmt::format("{}op#{}", i ? " " : "", step.compute[i]);
    }
    out += "] comm=[";
    for (std::size_t i = 0; i < step.comm.size(); ++i) {
      const auto &c = step.comm[i];
      const auto &n = prog.nodes[c.node];
      out += fmt::format("{}{} {}{}@{}", i ? " " : "",
                         c.kind == CommOp::Kind::Fetch ? "fetch" : "acc",
                         to_char(n.operand), to_string(n.tile), n.owner);
    }
    out += "]\n";
  }
  return out;
}

} // namespace unimul
