#pragma once

// Per-process computation graph and the explicit-communication IR it is
// lowered to.

#include "unimul/opgen.hpp"
#include "unimul/tiling.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace unimul {

enum class Operand : std::uint8_t { A = 0, B = 1, C = 2 };

char to_char(Operand o);

// One distinct tile referenced by a rank's ops.
struct DataNode {
  Operand operand = Operand::A;
  TileIdx tile;
  std::size_t replica = 0;
  Rank owner = 0;
  std::uint64_t bytes = 0;
  bool local = false;
};

// Bipartite graph: compute nodes are the ops, data nodes the tiles they
// touch. Every compute node has exactly three edges (A, B, C). An edge to a
// local tile starts satisfied. A and B edges are input dependencies that a
// fetch satisfies; a remote C edge is an output obligation that an
// accumulate issued after the op's compute discharges.
struct CompGraph {
  Rank rank = 0;
  std::vector<LocalMatMulOp> ops;
  std::vector<DataNode> nodes;
  std::vector<std::array<std::size_t, 3>> edges;

  const DataNode &node(std::size_t op, Operand o) const {
    return nodes[edges[op][static_cast<std::size_t>(o)]];
  }
  bool needs_accumulate(std::size_t op) const {
    return !node(op, Operand::C).local;
  }
};

struct Limits {
  std::size_t max_compute = 1;
  std::size_t max_comm = 1;

  static constexpr std::size_t unlimited =
      std::numeric_limits<std::size_t>::max();
};

struct CommOp {
  enum class Kind : std::uint8_t { Fetch, Accumulate };

  Kind kind = Kind::Fetch;
  std::size_t node = 0;
  // Producing op for Accumulate; unused for Fetch.
  std::size_t op = 0;
  std::uint64_t bytes = 0;
  Rank peer = 0;

  static CommOp fetch(const CompGraph &g, std::size_t node);
  static CommOp accumulate(const CompGraph &g, std::size_t op);
  friend bool operator==(const CommOp &, const CommOp &) = default;
};

struct IrStep {
  std::vector<std::size_t> compute;
  std::vector<CommOp> comm;

  bool empty() const { return compute.empty() && comm.empty(); }
};

// One process's lowered schedule. Carries its ops and data nodes so it can
// be costed and executed on its own.
struct IrProgram {
  Rank rank = 0;
  Limits limits;
  std::vector<LocalMatMulOp> ops;
  std::vector<DataNode> nodes;
  std::vector<std::array<std::size_t, 3>> edges;
  std::vector<IrStep> steps;
};

// `step k: compute=[op#..] comm=[fetch A(i,j)@rank acc C(i,j)@rank ..]`
std::string format_program(const IrProgram &prog);

} // namespace unimul
