#pragma once

// Lowering of a rank's op list to an IR with explicit, overlapped
// communication. Each IR step carries up to `max_compute` ops whose inputs
// are already present and up to `max_comm` transfers; transfers issued in a
// step satisfy their edges for the next step.

#include "unimul/costmodel.hpp"
#include "unimul/errors.hpp"
#include "unimul/ir.hpp"

#include <functional>
#include <optional>
#include <string>

namespace unimul {

// Placement of a tile as seen from one rank.
using LocalityOracle = std::function<DataNode(Operand, TileIdx)>;

// Moving operands resolve to the caller's own replica.
LocalityOracle locality_for(const Operands &operands, Rank caller);

CompGraph build_graph(Rank rank, std::vector<LocalMatMulOp> ops,
                      const LocalityOracle &locality);

// Eligible compute first, then eligible communication, each in op-list
// order up to the limits. Pending fetches take priority over accumulates.
IrProgram lower_greedy(const CompGraph &g, Limits limits);

// Same filling discipline, but each slot goes to the candidate that raises
// the step cost the least (ties: op-list order).
IrProgram lower_cost_greedy(const CompGraph &g, Limits limits,
                            const MachineModel &machine);

class ScheduleTooLarge : public ConfigError {
public:
  using ConfigError::ConfigError;
};

// Minimal-cost schedule over every valid step sequence. Exponential: throws
// ScheduleTooLarge when the graph has more than `max_ops` ops.
IrProgram lower_exhaustive(const CompGraph &g, Limits limits,
                           const MachineModel &machine,
                           std::size_t max_ops = 6);

// One transfer or one compute per step, no overlap at all.
IrProgram lower_naive(const CompGraph &g);

struct Violation {
  enum class Kind {
    GraphMismatch,
    LimitExceeded,
    BadReference,
    DuplicateCompute,
    DependencyOrder,
    MissingCompute,
    LocalFetch,
    DuplicateFetch,
    MissingFetch,
    AccumulateBeforeCompute,
    DuplicateAccumulate,
    MissingAccumulate,
  };

  Kind kind;
  std::size_t step = 0;
  std::string message;
};

std::string_view to_string(Violation::Kind kind);

// First violated IrProgram invariant, or nullopt when the program is valid.
std::optional<Violation> validate(const IrProgram &prog, const CompGraph &g);

} // namespace unimul
