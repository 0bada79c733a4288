#pragma once

// Configuration-driven harness: builds the three matrices from a RunConfig,
// runs one execution path, checks gather(C) against the serial product and
// reports volume, flops and modeled cost.

#include "unimul/costmodel.hpp"
#include "unimul/ir.hpp"
#include "unimul/opgen.hpp"
#include "unimul/runtime.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unimul {

// How one operand is tiled, before it is bound to a matrix shape.
struct PartitionDesc {
  enum class Kind { Row, Col, Block2D, Custom };
  Kind kind = Kind::Block2D;
  // Custom only.
  Shape2D tile{};
  // Custom only; defaults to factor_grid(p/c).
  std::optional<Shape2D> grid;
  Mapping mapping = Mapping::BlockCyclic;

  // row | col | 2d | custom:RxC[:PRxPC[:block|cyclic]]
  static PartitionDesc parse(std::string_view text);
  PartitionSpec resolve(Shape2D global, std::size_t nprocs_in_replica) const;
  std::string to_string() const;
};

enum class Execution { Direct, IrGreedy, IrCost, IrExhaustive };
std::string_view to_string(Execution e);
Execution parse_execution(std::string_view text);

struct RunConfig {
  std::size_t m = 12;
  std::size_t n = 12;
  std::size_t k = 12;
  std::size_t p = 4;
  // Indexed by Operand.
  std::array<PartitionDesc, 3> partition{};
  std::array<std::size_t, 3> replication{1, 1, 1};
  // Empty means auto.
  std::optional<Stationarity> stationarity = Stationarity::C;
  Execution execution = Execution::Direct;
  ExecConfig exec{};
  Limits limits{};
  std::size_t exhaustive_bound = 6;
  double arith_peak = 1e11;
  double mem_bw = 5e10;
  double link_bw = 1e9;
  // Two-level topology when group_size > 0.
  std::size_t group_size = 0;
  double intra_bw = 0.0;
  double inter_bw = 0.0;
  std::uint64_t seed = 1;
  bool real = false;

  // Applies one `key = value` setting. Throws ConfigError on unknown keys
  // or malformed values.
  void set(std::string_view key, std::string_view value);
  // Throws ConfigError naming the violated constraint.
  void validate() const;

  Shape2D shape(Operand o) const;
  PartitionSpec partition_spec(Operand o) const;
  MatrixLayout layout(Operand o) const;
  MachineModel machine() const;
  // Compact single-line description, free of commas.
  std::string id() const;

  // Lines of `key = value`; `#` starts a comment. Errors carry the line.
  static RunConfig parse(std::istream &in, std::string_view source = "<config>");
  static RunConfig load(const std::filesystem::path &path);
};

// Per-rank op lists for stationarity `s`.
std::vector<std::vector<LocalMatMulOp>> all_ops(const RunConfig &cfg,
                                                Stationarity s);

// Per-rank lowered programs for `s` with the given strategy. Direct
// execution is modeled with the greedy lowering.
std::vector<IrProgram> lower_all(const RunConfig &cfg, Stationarity s,
                                 Execution strategy);

double model_cost(const RunConfig &cfg, Stationarity s);

// Lowest modeled cost; ties go to C, then A, then B.
Stationarity pick_stationarity(const RunConfig &cfg);

struct RunResult {
  std::string config;
  Stationarity stationarity = Stationarity::C;
  // False when the configuration was rejected before running.
  bool valid = true;
  std::string error;
  bool pass = false;
  double max_rel_err = 0.0;
  std::uint64_t comm_bytes = 0;
  std::uint64_t flops_max_rank = 0;
  std::vector<std::uint64_t> flops_per_rank;
  double model_cost_s = 0.0;
  std::size_t ops = 0;
  std::string links_csv;
  std::string flops_csv;

  static std::string csv_header();
  std::string csv_row() const;
};

// Never throws for bad configurations: those come back with valid == false.
RunResult run_one(const RunConfig &cfg);

struct Sweep {
  // One fully expanded configuration per row, or the error that made it
  // invalid.
  struct Row {
    std::optional<RunConfig> config;
    std::string description;
    std::string error;
  };
  std::vector<Row> rows;

  // `key = v1, v2, ...` lines; the cross product of all lists, expanded in
  // file order with the last key varying fastest.
  static Sweep parse(std::istream &in, std::string_view source = "<sweep>");
  static Sweep load(const std::filesystem::path &path);
};

// Runs every row, writing the CSV header and one line per row. Returns true
// iff every row was valid and passed.
bool run_sweep(const Sweep &sweep, std::ostream &csv);

} // namespace unimul
