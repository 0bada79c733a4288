// Acceptance checks. Prints one PASS/FAIL line per check and exits nonzero
// if any fails.

#include "unimul/bench.hpp"
#include "unimul/lowering.hpp"
#include "unimul/runtime.hpp"

#include <fmt/core.h>

#include <chrono>
#include <random>
#include <set>
#include <thread>

#include "graphs.hpp"
#include "problems.hpp"

using namespace unimul;
using namespace unimul::testing;

namespace {

// Relative slack for comparing model costs summed in different orders.
constexpr double kCostRelTol = 1e-12;
// Wall-clock budget for the correctness sweep.
constexpr double kSweepBudgetSeconds = 300.0;
constexpr std::size_t kSweepConfigs = 1200;
constexpr std::size_t kRealConfigs = 200;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(std::string_view name, const Outcome &o) {
  fmt::print("{} {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
  std::fflush(stdout);
  if (!o.pass) {
    ++failures;
  }
}

std::vector<std::size_t> divisors(std::size_t p) {
  std::vector<std::size_t> out;
  for (std::size_t d = 1; d <= p; ++d) {
    if (p % d == 0) {
      out.push_back(d);
    }
  }
  return out;
}

template <typename T> const T &pick(std::mt19937 &rng, const std::vector<T> &v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

bool costs_le(double lhs, double rhs) { return lhs <= rhs * (1 + kCostRelTol); }

// Programs checked by the validity criterion.
std::size_t programs_checked = 0;
std::vector<std::string> invalid_programs;

void check_programs(std::span<const IrProgram> progs, std::string_view where) {
  for (const auto &prog : progs) {
    ++programs_checked;
    if (auto v = validate(prog, graph_of(prog))) {
      invalid_programs.push_back(
          fmt::format("{} rank {}: {}", where, prog.rank, v->message));
    }
  }
}

void check_programs(const IrProgram &prog, const CompGraph &g, std::string_view where) {
  ++programs_checked;
  if (auto v = validate(prog, g)) {
    invalid_programs.push_back(fmt::format("{}: {}", where, v->message));
  }
}

RunConfig random_sweep_config(std::mt19937 &rng) {
  static const std::vector<std::size_t> procs{4, 12};
  static const std::vector<std::array<std::size_t, 3>> shapes{
      {12, 12, 12}, {7, 9, 5}, {16, 8, 24}};
  static const std::vector<std::string> parts{"row", "col", "2d", "custom:3x4"};
  static const std::vector<std::string> stat{"A", "B", "C"};
  static const std::vector<std::string> execs{"direct", "ir:greedy", "ir:cost"};
  RunConfig cfg;
  cfg.p = pick(rng, procs);
  auto shape = pick(rng, shapes);
  cfg.m = shape[0];
  cfg.n = shape[1];
  cfg.k = shape[2];
  auto divs = divisors(cfg.p);
  for (auto key : {"partition_a", "partition_b", "partition_c"}) {
    cfg.set(key, pick(rng, parts));
  }
  for (std::size_t o = 0; o < 3; ++o) {
    cfg.replication[o] = pick(rng, divs);
  }
  cfg.set("stationarity", pick(rng, stat));
  cfg.set("execution", pick(rng, execs));
  return cfg;
}

Outcome correctness_sweep() {
  std::mt19937 rng(2024);
  auto start = std::chrono::steady_clock::now();
  std::set<std::string> seen;
  std::size_t runs = 0;
  std::size_t real_runs = 0;
  std::vector<std::string> bad;
  double worst_real = 0.0;
  while (seen.size() < kSweepConfigs + kRealConfigs) {
    auto cfg = random_sweep_config(rng);
    cfg.real = seen.size() >= kSweepConfigs;
    if (!seen.insert(cfg.id()).second) {
      continue;
    }
    auto res = run_one(cfg);
    ++(cfg.real ? real_runs : runs);
    if (!res.valid || !res.pass) {
      bad.push_back(fmt::format("{} ({})", res.config, res.error));
      continue;
    }
    if (cfg.real) {
      worst_real = std::max(worst_real, res.max_rel_err);
    } else if (res.max_rel_err != 0.0) {
      bad.push_back(fmt::format("{} not bit-exact", res.config));
    }
    if (cfg.execution != Execution::Direct) {
      check_programs(lower_all(cfg, *cfg.stationarity, cfg.execution), res.config);
    }
  }
  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Outcome o;
  o.pass = bad.empty() && secs < kSweepBudgetSeconds && worst_real <= 1e-10;
  o.detail = fmt::format(
      "{} integer configs bit-exact, {} real configs max rel err {:.2e} (tol 1e-10), "
      "{} failures, {:.1f} s (budget {:.0f} s)",
      runs, real_runs, worst_real, bad.size(), secs, kSweepBudgetSeconds);
  if (!bad.empty()) {
    o.detail += "; first: " + bad.front();
  }
  return o;
}

Outcome op_coverage() {
  std::mt19937 rng(77);
  auto dim = [&] { return std::uniform_int_distribution<std::size_t>(1, 16)(rng); };
  static const std::vector<std::size_t> procs{1, 2, 3, 4, 6, 8, 9, 12};
  static const std::vector<std::string> parts{"row", "col", "2d", "custom:3x4",
                                              "custom:5x2", "custom:4x4"};
  static const std::vector<Stationarity> stat{Stationarity::A, Stationarity::B,
                                              Stationarity::C};
  std::size_t checked = 0;
  std::vector<std::string> bad;
  while (checked < 100) {
    RunConfig cfg;
    cfg.m = dim();
    cfg.n = dim();
    cfg.k = dim();
    cfg.p = pick(rng, procs);
    for (auto key : {"partition_a", "partition_b", "partition_c"}) {
      cfg.set(key, pick(rng, parts));
    }
    auto divs = divisors(cfg.p);
    for (std::size_t o = 0; o < 3; ++o) {
      cfg.replication[o] = pick(rng, divs);
    }
    auto s = pick(rng, stat);
    try {
      cfg.validate();
    } catch (const ConfigError &) {
      continue;
    }
    ++checked;
    std::vector<int> hits(cfg.m * cfg.k * cfg.n, 0);
    for (const auto &ops : all_ops(cfg, s)) {
      for (const auto &op : ops) {
        for (auto i = op.m.lo; i < op.m.hi; ++i) {
          for (auto l = op.k.lo; l < op.k.hi; ++l) {
            for (auto j = op.n.lo; j < op.n.hi; ++j) {
              ++hits[(i * cfg.k + l) * cfg.n + j];
            }
          }
        }
      }
    }
    auto off = std::count_if(hits.begin(), hits.end(), [](int h) { return h != 1; });
    if (off != 0) {
      bad.push_back(fmt::format("{} S={}: {} triples not covered exactly once",
                                cfg.id(), to_string(s), off));
    }
  }
  Outcome o;
  o.pass = bad.empty();
  o.detail = fmt::format("{} random configs, every (i,l,j) covered exactly once in {}",
                         checked, checked - bad.size());
  if (!bad.empty()) {
    o.detail += "; first: " + bad.front();
  }
  return o;
}

Outcome replica_flop_share() {
  struct Case {
    std::array<std::size_t, 3> mnk;
    std::size_t p;
    std::size_t c;
    Stationarity s;
  };
  std::vector<Case> cases;
  for (auto s : {Stationarity::A, Stationarity::B, Stationarity::C}) {
    for (auto c : {2, 3, 4, 6, 12}) {
      cases.push_back({{12, 12, 12}, 12, static_cast<std::size_t>(c), s});
      cases.push_back({{7, 9, 13}, 12, static_cast<std::size_t>(c), s});
      cases.push_back({{16, 10, 23}, 12, static_cast<std::size_t>(c), s});
    }
  }
  std::vector<std::string> bad;
  for (const auto &cs : cases) {
    RunConfig cfg;
    cfg.m = cs.mnk[0];
    cfg.n = cs.mnk[1];
    cfg.k = cs.mnk[2];
    cfg.p = cs.p;
    auto so = static_cast<std::size_t>(cs.s);
    cfg.replication[so] = cs.c;
    cfg.stationarity = cs.s;
    auto res = run_one(cfg);
    if (!res.pass) {
      bad.push_back(res.config + " failed: " + res.error);
      continue;
    }
    // Replicas split the inner dimension k whatever the stationarity.
    const std::uint64_t outer = cfg.m * cfg.n;
    const std::size_t inner = cfg.k;
    auto layout = cfg.layout(static_cast<Operand>(so));
    std::vector<std::uint64_t> per_replica(cs.c, 0);
    for (Rank r = 0; r < cfg.p; ++r) {
      per_replica[layout.replica_of(r)] += res.flops_per_rank[r];
    }
    const double fair = 2.0 * cfg.m * cfg.n * cfg.k / static_cast<double>(cs.c);
    const double slack = 2.0 * static_cast<double>(outer) * static_cast<double>(inner % cs.c);
    for (std::size_t r = 0; r < cs.c; ++r) {
      std::size_t chunk = inner / cs.c + (r + 1 == cs.c ? inner % cs.c : 0);
      auto f = static_cast<double>(per_replica[r]);
      if (per_replica[r] != 2 * outer * chunk || std::abs(f - fair) > slack) {
        bad.push_back(fmt::format("{} replica {}: {} flops, fair {} slack {}", res.config,
                                  r, per_replica[r], fair, slack));
      }
    }
  }
  Outcome o;
  o.pass = bad.empty();
  o.detail = fmt::format(
      "{} configs, per-replica flops = 2*m*n*chunk_k and |f - 2mnk/c| <= 2*m*n*(k mod c)",
      cases.size());
  if (!bad.empty()) {
    o.detail += "; first: " + bad.front();
  }
  return o;
}

std::uint64_t comm_bytes_of(std::size_t m, std::size_t n, std::size_t k,
                            std::array<const char *, 3> parts,
                            std::array<std::size_t, 3> reps) {
  RunConfig cfg;
  cfg.m = m;
  cfg.n = n;
  cfg.k = k;
  cfg.p = 12;
  cfg.set("partition_a", parts[0]);
  cfg.set("partition_b", parts[1]);
  cfg.set("partition_c", parts[2]);
  cfg.replication = reps;
  cfg.stationarity = Stationarity::C;
  auto res = run_one(cfg);
  if (!res.pass) {
    throw std::runtime_error(res.config + " failed: " + res.error);
  }
  return res.comm_bytes;
}

Outcome comm_volume_ordering() {
  const std::uint64_t word = sizeof(double);
  // First shape: m=64 n=384 k=96.
  auto all_2d = comm_bytes_of(64, 384, 96, {"2d", "2d", "2d"}, {1, 1, 1});
  auto col_rep = comm_bytes_of(64, 384, 96, {"2d", "col", "col"}, {12, 1, 1});
  auto col = comm_bytes_of(64, 384, 96, {"2d", "col", "col"}, {1, 1, 1});
  // With B and C column-block only A moves: each rank pulls 11/12 of it.
  const std::uint64_t a_elems = 64 * 96;
  bool first = col_rep < all_2d && col < all_2d && col == 11 * a_elems * word;

  // Second shape: m=64 n=96 k=384. Outer product: A column-block, B
  // row-block, C replicated on every rank; only the final C reduction moves.
  auto outer = comm_bytes_of(64, 96, 384, {"col", "row", "2d"}, {1, 1, 12});
  // Moving B: A and C row-block, B row-block over 12 ranks. Rows of 64 go
  // in tiles of ceil(64/12) = 6, so 11 ranks own C and each pulls the 11 B
  // tiles it does not hold.
  auto moving_b = comm_bytes_of(64, 96, 384, {"row", "row", "row"}, {1, 1, 1});
  const std::uint64_t c_owners = (64 + 5) / 6;
  const std::uint64_t b_tile_elems = (384 / 12) * 96;
  const std::uint64_t c_elems = 64 * 96;
  bool second = outer < moving_b && outer == 11 * c_elems * word &&
                moving_b == c_owners * 11 * b_tile_elems * word;

  Outcome o;
  o.pass = first && second;
  o.detail = fmt::format(
      "64x384x96 stationary C: col family {} B (A replicated) and {} B (A single) < all-2d "
      "{} B; 64x96x384: outer product {} B < moving B {} B",
      col_rep, col, all_2d, outer, moving_b);
  return o;
}

Outcome scheduler_dominance() {
  std::mt19937 rng(5);
  std::size_t n = 0;
  std::vector<std::string> bad;
  for (; n < 50; ++n) {
    auto nops = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    auto spec = random_graph(rng, nops);
    auto g = spec.build();
    auto mm = spec.machine();
    auto ex = lower_exhaustive(g, spec.limits, mm);
    auto cg = lower_cost_greedy(g, spec.limits, mm);
    auto naive = lower_naive(g);
    auto where = fmt::format("instance {}", n);
    check_programs(ex, g, where + " exhaustive");
    check_programs(cg, g, where + " cost-greedy");
    check_programs(naive, g, where + " naive");
    double ce = program_cost(ex, mm).seconds;
    double cc = program_cost(cg, mm).seconds;
    double cn = program_cost(naive, mm).seconds;
    if (!costs_le(ce, cc) || !costs_le(cc, cn)) {
      bad.push_back(fmt::format("{}: {} {} {}", where, ce, cc, cn));
    }
  }
  auto strict = strict_instance();
  auto g = strict.build();
  auto mm = strict.machine();
  auto ex = lower_exhaustive(g, strict.limits, mm);
  auto cg = lower_cost_greedy(g, strict.limits, mm);
  check_programs(ex, g, "strict exhaustive");
  check_programs(cg, g, "strict cost-greedy");
  double ce = program_cost(ex, mm).seconds;
  double cc = program_cost(cg, mm).seconds;
  bool strict_ok = ce < cc * (1 - 1e-6);

  Outcome o;
  o.pass = bad.empty() && strict_ok;
  o.detail = fmt::format(
      "{} random instances exhaustive <= cost-greedy <= naive (rel tol {:.0e}), {} violations; "
      "constructed instance exhaustive {:.4e} s < cost-greedy {:.4e} s",
      n, kCostRelTol, bad.size(), ce, cc);
  if (!bad.empty()) {
    o.detail += "; first: " + bad.front();
  }
  return o;
}

Outcome schedule_validity() {
  auto dep = invalid_dependency_program();
  auto missing = invalid_missing_program();
  auto vd = validate(dep.prog, dep.graph);
  auto vm = validate(missing.prog, missing.graph);
  bool dep_ok = vd && vd->kind == Violation::Kind::DependencyOrder;
  bool missing_ok = vm && vm->kind == Violation::Kind::MissingCompute;
  Outcome o;
  o.pass = invalid_programs.empty() && programs_checked > 0 && dep_ok && missing_ok;
  o.detail = fmt::format("{} generated programs valid ({} invalid); compute-before-fetch "
                         "rejected as {}; dropped op rejected as {}",
                         programs_checked - invalid_programs.size(),
                         invalid_programs.size(),
                         vd ? to_string(vd->kind) : "nothing",
                         vm ? to_string(vm->kind) : "nothing");
  if (!invalid_programs.empty()) {
    o.detail += "; first: " + invalid_programs.front();
  }
  return o;
}

Outcome offset_balance() {
  const std::size_t g = 3;
  std::size_t positions = 0;
  std::vector<std::string> bad;
  for (std::size_t dim : {9, 12, 18}) {
    auto cfg = config(dim, dim, dim, g * g);
    auto prob = make_problem(cfg);
    ExecConfig exec;
    exec.mode = ExecMode::Lockstep;
    exec.record_trace = true;
    auto stats = run_direct(prob.mats(), exec);
    if (prob.c->gather() != prob.expected()) {
      bad.push_back(fmt::format("{}^3 wrong result", dim));
    }
    for (std::size_t row = 0; row < g; ++row) {
      for (std::size_t pos = 0; pos < g; ++pos) {
        std::vector<std::size_t> cols;
        for (std::size_t col = 0; col < g; ++col) {
          for (const auto &ev : stats.processes[row * g + col].trace) {
            if (ev.kind == TraceEvent::Kind::InputReady && ev.operand == Operand::A &&
                ev.position == pos) {
              cols.push_back(ev.tile.j);
            }
          }
        }
        ++positions;
        std::set<std::size_t> distinct(cols.begin(), cols.end());
        if (cols.size() != g || distinct.size() != g) {
          bad.push_back(fmt::format("{}^3 row {} position {}", dim, row, pos));
        }
      }
    }
  }
  Outcome o;
  o.pass = bad.empty();
  o.detail = fmt::format("3x3 grid, {} (process row, position) pairs with pairwise "
                         "distinct A columns, {} collisions",
                         positions - bad.size(), bad.size());
  return o;
}

Outcome fabric_accumulate() {
  const std::size_t threads = 12;
  const std::size_t reps = 1000;
  const std::size_t len = 16;
  std::array<std::uint64_t, 2> bytes{};
  std::vector<std::string> bad;
  for (auto mode : {AccumulateMode::PeerAtomic, AccumulateMode::LockGetPut}) {
    Fabric fabric(threads + 1);
    auto seg = fabric.allocate(threads, len);
    std::vector<double> ones(len, 1.0);
    std::vector<std::thread> pool;
    for (Rank r = 0; r < threads; ++r) {
      pool.emplace_back([&, r] {
        for (std::size_t i = 0; i < reps; ++i) {
          fabric.accumulate(seg, Range{0, len}, ones, r, mode);
        }
      });
    }
    for (auto &t : pool) {
      t.join();
    }
    for (double x : fabric.peek(seg)) {
      if (x != static_cast<double>(threads * reps)) {
        bad.push_back(fmt::format("{}: element {}", mode == AccumulateMode::PeerAtomic ? "peer-atomic" : "lock-get-put", x));
        break;
      }
    }
    bytes[mode == AccumulateMode::LockGetPut] = fabric.counters().comm_bytes();
  }
  Outcome o;
  o.pass = bad.empty() && bytes[1] == 2 * bytes[0] && bytes[0] == threads * reps * len * 8;
  o.detail = fmt::format("{} threads x {} accumulates: every element {}; bytes peer-atomic "
                         "{} lock-get-put {}",
                         threads, reps, bad.empty() ? "exactly 12000" : bad.front(),
                         bytes[0], bytes[1]);
  return o;
}

} // namespace

int main() {
  std::vector<std::pair<std::string_view, Outcome (*)()>> checks{
      {"correctness-sweep", correctness_sweep},
      {"op-coverage", op_coverage},
      {"replica-flop-share", replica_flop_share},
      {"comm-volume-ordering", comm_volume_ordering},
      {"scheduler-dominance", scheduler_dominance},
      {"schedule-validity", schedule_validity},
      {"offset-balance", offset_balance},
      {"fabric-accumulate", fabric_accumulate},
  };
  for (const auto &[name, fn] : checks) {
    try {
      report(name, fn());
    } catch (const std::exception &e) {
      report(name, {false, fmt::format("threw: {}", e.what())});
    }
  }
  return failures == 0 ? 0 : 1;
}
