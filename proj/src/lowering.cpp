#include "unimul/lowering.hpp"

#include <fmt/format.h>
#include <map>
#include <tuple>
#include <unordered_map>

namespace unimul {

namespace {

constexpr std::size_t kA = static_cast<std::size_t>(Operand::A);
constexpr std::size_t kB = static_cast<std::size_t>(Operand::B);

IrProgram empty_program(const CompGraph &g, Limits limits) {
  IrProgram prog;
  prog.rank = g.rank;
  prog.limits = limits;
  prog.ops = g.ops;
  prog.nodes = g.nodes;
  prog.edges = g.edges;
  return prog;
}

void check_limits(Limits limits) {
  if (limits.max_compute == 0 || limits.max_comm == 0) {
    throw ConfigError("IR step limits must be >= 1");
  }
}

// Mutable scheduling state shared by the step-at-a-time lowerers.
class Frontier {
public:
  explicit Frontier(const CompGraph &g)
      : g_(g), computed_(g.ops.size(), 0), accumulated_(g.ops.size(), 0),
        satisfied_(g.nodes.size(), 0) {
    for (std::size_t n = 0; n < g.nodes.size(); ++n) {
      satisfied_[n] = g.nodes[n].local;
    }
    for (std::size_t op = 0; op < g.ops.size(); ++op) {
      pending_accumulates_ += g.needs_accumulate(op);
    }
  }

  bool done() const {
    return computed_count_ == g_.ops.size() && pending_accumulates_ == 0;
  }

  std::vector<std::size_t> eligible_compute() const {
    std::vector<std::size_t> out;
    for (std::size_t op = 0; op < g_.ops.size(); ++op) {
      if (!computed_[op] && satisfied_[g_.edges[op][kA]] &&
          satisfied_[g_.edges[op][kB]]) {
        out.push_back(op);
      }
    }
    return out;
  }

  void mark_computed(std::size_t op) {
    computed_[op] = 1;
    ++computed_count_;
  }

  // Fetches needed by ops not yet computed, then accumulates owed by ops
  // already computed (including this step's).
  std::vector<CommOp> comm_candidates() const {
    std::vector<CommOp> out;
    std::vector<char> listed(g_.nodes.size(), 0);
    for (std::size_t op = 0; op < g_.ops.size(); ++op) {
      if (computed_[op]) {
        continue;
      }
      for (auto e : {kA, kB}) {
        auto node = g_.edges[op][e];
        if (!satisfied_[node] && !listed[node]) {
          listed[node] = 1;
          out.push_back(CommOp::fetch(g_, node));
        }
      }
    }
    for (std::size_t op = 0; op < g_.ops.size(); ++op) {
      if (computed_[op] && g_.needs_accumulate(op) && !accumulated_[op]) {
        out.push_back(CommOp::accumulate(g_, op));
      }
    }
    return out;
  }

  void commit_comm(const std::vector<CommOp> &comm) {
    for (const auto &c : comm) {
      if (c.kind == CommOp::Kind::Fetch) {
        satisfied_[c.node] = 1;
      } else {
        accumulated_[c.op] = 1;
        --pending_accumulates_;
      }
    }
  }

private:
  const CompGraph &g_;
  std::vector<char> computed_;
  std::vector<char> accumulated_;
  std::vector<char> satisfied_;
  std::size_t computed_count_ = 0;
  std::size_t pending_accumulates_ = 0;
};

[[noreturn]] void stuck(const CompGraph &g) {
  throw std::logic_error(fmt::format(
      "rank {}: no schedulable compute or communication left", g.rank));
}

} // namespace

LocalityOracle locality_for(const Operands &operands, Rank caller) {
  return [&operands, caller](Operand o, TileIdx t) {
    const MatrixLayout &m = o == Operand::A   ? operands.a
                            : o == Operand::B ? operands.b
                                              : operands.c;
    DataNode node;
    node.operand = o;
    node.tile = t;
    node.replica = m.replica_of(caller);
    node.owner = m.owner(t, node.replica);
    node.bytes = kElementBytes * m.tile_bounds(t).shape().size();
    node.local = node.owner == caller;
    return node;
  };
}

CompGraph build_graph(Rank rank, std::vector<LocalMatMulOp> ops,
                      const LocalityOracle &locality) {
  CompGraph g;
  g.rank = rank;
  g.ops = std::move(ops);
  std::map<std::tuple<Operand, TileIdx>, std::size_t> index;
  auto node_for = [&](Operand o, TileIdx t) {
    auto [it, inserted] = index.try_emplace({o, t}, g.nodes.size());
    if (inserted) {
      g.nodes.push_back(locality(o, t));
    }
    return it->second;
  };
  g.edges.reserve(g.ops.size());
  for (const auto &op : g.ops) {
    g.edges.push_back({node_for(Operand::A, op.a), node_for(Operand::B, op.b),
                       node_for(Operand::C, op.c)});
  }
  return g;
}

IrProgram lower_greedy(const CompGraph &g, Limits limits) {
  check_limits(limits);
  auto prog = empty_program(g, limits);
  Frontier f(g);
  while (!f.done()) {
    IrStep step;
    for (auto op : f.eligible_compute()) {
      if (step.compute.size() == limits.max_compute) {
        break;
      }
      step.compute.push_back(op);
      f.mark_computed(op);
    }
    for (const auto &c : f.comm_candidates()) {
      if (step.comm.size() == limits.max_comm) {
        break;
      }
      step.comm.push_back(c);
    }
    if (step.empty()) {
      stuck(g);
    }
    f.commit_comm(step.comm);
    prog.steps.push_back(std::move(step));
  }
  return prog;
}

IrProgram lower_cost_greedy(const CompGraph &g, Limits limits,
                            const MachineModel &machine) {
  check_limits(limits);
  auto prog = empty_program(g, limits);
  Frontier f(g);
  while (!f.done()) {
    IrStep step;
    StepCost cost;

    auto compute = f.eligible_compute();
    std::vector<char> taken(compute.size(), 0);
    for (std::size_t slot = 0; slot < limits.max_compute; ++slot) {
      std::optional<std::size_t> best;
      double best_total = 0.0;
      for (std::size_t c = 0; c < compute.size(); ++c) {
        if (taken[c]) {
          continue;
        }
        double total = std::max(
            cost.compute.seconds + compute_cost(g.ops[compute[c]], machine).seconds,
            cost.comm.seconds);
        if (!best || total < best_total) {
          best = c;
          best_total = total;
        }
      }
      if (!best) {
        break;
      }
      taken[*best] = 1;
      cost.compute += compute_cost(g.ops[compute[*best]], machine);
      step.compute.push_back(compute[*best]);
    }
    // Keep op-list order inside the step.
    std::sort(step.compute.begin(), step.compute.end());
    for (auto op : step.compute) {
      f.mark_computed(op);
    }

    auto comm = f.comm_candidates();
    std::vector<char> used(comm.size(), 0);
    std::vector<std::size_t> chosen;
    for (std::size_t slot = 0; slot < limits.max_comm; ++slot) {
      std::optional<std::size_t> best;
      double best_total = 0.0;
      for (std::size_t c = 0; c < comm.size(); ++c) {
        if (used[c]) {
          continue;
        }
        double total = std::max(
            cost.compute.seconds,
            cost.comm.seconds +
                comm_cost(comm[c].bytes, g.rank, comm[c].peer, machine).seconds);
        if (!best || total < best_total) {
          best = c;
          best_total = total;
        }
      }
      if (!best) {
        break;
      }
      used[*best] = 1;
      cost.comm += comm_cost(comm[*best].bytes, g.rank, comm[*best].peer, machine);
      chosen.push_back(*best);
    }
    std::sort(chosen.begin(), chosen.end());
    for (auto c : chosen) {
      step.comm.push_back(comm[c]);
    }

    if (step.empty()) {
      stuck(g);
    }
    f.commit_comm(step.comm);
    prog.steps.push_back(std::move(step));
  }
  return prog;
}

namespace {

// Exhaustive search over schedules, memoized on the set of computed ops,
// satisfied remote inputs and issued accumulates. A step's cost depends
// only on the step, so the cheapest completion from a state is independent
// of how the state was reached.
class ExhaustiveSearch {
public:
  ExhaustiveSearch(const CompGraph &g, Limits limits,
                   const MachineModel &machine)
      : g_(g), limits_(limits), machine_(machine) {
    fetch_bit_.assign(g.nodes.size(), -1);
    for (std::size_t op = 0; op < g.ops.size(); ++op) {
      for (auto e : {kA, kB}) {
        auto node = g.edges[op][e];
        if (!g.nodes[node].local && fetch_bit_[node] < 0) {
          fetch_bit_[node] = static_cast<int>(fetch_nodes_.size());
          fetch_nodes_.push_back(node);
        }
      }
    }
    for (std::size_t op = 0; op < g.ops.size(); ++op) {
      if (g.needs_accumulate(op)) {
        acc_ops_.push_back(op);
      }
    }
    compute_cost_.reserve(g.ops.size());
    for (const auto &op : g.ops) {
      compute_cost_.push_back(compute_cost(op, machine).seconds);
    }
  }

  std::vector<IrStep> solve() {
    State s{};
    best(s);
    std::vector<IrStep> steps;
    while (!finished(s)) {
      const auto &entry = memo_.at(key(s));
      steps.push_back(entry.step);
      s = entry.next;
    }
    return steps;
  }

private:
  struct State {
    std::uint64_t computed = 0;
    std::uint64_t fetched = 0;
    std::uint64_t accumulated = 0;
  };
  struct Entry {
    double cost;
    IrStep step;
    State next;
  };

  std::uint64_t key(const State &s) const {
    return s.computed | (s.fetched << g_.ops.size()) |
           (s.accumulated << (g_.ops.size() + fetch_nodes_.size()));
  }

  bool finished(const State &s) const {
    return s.computed == all(g_.ops.size()) &&
           s.accumulated == all(acc_ops_.size());
  }

  static std::uint64_t all(std::size_t n) {
    return n == 64 ? ~0ull : (1ull << n) - 1;
  }

  bool input_ready(const State &s, std::size_t node) const {
    return g_.nodes[node].local || (s.fetched >> fetch_bit_[node] & 1u);
  }

  double best(const State &s) {
    if (finished(s)) {
      return 0.0;
    }
    auto k = key(s);
    if (auto it = memo_.find(k); it != memo_.end()) {
      return it->second.cost;
    }

    std::vector<std::size_t> eligible;
    for (std::size_t op = 0; op < g_.ops.size(); ++op) {
      if (!(s.computed >> op & 1u) && input_ready(s, g_.edges[op][kA]) &&
          input_ready(s, g_.edges[op][kB])) {
        eligible.push_back(op);
      }
    }

    Entry winner{std::numeric_limits<double>::infinity(), {}, {}};
    std::vector<std::size_t> compute_pick;
    for_each_subset(eligible.size(), limits_.max_compute, compute_pick,
                    [&](const std::vector<std::size_t> &cp) {
      State mid = s;
      double compute_sum = 0.0;
      for (auto i : cp) {
        mid.computed |= 1ull << eligible[i];
        compute_sum += compute_cost_[eligible[i]];
      }
      auto candidates = comm_candidates(mid);
      std::vector<std::size_t> comm_pick;
      for_each_subset(candidates.size(), limits_.max_comm, comm_pick,
                      [&](const std::vector<std::size_t> &mp) {
        if (cp.empty() && mp.empty()) {
          return;
        }
        State next = mid;
        double comm_sum = 0.0;
        for (auto i : mp) {
          const auto &c = candidates[i];
          comm_sum += comm_cost(c.bytes, g_.rank, c.peer, machine_).seconds;
          if (c.kind == CommOp::Kind::Fetch) {
            next.fetched |= 1ull << fetch_bit_[c.node];
          } else {
            next.accumulated |= 1ull << acc_bit(c.op);
          }
        }
        double total = std::max(compute_sum, comm_sum) + best(next);
        // Strictly cheaper only (up to rounding), so the first schedule in
        // enumeration order wins ties.
        if (total < winner.cost * (1.0 - 1e-12)) {
          winner.cost = total;
          winner.step.compute.clear();
          for (auto i : cp) {
            winner.step.compute.push_back(eligible[i]);
          }
          winner.step.comm.clear();
          for (auto i : mp) {
            winner.step.comm.push_back(candidates[i]);
          }
          winner.next = next;
        }
      });
    });
    if (winner.cost == std::numeric_limits<double>::infinity()) {
      stuck(g_);
    }
    double cost = winner.cost;
    memo_.emplace(k, std::move(winner));
    return cost;
  }

  std::size_t acc_bit(std::size_t op) const {
    return static_cast<std::size_t>(
        std::find(acc_ops_.begin(), acc_ops_.end(), op) - acc_ops_.begin());
  }

  std::vector<CommOp> comm_candidates(const State &s) const {
    std::vector<CommOp> out;
    std::uint64_t listed = 0;
    for (std::size_t op = 0; op < g_.ops.size(); ++op) {
      if (s.computed >> op & 1u) {
        continue;
      }
      for (auto e : {kA, kB}) {
        auto node = g_.edges[op][e];
        if (input_ready(s, node)) {
          continue;
        }
        auto bit = 1ull << fetch_bit_[node];
        if (!(listed & bit)) {
          listed |= bit;
          out.push_back(CommOp::fetch(g_, node));
        }
      }
    }
    for (std::size_t i = 0; i < acc_ops_.size(); ++i) {
      auto op = acc_ops_[i];
      if ((s.computed >> op & 1u) && !(s.accumulated >> i & 1u)) {
        out.push_back(CommOp::accumulate(g_, op));
      }
    }
    return out;
  }

  // Visits every subset of {0..n-1} with at most `limit` members, in
  // lexicographic order of the sorted index sequence, starting with {}.
  template <typename F>
  static void for_each_subset(std::size_t n, std::size_t limit,
                              std::vector<std::size_t> &pick, F &&visit) {
    visit(pick);
    if (pick.size() == limit) {
      return;
    }
    std::size_t start = pick.empty() ? 0 : pick.back() + 1;
    for (std::size_t i = start; i < n; ++i) {
      pick.push_back(i);
      for_each_subset(n, limit, pick, visit);
      pick.pop_back();
    }
  }

  const CompGraph &g_;
  Limits limits_;
  const MachineModel &machine_;
  std::vector<int> fetch_bit_;
  std::vector<std::size_t> fetch_nodes_;
  std::vector<std::size_t> acc_ops_;
  std::vector<double> compute_cost_;
  std::unordered_map<std::uint64_t, Entry> memo_;
};

} // namespace

IrProgram lower_exhaustive(const CompGraph &g, Limits limits,
                           const MachineModel &machine, std::size_t max_ops) {
  check_limits(limits);
  if (g.ops.size() > max_ops) {
    throw ScheduleTooLarge(fmt::format(
        "exhaustive lowering of {} ops exceeds the bound of {}; use cost-greedy "
        "lowering instead",
        g.ops.size(), max_ops));
  }
  auto prog = empty_program(g, limits);
  ExhaustiveSearch search(g, limits, machine);
  std::size_t bits = 0;
  for (std::size_t op = 0; op < g.ops.size(); ++op) {
    bits += 1 + g.needs_accumulate(op);
  }
  bits += 2 * g.ops.size();
  if (bits > 64) {
    throw ScheduleTooLarge("exhaustive lowering state does not fit 64 bits");
  }
  prog.steps = search.solve();
  return prog;
}

IrProgram lower_naive(const CompGraph &g) {
  auto prog = empty_program(g, {1, 1});
  std::vector<char> fetched(g.nodes.size(), 0);
  for (std::size_t op = 0; op < g.ops.size(); ++op) {
    for (auto e : {kA, kB}) {
      auto node = g.edges[op][e];
      if (!g.nodes[node].local && !fetched[node]) {
        fetched[node] = 1;
        prog.steps.push_back({{}, {CommOp::fetch(g, node)}});
      }
    }
    prog.steps.push_back({{op}, {}});
    if (g.needs_accumulate(op)) {
      prog.steps.push_back({{}, {CommOp::accumulate(g, op)}});
    }
  }
  return prog;
}

std::string_view to_string(Violation::Kind kind) {
  using K = Violation::Kind;
  switch (kind) {
  case K::GraphMismatch:
    return "graph-mismatch";
  case K::LimitExceeded:
    return "limit-exceeded";
  case K::BadReference:
    return "bad-reference";
  case K::DuplicateCompute:
    return "duplicate-compute";
  case K::DependencyOrder:
    return "dependency-order";
  case K::MissingCompute:
    return "missing-compute";
  case K::LocalFetch:
    return "local-fetch";
  case K::DuplicateFetch:
    return "duplicate-fetch";
  case K::MissingFetch:
    return "missing-fetch";
  case K::AccumulateBeforeCompute:
    return "accumulate-before-compute";
  case K::DuplicateAccumulate:
    return "duplicate-accumulate";
  case K::MissingAccumulate:
    return "missing-accumulate";
  }
  return "?";
}

std::optional<Violation> validate(const IrProgram &prog, const CompGraph &g) {
  using K = Violation::Kind;
  auto fail = [](K kind, std::size_t step, std::string msg) {
    return std::optional<Violation>(Violation{kind, step, std::move(msg)});
  };
  if (prog.ops != g.ops || prog.edges != g.edges ||
      prog.nodes.size() != g.nodes.size()) {
    return fail(K::GraphMismatch, 0, "program was not lowered from this graph");
  }
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> computed_at(g.ops.size(), kUnset);
  std::vector<char> accumulated(g.ops.size(), 0);
  std::vector<char> fetched(g.nodes.size(), 0);
  std::vector<char> satisfied(g.nodes.size(), 0);
  for (std::size_t n = 0; n < g.nodes.size(); ++n) {
    satisfied[n] = g.nodes[n].local;
  }

  for (std::size_t s = 0; s < prog.steps.size(); ++s) {
    const auto &step = prog.steps[s];
    if (step.compute.size() > prog.limits.max_compute ||
        step.comm.size() > prog.limits.max_comm) {
      return fail(K::LimitExceeded, s,
                  fmt::format("{} compute / {} comm over limits {}/{}",
                              step.compute.size(), step.comm.size(),
                              prog.limits.max_compute, prog.limits.max_comm));
    }
    for (auto op : step.compute) {
      if (op >= g.ops.size()) {
        return fail(K::BadReference, s, fmt::format("unknown op#{}", op));
      }
      if (computed_at[op] != kUnset) {
        return fail(K::DuplicateCompute, s,
                    fmt::format("op#{} already computed in step {}", op,
                                computed_at[op]));
      }
      for (auto e : {kA, kB}) {
        if (!satisfied[g.edges[op][e]]) {
          return fail(K::DependencyOrder, s,
                      fmt::format("op#{} runs before its {} tile arrives", op,
                                  e == kA ? 'A' : 'B'));
        }
      }
      computed_at[op] = s;
    }
    for (const auto &c : step.comm) {
      if (c.kind == CommOp::Kind::Fetch) {
        if (c.node >= g.nodes.size()) {
          return fail(K::BadReference, s, fmt::format("unknown node {}", c.node));
        }
        if (g.nodes[c.node].local) {
          return fail(K::LocalFetch, s,
                      fmt::format("fetch of local tile (node {})", c.node));
        }
        if (fetched[c.node]) {
          return fail(K::DuplicateFetch, s,
                      fmt::format("node {} fetched twice", c.node));
        }
        fetched[c.node] = 1;
      } else {
        if (c.op >= g.ops.size() || !g.needs_accumulate(c.op)) {
          return fail(K::BadReference, s,
                      fmt::format("accumulate for op#{} with no remote output",
                                  c.op));
        }
        if (computed_at[c.op] == kUnset) {
          return fail(K::AccumulateBeforeCompute, s,
                      fmt::format("accumulate for op#{} before its compute",
                                  c.op));
        }
        if (accumulated[c.op]) {
          return fail(K::DuplicateAccumulate, s,
                      fmt::format("op#{} accumulated twice", c.op));
        }
        accumulated[c.op] = 1;
      }
    }
    for (std::size_t n = 0; n < g.nodes.size(); ++n) {
      satisfied[n] = satisfied[n] || fetched[n];
    }
  }

  auto end = prog.steps.size();
  for (std::size_t op = 0; op < g.ops.size(); ++op) {
    if (computed_at[op] == kUnset) {
      return fail(K::MissingCompute, end, fmt::format("op#{} never computed", op));
    }
    for (auto e : {kA, kB}) {
      auto node = g.edges[op][e];
      if (!g.nodes[node].local && !fetched[node]) {
        return fail(K::MissingFetch, end,
                    fmt::format("node {} never fetched", node));
      }
    }
    if (g.needs_accumulate(op) && !accumulated[op]) {
      return fail(K::MissingAccumulate, end,
                  fmt::format("op#{} result never accumulated", op));
    }
  }
  return std::nullopt;
}

} // namespace unimul
