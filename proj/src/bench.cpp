#include "unimul/bench.hpp"

#include "unimul/errors.hpp"
#include "unimul/lowering.hpp"

#include <cctype>
#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <random>
#include <spdlog/spdlog.h>
#include <sstream>

namespace unimul {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) {
    return {};
  }
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) {
      return out;
    }
    start = pos + 1;
  }
}

template <typename T> T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: '{}' is not a valid number", key, v));
  }
  return out;
}

std::size_t parse_count(std::string_view key, std::string_view v) {
  return parse_number<std::size_t>(key, v);
}

double parse_positive(std::string_view key, std::string_view v) {
  auto x = parse_number<double>(key, v);
  if (!(x > 0.0)) {
    throw ConfigError(fmt::format("{} must be positive, got {}", key, v));
  }
  return x;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") {
    return true;
  }
  if (v == "false" || v == "0" || v == "no") {
    return false;
  }
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

Shape2D parse_pair(std::string_view what, std::string_view v) {
  auto parts = split(v, 'x');
  if (parts.size() != 2) {
    throw ConfigError(fmt::format("{}: expected RxC, got '{}'", what, v));
  }
  return {parse_count(what, parts[0]), parse_count(what, parts[1])};
}

std::optional<Stationarity> parse_stationarity(std::string_view v) {
  if (v == "A") {
    return Stationarity::A;
  }
  if (v == "B") {
    return Stationarity::B;
  }
  if (v == "C") {
    return Stationarity::C;
  }
  if (v == "auto") {
    return std::nullopt;
  }
  throw ConfigError(fmt::format("stationarity: expected A, B, C or auto, got '{}'", v));
}

constexpr std::array<Operand, 3> kOperands{Operand::A, Operand::B, Operand::C};

std::size_t index(Operand o) { return static_cast<std::size_t>(o); }

DenseMatrix random_matrix(Shape2D shape, std::uint64_t seed, bool real) {
  DenseMatrix out(shape.rows, shape.cols);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ints(-8, 8);
  std::uniform_real_distribution<double> reals(-1.0, 1.0);
  for (auto &x : out.data()) {
    x = real ? reals(rng) : static_cast<double>(ints(rng));
  }
  return out;
}

} // namespace

PartitionDesc PartitionDesc::parse(std::string_view text) {
  text = trim(text);
  PartitionDesc d;
  if (text == "row") {
    d.kind = Kind::Row;
  } else if (text == "col") {
    d.kind = Kind::Col;
  } else if (text == "2d") {
    d.kind = Kind::Block2D;
  } else if (text.starts_with("custom:")) {
    auto parts = split(text.substr(7), ':');
    if (parts.size() > 3) {
      throw ConfigError(fmt::format("partition: too many fields in '{}'", text));
    }
    d.kind = Kind::Custom;
    d.tile = parse_pair("partition tile", parts[0]);
    if (parts.size() >= 2) {
      d.grid = parse_pair("partition grid", parts[1]);
    }
    if (d.tile.rows == 0 || d.tile.cols == 0 ||
        (d.grid && (d.grid->rows == 0 || d.grid->cols == 0))) {
      throw ConfigError(fmt::format("partition: zero extent in '{}'", text));
    }
    if (parts.size() == 3) {
      if (parts[2] == "block") {
        d.mapping = Mapping::Block;
      } else if (parts[2] == "cyclic") {
        d.mapping = Mapping::BlockCyclic;
      } else {
        throw ConfigError(fmt::format(
            "partition mapping: expected block or cyclic, got '{}'", parts[2]));
      }
    }
  } else {
    throw ConfigError(fmt::format(
        "partition: expected row, col, 2d or custom:RxC[:PRxPC[:block|cyclic]], got '{}'",
        text));
  }
  return d;
}

PartitionSpec PartitionDesc::resolve(Shape2D global,
                                     std::size_t nprocs_in_replica) const {
  switch (kind) {
  case Kind::Row:
    return PartitionSpec::row_block(global, nprocs_in_replica);
  case Kind::Col:
    return PartitionSpec::col_block(global, nprocs_in_replica);
  case Kind::Block2D:
    return PartitionSpec::block_2d(global, nprocs_in_replica);
  case Kind::Custom:
    return PartitionSpec(tile, grid.value_or(factor_grid(nprocs_in_replica)),
                         mapping);
  }
  throw std::logic_error("unknown partition kind");
}

std::string PartitionDesc::to_string() const {
  switch (kind) {
  case Kind::Row:
    return "row";
  case Kind::Col:
    return "col";
  case Kind::Block2D:
    return "2d";
  case Kind::Custom: {
    auto s = fmt::format("custom:{}x{}", tile.rows, tile.cols);
    if (grid) {
      s += fmt::format(":{}x{}:{}", grid->rows, grid->cols,
                       mapping == Mapping::Block ? "block" : "cyclic");
    }
    return s;
  }
  }
  return "?";
}

std::string_view to_string(Execution e) {
  switch (e) {
  case Execution::Direct:
    return "direct";
  case Execution::IrGreedy:
    return "ir:greedy";
  case Execution::IrCost:
    return "ir:cost";
  case Execution::IrExhaustive:
    return "ir:exhaustive";
  }
  return "?";
}

Execution parse_execution(std::string_view text) {
  for (auto e : {Execution::Direct, Execution::IrGreedy, Execution::IrCost,
                 Execution::IrExhaustive}) {
    if (text == to_string(e)) {
      return e;
    }
  }
  throw ConfigError(fmt::format(
      "execution: expected direct, ir:greedy, ir:cost or ir:exhaustive, got '{}'",
      text));
}

void RunConfig::set(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "m") {
    m = parse_count(key, value);
  } else if (key == "n") {
    n = parse_count(key, value);
  } else if (key == "k") {
    k = parse_count(key, value);
  } else if (key == "p") {
    p = parse_count(key, value);
  } else if (key == "partition") {
    partition.fill(PartitionDesc::parse(value));
  } else if (key == "partition_a") {
    partition[0] = PartitionDesc::parse(value);
  } else if (key == "partition_b") {
    partition[1] = PartitionDesc::parse(value);
  } else if (key == "partition_c") {
    partition[2] = PartitionDesc::parse(value);
  } else if (key == "c") {
    replication.fill(parse_count(key, value));
  } else if (key == "c_a") {
    replication[0] = parse_count(key, value);
  } else if (key == "c_b") {
    replication[1] = parse_count(key, value);
  } else if (key == "c_c") {
    replication[2] = parse_count(key, value);
  } else if (key == "stationarity") {
    stationarity = parse_stationarity(value);
  } else if (key == "execution") {
    execution = parse_execution(value);
  } else if (key == "prefetch_depth") {
    exec.prefetch_depth = parse_count(key, value);
  } else if (key == "max_inflight_gemms") {
    exec.max_inflight_gemms = parse_count(key, value);
  } else if (key == "max_inflight_accums") {
    exec.max_inflight_accums = parse_count(key, value);
  } else if (key == "pool_capacity") {
    exec.pool_capacity = parse_count(key, value);
  } else if (key == "accumulate_mode") {
    if (value == "peer_atomic") {
      exec.accumulate_mode = AccumulateMode::PeerAtomic;
    } else if (value == "lock_get_put") {
      exec.accumulate_mode = AccumulateMode::LockGetPut;
    } else {
      throw ConfigError(fmt::format(
          "accumulate_mode: expected peer_atomic or lock_get_put, got '{}'", value));
    }
  } else if (key == "mode") {
    if (value == "lockstep") {
      exec.mode = ExecMode::Lockstep;
    } else if (value == "threaded") {
      exec.mode = ExecMode::Threaded;
    } else {
      throw ConfigError(fmt::format(
          "mode: expected lockstep or threaded, got '{}'", value));
    }
  } else if (key == "max_compute") {
    limits.max_compute = parse_count(key, value);
  } else if (key == "max_comm") {
    limits.max_comm = parse_count(key, value);
  } else if (key == "exhaustive_bound") {
    exhaustive_bound = parse_count(key, value);
  } else if (key == "arith_peak") {
    arith_peak = parse_positive(key, value);
  } else if (key == "mem_bw") {
    mem_bw = parse_positive(key, value);
  } else if (key == "link_bw") {
    link_bw = parse_positive(key, value);
  } else if (key == "topology") {
    if (value == "uniform") {
      group_size = 0;
    } else if (value.starts_with("two_level:")) {
      auto parts = split(value.substr(10), ':');
      if (parts.size() != 3) {
        throw ConfigError(fmt::format(
            "topology: expected two_level:GROUP:INTRA:INTER, got '{}'", value));
      }
      group_size = parse_count(key, parts[0]);
      intra_bw = parse_positive(key, parts[1]);
      inter_bw = parse_positive(key, parts[2]);
    } else {
      throw ConfigError(fmt::format(
          "topology: expected uniform or two_level:GROUP:INTRA:INTER, got '{}'",
          value));
    }
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "real") {
    real = parse_bool(key, value);
  } else {
    throw ConfigError(fmt::format("unknown key '{}'", key));
  }
}

Shape2D RunConfig::shape(Operand o) const {
  switch (o) {
  case Operand::A:
    return {m, k};
  case Operand::B:
    return {k, n};
  case Operand::C:
    return {m, n};
  }
  return {};
}

PartitionSpec RunConfig::partition_spec(Operand o) const {
  auto c = replication[index(o)];
  return partition[index(o)].resolve(shape(o), p / c);
}

MatrixLayout RunConfig::layout(Operand o) const {
  return MatrixLayout(shape(o), partition_spec(o), replication[index(o)], p);
}

MachineModel RunConfig::machine() const {
  auto links = group_size > 0
                   ? LinkTable::two_level(p, group_size, intra_bw, inter_bw)
                   : LinkTable::uniform(p, link_bw);
  return MachineModel(arith_peak, mem_bw, std::move(links));
}

void RunConfig::validate() const {
  if (m == 0 || n == 0 || k == 0) {
    throw ConfigError("matrix dimensions must be >= 1");
  }
  if (p == 0) {
    throw ConfigError("process count must be >= 1");
  }
  for (auto o : kOperands) {
    auto c = replication[index(o)];
    if (c == 0 || p % c != 0) {
      throw ConfigError(fmt::format(
          "replication must divide process count (c_{}={}, p={})",
          static_cast<char>(std::tolower(to_char(o))), c, p));
    }
  }
  if (limits.max_compute == 0 || limits.max_comm == 0) {
    throw ConfigError("max_compute and max_comm must be >= 1");
  }
  if (group_size > 0 && p % group_size != 0) {
    throw ConfigError(fmt::format(
        "topology group size {} does not divide p={}", group_size, p));
  }
  exec.validate();
  check_conforming({layout(Operand::A), layout(Operand::B), layout(Operand::C)});
}

std::string RunConfig::id() const {
  auto s = fmt::format("m={} n={} k={} p={} A={}/{} B={}/{} C={}/{} exec={}", m,
                       n, k, p, partition[0].to_string(), replication[0],
                       partition[1].to_string(), replication[1],
                       partition[2].to_string(), replication[2],
                       to_string(execution));
  if (execution != Execution::Direct) {
    s += fmt::format(" limits={}x{}", limits.max_compute, limits.max_comm);
  }
  if (real) {
    s += " real";
  }
  return s;
}

RunConfig RunConfig::parse(std::istream &in, std::string_view source) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view text = line;
    text = trim(text.substr(0, text.find('#')));
    if (text.empty()) {
      continue;
    }
    auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", source, lineno));
    }
    try {
      cfg.set(text.substr(0, eq), text.substr(eq + 1));
    } catch (const ConfigError &e) {
      throw ConfigError(fmt::format("{}:{}: {}", source, lineno, e.what()));
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  }
  return parse(in, path.string());
}

std::vector<std::vector<LocalMatMulOp>> all_ops(const RunConfig &cfg,
                                                Stationarity s) {
  auto a = cfg.layout(Operand::A);
  auto b = cfg.layout(Operand::B);
  auto c = cfg.layout(Operand::C);
  Operands operands{a, b, c};
  check_conforming(operands);
  std::vector<std::vector<LocalMatMulOp>> out;
  out.reserve(cfg.p);
  for (Rank r = 0; r < cfg.p; ++r) {
    out.push_back(generate_ops(s, operands, r));
  }
  return out;
}

std::vector<IrProgram> lower_all(const RunConfig &cfg, Stationarity s,
                                 Execution strategy) {
  auto a = cfg.layout(Operand::A);
  auto b = cfg.layout(Operand::B);
  auto c = cfg.layout(Operand::C);
  Operands operands{a, b, c};
  check_conforming(operands);
  auto machine = cfg.machine();
  std::vector<IrProgram> progs;
  progs.reserve(cfg.p);
  for (Rank r = 0; r < cfg.p; ++r) {
    auto g = build_graph(r, generate_ops(s, operands, r), locality_for(operands, r));
    switch (strategy) {
    case Execution::Direct:
    case Execution::IrGreedy:
      progs.push_back(lower_greedy(g, cfg.limits));
      break;
    case Execution::IrCost:
      progs.push_back(lower_cost_greedy(g, cfg.limits, machine));
      break;
    case Execution::IrExhaustive:
      progs.push_back(lower_exhaustive(g, cfg.limits, machine, cfg.exhaustive_bound));
      break;
    }
  }
  return progs;
}

double model_cost(const RunConfig &cfg, Stationarity s) {
  auto progs = lower_all(cfg, s, Execution::IrGreedy);
  return program_cost(std::span<const IrProgram>(progs), cfg.machine()).seconds;
}

Stationarity pick_stationarity(const RunConfig &cfg) {
  auto best = Stationarity::C;
  auto best_cost = model_cost(cfg, best);
  for (auto s : {Stationarity::A, Stationarity::B}) {
    auto cost = model_cost(cfg, s);
    spdlog::debug("auto stationarity: {} models {:.6e} s", to_string(s), cost);
    if (cost < best_cost) {
      best = s;
      best_cost = cost;
    }
  }
  return best;
}

std::string RunResult::csv_header() {
  return "config,stationarity,pass,max_rel_err,comm_bytes,flops_max_rank,"
         "model_cost_s,ops";
}

std::string RunResult::csv_row() const {
  auto status = !valid ? "invalid" : pass ? "true" : "false";
  return fmt::format("{},{},{},{:.3e},{},{},{:.6e},{}", config,
                     to_string(stationarity), status, max_rel_err, comm_bytes,
                     flops_max_rank, model_cost_s, ops);
}

RunResult run_one(const RunConfig &cfg) {
  RunResult res;
  res.config = cfg.id();
  res.stationarity = cfg.stationarity.value_or(Stationarity::C);
  try {
    cfg.validate();
    res.stationarity = cfg.stationarity ? *cfg.stationarity : pick_stationarity(cfg);

    auto machine = cfg.machine();
    Fabric fabric(cfg.p, machine.links);
    auto a_ref = random_matrix(cfg.shape(Operand::A), cfg.seed * 3 + 0, cfg.real);
    auto b_ref = random_matrix(cfg.shape(Operand::B), cfg.seed * 3 + 1, cfg.real);
    auto from = [](const DenseMatrix &d) {
      return [&d](std::size_t r, std::size_t c) { return d(r, c); };
    };
    auto zero = [](std::size_t, std::size_t) { return 0.0; };
    auto a = DistributedMatrix::create(fabric, "A", cfg.shape(Operand::A),
                                       cfg.partition_spec(Operand::A),
                                       cfg.replication[0], from(a_ref));
    auto b = DistributedMatrix::create(fabric, "B", cfg.shape(Operand::B),
                                       cfg.partition_spec(Operand::B),
                                       cfg.replication[1], from(b_ref));
    auto c = DistributedMatrix::create(fabric, "C", cfg.shape(Operand::C),
                                       cfg.partition_spec(Operand::C),
                                       cfg.replication[2], zero);
    fabric.counters().reset();

    auto exec = cfg.exec;
    exec.stationarity = res.stationarity;
    Matrices mats{a, b, c};
    auto strategy = cfg.execution;
    auto progs = lower_all(cfg, res.stationarity, strategy);
    res.model_cost_s =
        program_cost(std::span<const IrProgram>(progs), machine).seconds;
    for (const auto &prog : progs) {
      res.ops += prog.ops.size();
    }

    spdlog::debug("running {} stationarity={}", res.config,
                  to_string(res.stationarity));
    if (strategy == Execution::Direct) {
      run_direct(mats, exec);
    } else {
      run_ir(mats, progs, exec);
    }

    auto got = c.gather(0);
    auto want = reference_multiply(a_ref, b_ref);
    res.max_rel_err = relative_frobenius_error(got, want);
    res.pass = cfg.real ? res.max_rel_err <= 1e-10 : got == want;

    const auto &counters = fabric.counters();
    res.comm_bytes = counters.comm_bytes();
    res.flops_max_rank = counters.max_rank_flops();
    for (Rank r = 0; r < cfg.p; ++r) {
      res.flops_per_rank.push_back(counters.flops(r));
    }
    std::ostringstream links;
    std::ostringstream flops;
    counters.write_links_csv(links);
    counters.write_flops_csv(flops);
    res.links_csv = links.str();
    res.flops_csv = flops.str();
    if (fabric.outstanding_async() != 0) {
      res.pass = false;
      res.error = fmt::format("{} async gets never completed",
                              fabric.outstanding_async());
    }
  } catch (const ConfigError &e) {
    res.valid = false;
    res.pass = false;
    res.error = e.what();
  } catch (const std::exception &e) {
    res.pass = false;
    res.error = e.what();
  }
  if (!res.valid) {
    spdlog::warn("invalid configuration ({}): {}", res.config, res.error);
  } else if (!res.pass) {
    spdlog::error("verification failed ({}): rel err {:.3e} {}", res.config,
                  res.max_rel_err, res.error);
  }
  return res;
}

Sweep Sweep::parse(std::istream &in, std::string_view source) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view text = line;
    text = trim(text.substr(0, text.find('#')));
    if (text.empty()) {
      continue;
    }
    auto eq = text.find('=');
    auto key = eq == std::string_view::npos ? std::string_view{}
                                            : trim(text.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = v1, v2, ...'", source,
                                    lineno));
    }
    std::vector<std::string> values;
    for (auto v : split(text.substr(eq + 1), ',')) {
      if (v.empty()) {
        throw ConfigError(fmt::format("{}:{}: empty value for '{}'", source,
                                      lineno, key));
      }
      values.emplace_back(v);
    }
    // Reject unknown keys up front so typos are reported with their line.
    try {
      RunConfig probe;
      probe.set(key, values.front());
    } catch (const ConfigError &e) {
      if (std::string_view(e.what()).starts_with("unknown key")) {
        throw ConfigError(fmt::format("{}:{}: {}", source, lineno, e.what()));
      }
    }
    axes.emplace_back(std::string(key), std::move(values));
  }

  Sweep sweep;
  if (axes.empty()) {
    return sweep;
  }
  std::vector<std::size_t> pick(axes.size(), 0);
  for (;;) {
    Row row;
    RunConfig cfg;
    std::string desc;
    try {
      for (std::size_t a = 0; a < axes.size(); ++a) {
        const auto &value = axes[a].second[pick[a]];
        desc += fmt::format("{}{}={}", desc.empty() ? "" : " ", axes[a].first, value);
        cfg.set(axes[a].first, value);
      }
      row.config = cfg;
    } catch (const ConfigError &e) {
      row.error = e.what();
    }
    row.description = desc;
    sweep.rows.push_back(std::move(row));

    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++pick[a] < axes[a].second.size()) {
        break;
      }
      pick[a] = 0;
      if (a == 0) {
        return sweep;
      }
    }
  }
}

Sweep Sweep::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(fmt::format("cannot open sweep '{}'", path.string()));
  }
  return parse(in, path.string());
}

bool run_sweep(const Sweep &sweep, std::ostream &csv) {
  csv << RunResult::csv_header() << '\n';
  bool ok = true;
  std::size_t passed = 0;
  for (const auto &row : sweep.rows) {
    RunResult res;
    if (row.config) {
      res = run_one(*row.config);
    } else {
      res.config = row.description;
      res.valid = false;
      res.error = row.error;
      spdlog::warn("invalid configuration ({}): {}", row.description, row.error);
    }
    csv << res.csv_row() << '\n';
    ok = ok && res.valid && res.pass;
    passed += res.valid && res.pass ? 1 : 0;
  }
  spdlog::info("sweep: {}/{} rows passed", passed, sweep.rows.size());
  return ok;
}

} // namespace unimul
