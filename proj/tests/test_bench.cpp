#include "unimul/bench.hpp"
#include "unimul/errors.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace unimul;

namespace {

RunConfig parse_config(const std::string &text) {
  std::istringstream in(text);
  return RunConfig::parse(in, "cfg");
}

std::string error_of(const std::string &text) {
  try {
    parse_config(text);
  } catch (const ConfigError &e) {
    return e.what();
  }
  return "";
}

std::size_t count_lines(const std::string &s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

} // namespace

TEST(RunConfig, ParsesKeysAndComments) {
  auto cfg = parse_config(
      "# comment\n"
      "m = 7\n n=9 \nk = 5 # trailing\n\n"
      "p = 12\npartition_a = custom:3x4:3x4:block\nc_b = 3\n"
      "stationarity = auto\nexecution = ir:cost\nmax_comm = 2\n"
      "topology = two_level:4:2e9:1e9\nreal = true\n");
  EXPECT_EQ(cfg.m, 7u);
  EXPECT_EQ(cfg.n, 9u);
  EXPECT_EQ(cfg.k, 5u);
  EXPECT_EQ(cfg.p, 12u);
  EXPECT_EQ(cfg.replication[1], 3u);
  EXPECT_FALSE(cfg.stationarity.has_value());
  EXPECT_EQ(cfg.execution, Execution::IrCost);
  EXPECT_EQ(cfg.limits.max_comm, 2u);
  EXPECT_EQ(cfg.group_size, 4u);
  EXPECT_TRUE(cfg.real);
  EXPECT_EQ(cfg.partition[0].to_string(), "custom:3x4:3x4:block");
}

TEST(RunConfig, ErrorsCarryLineNumbers) {
  EXPECT_NE(error_of("m = 4\nbogus = 1\n").find("cfg:2"), std::string::npos);
  EXPECT_NE(error_of("m = 4\nbogus = 1\n").find("unknown key"), std::string::npos);
  EXPECT_NE(error_of("m = x\n").find("cfg:1"), std::string::npos);
  EXPECT_NE(error_of("\n\nm 4\n").find("cfg:3"), std::string::npos);
  EXPECT_NE(error_of("partition = diagonal\n"), "");
  EXPECT_NE(error_of("stationarity = D\n"), "");
}

TEST(RunConfig, ReplicationMustDivide) {
  auto cfg = parse_config("p = 12\nc_a = 5\n");
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("replication must divide process count"),
              std::string::npos);
  }
  auto res = run_one(cfg);
  EXPECT_FALSE(res.valid);
  EXPECT_FALSE(res.pass);
}

TEST(RunConfig, IdIsStable) {
  RunConfig cfg;
  EXPECT_EQ(cfg.id(), RunConfig{}.id());
  EXPECT_EQ(cfg.id().find(','), std::string::npos);
  auto other = cfg;
  other.set("c_a", "2");
  EXPECT_NE(cfg.id(), other.id());
}

TEST(PartitionDesc, RoundTrip) {
  for (auto text : {"row", "col", "2d", "custom:3x4", "custom:2x2:1x4:block"}) {
    EXPECT_EQ(PartitionDesc::parse(text).to_string(), text);
  }
  EXPECT_THROW(PartitionDesc::parse("custom:0x3"), ConfigError);
  EXPECT_THROW(PartitionDesc::parse("custom:3"), ConfigError);
}

TEST(RunOne, AlignedDirectIsExact) {
  RunConfig cfg;
  auto res = run_one(cfg);
  ASSERT_TRUE(res.valid) << res.error;
  EXPECT_TRUE(res.pass);
  EXPECT_EQ(res.max_rel_err, 0.0);
  EXPECT_GT(res.comm_bytes, 0u);
  EXPECT_EQ(res.flops_per_rank.size(), 4u);
}

TEST(RunOne, RealInputsWithinTolerance) {
  RunConfig cfg;
  cfg.real = true;
  cfg.set("partition_a", "custom:5x3");
  cfg.set("execution", "ir:greedy");
  auto res = run_one(cfg);
  ASSERT_TRUE(res.valid) << res.error;
  EXPECT_TRUE(res.pass);
  EXPECT_LE(res.max_rel_err, 1e-10);
}

TEST(RunOne, Reproducible) {
  RunConfig cfg;
  cfg.set("partition_b", "custom:5x5");
  cfg.set("stationarity", "A");
  auto r1 = run_one(cfg);
  auto r2 = run_one(cfg);
  EXPECT_EQ(r1.csv_row(), r2.csv_row());
  EXPECT_EQ(r1.links_csv, r2.links_csv);
}

TEST(Stationarity, AutoPicksCheapest) {
  RunConfig cfg;
  cfg.m = 64;
  cfg.n = 96;
  cfg.k = 384;
  cfg.p = 12;
  cfg.set("partition_a", "col");
  cfg.set("partition_b", "row");
  cfg.set("partition_c", "2d");
  double cost_c = model_cost(cfg, Stationarity::C);
  double best = std::min({model_cost(cfg, Stationarity::A),
                          model_cost(cfg, Stationarity::B)});
  auto pick = pick_stationarity(cfg);
  if (best < cost_c) {
    EXPECT_NE(pick, Stationarity::C);
  }
  EXPECT_LE(model_cost(cfg, pick), cost_c);
  EXPECT_LE(model_cost(cfg, pick), best);

  cfg.stationarity.reset();
  auto res = run_one(cfg);
  EXPECT_TRUE(res.pass) << res.error;
  EXPECT_EQ(res.stationarity, pick);
}

TEST(Sweep, FullFamilyPasses) {
  std::istringstream in("p = 4\n"
                        "partition_a = row, col, 2d\n"
                        "partition_b = row, col, 2d\n"
                        "partition_c = row, col, 2d\n"
                        "c = 1, 2, 4\n"
                        "stationarity = A, B, C\n");
  auto sweep = Sweep::parse(in);
  ASSERT_EQ(sweep.rows.size(), 243u);
  std::ostringstream csv;
  EXPECT_TRUE(run_sweep(sweep, csv));
  EXPECT_EQ(count_lines(csv.str()), 244u);
  EXPECT_EQ(csv.str().find("false"), std::string::npos);
}

TEST(Sweep, LastKeyVariesFastest) {
  std::istringstream in("m = 4, 8\nstationarity = A, B\n");
  auto sweep = Sweep::parse(in);
  ASSERT_EQ(sweep.rows.size(), 4u);
  EXPECT_EQ(sweep.rows[0].config->m, 4u);
  EXPECT_EQ(sweep.rows[1].config->m, 4u);
  EXPECT_EQ(sweep.rows[1].config->stationarity, Stationarity::B);
  EXPECT_EQ(sweep.rows[2].config->m, 8u);
}

TEST(Sweep, EmptyWritesHeaderOnly) {
  Sweep sweep;
  std::ostringstream csv;
  EXPECT_TRUE(run_sweep(sweep, csv));
  EXPECT_EQ(csv.str(), RunResult::csv_header() + "\n");
}

TEST(Sweep, InvalidRowIsIsolated) {
  std::istringstream in("p = 12\nc_a = 1, 5, 3\n");
  auto sweep = Sweep::parse(in);
  ASSERT_EQ(sweep.rows.size(), 3u);
  std::ostringstream csv;
  EXPECT_FALSE(run_sweep(sweep, csv));
  std::istringstream lines(csv.str());
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) {
    rows.push_back(line);
  }
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_NE(rows[1].find(",true,"), std::string::npos);
  EXPECT_NE(rows[2].find(",invalid,"), std::string::npos);
  EXPECT_NE(rows[3].find(",true,"), std::string::npos);
}

TEST(Sweep, UnknownKeyNamesLine) {
  std::istringstream in("m = 4\n\nwidth = 3, 4\n");
  try {
    Sweep::parse(in, "s");
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("s:3"), std::string::npos);
  }
}
