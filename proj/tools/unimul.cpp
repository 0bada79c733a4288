// unimul: run, sweep and inspect distributed multiplies on the simulated
// fabric.
//
// Log verbosity comes from UNIMUL_LOG (trace|debug|info|warn|error|off,
// default warn).

#include "unimul/bench.hpp"
#include "unimul/errors.hpp"
#include "unimul/ir.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("unimul");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  auto level = spdlog::level::warn;
  if (const char *env = std::getenv("UNIMUL_LOG")) {
    level = spdlog::level::from_str(env);
  }
  spdlog::set_level(level);
}

void write_file(const std::string &path, const std::string &body) {
  std::ofstream out(path);
  if (!out) {
    throw unimul::ConfigError(fmt::format("cannot write '{}'", path));
  }
  out << body;
}

unimul::RunConfig load_config(const std::string &path, bool real) {
  auto cfg = unimul::RunConfig::load(path);
  cfg.real = cfg.real || real;
  cfg.validate();
  return cfg;
}

unimul::Stationarity resolve(const unimul::RunConfig &cfg) {
  return cfg.stationarity ? *cfg.stationarity : unimul::pick_stationarity(cfg);
}

} // namespace

int main(int argc, char **argv) {
  setup_logging();

  CLI::App app{"Universal one-sided distributed matrix multiply simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string sweep_path;
  std::string csv_path;
  std::string links_path;
  std::string flops_path;
  bool real = false;

  auto *run = app.add_subcommand("run", "Run one configuration and verify it");
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_flag("--real", real, "Use continuous random inputs");
  run->add_option("--links", links_path, "Write per-link byte counters as CSV");
  run->add_option("--flops", flops_path, "Write per-rank flop counters as CSV");

  auto *sweep = app.add_subcommand("sweep", "Run the cross product of a sweep file");
  sweep->add_option("file", sweep_path, "Sweep file")->required()->check(CLI::ExistingFile);
  sweep->add_option("-o,--output", csv_path, "Output CSV")->required();
  sweep->add_flag("--real", real, "Use continuous random inputs");

  auto *dump_ops = app.add_subcommand("dump-ops", "Print every rank's op list");
  dump_ops->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);

  auto *dump_ir = app.add_subcommand("dump-ir", "Print every rank's lowered program");
  dump_ir->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = unimul::RunConfig::load(config_path);
      cfg.real = cfg.real || real;
      auto res = unimul::run_one(cfg);
      std::cout << unimul::RunResult::csv_header() << '\n' << res.csv_row() << '\n';
      if (!res.valid) {
        std::cerr << "error: " << res.error << '\n';
        return 2;
      }
      if (!links_path.empty()) {
        write_file(links_path, res.links_csv);
      }
      if (!flops_path.empty()) {
        write_file(flops_path, res.flops_csv);
      }
      return res.pass ? 0 : 1;
    }
    if (*sweep) {
      auto s = unimul::Sweep::load(sweep_path);
      if (real) {
        for (auto &row : s.rows) {
          if (row.config) {
            row.config->real = true;
          }
        }
      }
      std::ofstream out(csv_path);
      if (!out) {
        throw unimul::ConfigError(fmt::format("cannot write '{}'", csv_path));
      }
      return unimul::run_sweep(s, out) ? 0 : 1;
    }
    if (*dump_ops) {
      auto cfg = load_config(config_path, false);
      auto s = resolve(cfg);
      auto ops = unimul::all_ops(cfg, s);
      std::cout << fmt::format("# stationarity {}\n", unimul::to_string(s));
      for (std::size_t r = 0; r < ops.size(); ++r) {
        std::cout << fmt::format("rank {}: {} ops\n", r, ops[r].size());
        for (const auto &op : ops[r]) {
          std::cout << "  " << unimul::format_op(op) << '\n';
        }
      }
      return 0;
    }
    if (*dump_ir) {
      auto cfg = load_config(config_path, false);
      auto s = resolve(cfg);
      auto progs = unimul::lower_all(cfg, s, cfg.execution);
      std::cout << fmt::format("# stationarity {} lowering {}\n",
                               unimul::to_string(s), unimul::to_string(cfg.execution));
      for (const auto &prog : progs) {
        std::cout << fmt::format("rank {}:\n", prog.rank)
                  << unimul::format_program(prog);
      }
      return 0;
    }
  } catch (const unimul::ConfigError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "fatal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
