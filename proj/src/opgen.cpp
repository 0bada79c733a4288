#include "unimul/opgen.hpp"

#include "unimul/errors.hpp"

#include <fmt/format.h>

namespace unimul {

namespace {

// Inner-dimension window this caller searches. Only a replicated stationary
// operand narrows it.
Range inner_window(const MatrixLayout &stationary, std::size_t k,
                   Rank caller) {
  return restrict_for_replication({0, k}, stationary.replication(),
                                  stationary.replica_of(caller));
}

void emit(std::vector<LocalMatMulOp> &out, TileIdx a_idx, const Bounds2D &ab,
          TileIdx b_idx, const Bounds2D &bb, TileIdx c_idx, const Bounds2D &cb,
          Range window) {
  auto m = intersect(cb.rows, ab.rows);
  auto k = intersect(intersect(ab.cols, bb.rows), window);
  auto n = intersect(bb.cols, cb.cols);
  if (m.empty() || k.empty() || n.empty()) {
    return;
  }
  out.push_back({a_idx, b_idx, c_idx, m, k, n,
                 global_to_local({m, k}, ab), global_to_local({k, n}, bb),
                 global_to_local({m, n}, cb)});
}

} // namespace

std::string_view to_string(Stationarity s) {
  switch (s) {
  case Stationarity::A:
    return "A";
  case Stationarity::B:
    return "B";
  case Stationarity::C:
    return "C";
  }
  return "?";
}

void check_conforming(const Operands &ops) {
  auto a = ops.a.shape();
  auto b = ops.b.shape();
  auto c = ops.c.shape();
  if (a.cols != b.rows || a.rows != c.rows || b.cols != c.cols) {
    throw ConfigError(fmt::format(
        "non-conforming shapes A {}x{}, B {}x{}, C {}x{}", a.rows, a.cols,
        b.rows, b.cols, c.rows, c.cols));
  }
  if (ops.a.nprocs() != ops.b.nprocs() || ops.a.nprocs() != ops.c.nprocs()) {
    throw ConfigError("operands live on different process counts");
  }
}

std::vector<LocalMatMulOp> generate_stationary_c(const Operands &ops,
                                                 Rank caller) {
  check_conforming(ops);
  const auto &A = ops.a;
  const auto &B = ops.b;
  const auto &C = ops.c;
  auto window = inner_window(C, A.shape().cols, caller);
  std::vector<LocalMatMulOp> out;
  auto grid = C.grid_shape();
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      TileIdx c_idx{i, j};
      if (!C.owns(caller, c_idx)) {
        continue;
      }
      auto cb = C.tile_bounds(c_idx);
      for (auto a_idx : A.overlapping_tiles({cb.rows, window})) {
        auto ab = A.tile_bounds(a_idx);
        for (auto b_idx :
             B.overlapping_tiles({intersect(ab.cols, window), cb.cols})) {
          emit(out, a_idx, ab, b_idx, B.tile_bounds(b_idx), c_idx, cb, window);
        }
      }
    }
  }
  return out;
}

std::vector<LocalMatMulOp> generate_stationary_b(const Operands &ops,
                                                 Rank caller) {
  check_conforming(ops);
  const auto &A = ops.a;
  const auto &B = ops.b;
  const auto &C = ops.c;
  auto window = inner_window(B, A.shape().cols, caller);
  std::vector<LocalMatMulOp> out;
  auto grid = B.grid_shape();
  for (std::size_t kk = 0; kk < grid.rows; ++kk) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      TileIdx b_idx{kk, j};
      if (!B.owns(caller, b_idx)) {
        continue;
      }
      auto bb = B.tile_bounds(b_idx);
      auto inner = intersect(bb.rows, window);
      if (inner.empty()) {
        continue;
      }
      for (auto a_idx : A.overlapping_tiles({{0, A.shape().rows}, inner})) {
        auto ab = A.tile_bounds(a_idx);
        for (auto c_idx : C.overlapping_tiles({ab.rows, bb.cols})) {
          emit(out, a_idx, ab, b_idx, bb, c_idx, C.tile_bounds(c_idx), window);
        }
      }
    }
  }
  return out;
}

std::vector<LocalMatMulOp> generate_stationary_a(const Operands &ops,
                                                 Rank caller) {
  check_conforming(ops);
  const auto &A = ops.a;
  const auto &B = ops.b;
  const auto &C = ops.c;
  auto window = inner_window(A, A.shape().cols, caller);
  std::vector<LocalMatMulOp> out;
  auto grid = A.grid_shape();
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t kk = 0; kk < grid.cols; ++kk) {
      TileIdx a_idx{i, kk};
      if (!A.owns(caller, a_idx)) {
        continue;
      }
      auto ab = A.tile_bounds(a_idx);
      auto inner = intersect(ab.cols, window);
      if (inner.empty()) {
        continue;
      }
      for (auto b_idx : B.overlapping_tiles({inner, {0, B.shape().cols}})) {
        auto bb = B.tile_bounds(b_idx);
        for (auto c_idx : C.overlapping_tiles({ab.rows, bb.cols})) {
          emit(out, a_idx, ab, b_idx, bb, c_idx, C.tile_bounds(c_idx), window);
        }
      }
    }
  }
  return out;
}

std::vector<LocalMatMulOp> generate_ops(Stationarity s, const Operands &ops,
                                        Rank caller) {
  switch (s) {
  case Stationarity::A:
    return generate_stationary_a(ops, caller);
  case Stationarity::B:
    return generate_stationary_b(ops, caller);
  case Stationarity::C:
    return generate_stationary_c(ops, caller);
  }
  return {};
}

Range restrict_for_replication(Range inner, std::size_t replication,
                               std::size_t replica) {
  if (replication == 0 || replica >= replication) {
    throw IndexError(fmt::format("replica {} outside [0,{})", replica,
                                 replication));
  }
  std::size_t chunk = inner.size() / replication;
  std::size_t lo = inner.lo + replica * chunk;
  std::size_t hi = replica + 1 == replication ? inner.hi : lo + chunk;
  return {lo, hi};
}

Bounds2D global_to_local(const Bounds2D &global, const Bounds2D &tile) {
  if (!tile.contains(global)) {
    throw ContractError(fmt::format(
        "bounds {}x{} not contained in tile {}x{}", to_string(global.rows),
        to_string(global.cols), to_string(tile.rows), to_string(tile.cols)));
  }
  return {{global.rows.lo - tile.rows.lo, global.rows.hi - tile.rows.lo},
          {global.cols.lo - tile.cols.lo, global.cols.hi - tile.cols.lo}};
}

std::string format_op(const LocalMatMulOp &op) {
  return fmt::format("a={} b={} c={} m={} k={} n={}", to_string(op.a),
                     to_string(op.b), to_string(op.c), to_string(op.m),
                     to_string(op.k), to_string(op.n));
}

} // namespace unimul
