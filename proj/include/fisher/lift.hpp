#pragma once

#include "fisher/abstraction.hpp"
#include "fisher/solver.hpp"

namespace fisher {

enum class LiftKind { proportional, recursive };

struct LiftedSolution {
  PriceVector prices;     // over original items
  Allocation allocation;  // over original buyers/items
  LiftKind kind = LiftKind::proportional;
  // recursive mode: one entry per representative buyer; fell_back lists
  // representatives whose sub-solve failed and kept proportional shares.
  std::vector<SolveDiagnostics> sub_diagnostics;
  std::vector<int> fell_back;
};

// p_hat_j = rep price of r(j) (per-unit price copied).
PriceVector lift_prices(const PriceVector& rep_prices, const std::vector<int>& item_assign);

// Supply-weighted split across the items of each representative item, then a
// budget-proportional split across the buyers of each representative buyer.
// Column sums are preserved exactly.
LiftedSolution proportional_lift(const EquilibriumSolution& rep_sol, const Market& m,
                                 const AbstractionMap& map);

// Re-solves one market per representative buyer over the supply-weighted
// item shares; sub-market prices are discarded. Buyers valuing nothing in
// their sub-market keep their proportional share, as does any cluster whose
// sub-solve fails to converge.
LiftedSolution recursive_lift(const EquilibriumSolution& rep_sol, const Market& m,
                              const AbstractionMap& map,
                              const SolverOptions& solver_opts = {}, int threads = 1);

}  // namespace fisher
