#pragma once

#include "fisher/market.hpp"
#include "fisher/solver.hpp"

#include <optional>

namespace fisher {

struct NotAnAbstractEquilibrium : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct HypothesisViolated : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BoundEntry {
  std::string name;
  double empirical = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // bound - empirical (signed)
  bool pass = true;     // margin >= -(1e-6 + 1e-8 |bound|)
  int buyer = -1;       // -1 for aggregate entries
};

struct BoundReport {
  double norm_1inf = 0.0;    // max over rows of the row l1 norm
  double norm_inf1 = 0.0;    // sum over columns of the column max
  double frobenius = 0.0;
  double sqrt_m_frob = 0.0;  // sqrt(m) * frobenius
  Vector row_l1;             // per-buyer ||delta v_i||_1
  std::vector<BoundEntry> entries;
  bool all_pass = true;

  void add(std::string name, double empirical, double bound, int buyer = -1);
};

BoundReport delta_norms(const Matrix& delta);

// Regret/envy under V bounded by ||dv_i||_1, MMS gap by 2||dv_i||_1, at an
// equilibrium of v_hat (verified at pre_tol first).
BoundReport check_individual_bounds(const Market& m, const Matrix& v_hat,
                                    const PriceVector& prices, const Allocation& alloc_hat,
                                    double pre_tol = 1e-4);

// Negishi-weighted welfare gap under V bounded by ||beta||_1 ||dV||_{1,inf}.
BoundReport check_negishi_bound(const Market& m, const Matrix& v_hat,
                                const EquilibriumSolution& sol_hat, double pre_tol = 1e-4);

// log NSW(X*) <= log NSW_hat(X_hat) + sum_i log(1 + ||dv_i||_1 / u_hat_i(x*)).
// sol_star must be the V-equilibrium; throws HypothesisViolated when some
// u_hat_i(x*) is not positive.
BoundReport check_nsw_bound(const Market& m, const Matrix& v_hat,
                            const EquilibriumSolution& sol_hat,
                            const EquilibriumSolution& sol_star, double pre_tol = 1e-4);

// Certifies max over Pareto-dominating y of min_i (gain_i - ||dv_i||_1) <= 0
// via an epigraph LP (desk scale).
BoundReport check_pareto_bound(const Market& m, const Matrix& v_hat,
                               const Allocation& alloc_hat, double pre_tol = 1e-4);

// Quasi-linear aggregate regret against 2||dV||_{inf,1} and 2 sqrt(m) ||dV||_F,
// plus the coalition core check (n <= 10) when include_core is set.
BoundReport check_ql_regret_and_core(const Market& m, const Matrix& v_hat,
                                     const QuasiLinearSolution& ql_sol,
                                     bool include_core = true, double pre_tol = 1e-4);

}  // namespace fisher
