#pragma once

#include "fisher/market.hpp"

namespace fisher::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// min c.z  subject to  row_lb <= A z <= row_ub,  lb <= z <= ub.
// Use +-kInf for one-sided rows or unbounded variables; equality rows have
// row_lb == row_ub.
struct Problem {
  Matrix A;
  Vector c;
  Vector row_lb, row_ub;
  Vector lb, ub;

  // Convenience builder: no rows, nvars variables in [0, inf).
  static Problem with_vars(Index nvars);
  void add_row(const Vector& coeffs, double lo, double hi);
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

struct Solution {
  Status status = Status::iteration_limit;
  double objective = 0.0;
  Vector z;              // primal values of the original variables
  Vector duals;          // one multiplier per row
  Vector reduced_costs;  // one per original variable
};

// Dense bounded-variable revised simplex (two-phase, Bland fallback).
Solution solve(const Problem& p, double tol = 1e-9, long max_pivots = 0);

}  // namespace fisher::lp
