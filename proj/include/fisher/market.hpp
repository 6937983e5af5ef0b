#pragma once

#include <Eigen/Core>

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fisher {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Allocations are n x m share matrices, prices are length-m vectors.
using Allocation = Matrix;
using PriceVector = Vector;

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct InvalidMarket : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ZeroUtility : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Thrown by exact (LP / enumeration) routines above their instance-size cap.
struct ScaleLimit : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Linear Fisher market: n buyers with budgets B and valuation rows v_i over
// m divisible items with supplies s.
struct Market {
  Matrix values;    // n x m, nonnegative
  Vector budgets;   // n, positive
  Vector supplies;  // m, positive

  Market() = default;
  Market(Matrix v, Vector b, Vector s);

  Index buyer_count() const { return values.rows(); }
  Index item_count() const { return values.cols(); }
  double budget_total() const { return budgets.sum(); }

  // Price box used by the solvers: p_j <= ||B||_1 / s_j.
  Vector price_cap() const;
};

struct ValidationCheck {
  std::string name;
  double residual = 0.0;
  bool pass = true;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  double tol = 0.0;
  bool pass = true;

  const ValidationCheck* find(const std::string& name) const;
  std::string summary() const;
};

struct SolveDiagnostics {
  long iterations = 0;
  double gap = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  std::string returned_iterate;  // "ergodic" or "last"
  double clearing_residual = 0.0;
  double budget_residual = 0.0;
  double bang_per_buck_residual = 0.0;
  double wall_ms = 0.0;
  // (iteration, ergodic gap, last-iterate gap) at each checkpoint.
  std::vector<std::tuple<long, double, double>> gap_trace;
};

struct EquilibriumSolution {
  PriceVector prices;
  Allocation allocation;
  Vector utilities;  // u_i = v_i . x_i
  Vector beta;       // B_i / u_i; dual utility rate, <= 1 in quasi-linear mode
  Vector leftover;   // unspent budget delta_i, zero in the linear mode
  SolveDiagnostics diagnostics;
};

// Checks the Market invariants exactly (nonnegative values, no zero valuation
// row, positive budgets and supplies). Report-style: never throws.
ValidationReport validate_market(const Market& m);

// v_i . x for a nonnegative bundle of length m.
double utility(const Market& m, Index buyer, const Vector& bundle);

struct Demand {
  double value = 0.0;
  Vector bundle;
};

// Optimal budget- and supply-capped bundle at the given prices (fractional
// knapsack in decreasing bang-per-buck order; ties prefer the lower item
// index; free items with positive value are taken at full supply).
Demand demand_value(const Market& m, Index buyer, const PriceVector& prices);

// Equilibrium conditions at tolerance `tol`: market clearing, budget
// exhaustion, equal bang-per-buck on purchased items, nonnegativity.
ValidationReport verify_equilibrium(const Market& m, const EquilibriumSolution& sol,
                                    double tol = 1e-7);

}  // namespace fisher
