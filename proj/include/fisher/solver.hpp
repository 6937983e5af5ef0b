#pragma once

#include "fisher/market.hpp"

namespace fisher {

enum class UtilityFloorMode { epsilon_floor, mms_floor };
enum class Averaging { ergodic_average, last_iterate };

struct SolverOptions {
  long max_iters = 400000;
  double target_gap = 1e-7;  // absolute duality-gap threshold
  // Step sizes; 0 selects tau = 0.9*Dx/(L*Dp), sigma = 0.9*Dp/(L*Dx) from the
  // box diameters. Explicit values must satisfy tau*sigma*L^2 <= 1, L = sqrt(n).
  double step_primal = 0.0;
  double step_dual = 0.0;
  UtilityFloorMode floor_mode = UtilityFloorMode::epsilon_floor;
  double epsilon_scale = 1e-6;  // floor_i = epsilon_scale * max_j v_ij s_j
  Averaging averaging = Averaging::ergodic_average;
  unsigned long seed = 0;
  long check_every = 250;  // duality-gap evaluation cadence
};

struct SaddleState {
  Matrix x;      // n x m iterate, inside [0, s_j] per column
  Vector p;      // price iterate, inside [0, ||B||_1/s_j]
  Matrix x_avg;  // ergodic averages
  Vector p_avg;
  long t = 0;
};

// Exact restricted gap max_p L(x, p) - min_x' L(x', p) over the two boxes,
// evaluated at state's (x, p). Nonnegative for any in-box state.
double duality_gap(const Market& m, const SaddleState& state,
                   UtilityFloorMode floor_mode = UtilityFloorMode::epsilon_floor,
                   double epsilon_scale = 1e-6);

// Primal-dual first-order solver for the EG saddle-point formulation.
// Returns the ergodic average or last iterate (whichever is requested and
// meets target_gap; diagnostics record which one was returned). A run that
// hits max_iters returns the best iterate with converged = false.
EquilibriumSolution solve_eg_pd(const Market& m, const SolverOptions& opts = {});

// High-accuracy fixed-point oracle (proportional spending updates) for
// desk-scale cross-checks. Requires n*m <= 10000.
EquilibriumSolution solve_eg_oracle(const Market& m, double tol = 1e-12,
                                    long max_iters = 300000);

// Quasi-linear mode: leftover budget delta_i is worth face value, beta_i <= 1.
using QuasiLinearSolution = EquilibriumSolution;
QuasiLinearSolution solve_quasilinear(const Market& m, const SolverOptions& opts = {});

// KKT residuals of a quasi-linear solution: dual feasibility p_j >= beta_i v_ij,
// complementary slackness on purchases and leftovers, budget split, clearing.
ValidationReport verify_quasilinear(const Market& m, const QuasiLinearSolution& sol,
                                    double tol = 1e-6);

}  // namespace fisher
