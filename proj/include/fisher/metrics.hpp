#pragma once

#include "fisher/market.hpp"

#include <optional>

namespace fisher {

// Per-buyer quality measures plus the global ones. Normalized entries whose
// denominator is zero with a nonzero numerator are flagged in
// `undefined_norms` and their value is left at zero (no NaN arithmetic).
struct MetricsReport {
  Vector regret, regret_norm;
  Vector envy, envy_norm;
  Vector mms_gap, mms_frac;
  double nsw_product = 0.0;
  double nsw_geomean = 0.0;
  std::optional<double> pareto_gap;
  double efficiency = 0.0;
  std::optional<double> weighted_welfare_gap;
  std::vector<std::pair<std::string, int>> undefined_norms;  // (metric, buyer)
};

// max affordable capped-bundle value minus realized value, floored at zero.
Vector regret(const Market& m, const PriceVector& prices, const Allocation& alloc);

// max_{i'} u_i(x_{i'}) - u_i(x_i), floored at zero.
Vector envy(const Market& m, const Allocation& alloc);

// MMS_i = (v_i . s) / n for divisible linear utilities; gap floored at zero.
Vector mms_gap(const Market& m, const Allocation& alloc);
Vector mms_values(const Market& m);

struct NswValue {
  double product = 0.0;
  double geomean = 0.0;
};
// Product of utilities and its n-th root, computed in log space; a zero
// utility propagates to (0, 0). The weighted variant uses budget weights.
NswValue nsw(const Market& m, const Allocation& alloc, bool budget_weighted = false);

// Scales any column exceeding its supply back onto the feasible set;
// solver outputs carry clearing residuals of the solver's tolerance.
Allocation clip_to_supply(const Market& m, Allocation alloc);

// Largest unweighted-welfare improvement over Pareto-dominating allocations
// (exact LP; desk scale only). Overfull columns are clipped first, see
// clip_to_supply.
double pareto_gap(const Market& m, const Allocation& alloc);

// beta_i = B_i / u_i. Throws ZeroUtility.
Vector negishi_weights(const Market& m, const EquilibriumSolution& sol);
Vector negishi_weights(const Vector& budgets, const Vector& utilities);

// max_y sum_i beta_i v_i.y_i - current, solved itemwise in closed form.
double weighted_welfare_gap(const Market& m, const Vector& beta, const Allocation& alloc);

// sum_i u_i divided by the itemwise-max welfare sum_j s_j max_i v_ij.
double efficiency(const Market& m, const Allocation& alloc);

// Full report; pareto_gap included only when n*m is within the desk-scale
// cap and `with_pareto` is set.
MetricsReport compute_metrics(const Market& m, const PriceVector& prices,
                              const Allocation& alloc, bool with_pareto = true);

}  // namespace fisher
