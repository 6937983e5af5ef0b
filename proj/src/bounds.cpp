#include "fisher/bounds.hpp"

#include "fisher/abstraction.hpp"
#include "fisher/lp.hpp"
#include "fisher/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace fisher {

namespace {

double pass_tol(double bound) { return 1e-6 + 1e-8 * std::abs(bound); }

Market hat_market(const Market& m, const Matrix& v_hat) {
  return Market(v_hat, m.budgets, m.supplies);
}

void require_equilibrium(const Market& mh, const PriceVector& prices,
                         const Allocation& alloc, double pre_tol, const char* where) {
  EquilibriumSolution sol;
  sol.prices = prices;
  sol.allocation = alloc;
  const auto rep = verify_equilibrium(mh, sol, pre_tol);
  if (!rep.pass)
    throw NotAnAbstractEquilibrium(std::string(where) +
                                   ": (prices, allocation) is not an equilibrium of "
                                   "v_hat at the requested tolerance: " +
                                   rep.summary());
}

}  // namespace

void BoundReport::add(std::string name, double empirical, double bound, int buyer) {
  BoundEntry e;
  e.name = std::move(name);
  e.empirical = empirical;
  e.bound = bound;
  e.margin = bound - empirical;
  e.pass = e.margin >= -pass_tol(bound);
  e.buyer = buyer;
  all_pass = all_pass && e.pass;
  entries.push_back(std::move(e));
}

BoundReport delta_norms(const Matrix& delta) {
  BoundReport r;
  r.row_l1 = delta.cwiseAbs().rowwise().sum();
  r.norm_1inf = delta.rows() > 0 ? r.row_l1.maxCoeff() : 0.0;
  r.norm_inf1 = delta.cols() > 0 ? delta.cwiseAbs().colwise().maxCoeff().sum() : 0.0;
  r.frobenius = delta.norm();
  r.sqrt_m_frob = std::sqrt(static_cast<double>(delta.cols())) * r.frobenius;
  return r;
}

BoundReport check_individual_bounds(const Market& m, const Matrix& v_hat,
                                    const PriceVector& prices, const Allocation& alloc_hat,
                                    double pre_tol) {
  const Market mh = hat_market(m, v_hat);
  require_equilibrium(mh, prices, alloc_hat, pre_tol, "check_individual_bounds");

  BoundReport r = delta_norms(delta_v(m, v_hat));
  const Vector reg = regret(m, prices, alloc_hat);
  const Vector env = envy(m, alloc_hat);
  const Vector mgap = mms_gap(m, alloc_hat);
  for (Index i = 0; i < m.buyer_count(); ++i) {
    r.add("regret", reg(i), r.row_l1(i), static_cast<int>(i));
    r.add("envy", env(i), r.row_l1(i), static_cast<int>(i));
    r.add("mms_gap", mgap(i), 2.0 * r.row_l1(i), static_cast<int>(i));
  }
  r.add("max_regret", reg.maxCoeff(), r.norm_1inf);
  r.add("max_envy", env.maxCoeff(), r.norm_1inf);
  r.add("max_mms_gap", mgap.maxCoeff(), 2.0 * r.norm_1inf);
  return r;
}

BoundReport check_negishi_bound(const Market& m, const Matrix& v_hat,
                                const EquilibriumSolution& sol_hat, double pre_tol) {
  const Market mh = hat_market(m, v_hat);
  require_equilibrium(mh, sol_hat.prices, sol_hat.allocation, pre_tol,
                      "check_negishi_bound");

  // weights from the abstract equilibrium's utilities under v_hat
  const Vector u_hat = (v_hat.array() * sol_hat.allocation.array()).rowwise().sum();
  const Vector beta = negishi_weights(m.budgets, u_hat);

  BoundReport r = delta_norms(delta_v(m, v_hat));
  const double gap = weighted_welfare_gap(m, beta, sol_hat.allocation);
  r.add("negishi_welfare_gap", gap, beta.cwiseAbs().sum() * r.norm_1inf);
  return r;
}

BoundReport check_nsw_bound(const Market& m, const Matrix& v_hat,
                            const EquilibriumSolution& sol_hat,
                            const EquilibriumSolution& sol_star, double pre_tol) {
  const Market mh = hat_market(m, v_hat);
  require_equilibrium(mh, sol_hat.prices, sol_hat.allocation, pre_tol, "check_nsw_bound");

  BoundReport r = delta_norms(delta_v(m, v_hat));
  double lhs = 0.0, rhs = 0.0;
  for (Index i = 0; i < m.buyer_count(); ++i) {
    const double u_star = m.values.row(i).dot(sol_star.allocation.row(i));
    const double u_hat_at_star = v_hat.row(i).dot(sol_star.allocation.row(i));
    const double u_hat = v_hat.row(i).dot(sol_hat.allocation.row(i));
    if (u_hat_at_star <= 1e-12)
      throw HypothesisViolated("check_nsw_bound: v_hat utility of the optimal "
                               "allocation vanishes for buyer " + std::to_string(i));
    lhs += std::log(std::max(u_star, 1e-300));
    rhs += std::log(u_hat) + std::log1p(r.row_l1(i) / u_hat_at_star);
  }
  // empirical log NSW(X*) against the multiplicative bound, in log space
  r.add("log_nsw", lhs, rhs);
  return r;
}

BoundReport check_pareto_bound(const Market& m, const Matrix& v_hat,
                               const Allocation& raw_alloc, double pre_tol) {
  const Index n = m.buyer_count();
  const Index mm = m.item_count();
  if (n * mm > 10000) throw ScaleLimit("check_pareto_bound: above desk-scale cap");
  const Allocation alloc_hat = clip_to_supply(m, raw_alloc);

  {
    // Pareto optimality under v_hat: a v_hat-equilibrium suffices, but any
    // allocation with zero v_hat Pareto gap is accepted.
    const Market mh = hat_market(m, v_hat);
    const double hat_gap = pareto_gap(mh, alloc_hat);
    if (hat_gap > pre_tol * std::max(1.0, m.budget_total()))
      throw NotAnAbstractEquilibrium(
          "check_pareto_bound: allocation is not Pareto optimal under v_hat");
  }

  BoundReport r = delta_norms(delta_v(m, v_hat));

  // vars: y (n*m), t free; max t  s.t.  v_i.y_i - v_i.x_i - d_i >= t,
  // v_i.y_i >= v_i.x_i, col sums <= s.
  lp::Problem p = lp::Problem::with_vars(n * mm + 1);
  const Index tv = n * mm;
  p.lb(tv) = -lp::kInf;
  p.c(tv) = -1.0;  // min -t

  p.A = Matrix::Zero(2 * n + mm, n * mm + 1);
  p.row_lb.resize(2 * n + mm);
  p.row_ub.resize(2 * n + mm);
  for (Index i = 0; i < n; ++i) {
    const double current = m.values.row(i).dot(alloc_hat.row(i));
    for (Index j = 0; j < mm; ++j) {
      p.A(i, i * mm + j) = m.values(i, j);
      p.A(n + i, i * mm + j) = m.values(i, j);
    }
    p.A(i, tv) = -1.0;
    p.row_lb(i) = current + r.row_l1(i);
    p.row_ub(i) = lp::kInf;
    p.row_lb(n + i) = current;
    p.row_ub(n + i) = lp::kInf;
  }
  for (Index j = 0; j < mm; ++j) {
    for (Index i = 0; i < n; ++i) p.A(2 * n + j, i * mm + j) = 1.0;
    p.row_lb(2 * n + j) = -lp::kInf;
    p.row_ub(2 * n + j) = m.supplies(j);
  }

  const auto sol = lp::solve(p);
  if (sol.status != lp::Status::optimal)
    throw std::runtime_error("check_pareto_bound: LP did not solve");
  // min over buyers of (gain_i - d_i), maximized over dominating allocations
  r.add("pareto_min_gain", -sol.objective, 0.0);
  return r;
}

namespace {

// Optimal quasi-linear demand value max (v_i - p).x over the budget- and
// supply-capped set; only positive-margin items are worth buying.
double ql_demand_value(const Market& m, Index i, const PriceVector& p) {
  std::vector<Index> order;
  double value = 0.0;
  for (Index j = 0; j < m.item_count(); ++j) {
    if (p(j) <= 0.0) {
      if (m.values(i, j) > 0.0) value += m.values(i, j) * m.supplies(j);
    } else if (m.values(i, j) > p(j)) {
      order.push_back(j);
    }
  }
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ra = (m.values(i, a) - p(a)) / p(a);
    const double rb = (m.values(i, b) - p(b)) / p(b);
    if (ra != rb) return ra > rb;
    return a < b;
  });
  double budget = m.budgets(i);
  for (Index j : order) {
    if (budget <= 0.0) break;
    const double amount = std::min(m.supplies(j), budget / p(j));
    value += (m.values(i, j) - p(j)) * amount;
    budget -= amount * p(j);
  }
  return value;
}

}  // namespace

BoundReport check_ql_regret_and_core(const Market& m, const Matrix& v_hat,
                                     const QuasiLinearSolution& ql_sol,
                                     bool include_core, double pre_tol) {
  const Index n = m.buyer_count();
  const Index mm = m.item_count();
  {
    const Market mh = hat_market(m, v_hat);
    const auto rep = verify_quasilinear(mh, ql_sol, pre_tol);
    if (!rep.pass)
      throw NotAnAbstractEquilibrium(
          "check_ql_regret_and_core: not a quasi-linear equilibrium of v_hat: " +
          rep.summary());
  }

  BoundReport r = delta_norms(delta_v(m, v_hat));

  double total_regret = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double assigned = (m.values.row(i) - ql_sol.prices.transpose())
                                .dot(ql_sol.allocation.row(i));
    const double opt = ql_demand_value(m, i, ql_sol.prices);
    total_regret += std::max(0.0, opt - assigned);
  }
  r.add("ql_total_regret_inf1", total_regret, 2.0 * r.norm_inf1);
  r.add("ql_total_regret_frob", total_regret, 2.0 * r.sqrt_m_frob);

  if (!include_core) return r;
  if (n > 10) throw ScaleLimit("check_ql_regret_and_core: core check needs n <= 10");

  // current v_hat utilities (goods value + leftover) and seller revenue
  Vector u_hat(n);
  for (Index i = 0; i < n; ++i)
    u_hat(i) = v_hat.row(i).dot(ql_sol.allocation.row(i)) + ql_sol.leftover(i);
  double revenue = 0.0;
  for (Index i = 0; i < n; ++i) revenue += ql_sol.prices.dot(ql_sol.allocation.row(i));

  // Best uniform improvement any coalition can guarantee while paying the
  // seller at least the current revenue.
  double worst = -std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<Index> coalition;
    double coalition_budget = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        coalition.push_back(i);
        coalition_budget += m.budgets(i);
      }
    }
    if (coalition_budget < revenue - 1e-12) continue;  // cannot match revenue

    const Index cn = static_cast<Index>(coalition.size());
    // vars: y (cn*mm), delta (cn), t
    const Index nv = cn * mm + cn + 1;
    lp::Problem p = lp::Problem::with_vars(nv);
    const Index tv = nv - 1;
    p.lb(tv) = -lp::kInf;
    p.c(tv) = -1.0;
    for (Index a = 0; a < cn; ++a) p.ub(cn * mm + a) = m.budgets(coalition[a]);

    p.A = Matrix::Zero(cn + 1 + mm, nv);
    p.row_lb.resize(cn + 1 + mm);
    p.row_ub.resize(cn + 1 + mm);
    for (Index a = 0; a < cn; ++a) {
      for (Index j = 0; j < mm; ++j) p.A(a, a * mm + j) = m.values(coalition[a], j);
      p.A(a, cn * mm + a) = 1.0;
      p.A(a, tv) = -1.0;
      p.row_lb(a) = u_hat(coalition[a]);
      p.row_ub(a) = lp::kInf;
    }
    // sum of payments (B_i - delta_i) >= revenue
    for (Index a = 0; a < cn; ++a) p.A(cn, cn * mm + a) = -1.0;
    p.row_lb(cn) = revenue - coalition_budget;
    p.row_ub(cn) = lp::kInf;
    for (Index j = 0; j < mm; ++j) {
      for (Index a = 0; a < cn; ++a) p.A(cn + 1 + j, a * mm + j) = 1.0;
      p.row_lb(cn + 1 + j) = -lp::kInf;
      p.row_ub(cn + 1 + j) = m.supplies(j);
    }

    const auto sol = lp::solve(p);
    if (sol.status == lp::Status::infeasible) continue;
    if (sol.status != lp::Status::optimal)
      throw std::runtime_error("core check: coalition LP did not solve");
    worst = std::max(worst, -sol.objective);
  }
  if (std::isfinite(worst)) r.add("core_best_uniform_gain", worst, r.norm_1inf);
  return r;
}

}  // namespace fisher
