#include "fisher/metrics.hpp"

#include "fisher/lp.hpp"

#include <algorithm>
#include <cmath>

namespace fisher {

Vector regret(const Market& m, const PriceVector& prices, const Allocation& alloc) {
  const Index n = m.buyer_count();
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    const double opt = demand_value(m, i, prices).value;
    const double got = m.values.row(i).dot(alloc.row(i));
    out(i) = std::max(0.0, opt - got);
  }
  return out;
}

Vector envy(const Market& m, const Allocation& alloc) {
  const Index n = m.buyer_count();
  // values of every bundle under every buyer's valuation
  const Matrix cross = m.values * alloc.transpose();  // cross(i, i') = u_i(x_{i'})
  Vector out(n);
  for (Index i = 0; i < n; ++i)
    out(i) = std::max(0.0, cross.row(i).maxCoeff() - cross(i, i));
  return out;
}

Vector mms_values(const Market& m) {
  return m.values * m.supplies / static_cast<double>(m.buyer_count());
}

Vector mms_gap(const Market& m, const Allocation& alloc) {
  const Vector mms = mms_values(m);
  Vector out(m.buyer_count());
  for (Index i = 0; i < m.buyer_count(); ++i)
    out(i) = std::max(0.0, mms(i) - m.values.row(i).dot(alloc.row(i)));
  return out;
}

NswValue nsw(const Market& m, const Allocation& alloc, bool budget_weighted) {
  const Index n = m.buyer_count();
  double logsum = 0.0;
  double wsum = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double u = m.values.row(i).dot(alloc.row(i));
    const double w = budget_weighted ? m.budgets(i) : 1.0;
    if (u <= 0.0) return {0.0, 0.0};
    logsum += w * std::log(u);
    wsum += w;
  }
  return {std::exp(logsum), std::exp(logsum / wsum)};
}

Allocation clip_to_supply(const Market& m, Allocation alloc) {
  for (Index j = 0; j < m.item_count(); ++j) {
    const double total = alloc.col(j).sum();
    if (total > m.supplies(j)) alloc.col(j) *= m.supplies(j) / total;
  }
  return alloc;
}

double pareto_gap(const Market& m, const Allocation& raw) {
  const Index n = m.buyer_count();
  const Index mm = m.item_count();
  if (n * mm > 10000) throw ScaleLimit("pareto_gap: instance above desk-scale cap");
  const Allocation alloc = clip_to_supply(m, raw);

  // vars y_ij; max sum v_ij y_ij  s.t.  v_i.y_i >= v_i.x_i, col sums <= s.
  lp::Problem p = lp::Problem::with_vars(n * mm);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < mm; ++j) p.c(i * mm + j) = -m.values(i, j);  // min form

  const double current = (m.values.array() * alloc.array()).sum();
  p.A = Matrix::Zero(n + mm, n * mm);
  p.row_lb.resize(n + mm);
  p.row_ub.resize(n + mm);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < mm; ++j) p.A(i, i * mm + j) = m.values(i, j);
    p.row_lb(i) = m.values.row(i).dot(alloc.row(i));
    p.row_ub(i) = lp::kInf;
  }
  for (Index j = 0; j < mm; ++j) {
    for (Index i = 0; i < n; ++i) p.A(n + j, i * mm + j) = 1.0;
    p.row_lb(n + j) = -lp::kInf;
    p.row_ub(n + j) = m.supplies(j);
  }

  const auto sol = lp::solve(p);
  if (sol.status != lp::Status::optimal)
    throw std::runtime_error("pareto_gap: LP did not solve");
  return std::max(0.0, -sol.objective - current);
}

Vector negishi_weights(const Vector& budgets, const Vector& utilities) {
  Vector out(budgets.size());
  for (Index i = 0; i < budgets.size(); ++i) {
    if (utilities(i) <= 0.0)
      throw ZeroUtility("negishi_weights: buyer " + std::to_string(i) +
                        " has zero utility");
    out(i) = budgets(i) / utilities(i);
  }
  return out;
}

Vector negishi_weights(const Market& m, const EquilibriumSolution& sol) {
  return negishi_weights(m.budgets, sol.utilities);
}

double weighted_welfare_gap(const Market& m, const Vector& beta, const Allocation& alloc) {
  if ((beta.array() < 0).any())
    throw std::invalid_argument("weighted_welfare_gap: negative weight");
  double best = 0.0;
  for (Index j = 0; j < m.item_count(); ++j) {
    double top = 0.0;
    for (Index i = 0; i < m.buyer_count(); ++i)
      top = std::max(top, beta(i) * m.values(i, j));
    best += top * m.supplies(j);
  }
  double current = 0.0;
  for (Index i = 0; i < m.buyer_count(); ++i)
    current += beta(i) * m.values.row(i).dot(alloc.row(i));
  return std::max(0.0, best - current);
}

double efficiency(const Market& m, const Allocation& alloc) {
  double denom = 0.0;
  for (Index j = 0; j < m.item_count(); ++j)
    denom += m.supplies(j) * m.values.col(j).maxCoeff();
  const double total = (m.values.array() * alloc.array()).sum();
  return total / denom;
}

MetricsReport compute_metrics(const Market& m, const PriceVector& prices,
                              const Allocation& alloc, bool with_pareto) {
  MetricsReport r;
  const Index n = m.buyer_count();
  r.regret = regret(m, prices, alloc);
  r.envy = envy(m, alloc);
  r.mms_gap = mms_gap(m, alloc);

  r.regret_norm = Vector::Zero(n);
  r.envy_norm = Vector::Zero(n);
  r.mms_frac = Vector::Zero(n);

  const Matrix cross = m.values * alloc.transpose();
  const Vector mms = mms_values(m);
  for (Index i = 0; i < n; ++i) {
    const double opt = demand_value(m, i, prices).value;
    if (opt > 0.0)
      r.regret_norm(i) = r.regret(i) / opt;
    else if (r.regret(i) > 0.0)
      r.undefined_norms.emplace_back("regret_norm", static_cast<int>(i));

    if (r.envy(i) > 0.0) {
      Index envied;
      cross.row(i).maxCoeff(&envied);
      const double envied_value = cross(i, envied);
      if (envied_value > 0.0)
        r.envy_norm(i) = r.envy(i) / envied_value;
      else
        r.undefined_norms.emplace_back("envy_norm", static_cast<int>(i));
    }

    if (mms(i) > 0.0)
      r.mms_frac(i) = cross(i, i) / mms(i);
    else if (cross(i, i) > 0.0)
      r.undefined_norms.emplace_back("mms_frac", static_cast<int>(i));
  }

  const NswValue nv = nsw(m, alloc);
  r.nsw_product = nv.product;
  r.nsw_geomean = nv.geomean;
  r.efficiency = efficiency(m, alloc);
  if (with_pareto && n * m.item_count() <= 10000) r.pareto_gap = pareto_gap(m, alloc);
  return r;
}

}  // namespace fisher
