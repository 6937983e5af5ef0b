#include "fisher/lift.hpp"

#include "fisher/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace fisher {

PriceVector lift_prices(const PriceVector& rep_prices, const std::vector<int>& item_assign) {
  PriceVector out(static_cast<Index>(item_assign.size()));
  for (size_t j = 0; j < item_assign.size(); ++j) {
    if (item_assign[j] < 0 || item_assign[j] >= rep_prices.size())
      throw DimensionMismatch("lift_prices: item cluster id out of range");
    out(static_cast<Index>(j)) = rep_prices(item_assign[j]);
  }
  return out;
}

namespace {

// Step 1 of the lift: representative holdings spread over original items by
// supply share. Row index = representative buyer.
Matrix supply_weighted_shares(const EquilibriumSolution& rep_sol, const Market& m,
                              const AbstractionMap& map) {
  const Index mm = m.item_count();
  Matrix xprime(map.buyer_clusters, mm);
  for (Index j = 0; j < mm; ++j) {
    const int rj = map.item_assign[static_cast<size_t>(j)];
    const double share = m.supplies(j) / map.rep_market.supplies(rj);
    for (int bi = 0; bi < map.buyer_clusters; ++bi)
      xprime(bi, j) = share * rep_sol.allocation(bi, rj);
  }
  return xprime;
}

}  // namespace

LiftedSolution proportional_lift(const EquilibriumSolution& rep_sol, const Market& m,
                                 const AbstractionMap& map) {
  const Index n = m.buyer_count();
  const Matrix xprime = supply_weighted_shares(rep_sol, m, map);

  LiftedSolution out;
  out.kind = LiftKind::proportional;
  out.prices = lift_prices(rep_sol.prices, map.item_assign);
  out.allocation.resize(n, m.item_count());
  for (Index i = 0; i < n; ++i) {
    const int ri = map.buyer_assign[static_cast<size_t>(i)];
    const double share = m.budgets(i) / map.rep_market.budgets(ri);
    out.allocation.row(i) = share * xprime.row(ri);
  }
  return out;
}

LiftedSolution recursive_lift(const EquilibriumSolution& rep_sol, const Market& m,
                              const AbstractionMap& map, const SolverOptions& solver_opts,
                              int threads) {
  const Index n = m.buyer_count();
  const Index mm = m.item_count();
  const Matrix xprime = supply_weighted_shares(rep_sol, m, map);

  LiftedSolution out = proportional_lift(rep_sol, m, map);  // fallback baseline
  out.kind = LiftKind::recursive;
  out.sub_diagnostics.resize(static_cast<size_t>(map.buyer_clusters));

  std::vector<std::vector<Index>> members(static_cast<size_t>(map.buyer_clusters));
  for (Index i = 0; i < n; ++i)
    members[static_cast<size_t>(map.buyer_assign[static_cast<size_t>(i)])].push_back(i);

  std::vector<int> fell_back_flags(static_cast<size_t>(map.buyer_clusters), 0);
  Matrix result = out.allocation;

  parallel_for(map.buyer_clusters, threads, [&](int ri) {
    const auto& cluster = members[static_cast<size_t>(ri)];
    if (cluster.size() <= 1) {
      if (cluster.size() == 1) {
        // sole member takes the representative's whole share
        result.row(cluster[0]) = xprime.row(ri);
      }
      return;
    }

    // items actually assigned to this representative
    std::vector<Index> items;
    for (Index j = 0; j < mm; ++j)
      if (xprime(ri, j) > 1e-12) items.push_back(j);
    if (items.empty()) return;

    // members with no value over those items keep proportional shares and
    // retain them; the sub-market splits only the remaining supply
    std::vector<Index> active;
    for (Index i : cluster) {
      double vmax = 0.0;
      for (Index j : items) vmax = std::max(vmax, m.values(i, j));
      if (vmax > 0.0) active.push_back(i);
    }
    if (active.size() <= 1) {
      if (active.size() == 1) {
        // single valuing buyer takes everything beyond the others' shares
        const Index w = active[0];
        double inactive_budget = 0.0;
        for (Index i : cluster)
          if (i != w) inactive_budget += m.budgets(i);
        const double keep =
            1.0 - inactive_budget / map.rep_market.budgets(ri);
        for (Index j : items) result(w, j) = keep * xprime(ri, j);
      }
      return;
    }

    double active_budget = 0.0;
    for (Index i : active) active_budget += m.budgets(i);
    const double active_share = active_budget / map.rep_market.budgets(ri);

    Matrix sub_values(static_cast<Index>(active.size()), static_cast<Index>(items.size()));
    Vector sub_budgets(static_cast<Index>(active.size()));
    Vector sub_supplies(static_cast<Index>(items.size()));
    for (size_t a = 0; a < active.size(); ++a) {
      sub_budgets(static_cast<Index>(a)) = m.budgets(active[a]);
      for (size_t b = 0; b < items.size(); ++b)
        sub_values(static_cast<Index>(a), static_cast<Index>(b)) =
            m.values(active[a], items[b]);
    }
    for (size_t b = 0; b < items.size(); ++b)
      sub_supplies(static_cast<Index>(b)) = active_share * xprime(ri, items[b]);

    SolverOptions sub_opts = solver_opts;
    sub_opts.target_gap =
        solver_opts.target_gap * map.rep_market.budgets(ri) / m.budget_total();

    EquilibriumSolution sub;
    try {
      sub = solve_eg_pd(Market(std::move(sub_values), std::move(sub_budgets),
                               std::move(sub_supplies)),
                        sub_opts);
    } catch (const std::exception&) {
      fell_back_flags[static_cast<size_t>(ri)] = 1;
      return;
    }
    out.sub_diagnostics[static_cast<size_t>(ri)] = sub.diagnostics;
    if (!sub.diagnostics.converged) {
      fell_back_flags[static_cast<size_t>(ri)] = 1;
      return;
    }

    for (size_t a = 0; a < active.size(); ++a)
      for (size_t b = 0; b < items.size(); ++b)
        result(active[a], items[b]) =
            sub.allocation(static_cast<Index>(a), static_cast<Index>(b));
  });

  for (int ri = 0; ri < map.buyer_clusters; ++ri)
    if (fell_back_flags[static_cast<size_t>(ri)]) out.fell_back.push_back(ri);
  out.allocation = std::move(result);
  return out;
}

}  // namespace fisher
