#include "fisher/market.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fisher {

Market::Market(Matrix v, Vector b, Vector s)
    : values(std::move(v)), budgets(std::move(b)), supplies(std::move(s)) {
  if (budgets.size() != values.rows() || supplies.size() != values.cols()) {
    throw DimensionMismatch("market: V is " + std::to_string(values.rows()) + "x" +
                            std::to_string(values.cols()) + " but |B|=" +
                            std::to_string(budgets.size()) + ", |s|=" +
                            std::to_string(supplies.size()));
  }
}

Vector Market::price_cap() const {
  return budget_total() / supplies.array();
}

const ValidationCheck* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << c.name << "=" << c.residual << (c.pass ? " ok" : " FAIL");
    if (!c.detail.empty()) os << " (" << c.detail << ")";
    os << "; ";
  }
  return os.str();
}

ValidationReport validate_market(const Market& m) {
  ValidationReport rep;
  rep.tol = 0.0;

  ValidationCheck nonneg{"value_nonnegativity", 0.0, true, ""};
  ValidationCheck rows{"nonzero_valuation_rows", 0.0, true, ""};
  ValidationCheck budget{"budget_positivity", 0.0, true, ""};
  ValidationCheck supply{"supply_positivity", 0.0, true, ""};

  for (Index i = 0; i < m.buyer_count(); ++i) {
    double row_max = 0.0;
    for (Index j = 0; j < m.item_count(); ++j) {
      const double v = m.values(i, j);
      if (v < 0.0) {
        nonneg.residual = std::max(nonneg.residual, -v);
        nonneg.pass = false;
        if (nonneg.detail.empty())
          nonneg.detail = "v(" + std::to_string(i) + "," + std::to_string(j) + ") < 0";
      }
      row_max = std::max(row_max, v);
    }
    if (row_max <= 0.0) {
      rows.pass = false;
      rows.residual = 1.0;
      if (rows.detail.empty()) rows.detail = "buyer " + std::to_string(i) + " values nothing";
    }
  }
  for (Index i = 0; i < m.buyer_count(); ++i) {
    if (!(m.budgets(i) > 0.0)) {
      budget.pass = false;
      budget.residual = std::max(budget.residual, -m.budgets(i) + 0.0);
      if (budget.detail.empty()) budget.detail = "buyer " + std::to_string(i);
    }
  }
  for (Index j = 0; j < m.item_count(); ++j) {
    if (!(m.supplies(j) > 0.0)) {
      supply.pass = false;
      supply.residual = std::max(supply.residual, -m.supplies(j) + 0.0);
      if (supply.detail.empty()) supply.detail = "item " + std::to_string(j);
    }
  }

  rep.checks = {nonneg, rows, budget, supply};
  rep.pass = nonneg.pass && rows.pass && budget.pass && supply.pass;
  return rep;
}

double utility(const Market& m, Index buyer, const Vector& bundle) {
  if (buyer < 0 || buyer >= m.buyer_count())
    throw DimensionMismatch("utility: buyer index out of range");
  if (bundle.size() != m.item_count())
    throw DimensionMismatch("utility: bundle length != item count");
  return m.values.row(buyer).dot(bundle);
}

Demand demand_value(const Market& m, Index buyer, const PriceVector& prices) {
  if (buyer < 0 || buyer >= m.buyer_count())
    throw DimensionMismatch("demand_value: buyer index out of range");
  if (prices.size() != m.item_count())
    throw DimensionMismatch("demand_value: price length != item count");
  if ((prices.array() < 0.0).any())
    throw std::invalid_argument("demand_value: negative price");

  const Index mm = m.item_count();
  Demand d;
  d.bundle = Vector::Zero(mm);

  // Free items with positive value go in full.
  for (Index j = 0; j < mm; ++j) {
    if (prices(j) <= 0.0 && m.values(buyer, j) > 0.0) {
      d.bundle(j) = m.supplies(j);
      d.value += m.values(buyer, j) * m.supplies(j);
    }
  }

  std::vector<Index> order;
  order.reserve(static_cast<size_t>(mm));
  for (Index j = 0; j < mm; ++j) {
    if (prices(j) > 0.0 && m.values(buyer, j) > 0.0) order.push_back(j);
  }
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ra = m.values(buyer, a) / prices(a);
    const double rb = m.values(buyer, b) / prices(b);
    if (ra != rb) return ra > rb;
    return a < b;
  });

  double remaining = m.budgets(buyer);
  for (Index j : order) {
    if (remaining <= 0.0) break;
    const double amount = std::min(m.supplies(j), remaining / prices(j));
    d.bundle(j) += amount;
    d.value += m.values(buyer, j) * amount;
    remaining -= amount * prices(j);
  }
  return d;
}

ValidationReport verify_equilibrium(const Market& m, const EquilibriumSolution& sol,
                                    double tol) {
  ValidationReport rep;
  rep.tol = tol;
  const Index n = m.buyer_count();
  const Index mm = m.item_count();
  if (sol.allocation.rows() != n || sol.allocation.cols() != mm ||
      sol.prices.size() != mm) {
    throw DimensionMismatch("verify_equilibrium: solution does not match market");
  }

  ValidationCheck nonneg{"allocation_nonnegativity", 0.0, true, ""};
  nonneg.residual = std::max(0.0, -sol.allocation.minCoeff());
  nonneg.pass = nonneg.residual <= tol;

  ValidationCheck clearing{"market_clearing", 0.0, true, ""};
  const Vector colsum = sol.allocation.colwise().sum();
  for (Index j = 0; j < mm; ++j) {
    const double r = std::abs(colsum(j) - m.supplies(j));
    if (r > clearing.residual) {
      clearing.residual = r;
      clearing.detail = "item " + std::to_string(j);
    }
  }
  clearing.pass = clearing.residual <= tol;

  ValidationCheck budget{"budget_exhaustion", 0.0, true, ""};
  for (Index i = 0; i < n; ++i) {
    const double spend = sol.prices.dot(sol.allocation.row(i));
    const double r = std::abs(spend - m.budgets(i));
    if (r > budget.residual) {
      budget.residual = r;
      budget.detail = "buyer " + std::to_string(i);
    }
  }
  budget.pass = budget.residual <= tol;

  // Purchased items must attain the buyer's best bang-per-buck (relative
  // shortfall). Items priced at ~0 but positively valued must be held at
  // full supply.
  ValidationCheck bpb{"bang_per_buck", 0.0, true, ""};
  const double p_tiny = 1e-12 * std::max(1.0, sol.prices.maxCoeff());
  for (Index i = 0; i < n; ++i) {
    double best = 0.0;
    for (Index j = 0; j < mm; ++j) {
      if (sol.prices(j) > p_tiny) best = std::max(best, m.values(i, j) / sol.prices(j));
    }
    for (Index j = 0; j < mm; ++j) {
      double short_fall = 0.0;
      if (sol.prices(j) <= p_tiny) {
        if (m.values(i, j) > tol && sol.allocation(i, j) < m.supplies(j) - tol)
          short_fall = 1.0;  // freely available value left on the table
      } else if (sol.allocation(i, j) > tol && best > 0.0) {
        short_fall = (best - m.values(i, j) / sol.prices(j)) / best;
      }
      if (short_fall > bpb.residual) {
        bpb.residual = short_fall;
        bpb.detail = "buyer " + std::to_string(i) + ", item " + std::to_string(j);
      }
    }
  }
  bpb.pass = bpb.residual <= tol;

  rep.checks = {nonneg, clearing, budget, bpb};
  rep.pass = nonneg.pass && clearing.pass && budget.pass && bpb.pass;
  return rep;
}

}  // namespace fisher
