#pragma once

#include "fisher/abstraction.hpp"
#include "fisher/market.hpp"

#include <random>

namespace fisher::test {

// Two buyers with disjoint single-item interests.
inline Market m_disjoint() {
  Matrix v(2, 2);
  v << 1, 0, 0, 1;
  return Market(v, Vector::Ones(2), Vector::Ones(2));
}

// Two buyers with mirrored preferences over two items.
inline Market m_sym() {
  Matrix v(2, 2);
  v << 2, 1, 1, 2;
  return Market(v, Vector::Ones(2), Vector::Ones(2));
}

// Five buyers, four items; buyer 5 straddles both item groups.
inline Market m_paper5x4(double eps = 0.1) {
  Matrix v(5, 4);
  v << 1.5, 1.5, 0, 0,
       1.5, 1.5, 0, 0,
       0, 0, 1 + eps, 1 - eps,
       0, 0, 1 - eps, 1 + eps,
       1.5, 1.5, 1 + eps, 1 - eps;
  return Market(v, Vector::Ones(5), Vector::Ones(4));
}

// The stated two-representative compression of m_paper5x4: buyers {0,1,4}
// and {2,3} merge, items stay; representative valuations are the stated
// [1.5 1.5 0 0] / [0 0 1.5 1.5] rows (not the cluster means).
inline AbstractionMap paper5x4_abstraction(double eps = 0.1) {
  AbstractionMap map;
  map.buyer_assign = {0, 0, 1, 1, 0};
  map.item_assign = {0, 1, 2, 3};
  map.buyer_clusters = 2;
  map.item_clusters = 4;
  Matrix rep_v(2, 4);
  rep_v << 1.5, 1.5, 0, 0, 0, 0, 1.5, 1.5;
  Vector rep_b(2);
  rep_b << 3, 2;
  map.rep_market = Market(rep_v, rep_b, Vector::Ones(4));
  map.v_hat.resize(5, 4);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j)
      map.v_hat(i, j) = rep_v(map.buyer_assign[static_cast<size_t>(i)], j);
  (void)eps;
  return map;
}

inline Market random_market(int n, int m, unsigned long seed, double lo = 0.1,
                            double hi = 1.0, double budget = 1.0, double supply = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uv(lo, hi);
  Matrix v(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) v(i, j) = uv(rng);
  return Market(v, Vector::Constant(n, budget), Vector::Constant(m, supply));
}

// Supply-feasible random allocation: dirichlet-ish column split.
inline Allocation random_feasible_allocation(const Market& m, unsigned long seed,
                                             bool full = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uv(0.0, 1.0);
  Allocation x(m.buyer_count(), m.item_count());
  for (Index j = 0; j < m.item_count(); ++j) {
    double total = 0.0;
    for (Index i = 0; i < m.buyer_count(); ++i) {
      x(i, j) = uv(rng);
      total += x(i, j);
    }
    const double scale = (full ? 1.0 : uv(rng)) * m.supplies(j) / total;
    for (Index i = 0; i < m.buyer_count(); ++i) x(i, j) *= scale;
  }
  return x;
}

// Random buyer clustering with every cluster nonempty.
inline std::vector<int> random_clustering(int n, int clusters, unsigned long seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> assign(static_cast<size_t>(n));
  for (int c = 0; c < clusters; ++c) assign[static_cast<size_t>(c)] = c;  // nonempty
  std::uniform_int_distribution<int> pick(0, clusters - 1);
  for (int i = clusters; i < n; ++i) assign[static_cast<size_t>(i)] = pick(rng);
  std::shuffle(assign.begin(), assign.end(), rng);
  return assign;
}

}  // namespace fisher::test
