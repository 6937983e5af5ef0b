#include "fisher/market.hpp"

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace fisher;
using namespace fisher::test;

TEST_SUITE("market") {

TEST_CASE("validate accepts a well-formed market") {
  CHECK(validate_market(m_disjoint()).pass);
  CHECK(validate_market(m_sym()).pass);
  CHECK(validate_market(m_paper5x4()).pass);
}

TEST_CASE("validate names the buyer behind a zero valuation row") {
  Matrix v(2, 2);
  v << 1, 0, 0, 0;
  const auto rep = validate_market(Market(v, Vector::Ones(2), Vector::Ones(2)));
  CHECK_FALSE(rep.pass);
  const auto* check = rep.find("nonzero_valuation_rows");
  REQUIRE(check != nullptr);
  CHECK_FALSE(check->pass);
  CHECK(check->detail.find("buyer 1") != std::string::npos);
}

TEST_CASE("validate rejects nonpositive budgets") {
  Matrix v(2, 2);
  v << 1, 0, 0, 1;
  Vector b(2);
  b << 1, 0;
  const auto rep = validate_market(Market(v, b, Vector::Ones(2)));
  CHECK_FALSE(rep.pass);
  CHECK_FALSE(rep.find("budget_positivity")->pass);
}

TEST_CASE("construction rejects mismatched dimensions") {
  Matrix v(2, 2);
  v << 1, 0, 0, 1;
  CHECK_THROWS_AS(Market(v, Vector::Ones(3), Vector::Ones(2)), DimensionMismatch);
  CHECK_THROWS_AS(Market(v, Vector::Ones(2), Vector::Ones(1)), DimensionMismatch);
}

TEST_CASE("utility is the valuation dot product") {
  const Market m = m_disjoint();
  Vector x(2);
  x << 1, 0;
  CHECK(utility(m, 0, x) == doctest::Approx(1.0));
  x << 0, 1;
  CHECK(utility(m, 0, x) == doctest::Approx(0.0));

  const Market ms = m_sym();
  x << 0.5, 0.5;
  CHECK(utility(ms, 0, x) == doctest::Approx(1.5));

  Vector bad(3);
  CHECK_THROWS_AS(utility(m, 0, bad), DimensionMismatch);
}

TEST_CASE("utility is additive in bundles") {
  const Market m = random_market(4, 3, 99);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uv(0.0, 0.5);
  for (int rep = 0; rep < 20; ++rep) {
    Vector a(3), b(3);
    for (int j = 0; j < 3; ++j) {
      a(j) = uv(rng) * m.supplies(j);
      b(j) = (m.supplies(j) - a(j)) * uv(rng);
    }
    const Index i = rep % 4;
    CHECK(utility(m, i, a + b) ==
          doctest::Approx(utility(m, i, a) + utility(m, i, b)));
  }
}

TEST_CASE("demand buys only the valued item in the disjoint market") {
  const Market m = m_disjoint();
  Vector p(2);
  p << 1, 1;
  const auto d = demand_value(m, 0, p);
  CHECK(d.value == doctest::Approx(1.0));
  CHECK(d.bundle(0) == doctest::Approx(1.0));
  CHECK(d.bundle(1) == doctest::Approx(0.0));
}

TEST_CASE("demand follows bang-per-buck order") {
  const Market m = m_sym();
  Vector p(2);
  p << 1, 1;
  const auto d = demand_value(m, 0, p);
  CHECK(d.value == doctest::Approx(2.0));
  CHECK(d.bundle(0) == doctest::Approx(1.0));
}

TEST_CASE("demand under tied rates stays budget feasible") {
  // rates tie (2/2 = 1/1); the budget of 1 buys value 1 no matter the split,
  // and the lower-index tie-break buys item 0 first
  const Market m = m_sym();
  Vector p(2);
  p << 2, 1;
  const auto d = demand_value(m, 0, p);
  CHECK(d.value == doctest::Approx(1.0));
  CHECK(d.bundle(0) == doctest::Approx(0.5));
  CHECK(d.bundle(1) == doctest::Approx(0.0));
  CHECK(p.dot(d.bundle) <= m.budgets(0) + 1e-12);
  CHECK(d.value == doctest::Approx(demand_two_item_oracle(m, 0, p)).epsilon(1e-4));
}

TEST_CASE("free valued items are taken at full supply") {
  Matrix v(1, 2);
  v << 1, 1;
  const Market m(v, Vector::Ones(1), Vector::Constant(2, 3.0));
  Vector p(2);
  p << 0, 1;
  const auto d = demand_value(m, 0, p);
  CHECK(d.bundle(0) == doctest::Approx(3.0));
  CHECK(d.value == doctest::Approx(4.0));
}

TEST_CASE("demand matches grid enumeration on random instances") {
  for (unsigned long seed = 0; seed < 12; ++seed) {
    const Market m = random_market(3, 3, 400 + seed, 0.05, 1.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> up(0.2, 2.0);
    Vector p(3);
    for (int j = 0; j < 3; ++j) p(j) = up(rng);
    const Index buyer = static_cast<Index>(seed % 3);
    const auto d = demand_value(m, buyer, p);
    const double ref = demand_grid_oracle(m, buyer, p, 60);
    CHECK(d.value >= ref - 1e-9);              // never below the grid
    CHECK(d.value <= ref + 0.05 * ref + 0.05);  // grid resolution slack
    CHECK(p.dot(d.bundle) <= m.budgets(buyer) + 1e-9);
    for (int j = 0; j < 3; ++j) CHECK(d.bundle(j) <= m.supplies(j) + 1e-12);
  }
}

TEST_CASE("demand dominates random feasible bundles") {
  const Market m = random_market(4, 4, 31);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> up(0.1, 2.0);
  Vector p(4);
  for (int j = 0; j < 4; ++j) p(j) = up(rng);
  for (Index i = 0; i < 4; ++i) {
    const auto d = demand_value(m, i, p);
    std::uniform_real_distribution<double> uu(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
      Vector x(4);
      for (int j = 0; j < 4; ++j) x(j) = uu(rng) * m.supplies(j);
      const double cost = p.dot(x);
      if (cost > m.budgets(i)) x *= m.budgets(i) / cost;
      CHECK(d.value >= utility(m, i, x) - 1e-9);
    }
  }
}

TEST_CASE("verify accepts the disjoint equilibrium") {
  const Market m = m_disjoint();
  EquilibriumSolution sol;
  sol.prices = Vector::Ones(2);
  sol.allocation = Matrix::Identity(2, 2);
  CHECK(verify_equilibrium(m, sol, 1e-9).pass);
}

TEST_CASE("verify accepts the symmetric equilibrium") {
  const Market m = m_sym();
  EquilibriumSolution sol;
  sol.prices = Vector::Ones(2);
  sol.allocation = Matrix::Identity(2, 2);
  const auto rep = verify_equilibrium(m, sol, 1e-9);
  CHECK(rep.pass);
  // cross-check via demand: each buyer's bundle attains their demand value
  for (Index i = 0; i < 2; ++i) {
    const auto d = demand_value(m, i, sol.prices);
    CHECK(utility(m, i, sol.allocation.row(i)) == doctest::Approx(d.value));
  }
}

TEST_CASE("verify flags a bundle violating demand optimality") {
  const Market m = m_disjoint();
  EquilibriumSolution sol;
  sol.prices = Vector::Ones(2);
  sol.allocation = Matrix::Constant(2, 2, 0.5);
  const auto rep = verify_equilibrium(m, sol, 1e-7);
  CHECK_FALSE(rep.pass);
  CHECK_FALSE(rep.find("bang_per_buck")->pass);
}

}  // TEST_SUITE
