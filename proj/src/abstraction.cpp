#include "fisher/abstraction.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace fisher {

Matrix LowRankFactors::reconstruct(bool clamp_nonneg) const {
  Matrix v = buyer_vecs * item_vecs.transpose();
  if (has_bias()) {
    v.colwise() += buyer_bias;
    v.rowwise() += item_bias.transpose();
  }
  if (clamp_nonneg) v = v.cwiseMax(0.0);
  return v;
}

LowRankFactors svd_low_rank(const Matrix& v, int k) {
  const Index n = v.rows(), m = v.cols();
  if (k < 1 || k > std::min(n, m))
    throw std::invalid_argument("svd_low_rank: rank out of range");

  // orthogonal iteration on the smaller Gram matrix
  const bool use_cols = m <= n;
  const Matrix gram = use_cols ? Matrix(v.transpose() * v) : Matrix(v * v.transpose());
  const Index dim = gram.rows();

  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix q(dim, k);
  for (Index i = 0; i < dim; ++i)
    for (int j = 0; j < k; ++j) q(i, j) = gauss(rng);
  q = Eigen::HouseholderQR<Matrix>(q).householderQ() * Matrix::Identity(dim, k);

  double ritz_prev = -1.0;
  for (int it = 0; it < 500; ++it) {
    Matrix z = gram * q;
    const double ritz = (q.transpose() * z).trace();
    q = Eigen::HouseholderQR<Matrix>(z).householderQ() * Matrix::Identity(dim, k);
    if (it > 2 && std::abs(ritz - ritz_prev) <= 1e-14 * std::max(1.0, std::abs(ritz)))
      break;
    ritz_prev = ritz;
  }

  // Rayleigh-Ritz through the thin factor to recover both sides
  const Matrix b = use_cols ? Matrix(v * q) : Matrix(v.transpose() * q);  // (., k)
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sing = svd.singularValues();
  const Vector scale = sing.array().sqrt();

  LowRankFactors f;
  f.rank = k;
  if (use_cols) {
    f.buyer_vecs = svd.matrixU() * scale.asDiagonal();
    f.item_vecs = (q * svd.matrixV()) * scale.asDiagonal();
  } else {
    f.item_vecs = svd.matrixU() * scale.asDiagonal();
    f.buyer_vecs = (q * svd.matrixV()) * scale.asDiagonal();
  }
  return f;
}

ObservationSet::ObservationSet(std::vector<Entry> list, int n_rows, int n_cols)
    : entries(std::move(list)), rows(n_rows), cols(n_cols) {
  std::set<std::pair<int, int>> seen;
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols)
      throw std::invalid_argument("observation index out of range");
    if (!seen.emplace(e.row, e.col).second)
      throw std::invalid_argument("duplicate observation at (" +
                                  std::to_string(e.row) + "," + std::to_string(e.col) + ")");
  }
}

namespace {

// Ridge solve for one side of the ALS sweep. Rows of `other` indexed by the
// observations; offsets hold the fixed contribution (biases of the far side).
Vector ridge_solve(const std::vector<std::pair<int, double>>& obs, const Matrix& other,
                   double reg, int d) {
  Matrix a = reg * Matrix::Identity(d, d);
  Vector b = Vector::Zero(d);
  for (const auto& [idx, val] : obs) {
    a.noalias() += other.row(idx).transpose() * other.row(idx);
    b.noalias() += val * other.row(idx).transpose();
  }
  return a.ldlt().solve(b);
}

}  // namespace

CompletionResult matrix_complete(const ObservationSet& obs, int d, double reg,
                                 int iters, unsigned long seed, bool with_bias) {
  if (d < 1) throw std::invalid_argument("matrix_complete: rank must be positive");
  const int n = obs.rows, m = obs.cols;

  std::vector<std::vector<std::pair<int, double>>> by_row(n), by_col(m);
  for (const auto& e : obs.entries) {
    by_row[e.row].emplace_back(e.col, e.value);
    by_col[e.col].emplace_back(e.row, e.value);
  }

  CompletionResult out;
  for (int i = 0; i < n; ++i)
    if (by_row[i].empty()) out.cold_rows.push_back(i);
  for (int j = 0; j < m; ++j)
    if (by_col[j].empty()) out.cold_cols.push_back(j);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double init_scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix a(n, d), b(m, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) a(i, k) = gauss(rng) * init_scale;
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < d; ++k) b(j, k) = gauss(rng) * init_scale;
  // Warm start from the density-rescaled zero fill; random restarts from the
  // seed are only a fallback for oversized inputs. This keeps ALS out of the
  // bad basins a cold random start occasionally lands in.
  if (!obs.entries.empty() && static_cast<long>(n) * m <= 4000000 &&
      d <= std::min(n, m)) {
    Matrix fill = Matrix::Zero(n, m);
    const double scale =
        static_cast<double>(n) * m / static_cast<double>(obs.entries.size());
    for (const auto& e : obs.entries) fill(e.row, e.col) = e.value * scale;
    const LowRankFactors warm = svd_low_rank(fill, d);
    a = warm.buyer_vecs;
    b = warm.item_vecs;
  }
  Vector bias_a = Vector::Zero(n), bias_b = Vector::Zero(m);

  // reg=0 on exactly-determined systems still needs an invertible normal
  // matrix; nudge it
  const double eff_reg = std::max(reg, 1e-12);

  for (int sweep = 0; sweep < iters; ++sweep) {
    for (int i = 0; i < n; ++i) {
      if (by_row[i].empty()) continue;
      std::vector<std::pair<int, double>> rows = by_row[i];
      if (with_bias)
        for (auto& [j, val] : rows) val -= bias_a(i) + bias_b(j);
      a.row(i) = ridge_solve(rows, b, eff_reg, d).transpose();
      if (with_bias) {
        double resid = 0.0;
        for (const auto& [j, val] : by_row[i])
          resid += val - a.row(i).dot(b.row(j)) - bias_b(j);
        bias_a(i) = resid / (static_cast<double>(by_row[i].size()) + eff_reg);
      }
    }
    for (int j = 0; j < m; ++j) {
      if (by_col[j].empty()) continue;
      std::vector<std::pair<int, double>> cols = by_col[j];
      if (with_bias)
        for (auto& [i, val] : cols) val -= bias_a(i) + bias_b(j);
      b.row(j) = ridge_solve(cols, a, eff_reg, d).transpose();
      if (with_bias) {
        double resid = 0.0;
        for (const auto& [i, val] : by_col[j])
          resid += val - a.row(i).dot(b.row(j)) - bias_a(i);
        bias_b(j) = resid / (static_cast<double>(by_col[j].size()) + eff_reg);
      }
    }
  }

  for (int i : out.cold_rows) a.row(i).setZero();
  for (int j : out.cold_cols) b.row(j).setZero();

  double sq = 0.0;
  for (const auto& e : obs.entries) {
    double pred = a.row(e.row).dot(b.row(e.col));
    if (with_bias) pred += bias_a(e.row) + bias_b(e.col);
    sq += (e.value - pred) * (e.value - pred);
  }
  out.train_rmse = obs.entries.empty()
                       ? 0.0
                       : std::sqrt(sq / static_cast<double>(obs.entries.size()));
  out.factors.buyer_vecs = std::move(a);
  out.factors.item_vecs = std::move(b);
  out.factors.rank = d;
  if (with_bias) {
    out.factors.buyer_bias = std::move(bias_a);
    out.factors.item_bias = std::move(bias_b);
  }
  return out;
}

namespace {

double squared_distance(const Matrix& pts, Index p, const Matrix& centroids, Index c) {
  return (pts.row(p) - centroids.row(c)).squaredNorm();
}

KMeansResult kmeans_single(const Matrix& points, int k, int iters, unsigned long seed) {
  const Index r = points.rows();
  std::mt19937_64 rng(seed);

  // k-means++ seeding
  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<Index> pick(0, r - 1);
  centroids.row(0) = points.row(pick(rng));
  Vector d2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> ur(0.0, total);
      double target = ur(rng), acc = 0.0;
      for (Index i = 0; i < r; ++i) {
        acc += d2(i);
        if (acc >= target) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);  // all points coincide with chosen centroids
    }
    centroids.row(c) = points.row(chosen);
    d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<size_t>(r), 0);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (Index i = 0; i < r; ++i) {
      int best = 0;
      double bd = squared_distance(points, i, centroids, 0);
      for (int c = 1; c < k; ++c) {
        const double dd = squared_distance(points, i, centroids, c);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      if (assign[static_cast<size_t>(i)] != best) {
        assign[static_cast<size_t>(i)] = best;
        changed = true;
      }
    }

    std::vector<int> counts(static_cast<size_t>(k), 0);
    Matrix sums = Matrix::Zero(k, points.cols());
    for (Index i = 0; i < r; ++i) {
      sums.row(assign[static_cast<size_t>(i)]) += points.row(i);
      ++counts[static_cast<size_t>(assign[static_cast<size_t>(i)])];
    }

    // empty clusters poach the farthest point of the largest cluster
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) continue;
      int largest = static_cast<int>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      Index far = -1;
      double fd = -1.0;
      for (Index i = 0; i < r; ++i) {
        if (assign[static_cast<size_t>(i)] != largest) continue;
        const double dd = squared_distance(points, i, centroids, largest);
        if (dd > fd) {
          fd = dd;
          far = i;
        }
      }
      sums.row(largest) -= points.row(far);
      --counts[static_cast<size_t>(largest)];
      assign[static_cast<size_t>(far)] = c;
      sums.row(c) = points.row(far);
      counts[static_cast<size_t>(c)] = 1;
      changed = true;
    }

    for (int c = 0; c < k; ++c)
      centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<size_t>(c)]);
    if (!changed && it > 0) break;
  }

  KMeansResult res;
  res.assign = std::move(assign);
  res.centroids = std::move(centroids);
  res.distortion = 0.0;
  for (Index i = 0; i < r; ++i)
    res.distortion += squared_distance(points, i, res.centroids,
                                       res.assign[static_cast<size_t>(i)]);
  return res;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, int iters, unsigned long seed,
                    int restarts) {
  const Index r = points.rows();
  if (k < 1 || k > r) throw std::invalid_argument("kmeans: k out of range");

  KMeansResult best;
  for (int attempt = 0; attempt < std::max(1, restarts); ++attempt) {
    KMeansResult cur =
        kmeans_single(points, k, iters, seed + 0x9e3779b97f4a7c15ULL * attempt);
    if (attempt == 0 || cur.distortion < best.distortion) best = std::move(cur);
  }
  return best;
}

std::vector<int> identity_assignment(int count) {
  std::vector<int> out(static_cast<size_t>(count));
  std::iota(out.begin(), out.end(), 0);
  return out;
}

AbstractionMap build_representative_market(const Market& m,
                                           std::vector<int> buyer_assign,
                                           std::vector<int> item_assign,
                                           RepValuationMode mode,
                                           const LowRankFactors* factors) {
  const Index n = m.buyer_count(), mm = m.item_count();
  if (static_cast<Index>(buyer_assign.size()) != n ||
      static_cast<Index>(item_assign.size()) != mm)
    throw DimensionMismatch("build_representative_market: assignment length");

  const int nb = buyer_assign.empty()
                     ? 0
                     : *std::max_element(buyer_assign.begin(), buyer_assign.end()) + 1;
  const int ni = item_assign.empty()
                     ? 0
                     : *std::max_element(item_assign.begin(), item_assign.end()) + 1;

  std::vector<int> bcount(static_cast<size_t>(nb), 0), icount(static_cast<size_t>(ni), 0);
  for (int c : buyer_assign) {
    if (c < 0) throw EmptyCluster("negative buyer cluster id");
    ++bcount[static_cast<size_t>(c)];
  }
  for (int c : item_assign) {
    if (c < 0) throw EmptyCluster("negative item cluster id");
    ++icount[static_cast<size_t>(c)];
  }
  for (int c = 0; c < nb; ++c)
    if (bcount[static_cast<size_t>(c)] == 0)
      throw EmptyCluster("buyer cluster " + std::to_string(c) + " is empty");
  for (int c = 0; c < ni; ++c)
    if (icount[static_cast<size_t>(c)] == 0)
      throw EmptyCluster("item cluster " + std::to_string(c) + " is empty");

  AbstractionMap map;
  map.buyer_clusters = nb;
  map.item_clusters = ni;

  Vector rep_budget = Vector::Zero(nb), rep_supply = Vector::Zero(ni);
  for (Index i = 0; i < n; ++i) rep_budget(buyer_assign[static_cast<size_t>(i)]) += m.budgets(i);
  for (Index j = 0; j < mm; ++j) rep_supply(item_assign[static_cast<size_t>(j)]) += m.supplies(j);

  Matrix rep_values = Matrix::Zero(nb, ni);
  if (mode == RepValuationMode::cluster_mean) {
    Matrix counts = Matrix::Zero(nb, ni);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < mm; ++j) {
        rep_values(buyer_assign[static_cast<size_t>(i)], item_assign[static_cast<size_t>(j)]) +=
            m.values(i, j);
        counts(buyer_assign[static_cast<size_t>(i)], item_assign[static_cast<size_t>(j)]) += 1.0;
      }
    }
    rep_values.array() /= counts.array();
  } else {
    if (factors == nullptr)
      throw std::invalid_argument("factor_dot mode requires factors");
    const int d = factors->rank;
    Matrix bc = Matrix::Zero(nb, d), ic = Matrix::Zero(ni, d);
    Vector bb = Vector::Zero(nb), ib = Vector::Zero(ni);
    for (Index i = 0; i < n; ++i) {
      bc.row(buyer_assign[static_cast<size_t>(i)]) += factors->buyer_vecs.row(i);
      if (factors->has_bias()) bb(buyer_assign[static_cast<size_t>(i)]) += factors->buyer_bias(i);
    }
    for (Index j = 0; j < mm; ++j) {
      ic.row(item_assign[static_cast<size_t>(j)]) += factors->item_vecs.row(j);
      if (factors->has_bias()) ib(item_assign[static_cast<size_t>(j)]) += factors->item_bias(j);
    }
    for (int c = 0; c < nb; ++c) {
      bc.row(c) /= static_cast<double>(bcount[static_cast<size_t>(c)]);
      bb(c) /= static_cast<double>(bcount[static_cast<size_t>(c)]);
    }
    for (int c = 0; c < ni; ++c) {
      ic.row(c) /= static_cast<double>(icount[static_cast<size_t>(c)]);
      ib(c) /= static_cast<double>(icount[static_cast<size_t>(c)]);
    }
    rep_values = bc * ic.transpose();
    if (factors->has_bias()) {
      rep_values.colwise() += bb;
      rep_values.rowwise() += ib.transpose();
    }
    for (Index a = 0; a < rep_values.rows(); ++a) {
      for (Index b = 0; b < rep_values.cols(); ++b) {
        if (rep_values(a, b) < 0.0) {
          rep_values(a, b) = 0.0;
          ++map.clamped_negative;
        }
      }
    }
  }

  map.v_hat.resize(n, mm);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < mm; ++j)
      map.v_hat(i, j) = rep_values(buyer_assign[static_cast<size_t>(i)],
                                   item_assign[static_cast<size_t>(j)]);

  map.rep_market = Market(std::move(rep_values), std::move(rep_budget), std::move(rep_supply));
  map.buyer_assign = std::move(buyer_assign);
  map.item_assign = std::move(item_assign);
  return map;
}

Matrix delta_v(const Market& m, const Matrix& v_hat) {
  if (v_hat.rows() != m.buyer_count() || v_hat.cols() != m.item_count())
    throw DimensionMismatch("delta_v: shape mismatch");
  return m.values - v_hat;
}

}  // namespace fisher
