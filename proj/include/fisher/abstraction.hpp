#pragma once

#include "fisher/market.hpp"

#include <optional>

namespace fisher {

struct LowRankFactors {
  Matrix buyer_vecs;  // n x d
  Matrix item_vecs;   // m x d
  Vector buyer_bias;  // empty unless fitted with biases
  Vector item_bias;
  int rank = 0;

  bool has_bias() const { return buyer_bias.size() > 0; }
  // v_hat = buyer_vecs * item_vecs' (+ biases); optionally clamped at zero
  // for use as market valuations.
  Matrix reconstruct(bool clamp_nonneg = false) const;
};

// Best rank-k approximation in Frobenius norm via orthogonal iteration on
// the smaller Gram matrix (deterministic internal seed).
LowRankFactors svd_low_rank(const Matrix& v, int k);

struct ObservationSet {
  struct Entry {
    int row, col;
    double value;
  };
  std::vector<Entry> entries;
  int rows = 0, cols = 0;

  ObservationSet() = default;
  ObservationSet(std::vector<Entry> list, int n_rows, int n_cols);  // validates
};

struct CompletionResult {
  LowRankFactors factors;
  double train_rmse = 0.0;
  std::vector<int> cold_rows;  // zero-observation rows; factors zeroed
  std::vector<int> cold_cols;
};

// Alternating least squares with ridge weight `reg` on the factors;
// deterministic given seed.
CompletionResult matrix_complete(const ObservationSet& obs, int d, double reg,
                                 int iters, unsigned long seed,
                                 bool with_bias = false);

struct KMeansResult {
  std::vector<int> assign;
  Matrix centroids;  // k x d
  double distortion = 0.0;
};

// k-means++ seeding followed by Lloyd iterations, best of `restarts`
// seeded runs; empty clusters are repaired by splitting the largest one.
KMeansResult kmeans(const Matrix& points, int k, int iters = 100,
                    unsigned long seed = 0, int restarts = 5);

enum class RepValuationMode { cluster_mean, factor_dot };

struct AbstractionMap {
  std::vector<int> buyer_assign;  // length n, ids in [0, nb)
  std::vector<int> item_assign;   // length m, ids in [0, ni)
  int buyer_clusters = 0;
  int item_clusters = 0;
  Market rep_market;  // summed budgets/supplies, representative valuations
  Matrix v_hat;       // induced n x m approximation
  int clamped_negative = 0;  // factor_dot reconstructions clamped at zero
};

struct EmptyCluster : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Representative market per the cluster assignments. cluster_mean averages
// the value block; factor_dot uses centroid dot products of the given
// factors. v_hat replicates the representative valuation over each block.
AbstractionMap build_representative_market(const Market& m,
                                           std::vector<int> buyer_assign,
                                           std::vector<int> item_assign,
                                           RepValuationMode mode,
                                           const LowRankFactors* factors = nullptr);

// V - v_hat (elementwise).
Matrix delta_v(const Market& m, const Matrix& v_hat);

std::vector<int> identity_assignment(int count);

}  // namespace fisher
