#pragma once

#include "fisher/abstraction.hpp"
#include "fisher/bounds.hpp"
#include "fisher/lift.hpp"
#include "fisher/metrics.hpp"
#include "fisher/solver.hpp"

#include <optional>
#include <set>

namespace fisher {

struct ParseError : std::runtime_error {
  int row, col;  // 1-based; 0 when not applicable
  ParseError(const std::string& msg, int r, int c)
      : std::runtime_error(msg), row(r), col(c) {}
};
struct NegativeValueAfterShift : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CsvOptions {
  double shift = 0.0;
  std::optional<double> zero_replace;  // applied to entries exactly zero after the shift
  std::optional<double> budget_value;  // default 1 per buyer
  std::optional<double> supply_value;  // default n/m per item
};

// Rectangular numeric CSV, row-major buyers x items; a non-numeric first row
// is treated as a header.
Market load_matrix_csv(const std::string& path, const CsvOptions& opts = {});

// Sparse observation CSV with header "i,j,value" and zero-based indices.
ObservationSet load_observations_csv(const std::string& path, int rows = -1, int cols = -1);

enum class SyntheticKind { block_structured, low_rank_plus_noise };

struct SyntheticParams {
  int n = 100, m = 20;
  int buyer_blocks = 4, item_blocks = 2;  // block_structured
  int rank = 3;                           // low_rank_plus_noise
  double noise = 0.0;
  double lo = 0.5, hi = 1.5;  // block value range / factor scale
};

Market generate_synthetic(SyntheticKind kind, const SyntheticParams& params,
                          unsigned long seed, const CsvOptions& opts = {});

struct ExperimentConfig {
  std::string dataset_id = "synthetic";
  std::string csv_path;  // empty -> synthetic source
  CsvOptions csv;
  SyntheticKind synth_kind = SyntheticKind::block_structured;
  SyntheticParams synth;

  std::vector<int> ranks{0};  // 0 = full rank (no truncation)
  std::vector<double> buyer_coarseness{100.0};  // percent of original buyers
  std::vector<double> item_coarseness;          // empty = items unclustered
  std::vector<LiftKind> lifts{LiftKind::proportional, LiftKind::recursive};

  SolverOptions solver;  // target_gap <= 0 selects 1e-6 * ||B||_1
  unsigned long seed = 0;
  int threads = 1;
  bool with_bounds = true;
  int kmeans_iters = 100;
  int kmeans_restarts = 5;
  std::string outdir = "out";
};

ExperimentConfig parse_config_json(const std::string& text);

struct ReportRow {
  std::string dataset;
  int rank = 0;  // 0 = full
  double buyer_pct = 100.0, item_pct = 100.0;
  std::string lift;    // "baseline", "proportional", "recursive"
  std::string metric;
  std::string stat;    // "mean", "max", "min", "value"
  double value = 0.0;
  std::string denom_desc;
  double denom = 1.0;
  bool ok = true;
  std::string note;
  double wall_ms = 0.0;
  int cell = -1;
};

// One baseline block plus one block per (rank, coarseness) cell and lift.
// Failing cells produce a single row with ok=false; other cells are
// unaffected. Deterministic for a fixed config, regardless of threads.
std::vector<ReportRow> run_grid(const ExperimentConfig& config);

// CSV / JSON / SVG emission; returns the written paths. Byte-deterministic
// for identical rows.
std::vector<std::string> emit_reports(const std::vector<ReportRow>& rows,
                                      const std::string& outdir,
                                      const std::set<std::string>& formats);

double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace fisher
