// Command-line front end: solve markets, build abstractions, run experiment
// grids, and certify abstraction-error bounds.
#include "fisher/experiments.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

using namespace fisher;
namespace fs = std::filesystem;

namespace {

struct SourceArgs {
  std::string input;
  std::string kind = "block";
  int n = 40, m = 10, buyer_blocks = 4, item_blocks = 2, rank = 3;
  double noise = 0.0, lo = 0.5, hi = 1.5;
  CsvOptions csv;

  void attach(CLI::App* cmd) {
    cmd->add_option("--input", input, "valuation matrix CSV (buyers x items)");
    cmd->add_option("--kind", kind, "synthetic kind: block or lowrank")
        ->check(CLI::IsMember({"block", "lowrank"}));
    cmd->add_option("--n", n, "synthetic buyer count");
    cmd->add_option("--m", m, "synthetic item count");
    cmd->add_option("--buyer-blocks", buyer_blocks);
    cmd->add_option("--item-blocks", item_blocks);
    cmd->add_option("--rank", rank, "synthetic latent rank");
    cmd->add_option("--noise", noise);
    cmd->add_option("--lo", lo);
    cmd->add_option("--hi", hi);
    cmd->add_option("--shift", csv.shift, "added to every CSV entry");
    double zr = 0.0;
    auto* z = cmd->add_option("--zero-replace", zr,
                              "replaces entries that are exactly zero after the shift");
    cmd->callback([this, z, &zr]() {
      if (z->count()) csv.zero_replace = zr;
    });
    double budget = 0.0, supply = 0.0;
    auto* b = cmd->add_option("--budget", budget, "uniform budget override");
    auto* s = cmd->add_option("--supply", supply, "uniform supply override");
    cmd->final_callback([this, b, s, &budget, &supply]() {
      if (b->count()) csv.budget_value = budget;
      if (s->count()) csv.supply_value = supply;
    });
  }

  Market load(unsigned long seed) const {
    if (!input.empty()) return load_matrix_csv(input, csv);
    SyntheticParams p;
    p.n = n;
    p.m = m;
    p.buyer_blocks = buyer_blocks;
    p.item_blocks = item_blocks;
    p.rank = rank;
    p.noise = noise;
    p.lo = lo;
    p.hi = hi;
    return generate_synthetic(kind == "block" ? SyntheticKind::block_structured
                                              : SyntheticKind::low_rank_plus_noise,
                              p, seed, csv);
  }
};

nlohmann::ordered_json solution_json(const Market& m, const EquilibriumSolution& sol) {
  nlohmann::ordered_json j;
  j["buyers"] = m.buyer_count();
  j["items"] = m.item_count();
  j["prices"] = std::vector<double>(sol.prices.data(), sol.prices.data() + sol.prices.size());
  j["utilities"] =
      std::vector<double>(sol.utilities.data(), sol.utilities.data() + sol.utilities.size());
  j["beta"] = std::vector<double>(sol.beta.data(), sol.beta.data() + sol.beta.size());
  j["leftover"] =
      std::vector<double>(sol.leftover.data(), sol.leftover.data() + sol.leftover.size());
  auto alloc = nlohmann::ordered_json::array();
  for (Index i = 0; i < sol.allocation.rows(); ++i)
    alloc.push_back(std::vector<double>(sol.allocation.row(i).data(),
                                        sol.allocation.row(i).data() + sol.allocation.cols()));
  j["allocation"] = std::move(alloc);
  j["diagnostics"] = {{"iterations", sol.diagnostics.iterations},
                      {"duality_gap", sol.diagnostics.gap},
                      {"converged", sol.diagnostics.converged},
                      {"returned_iterate", sol.diagnostics.returned_iterate},
                      {"clearing_residual", sol.diagnostics.clearing_residual},
                      {"budget_residual", sol.diagnostics.budget_residual},
                      {"bang_per_buck_residual", sol.diagnostics.bang_per_buck_residual},
                      {"wall_ms", sol.diagnostics.wall_ms}};
  return j;
}

void write_market_csv(const fs::path& path, const Matrix& values) {
  std::ofstream out(path, std::ios::binary);
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j)
      out << values(i, j) << (j + 1 < values.cols() ? "," : "");
    out << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fisher market equilibria, abstractions, and lifts"};
  app.require_subcommand(1);

  unsigned long seed = 0;
  double tol = 1e-7;
  int threads = 1;
  std::string outdir = "out";
  app.add_option("--seed", seed, "global random seed")->capture_default_str();
  app.add_option("--tol", tol, "solver duality-gap target (absolute)")
      ->capture_default_str();
  app.add_option("--threads", threads, "worker threads")->capture_default_str();
  app.add_option("--out", outdir, "output directory")->capture_default_str();

  // solve ------------------------------------------------------------------
  auto* solve_cmd = app.add_subcommand("solve", "compute a market equilibrium");
  solve_cmd->fallthrough();
  SourceArgs solve_src;
  solve_src.attach(solve_cmd);
  bool quasilinear = false, use_oracle = false;
  long max_iters = 400000;
  std::string floor = "epsilon", averaging = "ergodic";
  solve_cmd->add_flag("--quasilinear", quasilinear, "leftover budget keeps value");
  solve_cmd->add_flag("--oracle", use_oracle, "use the fixed-point oracle instead");
  solve_cmd->add_option("--max-iters", max_iters);
  solve_cmd->add_option("--floor", floor)->check(CLI::IsMember({"epsilon", "mms"}));
  solve_cmd->add_option("--averaging", averaging)
      ->check(CLI::IsMember({"ergodic", "last"}));

  // gen --------------------------------------------------------------------
  auto* gen_cmd = app.add_subcommand("gen", "write a synthetic valuation CSV");
  gen_cmd->fallthrough();
  SourceArgs gen_src;
  gen_src.attach(gen_cmd);
  std::string gen_file = "market.csv";
  gen_cmd->add_option("--file", gen_file, "output CSV path");

  // abstract ---------------------------------------------------------------
  auto* abs_cmd = app.add_subcommand("abstract", "build a representative market");
  abs_cmd->fallthrough();
  SourceArgs abs_src;
  abs_src.attach(abs_cmd);
  int abs_rank = 0;
  double buyer_pct = 50.0, item_pct = 100.0;
  abs_cmd->add_option("--svd-rank", abs_rank, "truncate values to this rank first (0 = off)");
  abs_cmd->add_option("--buyer-pct", buyer_pct, "representative buyers, % of n");
  abs_cmd->add_option("--item-pct", item_pct, "representative items, % of m");

  // grid -------------------------------------------------------------------
  auto* grid_cmd = app.add_subcommand("grid", "run the abstraction experiment grid");
  grid_cmd->fallthrough();
  std::string config_path;
  grid_cmd->add_option("--config", config_path, "experiment config JSON")->required();
  std::set<std::string> formats = {"csv", "json", "svg"};
  grid_cmd->add_option("--formats", formats, "any of csv json svg");

  // complete ----------------------------------------------------------------
  auto* cmp_cmd = app.add_subcommand(
      "complete", "fill a sparse observation CSV and keep the densest submatrix");
  cmp_cmd->fallthrough();
  std::string obs_path, cmp_file = "completed.csv";
  int cmp_rank = 20, cmp_iters = 100, top_rows = 0, top_cols = 0;
  double cmp_reg = 1e-4;
  bool cmp_bias = false;
  cmp_cmd->add_option("--obs", obs_path, "observation CSV with header i,j,value")
      ->required();
  cmp_cmd->add_option("--rank", cmp_rank, "latent dimension");
  cmp_cmd->add_option("--reg", cmp_reg, "ridge weight decay");
  cmp_cmd->add_option("--iters", cmp_iters, "ALS sweeps");
  cmp_cmd->add_flag("--bias", cmp_bias, "fit per-row and per-column biases");
  cmp_cmd->add_option("--top-rows", top_rows, "keep this many densest rows (0 = all)");
  cmp_cmd->add_option("--top-cols", top_cols, "keep this many densest columns (0 = all)");
  cmp_cmd->add_option("--file", cmp_file, "output CSV path");

  // check-bounds -----------------------------------------------------------
  auto* chk_cmd = app.add_subcommand("check-bounds",
                                     "certify abstraction-error bounds on a perturbed model");
  chk_cmd->fallthrough();
  SourceArgs chk_src;
  chk_src.attach(chk_cmd);
  double perturb = 0.3;
  bool chk_ql = false;
  chk_cmd->add_option("--perturb", perturb, "per-row l1 perturbation as a fraction of row mass");
  chk_cmd->add_flag("--quasilinear", chk_ql, "also run the quasi-linear regret/core checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve_cmd) {
      const Market m = solve_src.load(seed);
      SolverOptions opts;
      opts.target_gap = tol;
      opts.max_iters = max_iters;
      opts.floor_mode =
          floor == "mms" ? UtilityFloorMode::mms_floor : UtilityFloorMode::epsilon_floor;
      opts.averaging =
          averaging == "last" ? Averaging::last_iterate : Averaging::ergodic_average;
      opts.seed = seed;
      const EquilibriumSolution sol = use_oracle ? solve_eg_oracle(m, 1e-10)
                                      : quasilinear ? solve_quasilinear(m, opts)
                                                    : solve_eg_pd(m, opts);
      fs::create_directories(outdir);
      const auto path = fs::path(outdir) / "solution.json";
      std::ofstream(path, std::ios::binary) << solution_json(m, sol).dump(2) << "\n";
      std::cout << "solved " << m.buyer_count() << "x" << m.item_count()
                << ": gap=" << sol.diagnostics.gap
                << " iters=" << sol.diagnostics.iterations
                << (sol.diagnostics.converged ? "" : " (NOT CONVERGED)") << "\n"
                << "wrote " << path.string() << "\n";
      return sol.diagnostics.converged ? 0 : 2;
    }

    if (*gen_cmd) {
      const Market m = gen_src.load(seed);
      fs::create_directories(fs::path(gen_file).parent_path().empty()
                                 ? "."
                                 : fs::path(gen_file).parent_path().string());
      write_market_csv(gen_file, m.values);
      std::cout << "wrote " << gen_file << " (" << m.buyer_count() << "x"
                << m.item_count() << ")\n";
      return 0;
    }

    if (*abs_cmd) {
      const Market m = abs_src.load(seed);
      Matrix model = m.values;
      if (abs_rank > 0) model = svd_low_rank(m.values, abs_rank).reconstruct(true);
      const int nb = std::max(
          1, static_cast<int>(std::ceil(buyer_pct * static_cast<double>(m.buyer_count()) / 100.0)));
      const int ni = std::max(
          1, static_cast<int>(std::ceil(item_pct * static_cast<double>(m.item_count()) / 100.0)));
      const auto ba = nb >= m.buyer_count()
                          ? identity_assignment(static_cast<int>(m.buyer_count()))
                          : kmeans(model, nb, 100, seed).assign;
      const auto ia = ni >= m.item_count()
                          ? identity_assignment(static_cast<int>(m.item_count()))
                          : kmeans(model.transpose(), ni, 100, seed + 1).assign;
      const Market model_market(model, m.budgets, m.supplies);
      const auto map = build_representative_market(model_market, ba, ia,
                                                   RepValuationMode::cluster_mean);
      fs::create_directories(outdir);
      write_market_csv(fs::path(outdir) / "rep_values.csv", map.rep_market.values);
      write_market_csv(fs::path(outdir) / "v_hat.csv", map.v_hat);
      {
        std::ofstream out(fs::path(outdir) / "assignments.csv", std::ios::binary);
        out << "kind,index,cluster\n";
        for (size_t i = 0; i < map.buyer_assign.size(); ++i)
          out << "buyer," << i << "," << map.buyer_assign[i] << "\n";
        for (size_t j = 0; j < map.item_assign.size(); ++j)
          out << "item," << j << "," << map.item_assign[j] << "\n";
      }
      const auto norms = delta_norms(delta_v(m, map.v_hat));
      std::cout << "representative market " << map.buyer_clusters << "x"
                << map.item_clusters << "; |dV|_1,inf=" << norms.norm_1inf
                << " |dV|_F=" << norms.frobenius << "\nwrote " << outdir << "\n";
      return 0;
    }

    if (*grid_cmd) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw std::runtime_error("cannot open config " + config_path);
      ExperimentConfig config = parse_config_json(
          std::string(std::istreambuf_iterator<char>(in), {}));
      if (app.count("--seed")) config.seed = seed;
      if (app.count("--threads")) config.threads = threads;
      if (app.count("--out")) config.outdir = outdir;
      const auto rows = run_grid(config);
      const auto written = emit_reports(rows, config.outdir, formats);
      int failed_cells = 0;
      for (const auto& r : rows)
        if (!r.ok) ++failed_cells;
      for (const auto& p : written) std::cout << "wrote " << p << "\n";
      std::cout << rows.size() << " rows, " << failed_cells << " failed cells\n";
      return failed_cells > 0 ? 2 : 0;
    }

    if (*cmp_cmd) {
      const auto obs = load_observations_csv(obs_path);
      const auto res = matrix_complete(obs, cmp_rank, cmp_reg, cmp_iters, seed, cmp_bias);
      Matrix full = res.factors.reconstruct(true);

      std::vector<int> row_counts(static_cast<size_t>(obs.rows), 0);
      std::vector<int> col_counts(static_cast<size_t>(obs.cols), 0);
      for (const auto& e : obs.entries) {
        ++row_counts[static_cast<size_t>(e.row)];
        ++col_counts[static_cast<size_t>(e.col)];
      }
      auto densest = [](const std::vector<int>& counts, int keep) {
        std::vector<int> idx(counts.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return counts[static_cast<size_t>(a)] > counts[static_cast<size_t>(b)]; });
        idx.resize(static_cast<size_t>(keep));
        std::sort(idx.begin(), idx.end());
        return idx;
      };
      const auto rows_kept =
          densest(row_counts, top_rows > 0 ? std::min(top_rows, obs.rows) : obs.rows);
      const auto cols_kept =
          densest(col_counts, top_cols > 0 ? std::min(top_cols, obs.cols) : obs.cols);
      Matrix sub(static_cast<Index>(rows_kept.size()), static_cast<Index>(cols_kept.size()));
      for (size_t a = 0; a < rows_kept.size(); ++a)
        for (size_t c = 0; c < cols_kept.size(); ++c)
          sub(static_cast<Index>(a), static_cast<Index>(c)) =
              full(rows_kept[a], cols_kept[c]);
      write_market_csv(cmp_file, sub);
      std::cout << "train RMSE " << res.train_rmse << ", " << res.cold_rows.size()
                << " cold rows, " << res.cold_cols.size() << " cold columns\n"
                << "wrote " << cmp_file << " (" << sub.rows() << "x" << sub.cols()
                << ")\n";
      return 0;
    }

    if (*chk_cmd) {
      const Market m = chk_src.load(seed);
      std::mt19937_64 rng(seed * 7919 + 13);
      std::uniform_real_distribution<double> uu(-1.0, 1.0);
      Matrix v_hat = m.values;
      for (Index i = 0; i < m.buyer_count(); ++i) {
        Vector d(m.item_count());
        for (Index j = 0; j < m.item_count(); ++j) d(j) = uu(rng);
        d *= perturb * m.values.row(i).cwiseAbs().sum() / d.cwiseAbs().sum();
        v_hat.row(i) += d.transpose();
      }
      v_hat = v_hat.cwiseMax(0.0);
      const Market mh(v_hat, m.budgets, m.supplies);
      SolverOptions opts;
      opts.target_gap = tol;

      nlohmann::ordered_json out;
      auto dump_entries = [&](const char* key, const BoundReport& rep) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& e : rep.entries)
          arr.push_back({{"name", e.name},
                         {"buyer", e.buyer},
                         {"empirical", e.empirical},
                         {"bound", e.bound},
                         {"margin", e.margin},
                         {"pass", e.pass}});
        out[key] = std::move(arr);
        std::cout << key << ": " << (rep.all_pass ? "all hold" : "VIOLATED") << "\n";
      };

      const auto hat_sol = solve_eg_oracle(mh, 1e-11);
      const auto star = solve_eg_oracle(m, 1e-11);
      dump_entries("individual",
                   check_individual_bounds(m, v_hat, hat_sol.prices, hat_sol.allocation));
      dump_entries("negishi", check_negishi_bound(m, v_hat, hat_sol));
      dump_entries("nsw", check_nsw_bound(m, v_hat, hat_sol, star));
      if (m.buyer_count() * m.item_count() <= 10000)
        dump_entries("pareto", check_pareto_bound(m, v_hat, hat_sol.allocation));
      if (chk_ql) {
        const auto ql = solve_quasilinear(mh, opts);
        dump_entries("quasilinear",
                     check_ql_regret_and_core(m, v_hat, ql, m.buyer_count() <= 10));
      }
      fs::create_directories(outdir);
      const auto path = fs::path(outdir) / "bounds.json";
      std::ofstream(path, std::ios::binary) << out.dump(2) << "\n";
      std::cout << "wrote " << path.string() << "\n";
      return 0;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
