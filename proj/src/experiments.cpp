#include "fisher/experiments.hpp"

#include "fisher/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <map>
#include <random>
#include <sstream>

namespace fisher {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string fmt_fixed(double v, int precision) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                               std::chars_format::fixed, precision);
  return std::string(buf, p);
}

bool parse_double(const std::string& tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
  if (first == last) return false;
  auto [p, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && p == last;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path, 0, 0);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

Market finish_market(Matrix values, const CsvOptions& opts) {
  const Index n = values.rows(), m = values.cols();
  const double budget = opts.budget_value.value_or(1.0);
  const double supply =
      opts.supply_value.value_or(static_cast<double>(n) / static_cast<double>(m));
  return Market(std::move(values), Vector::Constant(n, budget),
                Vector::Constant(m, supply));
}

uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Market load_matrix_csv(const std::string& path, const CsvOptions& opts) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path + ": empty file", 0, 0);

  size_t start = 0;
  {
    double tmp;
    for (const auto& tok : split_csv_line(lines[0])) {
      if (!parse_double(tok, tmp)) {
        start = 1;  // header row
        break;
      }
    }
  }
  if (start >= lines.size()) throw ParseError(path + ": no data rows", 1, 0);

  const Index m = static_cast<Index>(split_csv_line(lines[start]).size());
  const Index n = static_cast<Index>(lines.size() - start);
  Matrix values(n, m);
  for (Index r = 0; r < n; ++r) {
    const auto toks = split_csv_line(lines[start + static_cast<size_t>(r)]);
    if (static_cast<Index>(toks.size()) != m)
      throw ParseError(path + ": row " + std::to_string(r + 1) + " has " +
                           std::to_string(toks.size()) + " fields, expected " +
                           std::to_string(m),
                       static_cast<int>(r + 1), static_cast<int>(toks.size()));
    for (Index c = 0; c < m; ++c) {
      double v;
      if (!parse_double(toks[static_cast<size_t>(c)], v))
        throw ParseError(path + ": bad number at row " + std::to_string(r + 1) +
                             ", col " + std::to_string(c + 1),
                         static_cast<int>(r + 1), static_cast<int>(c + 1));
      v += opts.shift;
      if (v < 0.0)
        throw NegativeValueAfterShift(path + ": negative value after shift at row " +
                                      std::to_string(r + 1) + ", col " +
                                      std::to_string(c + 1));
      if (opts.zero_replace && v == 0.0) v = *opts.zero_replace;
      values(r, c) = v;
    }
  }
  return finish_market(std::move(values), opts);
}

ObservationSet load_observations_csv(const std::string& path, int rows, int cols) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path + ": empty file", 0, 0);
  std::vector<ObservationSet::Entry> entries;
  int max_i = -1, max_j = -1;
  for (size_t r = 1; r < lines.size(); ++r) {  // line 0 is the i,j,value header
    const auto toks = split_csv_line(lines[r]);
    if (toks.size() != 3)
      throw ParseError(path + ": observation row " + std::to_string(r + 1) +
                           " needs 3 fields",
                       static_cast<int>(r + 1), static_cast<int>(toks.size()));
    double di, dj, dv;
    if (!parse_double(toks[0], di) || !parse_double(toks[1], dj) ||
        !parse_double(toks[2], dv))
      throw ParseError(path + ": bad observation at row " + std::to_string(r + 1),
                       static_cast<int>(r + 1), 0);
    entries.push_back({static_cast<int>(di), static_cast<int>(dj), dv});
    max_i = std::max(max_i, static_cast<int>(di));
    max_j = std::max(max_j, static_cast<int>(dj));
  }
  return ObservationSet(std::move(entries), rows > 0 ? rows : max_i + 1,
                        cols > 0 ? cols : max_j + 1);
}

Market generate_synthetic(SyntheticKind kind, const SyntheticParams& params,
                          unsigned long seed, const CsvOptions& opts) {
  std::mt19937_64 rng(mix64(seed));
  std::uniform_real_distribution<double> base(params.lo, params.hi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix values(params.n, params.m);
  if (kind == SyntheticKind::block_structured) {
    const int bb = std::max(1, params.buyer_blocks);
    const int ib = std::max(1, params.item_blocks);
    Matrix block(bb, ib);
    for (int a = 0; a < bb; ++a)
      for (int b = 0; b < ib; ++b) block(a, b) = base(rng);
    for (int i = 0; i < params.n; ++i) {
      const int a = i * bb / params.n;
      for (int j = 0; j < params.m; ++j) {
        const int b = j * ib / params.m;
        values(i, j) = std::max(0.0, block(a, b) + params.noise * gauss(rng));
      }
    }
  } else {
    const int d = std::max(1, params.rank);
    Matrix a(params.n, d), b(params.m, d);
    const double scale = std::sqrt((params.hi - params.lo) / std::max(1, d));
    for (int i = 0; i < params.n; ++i)
      for (int k = 0; k < d; ++k) a(i, k) = std::abs(gauss(rng)) * scale;
    for (int j = 0; j < params.m; ++j)
      for (int k = 0; k < d; ++k) b(j, k) = std::abs(gauss(rng)) * scale;
    values = a * b.transpose();
    if (params.noise > 0.0) {
      for (int i = 0; i < params.n; ++i)
        for (int j = 0; j < params.m; ++j)
          values(i, j) = std::max(0.0, values(i, j) + params.noise * gauss(rng));
    }
  }

  // keep every buyer row valid
  for (int i = 0; i < params.n; ++i)
    if (values.row(i).maxCoeff() <= 0.0) values(i, 0) = params.lo;
  return finish_market(std::move(values), opts);
}

ExperimentConfig parse_config_json(const std::string& text) {
  using nlohmann::json;
  const json j = json::parse(text);
  ExperimentConfig c;

  if (j.contains("dataset_id")) c.dataset_id = j["dataset_id"].get<std::string>();
  if (j.contains("csv_path")) c.csv_path = j["csv_path"].get<std::string>();
  if (j.contains("csv")) {
    const auto& v = j["csv"];
    if (v.contains("shift")) c.csv.shift = v["shift"].get<double>();
    if (v.contains("zero_replace")) c.csv.zero_replace = v["zero_replace"].get<double>();
    if (v.contains("budget")) c.csv.budget_value = v["budget"].get<double>();
    if (v.contains("supply")) c.csv.supply_value = v["supply"].get<double>();
  }
  if (j.contains("synthetic")) {
    const auto& v = j["synthetic"];
    const std::string kind = v.value("kind", "block_structured");
    if (kind == "block_structured")
      c.synth_kind = SyntheticKind::block_structured;
    else if (kind == "low_rank_plus_noise")
      c.synth_kind = SyntheticKind::low_rank_plus_noise;
    else
      throw std::invalid_argument("config: unknown synthetic kind " + kind);
    c.synth.n = v.value("n", c.synth.n);
    c.synth.m = v.value("m", c.synth.m);
    c.synth.buyer_blocks = v.value("buyer_blocks", c.synth.buyer_blocks);
    c.synth.item_blocks = v.value("item_blocks", c.synth.item_blocks);
    c.synth.rank = v.value("rank", c.synth.rank);
    c.synth.noise = v.value("noise", c.synth.noise);
    c.synth.lo = v.value("lo", c.synth.lo);
    c.synth.hi = v.value("hi", c.synth.hi);
  }
  if (j.contains("ranks")) c.ranks = j["ranks"].get<std::vector<int>>();
  if (j.contains("buyer_coarseness"))
    c.buyer_coarseness = j["buyer_coarseness"].get<std::vector<double>>();
  if (j.contains("item_coarseness"))
    c.item_coarseness = j["item_coarseness"].get<std::vector<double>>();
  if (j.contains("lifts")) {
    c.lifts.clear();
    for (const auto& s : j["lifts"]) {
      const std::string name = s.get<std::string>();
      if (name == "proportional")
        c.lifts.push_back(LiftKind::proportional);
      else if (name == "recursive")
        c.lifts.push_back(LiftKind::recursive);
      else
        throw std::invalid_argument("config: unknown lift " + name);
    }
  }
  if (j.contains("solver")) {
    const auto& v = j["solver"];
    c.solver.target_gap = v.value("target_gap", c.solver.target_gap);
    c.solver.max_iters = v.value("max_iters", c.solver.max_iters);
    c.solver.check_every = v.value("check_every", c.solver.check_every);
    c.solver.step_primal = v.value("step_primal", c.solver.step_primal);
    c.solver.step_dual = v.value("step_dual", c.solver.step_dual);
    const std::string floor = v.value("floor", "epsilon");
    c.solver.floor_mode = floor == "mms" ? UtilityFloorMode::mms_floor
                                         : UtilityFloorMode::epsilon_floor;
    const std::string avg = v.value("averaging", "ergodic");
    c.solver.averaging =
        avg == "last" ? Averaging::last_iterate : Averaging::ergodic_average;
  }
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.with_bounds = j.value("with_bounds", c.with_bounds);
  c.kmeans_iters = j.value("kmeans_iters", c.kmeans_iters);
  c.kmeans_restarts = j.value("kmeans_restarts", c.kmeans_restarts);
  c.outdir = j.value("outdir", c.outdir);

  for (double pct : c.buyer_coarseness)
    if (pct <= 0.0 || pct > 100.0)
      throw std::invalid_argument("config: coarseness must be in (0, 100]");
  for (double pct : c.item_coarseness)
    if (pct <= 0.0 || pct > 100.0)
      throw std::invalid_argument("config: coarseness must be in (0, 100]");
  return c;
}

namespace {

struct Cell {
  int rank;
  double buyer_pct, item_pct;
  bool cluster_items;
};

const char* lift_name(LiftKind k) {
  return k == LiftKind::proportional ? "proportional" : "recursive";
}

void metric_rows(std::vector<ReportRow>& out, const ReportRow& proto,
                 const MetricsReport& mr, double base_geomean) {
  auto push = [&](const std::string& metric, const std::string& stat, double value,
                  const std::string& dd, double denom) {
    ReportRow r = proto;
    r.metric = metric;
    r.stat = stat;
    r.value = value;
    r.denom_desc = dd;
    r.denom = denom;
    out.push_back(std::move(r));
  };

  const auto n = static_cast<double>(mr.regret.size());
  push("regret_norm", "mean", mr.regret_norm.sum() / n, "capped demand optimum", 0.0);
  push("regret_norm", "max", mr.regret_norm.maxCoeff(), "capped demand optimum", 0.0);
  push("envy_norm", "mean", mr.envy_norm.sum() / n, "envied bundle value", 0.0);
  push("envy_norm", "max", mr.envy_norm.maxCoeff(), "envied bundle value", 0.0);
  push("mms_frac", "mean", mr.mms_frac.sum() / n, "mms value", 0.0);
  push("mms_frac", "min", mr.mms_frac.minCoeff(), "mms value", 0.0);
  push("regret", "max", mr.regret.maxCoeff(), "none", 0.0);
  push("envy", "max", mr.envy.maxCoeff(), "none", 0.0);
  push("mms_gap", "max", mr.mms_gap.maxCoeff(), "none", 0.0);
  push("nsw_geomean", "value", mr.nsw_geomean, "none", 0.0);
  if (base_geomean > 0.0)
    push("nsw_geomean_ratio", "value", mr.nsw_geomean / base_geomean,
         "baseline nsw geomean", base_geomean);
  push("efficiency", "value", mr.efficiency, "itemwise max welfare", 0.0);
  if (mr.pareto_gap) push("pareto_gap", "value", *mr.pareto_gap, "none", 0.0);
}

}  // namespace

std::vector<ReportRow> run_grid(const ExperimentConfig& config) {
  Market market = config.csv_path.empty()
                      ? generate_synthetic(config.synth_kind, config.synth,
                                           config.seed, config.csv)
                      : load_matrix_csv(config.csv_path, config.csv);
  const auto valid = validate_market(market);
  if (!valid.pass) throw InvalidMarket("run_grid: " + valid.summary());

  SolverOptions base_opts = config.solver;
  if (base_opts.target_gap <= 0.0) base_opts.target_gap = 1e-6 * market.budget_total();

  const Index n = market.buyer_count(), mm = market.item_count();
  const bool desk_scale = n * mm <= 10000;

  const auto t_base0 = std::chrono::steady_clock::now();
  const EquilibriumSolution baseline = solve_eg_pd(market, base_opts);
  const MetricsReport base_metrics =
      compute_metrics(market, baseline.prices, baseline.allocation, desk_scale);
  const double base_wall =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_base0)
          .count();
  const double base_welfare = baseline.utilities.sum();

  std::vector<ReportRow> rows;
  {
    ReportRow proto;
    proto.dataset = config.dataset_id;
    proto.rank = 0;
    proto.buyer_pct = 100.0;
    proto.item_pct = 100.0;
    proto.lift = "baseline";
    proto.wall_ms = base_wall;
    proto.cell = -1;
    metric_rows(rows, proto, base_metrics, base_metrics.nsw_geomean);
    ReportRow conv = proto;
    conv.metric = "solver_gap";
    conv.stat = "value";
    conv.value = baseline.diagnostics.gap;
    conv.denom_desc = "target";
    conv.denom = base_opts.target_gap;
    rows.push_back(conv);
  }

  std::vector<Cell> cells;
  const std::vector<double> item_pcts =
      config.item_coarseness.empty() ? std::vector<double>{100.0} : config.item_coarseness;
  const bool cluster_items = !config.item_coarseness.empty();
  for (int rank : config.ranks)
    for (double bp : config.buyer_coarseness)
      for (double ip : item_pcts) cells.push_back({rank, bp, ip, cluster_items});

  std::vector<std::vector<ReportRow>> cell_rows(cells.size());
  parallel_for(static_cast<int>(cells.size()), config.threads, [&](int ci) {
    const Cell& cell = cells[static_cast<size_t>(ci)];
    const auto t0 = std::chrono::steady_clock::now();
    ReportRow proto;
    proto.dataset = config.dataset_id;
    proto.rank = cell.rank;
    proto.buyer_pct = cell.buyer_pct;
    proto.item_pct = cell.cluster_items ? cell.item_pct : 100.0;
    proto.cell = ci;

    auto& out = cell_rows[static_cast<size_t>(ci)];
    try {
      const uint64_t cell_seed =
          mix64(config.seed ^ mix64(static_cast<uint64_t>(cell.rank + 1) ^
                                    mix64(static_cast<uint64_t>(cell.buyer_pct * 100) ^
                                          mix64(static_cast<uint64_t>(cell.item_pct * 100)))));

      Matrix model = market.values;
      if (cell.rank > 0 && cell.rank < std::min(n, mm))
        model = svd_low_rank(market.values, cell.rank).reconstruct(true);
      else if (cell.rank > std::min(n, mm))
        throw std::invalid_argument("rank exceeds min(n, m)");

      std::vector<int> buyer_assign, item_assign;
      const int nb = std::min<int>(
          static_cast<int>(n),
          std::max(1, static_cast<int>(std::ceil(cell.buyer_pct * static_cast<double>(n) / 100.0))));
      if (nb >= n) {
        buyer_assign = identity_assignment(static_cast<int>(n));
      } else {
        buyer_assign =
            kmeans(model, nb, config.kmeans_iters, cell_seed, config.kmeans_restarts).assign;
      }
      const int ni = std::min<int>(
          static_cast<int>(mm),
          std::max(1, static_cast<int>(std::ceil(cell.item_pct * static_cast<double>(mm) / 100.0))));
      if (!cell.cluster_items || ni >= mm) {
        item_assign = identity_assignment(static_cast<int>(mm));
      } else {
        item_assign = kmeans(model.transpose(), ni, config.kmeans_iters,
                             mix64(cell_seed + 1), config.kmeans_restarts)
                          .assign;
      }

      const Market model_market(model, market.budgets, market.supplies);
      const AbstractionMap amap = build_representative_market(
          model_market, buyer_assign, item_assign, RepValuationMode::cluster_mean);

      const EquilibriumSolution rep_sol = solve_eg_pd(amap.rep_market, base_opts);

      for (const LiftKind kind : config.lifts) {
        const LiftedSolution lifted =
            kind == LiftKind::proportional
                ? proportional_lift(rep_sol, market, amap)
                : recursive_lift(rep_sol, market, amap, base_opts, 1);

        ReportRow lp = proto;
        lp.lift = lift_name(kind);
        const MetricsReport mr =
            compute_metrics(market, lifted.prices, lifted.allocation, desk_scale);
        metric_rows(out, lp, mr, base_metrics.nsw_geomean);

        {
          ReportRow wr = lp;
          wr.metric = "welfare_ratio";
          wr.stat = "value";
          double welfare = 0.0;
          for (Index i = 0; i < n; ++i)
            welfare += market.values.row(i).dot(lifted.allocation.row(i));
          wr.value = base_welfare > 0 ? welfare / base_welfare : 0.0;
          wr.denom_desc = "baseline welfare";
          wr.denom = base_welfare;
          out.push_back(wr);
        }
        if (mr.pareto_gap) {
          ReportRow pr = lp;
          pr.metric = "pareto_gap_norm";
          pr.stat = "value";
          double welfare = 0.0;
          for (Index i = 0; i < n; ++i)
            welfare += market.values.row(i).dot(lifted.allocation.row(i));
          const double denom = welfare + *mr.pareto_gap;
          pr.value = denom > 0 ? *mr.pareto_gap / denom : 0.0;
          pr.denom_desc = "pareto optimal welfare";
          pr.denom = denom;
          out.push_back(pr);
        }
        if (kind == LiftKind::recursive && !lifted.fell_back.empty()) {
          ReportRow fb = lp;
          fb.metric = "recursive_fallback_clusters";
          fb.stat = "value";
          fb.value = static_cast<double>(lifted.fell_back.size());
          fb.denom_desc = "clusters";
          fb.denom = static_cast<double>(amap.buyer_clusters);
          out.push_back(fb);
        }

        if (config.with_bounds && kind == LiftKind::proportional) {
          const double pre_tol = 1e-3;
          auto add_margin = [&](const std::string& name, const BoundReport& br) {
            double min_margin = std::numeric_limits<double>::infinity();
            for (const auto& e : br.entries) min_margin = std::min(min_margin, e.margin);
            ReportRow b = lp;
            b.metric = name;
            b.stat = "min";
            b.value = min_margin;
            b.denom_desc = "bound margin";
            b.denom = 0.0;
            out.push_back(b);
          };
          add_margin("bound_margin_individual",
                     check_individual_bounds(market, amap.v_hat, lifted.prices,
                                             lifted.allocation, pre_tol));
          EquilibriumSolution as_sol;
          as_sol.prices = lifted.prices;
          as_sol.allocation = lifted.allocation;
          add_margin("bound_margin_negishi",
                     check_negishi_bound(market, amap.v_hat, as_sol, pre_tol));
          add_margin("bound_margin_nsw",
                     check_nsw_bound(market, amap.v_hat, as_sol, baseline, pre_tol));
          if (desk_scale)
            add_margin("bound_margin_pareto",
                       check_pareto_bound(market, amap.v_hat, lifted.allocation, pre_tol));
        }
      }

      const double wall =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      for (auto& r : out) r.wall_ms = wall;
    } catch (const std::exception& err) {
      out.clear();
      ReportRow fail = proto;
      fail.lift = "cell";
      fail.metric = "cell_error";
      fail.stat = "value";
      fail.value = 0.0;
      fail.ok = false;
      fail.note = err.what();
      fail.wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      out.push_back(std::move(fail));
    }
  });

  for (auto& block : cell_rows)
    for (auto& r : block) rows.push_back(std::move(r));
  return rows;
}

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"')
      out += "\"\"";
    else
      out += c;
  }
  out += "\"";
  return out;
}

struct SeriesKey {
  int rank;
  std::string lift;
  bool operator<(const SeriesKey& o) const {
    return std::tie(rank, lift) < std::tie(o.rank, o.lift);
  }
};

const std::vector<std::pair<std::string, std::string>> kChartMetrics = {
    {"nsw_geomean_ratio", "value"}, {"welfare_ratio", "value"},
    {"efficiency", "value"},        {"regret_norm", "max"},
    {"envy_norm", "max"},           {"mms_frac", "min"},
    {"pareto_gap_norm", "value"},
};

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string render_chart(const std::string& metric, const std::string& stat,
                         const std::vector<ReportRow>& rows) {
  std::map<SeriesKey, std::vector<std::pair<double, double>>> series;
  for (const auto& r : rows) {
    if (!r.ok || r.cell < 0) continue;
    if (r.metric != metric || r.stat != stat) continue;
    series[{r.rank, r.lift}].emplace_back(r.buyer_pct, r.value);
  }
  if (series.empty()) return {};

  double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = -1e300;
  for (auto& [k, pts] : series) {
    std::sort(pts.begin(), pts.end());
    for (auto& [x, y] : pts) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymax = std::max(ymax, y);
      ymin = std::min(ymin, y);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  ymin = std::min(0.0, ymin);
  if (ymax <= ymin) ymax = ymin + 1.0;
  ymax *= 1.05;

  const double w = 720, h = 480, ml = 70, mr = 24, mt = 28, mb = 48;
  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
      << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  svg << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << metric << " (" << stat << ") vs buyer coarseness %</text>\n";
  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 5; ++tick) {
    const double xv = xmin + (xmax - xmin) * tick / 5.0;
    const double yv = ymin + (ymax - ymin) * tick / 5.0;
    svg << "<text x=\"" << fmt_fixed(sx(xv), 1) << "\" y=\"" << h - mb + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << fmt_fixed(xv, 0) << "</text>\n";
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << fmt_fixed(sy(yv) + 3, 1)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << fmt_fixed(yv, 3) << "</text>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << fmt_fixed(sy(yv), 1) << "\" x2=\""
        << w - mr << "\" y2=\"" << fmt_fixed(sy(yv), 1)
        << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
  }

  int idx = 0;
  double legend_y = mt + 8;
  for (const auto& [key, pts] : series) {
    const char* color = kPalette[idx % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts)
      svg << fmt_fixed(sx(x), 2) << "," << fmt_fixed(sy(y), 2) << " ";
    svg << "\"/>\n";
    for (const auto& [x, y] : pts)
      svg << "<circle cx=\"" << fmt_fixed(sx(x), 2) << "\" cy=\"" << fmt_fixed(sy(y), 2)
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    svg << "<text x=\"" << w - mr - 150 << "\" y=\"" << fmt_fixed(legend_y, 1)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">rank="
        << (key.rank == 0 ? std::string("full") : std::to_string(key.rank)) << " "
        << key.lift << "</text>\n";
    legend_y += 14;
    ++idx;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

std::vector<std::string> emit_reports(const std::vector<ReportRow>& rows,
                                      const std::string& outdir,
                                      const std::set<std::string>& formats) {
  if (rows.empty()) throw std::invalid_argument("emit_reports: no rows");
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  std::vector<std::string> written;

  if (formats.count("csv")) {
    const std::string path = (fs::path(outdir) / "report.csv").string();
    std::ofstream out(path, std::ios::binary);
    out << "dataset,rank,buyer_pct,item_pct,lift,metric,stat,value,denom_desc,denom,ok,note,wall_ms,cell\n";
    for (const auto& r : rows) {
      out << csv_quote(r.dataset) << "," << r.rank << "," << fmt(r.buyer_pct) << ","
          << fmt(r.item_pct) << "," << csv_quote(r.lift) << "," << csv_quote(r.metric)
          << "," << csv_quote(r.stat) << "," << fmt(r.value) << ","
          << csv_quote(r.denom_desc) << "," << fmt(r.denom) << ","
          << (r.ok ? "true" : "false") << "," << csv_quote(r.note) << ","
          << fmt(r.wall_ms) << "," << r.cell << "\n";
    }
    written.push_back(path);
  }

  if (formats.count("json")) {
    using nlohmann::ordered_json;
    ordered_json arr = ordered_json::array();
    for (const auto& r : rows) {
      ordered_json o;
      o["dataset"] = r.dataset;
      o["rank"] = r.rank;
      o["buyer_pct"] = r.buyer_pct;
      o["item_pct"] = r.item_pct;
      o["lift"] = r.lift;
      o["metric"] = r.metric;
      o["stat"] = r.stat;
      o["value"] = r.value;
      o["denom_desc"] = r.denom_desc;
      o["denom"] = r.denom;
      o["ok"] = r.ok;
      o["note"] = r.note;
      o["wall_ms"] = r.wall_ms;
      o["cell"] = r.cell;
      arr.push_back(std::move(o));
    }
    const std::string path = (fs::path(outdir) / "report.json").string();
    std::ofstream out(path, std::ios::binary);
    out << arr.dump(2) << "\n";
    written.push_back(path);
  }

  if (formats.count("svg")) {
    for (const auto& [metric, stat] : kChartMetrics) {
      const std::string svg = render_chart(metric, stat, rows);
      if (svg.empty()) continue;
      const std::string path = (fs::path(outdir) / ("chart_" + metric + ".svg")).string();
      std::ofstream out(path, std::ios::binary);
      out << svg;
      written.push_back(path);
    }
  }
  return written;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length samples");
  const auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0 || vb <= 0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace fisher
