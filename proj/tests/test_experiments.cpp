#include "fisher/experiments.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <fstream>

using namespace fisher;
using namespace fisher::test;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fisher_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  return p.string();
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("csv loads a plain matrix with default budgets and supplies") {
  TempDir tmp;
  const auto path = write_file(tmp.path / "m.csv", "1,0\n0,1\n");
  const Market m = load_matrix_csv(path);
  CHECK(m.buyer_count() == 2);
  CHECK(m.item_count() == 2);
  CHECK(m.values(0, 0) == doctest::Approx(1.0));
  CHECK(m.values(0, 1) == doctest::Approx(0.0));
  CHECK(m.budgets(0) == doctest::Approx(1.0));
  CHECK(m.supplies(0) == doctest::Approx(1.0));  // n/m = 1
}

TEST_CASE("csv header rows are auto-detected") {
  TempDir tmp;
  const auto path = write_file(tmp.path / "m.csv", "a,b\n1,2\n3,4\n");
  const Market m = load_matrix_csv(path);
  CHECK(m.buyer_count() == 2);
  CHECK(m.values(1, 1) == doctest::Approx(4.0));
}

TEST_CASE("shift then zero replacement") {
  TempDir tmp;
  const auto path = write_file(tmp.path / "m.csv", "-10,5\n0,-9\n");
  CsvOptions opts;
  opts.shift = 10.0;
  opts.zero_replace = 1.0;
  const Market m = load_matrix_csv(path, opts);
  CHECK(m.values(0, 0) == doctest::Approx(1.0));   // -10 + 10 = 0 -> replaced
  CHECK(m.values(0, 1) == doctest::Approx(15.0));
  CHECK(m.values(1, 0) == doctest::Approx(10.0));  // 0 + 10, not zero after shift
  CHECK(m.values(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("negative values after the shift are fatal") {
  TempDir tmp;
  const auto path = write_file(tmp.path / "m.csv", "-11\n");
  CsvOptions opts;
  opts.shift = 10.0;
  CHECK_THROWS_AS(load_matrix_csv(path, opts), NegativeValueAfterShift);
}

TEST_CASE("ragged rows name the offender") {
  TempDir tmp;
  const auto path = write_file(tmp.path / "m.csv", "1,2\n3\n");
  try {
    load_matrix_csv(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.row == 2);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("observation csv round-trips") {
  TempDir tmp;
  const auto path = write_file(tmp.path / "obs.csv", "i,j,value\n0,0,5\n1,2,3.5\n");
  const auto obs = load_observations_csv(path);
  CHECK(obs.rows == 2);
  CHECK(obs.cols == 3);
  CHECK(obs.entries.at(1).value == doctest::Approx(3.5));
}

TEST_CASE("block synthetic markets are cluster constant without noise") {
  SyntheticParams params;
  params.n = 12;
  params.m = 6;
  params.buyer_blocks = 2;
  params.item_blocks = 2;
  params.noise = 0.0;
  const Market m = generate_synthetic(SyntheticKind::block_structured, params, 7);
  CHECK(validate_market(m).pass);
  // rows within a block are identical
  CHECK((m.values.row(0) - m.values.row(5)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m.values.row(6) - m.values.row(11)).cwiseAbs().maxCoeff() == 0.0);
  // identity block clustering reproduces the matrix exactly
  std::vector<int> ba(12), ia(6);
  for (int i = 0; i < 12; ++i) ba[static_cast<size_t>(i)] = i / 6;
  for (int j = 0; j < 6; ++j) ia[static_cast<size_t>(j)] = j / 3;
  const auto map =
      build_representative_market(m, ba, ia, RepValuationMode::cluster_mean);
  CHECK((map.v_hat - m.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("low rank synthetic markets have the advertised rank") {
  SyntheticParams params;
  params.n = 20;
  params.m = 8;
  params.rank = 3;
  params.noise = 0.0;
  const Market m = generate_synthetic(SyntheticKind::low_rank_plus_noise, params, 11);
  CHECK(validate_market(m).pass);
  const auto f = svd_low_rank(m.values, 3);
  CHECK((f.reconstruct() - m.values).norm() <= 1e-8);
}

TEST_CASE("synthetic generation is deterministic in the seed") {
  SyntheticParams params;
  params.n = 9;
  params.m = 5;
  params.noise = 0.2;
  const Market a = generate_synthetic(SyntheticKind::block_structured, params, 42);
  const Market b = generate_synthetic(SyntheticKind::block_structured, params, 42);
  const Market c = generate_synthetic(SyntheticKind::block_structured, params, 43);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.values - c.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("config json parses the documented keys") {
  const auto c = parse_config_json(R"({
    "dataset_id": "demo",
    "synthetic": {"kind": "block_structured", "n": 24, "m": 6, "noise": 0.1},
    "ranks": [2, 0],
    "buyer_coarseness": [25, 50, 100],
    "lifts": ["proportional"],
    "solver": {"target_gap": 1e-7, "max_iters": 9999, "floor": "mms"},
    "seed": 5,
    "threads": 2,
    "outdir": "somewhere"
  })");
  CHECK(c.dataset_id == "demo");
  CHECK(c.synth.n == 24);
  CHECK(c.ranks == std::vector<int>{2, 0});
  CHECK(c.buyer_coarseness.size() == 3);
  CHECK(c.lifts.size() == 1);
  CHECK(c.solver.max_iters == 9999);
  CHECK(c.solver.floor_mode == UtilityFloorMode::mms_floor);
  CHECK(c.seed == 5);
  CHECK(c.threads == 2);
  CHECK_THROWS_AS(parse_config_json(R"({"buyer_coarseness": [0]})"),
                  std::invalid_argument);
}

TEST_CASE("identity cell reproduces the baseline metrics") {
  ExperimentConfig c;
  c.dataset_id = "identity";
  c.synth.n = 8;
  c.synth.m = 5;
  c.synth_kind = SyntheticKind::low_rank_plus_noise;
  c.synth.rank = 4;
  c.synth.noise = 0.05;
  c.ranks = {0};
  c.buyer_coarseness = {100.0};
  c.seed = 3;
  const auto rows = run_grid(c);

  auto value_of = [&](const std::string& lift, const std::string& metric,
                      const std::string& stat) {
    for (const auto& r : rows)
      if (r.lift == lift && r.metric == metric && r.stat == stat) return r.value;
    FAIL("missing row ", lift, " ", metric);
    return 0.0;
  };
  for (const std::string metric : {"efficiency", "nsw_geomean"}) {
    const double base = value_of("baseline", metric, "value");
    CHECK(value_of("proportional", metric, "value") ==
          doctest::Approx(base).epsilon(1e-5));
    CHECK(value_of("recursive", metric, "value") ==
          doctest::Approx(base).epsilon(1e-5));
  }
  CHECK(value_of("proportional", "nsw_geomean_ratio", "value") ==
        doctest::Approx(1.0).epsilon(1e-5));
  CHECK(value_of("proportional", "regret_norm", "max") <= 1e-4);
  // bound margins present and nonnegative for the proportional lift
  bool saw_margin = false;
  for (const auto& r : rows)
    if (r.metric == "bound_margin_individual") {
      CHECK(r.value >= -1e-6);
      saw_margin = true;
    }
  CHECK(saw_margin);
}

TEST_CASE("failing cells do not disturb the others") {
  ExperimentConfig c;
  c.dataset_id = "isolation";
  c.synth.n = 10;
  c.synth.m = 4;
  c.ranks = {0, 99};  // 99 > min(n, m): that cell must fail
  c.buyer_coarseness = {50.0};
  c.seed = 9;
  const auto rows = run_grid(c);

  int failures = 0;
  for (const auto& r : rows)
    if (!r.ok) ++failures;
  CHECK(failures == 1);

  ExperimentConfig good = c;
  good.ranks = {0};
  const auto clean = run_grid(good);
  // every surviving row of the mixed run matches the clean run
  for (const auto& r : clean) {
    if (r.cell < 0) continue;
    bool matched = false;
    for (const auto& s : rows)
      if (s.ok && s.rank == r.rank && s.lift == r.lift && s.metric == r.metric &&
          s.stat == r.stat && s.buyer_pct == r.buyer_pct)
        matched = s.value == r.value;
    CHECK(matched);
  }
}

TEST_CASE("thread count does not change grid values") {
  ExperimentConfig c;
  c.dataset_id = "threads";
  c.synth.n = 10;
  c.synth.m = 4;
  c.ranks = {0, 2};
  c.buyer_coarseness = {40.0, 100.0};
  c.seed = 21;
  c.with_bounds = false;
  ExperimentConfig c4 = c;
  c4.threads = 4;
  const auto a = run_grid(c);
  const auto b = run_grid(c4);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].metric == b[i].metric);
    CHECK(a[i].value == b[i].value);  // bitwise
  }
}

TEST_CASE("emitted reports are byte deterministic") {
  ExperimentConfig c;
  c.dataset_id = "emit";
  c.synth.n = 8;
  c.synth.m = 4;
  c.ranks = {0, 2};
  c.buyer_coarseness = {50.0, 100.0};
  c.seed = 2;
  c.with_bounds = false;
  const auto rows = run_grid(c);

  TempDir t1, t2;
  const auto w1 = emit_reports(rows, t1.path.string(), {"csv", "json", "svg"});
  const auto w2 = emit_reports(rows, t2.path.string(), {"csv", "json", "svg"});
  REQUIRE(w1.size() == w2.size());
  CHECK(w1.size() >= 3);
  for (size_t i = 0; i < w1.size(); ++i) CHECK(slurp(w1[i]) == slurp(w2[i]));

  // structural checks: csv header + one line per row; svg has polylines
  const auto csv = slurp(w1[0]);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(rows.size()) + 1);
  bool has_svg = false;
  for (const auto& p : w1)
    if (p.find(".svg") != std::string::npos) {
      has_svg = true;
      const auto svg = slurp(p);
      CHECK(svg.find("<polyline") != std::string::npos);
    }
  CHECK(has_svg);
}

TEST_CASE("csv quoting follows rfc 4180") {
  std::vector<ReportRow> rows(1);
  rows[0].dataset = "weird, \"name\"";
  rows[0].metric = "m";
  rows[0].stat = "value";
  rows[0].note = "line\nbreak";
  TempDir t;
  const auto written = emit_reports(rows, t.path.string(), {"csv"});
  const auto text = slurp(written[0]);
  CHECK(text.find("\"weird, \"\"name\"\"\"") != std::string::npos);
  CHECK(text.find("\"line\nbreak\"") != std::string::npos);
}

TEST_CASE("spearman agrees on monotone and anti-monotone data") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  CHECK(std::abs(spearman({1, 2, 3, 4}, {1, 1, 1, 1})) <= 1e-12);
}

}  // TEST_SUITE
