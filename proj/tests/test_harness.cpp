#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "pbt/harness.hpp"
#include "pbt/oracles.hpp"
#include "test_util.hpp"

using namespace pbt;

TEST_CASE("map scoring: threshold and argmax") {
  std::vector<std::vector<double>> marginals = {
      {0.4, 0.6}, {0.46, 0.54}, {0.7, 0.3}};
  std::vector<Value> truth = {1, 1, 1};
  MappingScores s = mapping_metrics(marginals, truth);
  CHECK(s.cells == 3);
  CHECK(s.labeled == 2);
  CHECK(s.good_pct == doctest::Approx(50.0));
  CHECK(s.unknown_pct == doctest::Approx(100.0 / 3.0));
}

TEST_CASE("map scoring edge cases") {
  MappingScores uniform = mapping_metrics({{0.5, 0.5}, {0.5, 0.5}}, {0, 1});
  CHECK(uniform.labeled == 0);
  CHECK(uniform.unknown_pct == doctest::Approx(100.0));
  CHECK(uniform.good_pct == doctest::Approx(0.0));  // nothing labeled

  MappingScores exact = mapping_metrics({{1.0, 0.0}, {0.0, 1.0}}, {0, 1});
  CHECK(exact.labeled == 2);
  CHECK(exact.good_pct == doctest::Approx(100.0));
  CHECK(exact.unknown_pct == doctest::Approx(0.0));

  // Exactly at the threshold counts as labeled.
  MappingScores at = mapping_metrics({{0.55, 0.45}}, {0});
  CHECK(at.labeled == 1);
}

TEST_CASE("decision policy: act on the most certain candidate") {
  Rng rng(1);
  std::vector<char> all(2, 1);
  MinesweeperDecision d = minesweeper_decide({0.9, 0.2}, all, rng);
  CHECK(d.cell == 0);
  CHECK(d.tag);

  d = minesweeper_decide({0.1, 0.45}, all, rng);
  CHECK(d.cell == 0);
  CHECK_FALSE(d.tag);

  // Decided cells are excluded.
  std::vector<char> only1 = {0, 1};
  d = minesweeper_decide({0.9, 0.2}, only1, rng);
  CHECK(d.cell == 1);
  CHECK_FALSE(d.tag);

  // Exact certainty ties break uniformly but stay on a candidate.
  d = minesweeper_decide({0.3, 0.7}, all, rng);
  CHECK((d.cell == 0 || d.cell == 1));
  CHECK(d.tag == (d.cell == 1));

  // A 50/50 cell is opened, never tagged.
  d = minesweeper_decide({0.5, 0.9}, {1, 0}, rng);
  CHECK(d.cell == 0);
  CHECK_FALSE(d.tag);

  bool threw = false;
  try {
    minesweeper_decide({0.5, 0.5}, {0, 0}, rng);
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::NoCandidates;
  }
  CHECK(threw);
}

TEST_CASE("csv output has a pinned header and fixed-point fields") {
  CHECK(results_to_csv({}) ==
        "domain,config,engine,particles,runs,success_pct,good_pct,unknown_pct,"
        "time_per_step_s,time_per_exec_s,seed,success_hw,good_hw,unknown_hw\n");

  RunResult r;
  r.domain = "minesweeper";
  r.config = "3x3 2";
  r.engine = "jt";
  r.particles = 1;
  r.runs = 4;
  r.success_pct = 75.0;
  r.seed = 11;
  std::string csv = results_to_csv({r});
  CHECK(csv.find("minesweeper,3x3 2,jt,1,4,75.000000,") != std::string::npos);
  CHECK(csv.find(",11,") != std::string::npos);
}

TEST_CASE("json results round-trip") {
  RunResult r;
  r.domain = "line3-slam";
  r.config = "1x8";
  r.engine = "ac1";
  r.particles = 16;
  r.runs = 3;
  r.good_pct = 91.234567;  // rounded to 6 decimals on write
  r.unknown_pct = 12.5;
  r.time_per_step_s = 0.001234;
  r.seed = 99;
  r.good_hw = 1.25;
  std::vector<RunResult> back = results_from_json(results_to_json({r}));
  REQUIRE(back.size() == 1);
  CHECK(back[0].domain == r.domain);
  CHECK(back[0].config == r.config);
  CHECK(back[0].engine == r.engine);
  CHECK(back[0].particles == r.particles);
  CHECK(back[0].runs == r.runs);
  CHECK(back[0].good_pct == doctest::Approx(91.234567).epsilon(1e-9));
  CHECK(back[0].unknown_pct == doctest::Approx(12.5));
  CHECK(back[0].seed == 99);
  CHECK(back[0].good_hw == doctest::Approx(1.25));
}

TEST_CASE("result files: write, read back, and failure paths") {
  std::string path = "harness_test_results.json";
  RunResult r;
  r.domain = "minesweeper";
  r.config = "2x2 1";
  r.engine = "ac0";
  r.runs = 1;
  write_results(path, {r}, "json");
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(results_from_json(text).size() == 1);
  std::remove(path.c_str());

  bool threw = false;
  try {
    write_results("no_such_dir/x.csv", {r}, "csv");
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::IoError;
  }
  CHECK(threw);
}

TEST_CASE("zero runs produce a zeroed aggregate") {
  ExperimentSpec spec;
  spec.kind = DomainKind::kMinesweeper;
  spec.rows = 3;
  spec.cols = 3;
  spec.mines = 2;
  spec.runs = 0;
  RunResult r = run_experiment(spec);
  CHECK(r.runs == 0);
  CHECK(r.success_pct == 0.0);
  CHECK(r.time_per_exec_s == 0.0);
  CHECK(r.domain == "minesweeper");
  CHECK(r.config == "3x3 2");
}

TEST_CASE("experiments are reproducible and worker-count invariant") {
  ExperimentSpec spec;
  spec.kind = DomainKind::kMinesweeper;
  spec.rows = 3;
  spec.cols = 3;
  spec.mines = 2;
  spec.runs = 8;
  spec.seed = 5;
  spec.engine.kind = EngineKind::kIteratedAc;

  RunResult a = run_experiment(spec);
  RunResult b = run_experiment(spec);
  spec.jobs = 3;
  RunResult c = run_experiment(spec);

  CHECK(a.engine == "ac0");
  CHECK(a.runs == 8);
  CHECK(a.success_pct == b.success_pct);
  CHECK(a.success_hw == b.success_hw);
  CHECK(a.success_pct == c.success_pct);
  CHECK(a.success_hw == c.success_hw);
  CHECK(a.good_pct == c.good_pct);
  CHECK(a.unknown_pct == c.unknown_pct);
}

TEST_CASE("a mapping experiment reports map quality instead of success") {
  ExperimentSpec spec;
  spec.kind = DomainKind::kLineSlamSplit;
  spec.length = 4;
  spec.runs = 2;
  spec.seed = 3;
  spec.tracker.particles = 16;
  RunResult r = run_experiment(spec);
  CHECK(r.runs == 2);
  CHECK(r.particles == 16);
  CHECK(r.good_pct >= 0.0);
  CHECK(r.good_pct <= 100.0);
  CHECK(r.unknown_pct >= 0.0);
  CHECK(r.unknown_pct <= 100.0);
  CHECK(r.time_per_step_s > 0.0);
  CHECK(r.config == "1x4");
}

TEST_CASE("flat filter: textbook update and impossible histories") {
  TwoSliceDbn m = testutil::static_pair_model(0.9);
  FlatFilter flat(m);
  flat.observe(0, {1});
  std::vector<double> a = flat.marginal({0});
  CHECK(a[0] == doctest::Approx(0.1));
  CHECK(a[1] == doctest::Approx(0.9));

  TwoSliceDbn noiseless = testutil::static_pair_model(1.0);
  FlatFilter f2(noiseless);
  f2.observe(0, {1});
  bool threw = false;
  try {
    f2.observe(0, {0});
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::ImpossibleHistory;
  }
  CHECK(threw);
}

TEST_CASE("flat filter refuses oversized state spaces") {
  TwoSliceDbn m = testutil::static_pair_model();
  bool threw = false;
  try {
    FlatFilter f(m, 2);  // 4 states > 2
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::TooLarge;
  }
  CHECK(threw);
}

TEST_CASE("support tracker narrows a tiny minesweeper board to the truth") {
  DomainModel d = build_minesweeper(2, 2, 1, 0.5);
  BeamStructure s = analyze_model(d.model);
  SupportTracker sets(s);

  // True map: the only mine sits at cell 3.
  std::vector<Value> map = {0, 0, 0, 1};
  for (int cell : {0, 1, 2}) {
    std::vector<Value> obs(4, 0);
    obs[cell] = minesweeper_token(d, cell, map);
    sets.observe(d.probe_actions[cell], obs);
  }
  CHECK_FALSE(sets.wiped_out());
  CHECK(sets.value_support(0) == std::vector<char>{1, 0});
  CHECK(sets.value_support(3) == std::vector<char>{0, 1});
}
