#include <climits>
#include <cmath>

#include "doctest.h"
#include "pbt/domains.hpp"
#include "pbt/engines.hpp"
#include "pbt/factors.hpp"
#include "pbt/oracles.hpp"
#include "test_util.hpp"

using namespace pbt;
using testutil::table;

namespace {

std::vector<int> domains_of(const TwoSliceDbn& m) {
  std::vector<int> d;
  for (const auto& v : m.state_vars) d.push_back(v.domain_size());
  return d;
}

// Marginal of `target` computed by materializing the full product.
std::vector<double> brute_marginal(const FactorSet& f, const TwoSliceDbn& m,
                                   const std::vector<VarId>& target) {
  std::vector<VarId> out_vars;
  Table joint = assemble_joint(f, domains_of(m), out_vars);
  std::vector<size_t> pos;
  std::vector<int> sizes;
  for (VarId v : target) {
    size_t k = std::lower_bound(out_vars.begin(), out_vars.end(), v) - out_vars.begin();
    pos.push_back(k);
    sizes.push_back(joint.space.sizes[k]);
  }
  DiscreteSpace tspace(sizes);
  std::vector<double> out(tspace.total, 0.0);
  std::vector<Value> vals, tvals(target.size());
  for (size_t i = 0; i < joint.v.size(); ++i) {
    joint.space.valuation_of(i, vals);
    for (size_t k = 0; k < pos.size(); ++k) tvals[k] = vals[pos[k]];
    out[tspace.index_of(tvals)] += joint.v[i];
  }
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Two overlapping blocks {A,B} and {B,C} with handcrafted belief tables.
struct PairOfBlocks {
  TwoSliceDbn model;
  BeamStructure s;
  FactorSet f;

  PairOfBlocks() {
    model.state_vars = {testutil::binary_var("A"), testutil::binary_var("B"),
                        testutil::binary_var("C")};
    model.obs_vars = {testutil::binary_var("O1"), testutil::binary_var("O2")};
    model.actions = {"look"};
    model.transitions = {{table({0}, {1, 0, 0, 1})}, {table({1}, {1, 0, 0, 1})},
                         {table({2}, {1, 0, 0, 1})}};
    std::vector<double> rows = {0.9, 0.1, 0.1, 0.9, 0.1, 0.9, 0.9, 0.1};
    model.sensors = {{table({0, 1}, rows)}, {table({1, 2}, rows)}};
    model.priors = {{{0}, {0.5, 0.5}}, {{1}, {0.5, 0.5}}, {{2}, {0.5, 0.5}}};
    validate_model(model);
    s = analyze_model(model);
    f = make_prior_factors(s, {});
  }
};

}  // namespace

TEST_CASE("probability ranks follow the defining inequality") {
  CHECK(kappa_of(1.0, 0.1) == 0);
  CHECK(kappa_of(0.5, 0.1) == 0);
  CHECK(kappa_of(0.11, 0.1) == 0);
  CHECK(kappa_of(0.1, 0.1) == 1);   // strict inequality: 0.1 < 0.1 fails
  CHECK(kappa_of(0.05, 0.1) == 1);
  CHECK(kappa_of(0.009, 0.1) == 2);
  CHECK(kappa_of(0.0, 0.1) == INT_MAX);
  CHECK(kappa_of(-1.0, 0.1) == INT_MAX);
  CHECK(kappa_of(0.3, 0.5) == 1);   // 0.5 < 0.3 fails, 0.25 < 0.3 holds
}

TEST_CASE("engine names parse and print") {
  CHECK(engine_kind_from_name("jt") == EngineKind::kJointree);
  CHECK(engine_kind_from_name("bp") == EngineKind::kLoopyBp);
  CHECK(engine_kind_from_name("ac") == EngineKind::kIteratedAc);
  CHECK(std::string(engine_kind_name(EngineKind::kLoopyBp)) == "bp");
  CHECK_THROWS_AS(engine_kind_from_name("nope"), Error);
}

TEST_CASE("bad damping is rejected at construction") {
  PairOfBlocks pb;
  EngineConfig cfg;
  cfg.kind = EngineKind::kLoopyBp;
  cfg.bp_damping = 1.0;
  CHECK_THROWS_AS(MarginalEngine(pb.s, cfg), Error);
  cfg.bp_damping = -0.1;
  CHECK_THROWS_AS(MarginalEngine(pb.s, cfg), Error);
}

TEST_CASE("join tree marginals match brute force on random chain models") {
  Rng rng(314);
  for (int trial = 0; trial < 10; ++trial) {
    testutil::ChainModel cm = testutil::random_chain_model(rng);
    BeamStructure s = analyze_model(cm.model);
    FactorSet f = make_prior_factors(s, {});

    // Walk a few steps so the factors carry real correlations.
    RegressionContext ctx = RegressionContext::initial(s);
    std::vector<Value> state = sample_prior(cm.model, rng);
    for (int step = 0; step < 3; ++step) {
      ActionId a = static_cast<ActionId>(rng.next_below(cm.model.num_actions()));
      StepSample sim = simulate_step(cm.model, state, a, rng);
      state = sim.next_state;
      progress_factors_exact(s, f, a, sim.obs, ctx);
      ctx.advance(s, a, sim.obs);
    }

    EngineConfig cfg;
    cfg.kind = EngineKind::kJointree;
    MarginalEngine jt(s, cfg);
    jt.propagate(f);
    for (VarId v = 0; v < cm.model.num_state_vars(); ++v) {
      CHECK(max_abs_diff(jt.marginal({v}), brute_marginal(f, cm.model, {v})) < 1e-9);
      CHECK(max_abs_diff(jt.var_marginal(v), jt.marginal({v})) == 0.0);
    }
    // Two-variable targets inside one block.
    for (const Beam& b : s.beams)
      if (b.vars.size() >= 2) {
        std::vector<VarId> target = {b.vars[0], b.vars[1]};
        CHECK(max_abs_diff(jt.marginal(target), brute_marginal(f, cm.model, target)) < 1e-9);
      }
  }
}

TEST_CASE("belief propagation is exact on tree-structured block graphs") {
  Rng rng(2718);
  for (int trial = 0; trial < 10; ++trial) {
    testutil::ChainModel cm = testutil::random_chain_model(rng, 8, /*single_var_overlaps=*/true);
    BeamStructure s = analyze_model(cm.model);
    FactorSet f = make_prior_factors(s, {});
    RegressionContext ctx = RegressionContext::initial(s);
    std::vector<Value> state = sample_prior(cm.model, rng);
    for (int step = 0; step < 3; ++step) {
      ActionId a = static_cast<ActionId>(rng.next_below(cm.model.num_actions()));
      StepSample sim = simulate_step(cm.model, state, a, rng);
      state = sim.next_state;
      progress_factors_exact(s, f, a, sim.obs, ctx);
      ctx.advance(s, a, sim.obs);
    }

    EngineConfig jt_cfg, bp_cfg;
    jt_cfg.kind = EngineKind::kJointree;
    bp_cfg.kind = EngineKind::kLoopyBp;
    MarginalEngine jt(s, jt_cfg), bp(s, bp_cfg);
    jt.propagate(f);
    bp.propagate(f);
    CHECK(bp.converged());
    CHECK(bp.iterations() > 0);
    for (VarId v = 0; v < cm.model.num_state_vars(); ++v)
      CHECK(max_abs_diff(bp.marginal({v}), jt.marginal({v})) < 1e-6);
  }
}

TEST_CASE("rank masses: one level of refinement mixes 10:1") {
  // Single static binary variable with raw masses 0.9 and 0.09 (ranks 0, 1).
  TwoSliceDbn m;
  m.state_vars = {testutil::binary_var("A")};
  m.obs_vars = {testutil::binary_var("O")};
  m.actions = {"look"};
  m.transitions = {{table({0}, {1, 0, 0, 1})}};
  m.sensors = {{table({0}, {0.9, 0.1, 0.1, 0.9})}};
  m.priors = {{{0}, {0.5, 0.5}}};
  BeamStructure s = analyze_model(m);
  FactorSet f = make_prior_factors(s, {});
  f[0].probs = {0.9, 0.09};

  EngineConfig cfg;
  cfg.kind = EngineKind::kIteratedAc;
  cfg.ac_epsilon = 0.1;

  cfg.ac_m = 0;  // only the top rank survives
  MarginalEngine ac0(s, cfg);
  ac0.propagate(f);
  CHECK(ac0.marginal({0}) == std::vector<double>{1.0, 0.0});
  CHECK(ac0.ac_cell_levels()[0] == std::vector<int>{0, -1});

  cfg.ac_m = 1;  // the second rank enters one level later with mass eps^1
  MarginalEngine ac1(s, cfg);
  ac1.propagate(f);
  std::vector<double> got = ac1.marginal({0});
  CHECK(got[0] == doctest::Approx(10.0 / 11.0));
  CHECK(got[1] == doctest::Approx(1.0 / 11.0));
  CHECK(ac1.ac_cell_levels()[0] == std::vector<int>{0, 1});
}

TEST_CASE("arc consistency prunes values unsupported by a neighbor block") {
  PairOfBlocks pb;
  // Block {A,B} believes B=0; block {B,C} is uniform. The B=1 half of the
  // second block must die, leaving C uniform and B pinned.
  pb.f[0].probs = {0.5, 0.0, 0.5, 0.0};
  EngineConfig cfg;
  cfg.kind = EngineKind::kIteratedAc;
  cfg.ac_m = 0;
  MarginalEngine ac(pb.s, cfg);
  ac.propagate(pb.f);
  CHECK(ac.marginal({1}) == std::vector<double>{1.0, 0.0});
  std::vector<double> c = ac.marginal({2});
  CHECK(c[0] == doctest::Approx(0.5));
  CHECK(c[1] == doctest::Approx(0.5));
  // Cells (B=1, *) of the second block never survive.
  CHECK(ac.ac_cell_levels()[1] == std::vector<int>{0, 0, -1, -1});
}

TEST_CASE("contradictory blocks wipe out") {
  PairOfBlocks pb;
  pb.f[0].probs = {0.5, 0.0, 0.5, 0.0};  // B = 0
  pb.f[1].probs = {0.0, 0.0, 0.5, 0.5};  // B = 1
  EngineConfig cfg;
  cfg.kind = EngineKind::kIteratedAc;
  cfg.ac_m = 0;
  MarginalEngine ac(pb.s, cfg);
  bool threw = false;
  try {
    ac.propagate(pb.f);
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::WipeOut;
  }
  CHECK(threw);
}

TEST_CASE("clique size guard") {
  PairOfBlocks pb;
  EngineConfig cfg;
  cfg.kind = EngineKind::kJointree;
  cfg.max_clique_cells = 2;  // even a single binary pair needs 4 cells
  bool threw = false;
  try {
    MarginalEngine jt(pb.s, cfg);
    jt.propagate(pb.f);
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::TreewidthExceeded;
  }
  CHECK(threw);
}

TEST_CASE("queries outside a single block are refused") {
  PairOfBlocks pb;
  EngineConfig cfg;
  MarginalEngine jt(pb.s, cfg);
  jt.propagate(pb.f);
  bool threw = false;
  try {
    jt.marginal({0, 2});  // A and C never share a block
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::TargetSpansBeams;
  }
  CHECK(threw);
}

TEST_CASE("repeated propagation starts from fresh state") {
  PairOfBlocks pb;
  for (EngineKind kind :
       {EngineKind::kJointree, EngineKind::kLoopyBp, EngineKind::kIteratedAc}) {
    EngineConfig cfg;
    cfg.kind = kind;
    MarginalEngine e(pb.s, cfg);
    e.propagate(pb.f);
    std::vector<double> uniform = e.marginal({1});
    FactorSet pinned = pb.f;
    pinned[0].probs = {0.5, 0.0, 0.5, 0.0};
    e.propagate(pinned);
    std::vector<double> after = e.marginal({1});
    e.propagate(pb.f);
    std::vector<double> again = e.marginal({1});
    CHECK(uniform[0] == doctest::Approx(0.5));
    CHECK(after[0] == doctest::Approx(1.0));
    CHECK(max_abs_diff(uniform, again) < 1e-12);
  }
}

TEST_CASE("level tables grow with the level and exclude zero-mass cells") {
  PairOfBlocks pb;
  pb.f[0].probs = {0.9, 0.09, 0.01, 0.0};

  auto l0 = build_level_tables(pb.f, 0.1, 0);
  auto l1 = build_level_tables(pb.f, 0.1, 1);
  auto l2 = build_level_tables(pb.f, 0.1, 2);
  auto l9 = build_level_tables(pb.f, 0.1, 9);
  CHECK(l0[0] == std::vector<char>{1, 0, 0, 0});
  CHECK(l1[0] == std::vector<char>{1, 1, 0, 0});
  CHECK(l2[0] == std::vector<char>{1, 1, 1, 0});
  // Zero-mass cells never join, no matter how deep the level.
  CHECK(l9[0] == std::vector<char>{1, 1, 1, 0});
  for (const auto& levels : {std::pair{l0, l1}, std::pair{l1, l2}, std::pair{l2, l9}})
    for (size_t j = 0; j < levels.first.size(); ++j)
      for (size_t c = 0; c < levels.first[j].size(); ++c)
        if (levels.first[j][c]) CHECK(levels.second[j][c]);

  // Ranks are offset per block: uniformly small masses still populate level 0.
  pb.f[1].probs = {0.004, 0.004, 0.004, 0.004};
  auto offset = build_level_tables(pb.f, 0.1, 0);
  CHECK(offset[1] == std::vector<char>{1, 1, 1, 1});

  CHECK_THROWS_AS(build_level_tables(pb.f, 0.1, -1), Error);
}

TEST_CASE("mask-level arc consistency matches the engine's first level") {
  PairOfBlocks pb;
  pb.f[0].probs = {0.5, 0.0, 0.5, 0.0};  // B = 0

  auto masks = arc_consistency(pb.s, build_level_tables(pb.f, 0.1, 0));
  CHECK(masks[0] == std::vector<char>{1, 0, 1, 0});
  CHECK(masks[1] == std::vector<char>{1, 1, 0, 0});

  EngineConfig cfg;
  cfg.kind = EngineKind::kIteratedAc;
  cfg.ac_m = 0;
  MarginalEngine ac(pb.s, cfg);
  ac.propagate(pb.f);
  for (int j = 0; j < pb.s.beam_count(); ++j)
    for (size_t c = 0; c < masks[j].size(); ++c)
      CHECK((ac.ac_cell_levels()[j][c] >= 0) == (masks[j][c] != 0));
}

TEST_CASE("mask-level arc consistency: contradictions empty both sides") {
  PairOfBlocks pb;
  std::vector<std::vector<char>> tables = {{1, 0, 1, 0},   // B = 0
                                           {0, 0, 1, 1}};  // B = 1
  auto pruned = arc_consistency(pb.s, tables);
  CHECK(pruned[0] == std::vector<char>{0, 0, 0, 0});
  CHECK(pruned[1] == std::vector<char>{0, 0, 0, 0});
}

TEST_CASE("mask-level arc consistency: blocks sharing nothing pass through") {
  TwoSliceDbn m = testutil::static_pair_model();
  BeamStructure s = analyze_model(m);
  REQUIRE(s.beam_count() == 2);
  std::vector<std::vector<char>> tables = {{1, 0}, {0, 1}};
  CHECK(arc_consistency(s, tables) == tables);
}

TEST_CASE("loopy propagation tracks exact cell marginals on a probed grid") {
  // Loopy regression baseline: a 4x4 mine grid after three probes. The block
  // graph has cycles, so propagation is approximate; per-cell total-variation
  // against the exact engine stays within 0.05 on this instance.
  DomainModel d = build_minesweeper(4, 4, 4);
  BeamStructure s = analyze_model(d.model);
  Rng rng(20240817);
  std::vector<Value> map = draw_true_map(d, rng, 5);
  FactorSet f = make_prior_factors(s, {});
  RegressionContext ctx = RegressionContext::initial(s);
  int probed = 0;
  for (int cell = 0; cell < d.cells() && probed < 3; ++cell) {
    if (map[cell] == 1) continue;
    std::vector<Value> obs(d.model.num_obs_vars(), 0);
    obs[d.cell_obs[cell]] = minesweeper_token(d, cell, map);
    progress_factors_exact(s, f, d.probe_actions[cell], obs, ctx);
    ctx.advance(s, d.probe_actions[cell], obs);
    ++probed;
  }
  REQUIRE(probed == 3);

  EngineConfig jt_cfg, bp_cfg;
  bp_cfg.kind = EngineKind::kLoopyBp;
  MarginalEngine jt(s, jt_cfg), bp(s, bp_cfg);
  jt.propagate(f);
  bp.propagate(f);
  double worst = 0.0;
  for (VarId v : d.cell_vars) {
    std::vector<double> exact = jt.var_marginal(v);
    std::vector<double> approx = bp.var_marginal(v);
    double tv = 0.0;
    for (size_t k = 0; k < exact.size(); ++k) tv += std::abs(exact[k] - approx[k]);
    worst = std::max(worst, 0.5 * tv);
  }
  CHECK(worst <= 0.05);
}
