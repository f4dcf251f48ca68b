// Microbenchmarks for the hot paths: factor progression, the three marginal
// engines on a probed mine grid, and particle-filter stepping on the line
// domains. Run with --benchmark_filter=... to select a subset.

#include <benchmark/benchmark.h>

#include <vector>

#include "pbt/beams.hpp"
#include "pbt/domains.hpp"
#include "pbt/engines.hpp"
#include "pbt/factors.hpp"
#include "pbt/rng.hpp"
#include "pbt/tracker.hpp"

namespace {

using namespace pbt;

// Shared fixture: a 6x6 mine grid with three probes applied, plus the
// resulting factor set — the state every engine benchmark propagates from.
struct ProbedGrid {
  DomainModel d;
  BeamStructure s;
  FactorSet f;

  ProbedGrid() : d(build_minesweeper(6, 6, 6, 0.5)), s(analyze_model(d.model)) {
    Rng rng(7);
    std::vector<Value> map = draw_true_map(d, rng, 0);
    f = make_prior_factors(s, {});
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
  }
};

const ProbedGrid& probed_grid() {
  static ProbedGrid g;
  return g;
}

void BM_EnginePropagate(benchmark::State& state, EngineKind kind, int ac_m) {
  const ProbedGrid& g = probed_grid();
  EngineConfig cfg;
  cfg.kind = kind;
  cfg.ac_m = ac_m;
  MarginalEngine engine(g.s, cfg);
  for (auto _ : state) {
    engine.propagate(g.f);
    benchmark::DoNotOptimize(engine.var_marginal(0));
  }
}

void BM_FactorProgress(benchmark::State& state) {
  const ProbedGrid& g = probed_grid();
  Rng rng(11);
  std::vector<Value> map = draw_true_map(g.d, rng, 0);
  int cell = 14;  // interior probe: widest beam
  std::vector<Value> obs(g.d.model.num_obs_vars(), 0);
  obs[g.d.cell_obs[cell]] = minesweeper_token(g.d, cell, map);
  for (auto _ : state) {
    FactorSet f = g.f;
    RegressionContext ctx = RegressionContext::initial(g.s);
    progress_factors_exact(g.s, f, g.d.probe_actions[cell], obs, ctx);
    benchmark::DoNotOptimize(f);
  }
}

void BM_FilterStep(benchmark::State& state, DomainKind kind, int particles) {
  DomainModel d = kind == DomainKind::kLine3Slam ? build_line3_slam(16)
                                                 : build_minemapping(4, 4, 8);
  BeamStructure s = analyze_model(d.model);
  Rng rng(13);
  std::vector<Value> map = draw_true_map(d, rng);
  std::vector<Value> st = initial_state(d, map);
  // Pre-draw a fixed episode so every iteration replays the same updates.
  std::vector<ActionId> actions;
  std::vector<std::vector<Value>> observations;
  for (int t = 0; t < 32; ++t) {
    ActionId a = static_cast<ActionId>(rng.next_below(d.model.num_actions()));
    StepSample step = simulate_step(d.model, st, a, rng);
    std::vector<Value> obs = sample_observation(d, step.next_state, a, rng);
    st = step.next_state;
    actions.push_back(a);
    observations.push_back(obs);
  }
  TrackerConfig tc;
  tc.particles = particles;
  tc.proposal = ProposalKind::kOptimal;
  tc.seed = 17;
  std::int64_t steps = 0;
  for (auto _ : state) {
    ParticleFilter pf(s, tc);
    for (size_t t = 0; t < actions.size(); ++t) pf.observe(actions[t], observations[t]);
    benchmark::DoNotOptimize(pf.ess());
    steps += static_cast<std::int64_t>(actions.size());
  }
  state.SetItemsProcessed(steps);
}

BENCHMARK_CAPTURE(BM_EnginePropagate, jointree_6x6, EngineKind::kJointree, 0);
BENCHMARK_CAPTURE(BM_EnginePropagate, loopy_bp_6x6, EngineKind::kLoopyBp, 0);
BENCHMARK_CAPTURE(BM_EnginePropagate, iterated_ac0_6x6, EngineKind::kIteratedAc, 0);
BENCHMARK_CAPTURE(BM_EnginePropagate, iterated_ac1_6x6, EngineKind::kIteratedAc, 1);
BENCHMARK(BM_FactorProgress);
BENCHMARK_CAPTURE(BM_FilterStep, line3_16cells_16p, DomainKind::kLine3Slam, 16);
BENCHMARK_CAPTURE(BM_FilterStep, minemapping_4x4_32p, DomainKind::kMinemapping, 32);

}  // namespace

BENCHMARK_MAIN();
