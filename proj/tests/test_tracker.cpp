#include <cmath>
#include <set>

#include "doctest.h"
#include "pbt/domains.hpp"
#include "pbt/tracker.hpp"
#include "test_util.hpp"

using namespace pbt;
using testutil::table;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// One binary location L that mixes uniformly each step (so it cannot be
// regressed and must be sampled), plus one inert map bit M. A single sensor
// reads L with 90% accuracy. The location prior is a point mass at 0.
struct TinyLocalization {
  TwoSliceDbn model;
  BeamStructure s;

  TinyLocalization() {
    model.state_vars = {testutil::binary_var("L"), testutil::binary_var("M")};
    model.obs_vars = {testutil::binary_var("O")};
    model.actions = {"move"};
    model.transitions = {{table({0}, {0.5, 0.5, 0.5, 0.5})}, {table({1}, {1, 0, 0, 1})}};
    model.sensors = {{table({0}, {0.9, 0.1, 0.1, 0.9})}};
    model.priors = {{{0}, {1.0, 0.0}}, {{1}, {0.5, 0.5}}};
    model.force_sampled = {0};
    validate_model(model);
    s = analyze_model(model);
    REQUIRE(s.sampled_union == std::vector<VarId>{0});
  }
};

}  // namespace

TEST_CASE("effective sample size of a skewed weight vector") {
  CHECK(effective_sample_size({0.5, 0.3, 0.2}) == doctest::Approx(1.0 / 0.38));
  CHECK(effective_sample_size({1.0, 0.0}) == doctest::Approx(1.0));
  CHECK(effective_sample_size({0.25, 0.25, 0.25, 0.25}) == doctest::Approx(4.0));
}

TEST_CASE("systematic resampling allocates children proportionally") {
  CHECK(systematic_resample_counts({0.75, 0.25}, 4, 0.5) == std::vector<int>{3, 1});
  CHECK(systematic_resample_counts({0.5, 0.5}, 4, 0.0) == std::vector<int>{2, 2});
  CHECK(systematic_resample_counts({1.0, 0.0}, 4, 0.999) == std::vector<int>{4, 0});
  // Counts always sum to n.
  std::vector<int> c = systematic_resample_counts({0.4, 0.35, 0.25}, 7, 0.123);
  int total = 0;
  for (int x : c) total += x;
  CHECK(total == 7);
}

TEST_CASE("resample policies parse and print") {
  ResamplePolicy never = ResamplePolicy::parse("never");
  CHECK_FALSE(never.enabled);
  CHECK(never.to_string() == "never");
  ResamplePolicy half = ResamplePolicy::parse("ess:0.5");
  CHECK(half.enabled);
  CHECK(half.ess_fraction == doctest::Approx(0.5));
  CHECK(half.to_string() == "ess:0.5");
  CHECK(ResamplePolicy::parse("ess:0.25").ess_fraction == doctest::Approx(0.25));
  CHECK_THROWS_AS(ResamplePolicy::parse("sometimes"), Error);
  CHECK_THROWS_AS(ResamplePolicy::parse("ess:nope"), Error);
}

TEST_CASE("proposal names parse") {
  CHECK(proposal_from_name("motion") == ProposalKind::kMotion);
  CHECK(proposal_from_name("optimal") == ProposalKind::kOptimal);
  CHECK_THROWS_AS(proposal_from_name("psychic"), Error);
}

TEST_CASE("motion distribution follows the sampled transition row") {
  TinyLocalization t;
  FactorSet f = make_prior_factors(t.s, {0});
  std::vector<double> d = motion_distribution(t.s, f, {0}, 0);
  CHECK(d[0] == doctest::Approx(0.5));
  CHECK(d[1] == doctest::Approx(0.5));
}

TEST_CASE("motion distribution on a four-cell ring") {
  TwoSliceDbn m;
  m.state_vars = {{"L", {"0", "1", "2", "3"}}};
  m.obs_vars = {{"O", {"0", "1", "2", "3"}}};
  m.actions = {"step"};
  // Drift to either ring neighbor with probability 1/2.
  m.transitions = {{table({0}, {0, 0.5, 0, 0.5,
                                0.5, 0, 0.5, 0,
                                0, 0.5, 0, 0.5,
                                0.5, 0, 0.5, 0})}};
  m.sensors = {{table({0}, {0.25, 0.25, 0.25, 0.25,
                            0.25, 0.25, 0.25, 0.25,
                            0.25, 0.25, 0.25, 0.25,
                            0.25, 0.25, 0.25, 0.25})}};
  m.priors = {{{0}, {1, 0, 0, 0}}};
  m.force_sampled = {0};
  validate_model(m);
  BeamStructure s = analyze_model(m);
  FactorSet f = make_prior_factors(s, {0});
  CHECK(motion_distribution(s, f, {2}, 0) == std::vector<double>{0, 0.5, 0, 0.5});
  CHECK(motion_distribution(s, f, {1}, 0) == std::vector<double>{0.5, 0, 0.5, 0});
}

TEST_CASE("observation likelihood weighs candidate locations") {
  TinyLocalization t;
  FactorSet f = make_prior_factors(t.s, {0});
  RegressionContext ctx = RegressionContext::initial(t.s);
  ctx.u_now = {0};
  ctx.u_next = {0};
  CHECK(observation_likelihood(t.s, f, 0, {0}, ctx) == doctest::Approx(0.9));
  ctx.u_next = {1};
  CHECK(observation_likelihood(t.s, f, 0, {0}, ctx) == doctest::Approx(0.1));

  // Combining motion and likelihood yields the informed proposal (0.9, 0.1).
  std::vector<double> motion = motion_distribution(t.s, f, {0}, 0);
  std::vector<double> optimal(2);
  for (int v = 0; v < 2; ++v) {
    ctx.u_next = {v};
    optimal[v] = motion[v] * observation_likelihood(t.s, f, 0, {0}, ctx);
  }
  normalize_vector(optimal);
  CHECK(optimal[0] == doctest::Approx(0.9));
  CHECK(optimal[1] == doctest::Approx(0.1));
}

TEST_CASE("the filter tracks the informed proposal with equal weights") {
  TinyLocalization t;
  TrackerConfig cfg;
  cfg.particles = 4000;
  cfg.proposal = ProposalKind::kOptimal;
  cfg.seed = 7;
  ParticleFilter pf(t.s, cfg);
  EngineConfig ecfg;
  MarginalEngine engine(t.s, ecfg);

  pf.observe(0, {0});
  CHECK(pf.ess() == doctest::Approx(4000.0));  // one group, equal weights
  std::vector<double> loc = pf.query_marginal({0}, engine);
  CHECK(loc[0] == doctest::Approx(0.9).epsilon(0.035));
}

TEST_CASE("motion proposal weights by likelihood; resampling restores balance") {
  TinyLocalization t;
  TrackerConfig cfg;
  cfg.particles = 500;
  cfg.proposal = ProposalKind::kMotion;
  cfg.resample = ResamplePolicy::parse("never");
  cfg.seed = 11;
  ParticleFilter pf(t.s, cfg);
  pf.observe(0, {0});
  CHECK(pf.ess() < 499.0);  // 0.9 / 0.1 weights cannot stay balanced

  TrackerConfig cfg2 = cfg;
  cfg2.resample = ResamplePolicy::parse("ess:1.0");
  ParticleFilter pf2(t.s, cfg2);
  pf2.observe(0, {0});
  CHECK(pf2.ess() == doctest::Approx(500.0));  // forced resample rebalances
}

TEST_CASE("models without sampled variables collapse to one exact particle") {
  TwoSliceDbn m = testutil::static_pair_model();
  BeamStructure s = analyze_model(m);
  TrackerConfig cfg;
  cfg.particles = 100;
  ParticleFilter pf(s, cfg);
  CHECK(pf.particles().size() == 1);
  EngineConfig ecfg;
  MarginalEngine engine(s, ecfg);
  pf.observe(0, {1});
  std::vector<double> a = pf.query_marginal({0}, engine);
  CHECK(a[0] == doctest::Approx(0.1));
  CHECK(a[1] == doctest::Approx(0.9));
}

TEST_CASE("invalid particle counts are rejected") {
  TinyLocalization t;
  TrackerConfig cfg;
  cfg.particles = 0;
  CHECK_THROWS_AS(ParticleFilter(t.s, cfg), Error);
}

TEST_CASE("same seed, same trajectory; particles in a group share factors") {
  DomainModel d = build_line_slam_split(4);
  BeamStructure s = analyze_model(d.model);
  TrackerConfig cfg;
  cfg.particles = 32;
  cfg.seed = 42;
  ParticleFilter a(s, cfg), b(s, cfg);

  Rng world(5);
  std::vector<Value> state = initial_state(d, draw_true_map(d, world));
  for (int step = 0; step < 4; ++step) {
    ActionId act = static_cast<ActionId>(world.next_below(d.model.num_actions()));
    StepSample sim = simulate_step(d.model, state, act, world);
    state = sim.next_state;
    std::vector<Value> obs = sample_observation(d, state, act, world);
    a.observe(act, obs);
    b.observe(act, obs);
  }
  for (size_t i = 0; i < a.particles().size(); ++i) {
    CHECK(a.particles()[i].u == b.particles()[i].u);
    CHECK(a.particles()[i].weight == b.particles()[i].weight);
  }
  // Group members share their factor tables by pointer.
  for (size_t i = 0; i < a.particles().size(); ++i)
    for (size_t j = i + 1; j < a.particles().size(); ++j)
      if (a.particles()[i].group == a.particles()[j].group) {
        CHECK(a.particles()[i].factors.get() == a.particles()[j].factors.get());
        CHECK(a.particles()[i].u == a.particles()[j].u);
      }
}

TEST_CASE("batch marginals agree with one-at-a-time queries") {
  DomainModel d = build_line_slam_split(4);
  BeamStructure s = analyze_model(d.model);
  TrackerConfig cfg;
  cfg.particles = 64;
  cfg.seed = 9;
  ParticleFilter pf(s, cfg);
  EngineConfig ecfg;
  MarginalEngine engine(s, ecfg);

  Rng world(31);
  std::vector<Value> state = initial_state(d, draw_true_map(d, world));
  for (int step = 0; step < 5; ++step) {
    ActionId act = static_cast<ActionId>(world.next_below(d.model.num_actions()));
    StepSample sim = simulate_step(d.model, state, act, world);
    state = sim.next_state;
    pf.observe(act, sample_observation(d, state, act, world));
  }

  std::vector<VarId> targets = d.cell_vars;
  targets.push_back(*d.location_var);
  std::vector<std::vector<double>> batch = pf.query_var_marginals(targets, engine);
  REQUIRE(batch.size() == targets.size());
  for (size_t k = 0; k < targets.size(); ++k) {
    std::vector<double> single = pf.query_marginal({targets[k]}, engine);
    CHECK(max_abs_diff(batch[k], single) < 1e-12);
  }
}
