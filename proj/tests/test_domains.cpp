#include <cmath>
#include <set>

#include "doctest.h"
#include "pbt/beams.hpp"
#include "pbt/domains.hpp"
#include "pbt/oracles.hpp"

using namespace pbt;

namespace {

double binomial_pmf(int n, int k, double p) {
  double logc = std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
  return std::exp(logc + k * std::log(p) + (n - k) * std::log(1 - p));
}

}  // namespace

TEST_CASE("domain names round-trip") {
  for (const char* name : {"minesweeper", "line-slam-direct", "line-slam-split",
                           "line3-slam", "minemapping"})
    CHECK(std::string(domain_kind_name(domain_kind_from_name(name))) == name);
  CHECK_THROWS_AS(domain_kind_from_name("chess"), Error);
}

TEST_CASE("configuration labels") {
  CHECK(config_label(build_minesweeper(6, 6, 6)) == "6x6 6");
  CHECK(config_label(build_line3_slam(64)) == "1x64");
  CHECK(config_label(build_minemapping(6, 6, 32)) == "6x6 32");
}

TEST_CASE("minesweeper structure and tokens") {
  DomainModel d = build_minesweeper(6, 6, 6);
  validate_model(d.model);
  CHECK(d.cell_vars.size() == 36);
  CHECK(d.cell_obs.size() == 36);
  CHECK(d.probe_actions.size() == 36);
  CHECK_FALSE(d.location_var.has_value());
  CHECK(d.density == doctest::Approx(6.0 / 36.0));
  CHECK(d.model.priors[0].table[1] == doctest::Approx(6.0 / 36.0));

  // Token domains: neighborhood size + 2 (counts 0..size plus a mine token).
  CHECK(d.model.obs_vars[d.cell_obs[0]].domain_size() == 5);       // corner
  CHECK(d.model.obs_vars[d.cell_obs[1]].domain_size() == 7);       // edge
  CHECK(d.model.obs_vars[d.cell_obs[7]].domain_size() == 10);      // interior

  // Map with mines at cells 0 and 8 (row-major on 6x6: (0,0) and (1,2)).
  std::vector<Value> map(36, 0);
  map[0] = 1;
  map[8] = 1;
  CHECK(minesweeper_token(d, 1, map) == 2);   // neighbors include both mines
  CHECK(minesweeper_token(d, 7, map) == 2);
  CHECK(minesweeper_token(d, 35, map) == 0);
  CHECK(minesweeper_token(d, 0, map) == 4);   // mined corner: |nb| + 1 = 4
  CHECK(minesweeper_token(d, 8, map) == 9);   // mined interior: 8 + 1

  // Probing cell 1 reports its token there and silence elsewhere.
  std::vector<Value> state = initial_state(d, map);
  Rng rng(3);
  std::vector<Value> obs = sample_observation(d, state, d.probe_actions[1], rng);
  CHECK(obs[1] == 2);
  for (size_t o = 0; o < obs.size(); ++o)
    if (o != 1) CHECK(obs[o] == 0);
}

TEST_CASE("density override changes the prior only") {
  DomainModel d = build_minesweeper(4, 4, 8, 0.25);
  CHECK(d.density == doctest::Approx(0.25));
  CHECK(d.model.priors[3].table[1] == doctest::Approx(0.25));
  CHECK(d.mines == 8);
}

TEST_CASE("exact-count maps honor first-click safety") {
  DomainModel d = build_minesweeper(5, 5, 7);
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Value> map = draw_true_map(d, rng, /*safe_cell=*/12);
    CHECK(map[12] == 0);
    int mines = 0;
    for (Value v : map) mines += v;
    CHECK(mines == 7);
  }
}

TEST_CASE("mine placement without exclusion is uniform over cells") {
  DomainModel d = build_minesweeper(3, 3, 3);
  Rng rng(5);
  std::vector<int> hits(9, 0);
  const int trials = 3000;
  for (int t = 0; t < trials; ++t) {
    std::vector<Value> map = draw_true_map(d, rng);
    for (int c = 0; c < 9; ++c) hits[c] += map[c];
  }
  for (int c = 0; c < 9; ++c)
    CHECK(hits[c] == doctest::Approx(trials / 3.0).epsilon(0.12));
}

TEST_CASE("line domain structure") {
  DomainModel direct = build_line_slam_direct(4);
  validate_model(direct.model);
  CHECK(direct.cell_obs.size() == 1);
  CHECK(direct.start_cell == 2);
  CHECK(*direct.location_var == 0);
  CHECK(analyze_model(direct.model).causal_width == 5);

  DomainModel split = build_line_slam_split(4);
  validate_model(split.model);
  CHECK(split.cell_obs.size() == 4);
  BeamStructure s = analyze_model(split.model);
  CHECK(s.beam_count() == 4);
  CHECK(s.causal_width == 2);

  CHECK_THROWS_AS(build_line_slam_direct(30), Error);  // joint table too large
}

TEST_CASE("three-cell window readings get noisier near color boundaries") {
  DomainModel d = build_line3_slam(3);
  CHECK(line3_noise(d, 0, {0, 0, 1}) == 1);
  CHECK(line3_noise(d, 1, {0, 0, 1}) == 2);
  CHECK(line3_noise(d, 2, {0, 0, 1}) == 2);
  CHECK(line3_noise(d, 1, {1, 0, 1}) == 3);

  // Reading accuracy 0.9^noise, checked through the sensor table itself.
  std::vector<Value> state = {1, 1, 0, 1};  // agent at cell 1, map 1,0,1
  CHECK(sensor_prob(d.model, 1, 0, state, 0) == doctest::Approx(0.729));
  CHECK(sensor_prob(d.model, 1, 0, state, 1) == doctest::Approx(0.271));
  // Off-agent cells read fair coins.
  CHECK(sensor_prob(d.model, 2, 0, state, 0) == doctest::Approx(0.5));
}

TEST_CASE("count sensor is the indicator convolution") {
  DomainModel d = build_minemapping(3, 3, 4);
  std::vector<Value> all_mines(9, 1), all_clear(9, 0);
  std::vector<double> hot = minemapping_count_distribution(d, 4, all_mines);
  std::vector<double> cold = minemapping_count_distribution(d, 4, all_clear);
  REQUIRE(hot.size() == 10);
  REQUIRE(cold.size() == 10);
  for (int k = 0; k <= 9; ++k) {
    CHECK(hot[k] == doctest::Approx(binomial_pmf(9, k, 0.9)));
    CHECK(cold[k] == doctest::Approx(binomial_pmf(9, k, 0.1)));
  }
  // Corner blocks have four cells; counts above four are impossible there.
  std::vector<double> corner = minemapping_count_distribution(d, 0, all_mines);
  double above = 0;
  for (int k = 5; k <= 9; ++k) above += corner[k];
  CHECK(above == 0.0);
  CHECK(corner[4] == doctest::Approx(std::pow(0.9, 4)));
}

TEST_CASE("mapping grids share one uninformative observation row shape") {
  DomainModel d = build_minemapping(6, 6, 18);
  validate_model(d.model);
  BeamStructure s = analyze_model(d.model);
  CHECK(s.beam_count() == 16);
  CHECK(s.causal_width == 10);
  CHECK(s.sampled_union == std::vector<VarId>{*d.location_var});
  CHECK(s.prediction_preserves_factors);
  // All observation variables live on one shared token domain.
  for (ObsId o : d.cell_obs) CHECK(d.model.obs_vars[o].domain_size() == 10);

  // The same reading is broadcast to every observation variable.
  std::vector<Value> map(36, 0);
  map[d.start_cell] = 0;
  std::vector<Value> state = initial_state(d, map);
  Rng rng(23);
  std::vector<Value> obs = sample_observation(d, state, 0, rng);
  for (size_t o = 1; o < obs.size(); ++o) CHECK(obs[o] == obs[0]);
}

TEST_CASE("tiny mapping grids happen to be exactly trackable") {
  DomainModel d = build_minemapping(3, 3, 2);
  BeamStructure s = analyze_model(d.model);
  CHECK(s.beam_count() == 1);
  CHECK(s.sampled_union.empty());  // the location is internal to the one block
}

TEST_CASE("split observations are jointly proportional to the direct model") {
  DomainModel split = build_line_slam_split(3);
  DomainModel direct = build_line_slam_direct(3);
  FlatFilter fs(split.model), fd(direct.model);

  Rng world(77);
  std::vector<Value> map = draw_true_map(split, world);
  std::vector<Value> state = initial_state(split, map);
  for (int step = 0; step < 6; ++step) {
    ActionId a = static_cast<ActionId>(world.next_below(2));
    StepSample sim = simulate_step(split.model, state, a, world);
    state = sim.next_state;
    std::vector<Value> obs = sample_observation(split, state, a, world);
    fs.observe(a, obs);
    fd.observe(a, {obs[0]});  // the one real reading
    for (VarId v = 0; v < split.model.num_state_vars(); ++v) {
      std::vector<double> ms = fs.marginal({v});
      std::vector<double> md = fd.marginal({v});
      for (size_t i = 0; i < ms.size(); ++i)
        CHECK(ms[i] == doctest::Approx(md[i]).epsilon(1e-9));
    }
  }
}
