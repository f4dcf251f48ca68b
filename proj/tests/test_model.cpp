#include <cmath>
#include <functional>

#include "doctest.h"
#include "pbt/model.hpp"
#include "test_util.hpp"

using namespace pbt;
using testutil::table;

namespace {

bool fails_with(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

}  // namespace

TEST_CASE("validate accepts a well-formed model") {
  TwoSliceDbn m = testutil::static_pair_model();
  CHECK_NOTHROW(validate_model(m));
}

TEST_CASE("validate rejects unnormalized rows") {
  TwoSliceDbn m = testutil::static_pair_model();
  m.set_transition(0, 0, table({0}, {0.7, 0.7, 0, 1}));
  CHECK(fails_with(ErrorCode::UnnormalizedRow, [&] { validate_model(m); }));
}

TEST_CASE("validate rejects wrong row counts") {
  TwoSliceDbn m = testutil::static_pair_model();
  m.set_transition(0, 0, table({0}, {1, 0}));  // one row, two parent values
  CHECK(fails_with(ErrorCode::BadArgument, [&] { validate_model(m); }));
}

TEST_CASE("validate rejects missing tables") {
  TwoSliceDbn m = testutil::static_pair_model();
  m.set_transition(1, 0, nullptr);
  CHECK(fails_with(ErrorCode::MissingTable, [&] { validate_model(m); }));

  TwoSliceDbn m2 = testutil::static_pair_model();
  m2.transitions.pop_back();  // no table list at all for variable B
  CHECK(fails_with(ErrorCode::MissingTable, [&] { validate_model(m2); }));
}

TEST_CASE("validate rejects out-of-range parents") {
  TwoSliceDbn m = testutil::static_pair_model();
  m.set_transition(0, 0, table({7}, {1, 0, 0, 1}));
  CHECK(fails_with(ErrorCode::DanglingReference, [&] { validate_model(m); }));
}

TEST_CASE("validate rejects broken prior partitions") {
  TwoSliceDbn m = testutil::static_pair_model();
  m.priors = {{{0}, {0.5, 0.5}}};  // B not covered
  CHECK(fails_with(ErrorCode::BadArgument, [&] { validate_model(m); }));

  TwoSliceDbn m2 = testutil::static_pair_model();
  m2.priors = {{{0, 1}, {0.25, 0.25, 0.25, 0.25}}, {{1}, {0.5, 0.5}}};  // B twice
  CHECK(fails_with(ErrorCode::BadArgument, [&] { validate_model(m2); }));

  TwoSliceDbn m3 = testutil::static_pair_model();
  m3.priors = {{{0}, {0.9, 0.2}}, {{1}, {0.5, 0.5}}};  // block does not sum to 1
  CHECK(fails_with(ErrorCode::UnnormalizedRow, [&] { validate_model(m3); }));
}

TEST_CASE("probability lookups multiply out correctly") {
  TwoSliceDbn m = testutil::static_pair_model(0.9);
  // Identity dynamics: staying is certain, flipping impossible.
  CHECK(transition_prob(m, 0, 0, {1, 0}, 1) == doctest::Approx(1.0));
  CHECK(transition_prob(m, 0, 0, {1, 0}, 0) == doctest::Approx(0.0));
  CHECK(joint_transition_prob(m, 0, {1, 0}, {1, 0}) == doctest::Approx(1.0));
  CHECK(joint_transition_prob(m, 0, {1, 0}, {1, 1}) == doctest::Approx(0.0));
  CHECK(sensor_prob(m, 0, 0, {1, 0}, 1) == doctest::Approx(0.9));
  CHECK(sensor_prob(m, 0, 0, {1, 0}, 0) == doctest::Approx(0.1));
  CHECK(joint_sensor_prob(m, 0, {0, 1}, {0}) == doctest::Approx(0.9));
  CHECK(prior_prob(m, {0, 1}) == doctest::Approx(0.25));
}

TEST_CASE("simulate_step is deterministic in the rng seed") {
  TwoSliceDbn m = testutil::static_pair_model();
  Rng a(42), b(42);
  StepSample sa = simulate_step(m, {0, 1}, 0, a);
  StepSample sb = simulate_step(m, {0, 1}, 0, b);
  CHECK(sa.next_state == sb.next_state);
  CHECK(sa.obs == sb.obs);
  CHECK(sa.next_state == std::vector<Value>{0, 1});  // identity dynamics
}

TEST_CASE("sample_prior respects block probabilities") {
  TwoSliceDbn m = testutil::static_pair_model();
  m.priors = {{{0}, {0.0, 1.0}}, {{1}, {1.0, 0.0}}};
  Rng rng(1);
  for (int i = 0; i < 10; ++i) CHECK(sample_prior(m, rng) == std::vector<Value>{1, 0});
}

TEST_CASE("json round-trip preserves the model") {
  Rng rng(7);
  TwoSliceDbn m = testutil::random_chain_model(rng).model;
  validate_model(m);
  std::string text = model_to_json(m);
  TwoSliceDbn back = parse_model_json(text);
  validate_model(back);

  REQUIRE(back.num_state_vars() == m.num_state_vars());
  REQUIRE(back.num_obs_vars() == m.num_obs_vars());
  REQUIRE(back.num_actions() == m.num_actions());
  for (VarId v = 0; v < m.num_state_vars(); ++v) {
    CHECK(back.state_vars[v].name == m.state_vars[v].name);
    for (ActionId a = 0; a < m.num_actions(); ++a) {
      REQUIRE(back.transition(v, a).parents == m.transition(v, a).parents);
      for (size_t i = 0; i < m.transition(v, a).rows.size(); ++i)
        CHECK(back.transition(v, a).rows[i] ==
              doctest::Approx(m.transition(v, a).rows[i]).epsilon(1e-12));
    }
  }
  for (ObsId o = 0; o < m.num_obs_vars(); ++o)
    for (ActionId a = 0; a < m.num_actions(); ++a) {
      REQUIRE(back.sensor(o, a).parents == m.sensor(o, a).parents);
      for (size_t i = 0; i < m.sensor(o, a).rows.size(); ++i)
        CHECK(back.sensor(o, a).rows[i] ==
              doctest::Approx(m.sensor(o, a).rows[i]).epsilon(1e-12));
    }
  REQUIRE(back.priors.size() == m.priors.size());
  for (size_t b = 0; b < m.priors.size(); ++b) {
    CHECK(back.priors[b].vars == m.priors[b].vars);
    for (size_t i = 0; i < m.priors[b].table.size(); ++i)
      CHECK(back.priors[b].table[i] == doctest::Approx(m.priors[b].table[i]).epsilon(1e-12));
  }
}

TEST_CASE("action-independent tables serialize once with a wildcard") {
  TwoSliceDbn m = testutil::static_pair_model();
  m.actions = {"look", "wait"};
  auto id0 = table({0}, {1, 0, 0, 1});
  auto id1 = table({1}, {1, 0, 0, 1});
  m.transitions = {{id0, id0}, {id1, id1}};
  auto sens = table({0}, {0.9, 0.1, 0.1, 0.9});
  m.sensors = {{sens, sens}};
  validate_model(m);

  std::string text = model_to_json(m);
  CHECK(text.find("\"*\"") != std::string::npos);
  TwoSliceDbn back = parse_model_json(text);
  validate_model(back);
  CHECK(back.transition(0, 0).rows == back.transition(0, 1).rows);
  CHECK(back.sensor(0, 0).rows == std::vector<double>{0.9, 0.1, 0.1, 0.9});
}

TEST_CASE("parser rejects primed transition parents") {
  std::string text = R"({
    "state_vars": [{"name": "A", "domain": ["0", "1"]}],
    "obs_vars": [{"name": "O", "domain": ["0", "1"]}],
    "actions": ["look"],
    "transitions": [{"child": "A", "action": "*", "parents": ["A'"],
                     "rows": [1, 0, 0, 1]}],
    "sensors": [{"child": "O", "action": "*", "parents": ["A"],
                 "rows": [0.9, 0.1, 0.1, 0.9]}],
    "priors": [{"vars": ["A"], "table": [0.5, 0.5]}]
  })";
  CHECK(fails_with(ErrorCode::BadParentSlice, [&] { parse_model_json(text); }));
}

TEST_CASE("parser rejects dangling names") {
  std::string text = R"({
    "state_vars": [{"name": "A", "domain": ["0", "1"]}],
    "obs_vars": [{"name": "O", "domain": ["0", "1"]}],
    "actions": ["look"],
    "transitions": [{"child": "Zed", "action": "*", "parents": ["A"],
                     "rows": [1, 0, 0, 1]}],
    "sensors": [{"child": "O", "action": "*", "parents": ["A"],
                 "rows": [0.9, 0.1, 0.1, 0.9]}],
    "priors": [{"vars": ["A"], "table": [0.5, 0.5]}]
  })";
  CHECK(fails_with(ErrorCode::DanglingReference, [&] { parse_model_json(text); }));
}

TEST_CASE("sensor parents accept an optional prime") {
  std::string text = R"({
    "state_vars": [{"name": "A", "domain": ["0", "1"]}],
    "obs_vars": [{"name": "O", "domain": ["0", "1"]}],
    "actions": ["look"],
    "transitions": [{"child": "A", "action": "*", "parents": ["A"],
                     "rows": [1, 0, 0, 1]}],
    "sensors": [{"child": "O", "action": "*", "parents": ["A'"],
                 "rows": [0.9, 0.1, 0.1, 0.9]}],
    "priors": [{"vars": ["A"], "table": [0.5, 0.5]}]
  })";
  TwoSliceDbn m = parse_model_json(text);
  CHECK(m.sensor(0, 0).parents == std::vector<VarId>{0});
}

TEST_CASE("override lists survive a round-trip") {
  TwoSliceDbn m = testutil::static_pair_model();
  m.force_sampled = {1};
  ForcedInverse inv;
  inv.inverse = {{Value{0}, Value{1}}};
  m.force_bd[0] = inv;
  std::string text = model_to_json(m);
  TwoSliceDbn back = parse_model_json(text);
  CHECK(back.force_sampled == std::set<VarId>{1});
  REQUIRE(back.force_bd.count(0) == 1);
  CHECK(back.force_bd[0].inverse[0][0] == Value{0});
  CHECK(back.force_bd[0].inverse[0][1] == Value{1});
}
