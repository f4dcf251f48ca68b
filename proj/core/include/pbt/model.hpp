#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pbt/rng.hpp"
#include "pbt/table.hpp"

namespace pbt {

using VarId = int;     // index into TwoSliceDbn::state_vars
using ObsId = int;     // index into TwoSliceDbn::obs_vars
using ActionId = int;  // index into TwoSliceDbn::actions

struct VariableDecl {
  std::string name;
  std::vector<std::string> values;  // value labels; domain is {0..values.size()-1}

  int domain_size() const { return static_cast<int>(values.size()); }
};

// Conditional table for one child under one action. Rows are indexed by the
// mixed-radix valuation of `parents` (first parent most significant); row r
// holds the child distribution at rows[r * child_domain + value].
//
// Transition tables condition on current-slice state variables; sensor tables
// condition on next-slice state variables. The slice is implied by which list
// the table lives in, and validated at parse time.
struct CondTable {
  std::vector<VarId> parents;
  std::vector<double> rows;

  size_t row_count(const std::vector<VariableDecl>& state_vars) const {
    size_t n = 1;
    for (VarId p : parents) n *= static_cast<size_t>(state_vars[p].domain_size());
    return n;
  }
};

// One executed step: the action taken and the full observation valuation
// (one value per observation variable) received after it.
struct HistoryStep {
  ActionId action = 0;
  std::vector<Value> obs;
};

using History = std::vector<HistoryStep>;

// A factored prior block: a normalized joint table over a small set of state
// variables. Blocks are pairwise disjoint and jointly cover the state vars,
// so the full prior is the product of the blocks.
struct PriorBlock {
  std::vector<VarId> vars;
  std::vector<double> table;  // mixed-radix over vars, first var most significant
};

// Per-action inverse transition supplied by a force_bd override: inverse[a][v']
// is the unique predecessor value, or nullopt when v' is unreachable under a.
struct ForcedInverse {
  std::vector<std::vector<std::optional<Value>>> inverse;
};

struct TwoSliceDbn {
  std::vector<VariableDecl> state_vars;
  std::vector<VariableDecl> obs_vars;
  std::vector<std::string> actions;
  // transitions[v][a]: distribution of v at t+1 given parents at t.
  // Tables are held through shared pointers so identical tables (e.g. an
  // action-independent sensor repeated for every action) are stored once.
  std::vector<std::vector<std::shared_ptr<const CondTable>>> transitions;
  // sensors[o][a]: distribution of observation o given parents at t+1.
  std::vector<std::vector<std::shared_ptr<const CondTable>>> sensors;
  std::vector<PriorBlock> priors;

  std::map<VarId, ForcedInverse> force_bd;
  std::set<VarId> force_sampled;

  int num_state_vars() const { return static_cast<int>(state_vars.size()); }
  int num_obs_vars() const { return static_cast<int>(obs_vars.size()); }
  int num_actions() const { return static_cast<int>(actions.size()); }

  std::optional<VarId> state_var_id(const std::string& name) const;
  std::optional<ObsId> obs_var_id(const std::string& name) const;
  std::optional<ActionId> action_id(const std::string& name) const;

  const CondTable& transition(VarId v, ActionId a) const { return *transitions[v][a]; }
  const CondTable& sensor(ObsId o, ActionId a) const { return *sensors[o][a]; }

  void set_transition(VarId v, ActionId a, std::shared_ptr<const CondTable> t) {
    transitions[v][a] = std::move(t);
  }
  void set_sensor(ObsId o, ActionId a, std::shared_ptr<const CondTable> t) {
    sensors[o][a] = std::move(t);
  }
};

// Structural validation: reference integrity, slice discipline, row counts,
// row normalization (1e-9), prior block disjoint cover and normalization,
// force_bd inverse well-formedness. Throws pbt::Error on violation.
void validate_model(const TwoSliceDbn& model);

// P(v' = next | parents(v) = parent_values under action a).
double transition_prob(const TwoSliceDbn& model, VarId v, ActionId a,
                       const std::vector<Value>& state, Value next);

// P(o = value | parents(o) drawn from next_state under action a).
double sensor_prob(const TwoSliceDbn& model, ObsId o, ActionId a,
                   const std::vector<Value>& next_state, Value value);

// Product over all state variables of transition_prob.
double joint_transition_prob(const TwoSliceDbn& model, ActionId a,
                             const std::vector<Value>& state, const std::vector<Value>& next);

// Product over all observation variables of sensor_prob.
double joint_sensor_prob(const TwoSliceDbn& model, ActionId a,
                         const std::vector<Value>& next_state, const std::vector<Value>& obs);

// Prior probability of a full state valuation (product over blocks).
double prior_prob(const TwoSliceDbn& model, const std::vector<Value>& state);

// Draw a full state from the prior.
std::vector<Value> sample_prior(const TwoSliceDbn& model, Rng& rng);

struct StepSample {
  std::vector<Value> next_state;
  std::vector<Value> obs;
};

// Draw x' ~ tr(.|x, a) then o ~ q(.|x', a). Deterministic given the rng state;
// variables are drawn in declaration order.
StepSample simulate_step(const TwoSliceDbn& model, const std::vector<Value>& state, ActionId a,
                         Rng& rng);

// ---- model file schema (JSON) ----
//
// {
//   "state_vars": [{"name": "A", "domain": ["0", "1"]}, ...],
//   "obs_vars":   [{"name": "O", "domain": ["0", "1"]}, ...],
//   "actions":    ["left", "right"],
//   "transitions": [{"child": "A", "action": "left" | "*",
//                    "parents": ["A", ...], "rows": [..flat..]}, ...],
//   "sensors":     [{"child": "O", "action": "*", "parents": ["A'", ...],
//                    "rows": [..flat..]}, ...],
//   "priors":      [{"vars": ["A", ...], "table": [..flat..]}, ...],
//   "force_bd":    {"A": {"left": ["1", "0", null], ...}},   // v' -> v by value name
//   "force_sampled": ["B", ...]
// }
//
// Transition parents live in slice t: a primed name ("A'") is rejected with
// BadParentSlice. Sensor parents live in slice t+1; the prime is optional and
// stripped. "action": "*" replicates a table across all actions. Rows are
// flat mixed-radix over parents (first parent most significant), child value
// fastest. Probabilities are decimal literals.
TwoSliceDbn parse_model_json(const std::string& text);
std::string model_to_json(const TwoSliceDbn& model);

}  // namespace pbt
