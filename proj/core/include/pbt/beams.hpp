#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pbt/model.hpp"

namespace pbt {

using BeamId = int;

// How an external variable can be regressed one step back in time.
enum class BdClass {
  kStatic,                 // identity transition under every action
  kFullyObservable,        // a noiseless injective sensor reveals it every step
  kDetermined,             // point prior + deterministic transitions (closed set)
  kInjectiveDeterministic, // per-action value permutation, invert by table
  kForced,                 // force_bd override, invert by supplied table
  kSampled,                // none of the above: handled by the particle layer
};

const char* bd_class_name(BdClass c);

struct Beam {
  BeamId index = 0;
  std::vector<VarId> vars;      // sorted member state variables
  std::vector<ObsId> obs;       // observation variables owned by this beam
};

// Compiled per-beam factorization and variable partition for a model.
//
// Each beam is a causally closed variable set. Every state variable is owned
// by exactly one beam (its own if internal, the lowest-index containing beam
// if external); the product of per-beam owned CPTs reconstructs the full
// transition and sensor models.
struct BeamStructure {
  const TwoSliceDbn* model = nullptr;
  std::vector<Beam> beams;

  // Partition of each beam's variables.
  std::vector<std::vector<VarId>> internal_vars;   // in this beam only
  std::vector<std::vector<VarId>> external_bd;     // shared, regressable
  std::vector<std::vector<VarId>> sampled_vars;    // shared, not regressable

  std::vector<VarId> sampled_union;                // all sampled vars, sorted
  std::map<VarId, BdClass> bd_class;               // externals only
  std::vector<BeamId> owner_beam;                  // per state var
  std::vector<BeamId> obs_owner_beam;              // per observation var
  std::vector<std::vector<VarId>> owned_state_vars;  // per beam, sorted
  std::vector<std::vector<VarId>> factor_vars;     // per beam: non-sampled members
  int causal_width = 0;
  BeamId covering_beam = -1;  // lowest beam containing all sampled vars, -1 if none/empty

  // True when a prediction step cannot change any factor: every non-sampled
  // variable keeps its value under every action and every sampled variable's
  // transition reads only sampled parents. Lets the particle layer reuse the
  // current factors as the predicted ones.
  bool prediction_preserves_factors = false;

  // Per beam: the update touches cells only through the sensor multiply —
  // every factor variable keeps its value with probability exactly 1 under
  // every action, and every owned sampled variable's transition reads sampled
  // parents only. Factor progression then skips the prediction sum entirely.
  std::vector<char> static_progression;
  // sensor_state_free[o][a]: all rows of the sensor table are identical, so
  // the observation carries no information about the state and scales every
  // cell equally.
  std::vector<std::vector<char>> sensor_state_free;

  // Regression support compiled per class.
  struct FullyObservableInfo {
    ObsId obs = -1;
    Value init = 0;  // value at t=0, from the point-mass prior
    // reveal[a][o] = state value revealed by observation o under action a.
    std::vector<std::vector<std::optional<Value>>> reveal;
  };
  std::map<VarId, FullyObservableInfo> fully_observable;
  // determined transition maps: f[a][v] = next value.
  std::map<VarId, std::vector<std::vector<Value>>> determined_map;
  std::map<VarId, Value> determined_init;
  // injective inverses: inv[a][v'] = v.
  std::map<VarId, std::vector<std::vector<Value>>> injective_inverse;

  int beam_count() const { return static_cast<int>(beams.size()); }
  bool is_sampled(VarId v) const;
  // Position of v inside beam b's member list, -1 if absent.
  int beam_slot(BeamId b, VarId v) const;
};

// Smallest causally closed set containing the causes of a variable. For a
// state variable the set includes the variable itself; for an observation
// variable it is the closure of its parents.
std::vector<VarId> causally_relevant_set(const TwoSliceDbn& model, VarId v);
std::vector<VarId> causally_relevant_set_obs(const TwoSliceDbn& model, ObsId o);

// All causally relevant sets with duplicates and properly contained sets
// removed, ordered lexicographically by sorted member list.
std::vector<std::vector<VarId>> minimal_beam_collection(const TwoSliceDbn& model);

int causal_width(const std::vector<std::vector<VarId>>& beams);

// Full analysis: beams, partition, classification, ownership, regression
// tables. Honors force_bd / force_sampled overrides.
BeamStructure analyze_model(const TwoSliceDbn& model);

// ---- regression ----

// Per-history bookkeeping needed to regress determined and fully observable
// variables: their (known) values at the current time t. Shared by every
// particle; advanced once per executed step.
struct RegressionContext {
  int step = 0;
  std::map<VarId, Value> determined_now;
  std::map<VarId, Value> observed_now;

  // Sampled-variable context for particle updates: values aligned with
  // structure.sampled_union at times t and t+1. Empty when not applicable.
  std::vector<Value> u_now;
  std::vector<Value> u_next;

  static RegressionContext initial(const BeamStructure& s);
  void advance(const BeamStructure& s, ActionId a, const std::vector<Value>& obs);
};

// R_a(v' | h): the unique time-t value of v compatible with value v_next at
// t+1, or nullopt when v_next is unreachable. v must not be sampled unless
// ctx carries sampled values (otherwise NotRegressable).
std::optional<Value> regress(const BeamStructure& s, VarId v, Value v_next, ActionId a,
                             const RegressionContext& ctx);

}  // namespace pbt
