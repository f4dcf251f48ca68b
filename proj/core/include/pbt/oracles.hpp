#pragma once

#include <vector>

#include "pbt/beams.hpp"
#include "pbt/model.hpp"
#include "pbt/table.hpp"

namespace pbt {

// Exhaustive reference filter: materializes the belief over the full state
// space and performs one prediction + Bayes correction per step. Used to
// cross-check the factored tracker on small instances; refuses state spaces
// larger than max_states.
class FlatFilter {
 public:
  explicit FlatFilter(const TwoSliceDbn& model, size_t max_states = (1u << 20));

  // Advance by one action/observation pair (one value per observation
  // variable, model order). Throws ImpossibleHistory when the observation has
  // probability zero under every reachable state.
  void observe(ActionId action, const std::vector<Value>& obs);

  // Marginal over the deduplicated sorted target, first variable most
  // significant.
  std::vector<double> marginal(const std::vector<VarId>& target) const;

  const std::vector<double>& joint() const { return belief_; }
  const DiscreteSpace& space() const { return space_; }

 private:
  const TwoSliceDbn* model_;
  DiscreteSpace space_;
  std::vector<double> belief_;
  std::vector<Value> scratch_state_;
  std::vector<Value> scratch_next_;
};

// Support-set tracker for models whose state variables all keep their value
// under every action (identity dynamics, e.g. minesweeper). Tracks the set of
// still-possible joint valuations of every beam: each observation removes the
// valuations it contradicts, then pairwise consistency between overlapping
// beams is restored to a fixpoint. Reference for the level-0 iterated-AC
// engine under hard evidence and uniform priors.
class SupportTracker {
 public:
  explicit SupportTracker(const BeamStructure& s);

  void observe(ActionId action, const std::vector<Value>& obs);

  // Per-cell liveness of beam j's joint valuations (factor cell order).
  const std::vector<char>& support(BeamId j) const { return alive_[j]; }
  // Liveness of each value of v, projected from v's lowest containing beam.
  std::vector<char> value_support(VarId v) const;
  bool wiped_out() const;

 private:
  void enforce_pairwise();

  const BeamStructure* s_;
  std::vector<DiscreteSpace> spaces_;      // per beam, over beam vars
  std::vector<std::vector<char>> alive_;   // per beam, per cell
};

}  // namespace pbt
