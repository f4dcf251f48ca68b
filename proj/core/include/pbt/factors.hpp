#pragma once

#include <vector>

#include "pbt/beams.hpp"
#include "pbt/table.hpp"

namespace pbt {

// Belief factor of one beam: a normalized table over the beam's non-sampled
// members (factor_vars), in that variable order. Sampled members are carried
// by the particle layer, so they never appear as table dimensions.
struct BeliefFactor {
  BeamId beam = -1;
  std::vector<VarId> vars;   // == structure.factor_vars[beam]
  DiscreteSpace space;
  std::vector<double> probs;

  double& at(const std::vector<Value>& valuation) { return probs[space.index_of(valuation)]; }
  double at(const std::vector<Value>& valuation) const {
    return probs[space.index_of(valuation)];
  }
};

using FactorSet = std::vector<BeliefFactor>;

// Initial factors from the model's prior blocks. Each block must fit inside
// at least one beam (the lowest containing beam owns it; PriorNotFactorized
// otherwise). A beam's factor is the product of its owned blocks, uniform
// over variables owned by no block, then normalized. Sampled variables are
// sliced out at the values in u0 (aligned with structure.sampled_union);
// pass {} when the model has no sampled variables.
FactorSet make_prior_factors(const BeamStructure& s, const std::vector<Value>& u0);

// One exact filtering step for a single beam factor, in place:
//
//   B'(y', z') ∝ q(o | x', a) * sum_y  tr(x' | y, R_a(z'), u, a) * B(y, R_a(z'))
//
// tr is the product of the beam's owned transition CPTs; q is the product of
// its owned sensor CPTs. Externally-regressable values come from regress();
// valuations whose externals are unreachable get probability zero. Sampled
// parents are read from ctx.u_now / ctx.u_next. The factor is re-normalized;
// if everything is zero the observation was impossible under this belief
// (ImpossibleObservation).
void progress_factor_exact(const BeamStructure& s, BeliefFactor& factor, ActionId a,
                           const std::vector<Value>& obs, const RegressionContext& ctx);

// Convenience: progress every factor of a set.
void progress_factors_exact(const BeamStructure& s, FactorSet& factors, ActionId a,
                            const std::vector<Value>& obs, const RegressionContext& ctx);

// Prediction-only step (no observation multiply, no normalization guard — the
// result is still normalized because transitions are). Used by proposal and
// likelihood computations.
void predict_factor(const BeamStructure& s, BeliefFactor& factor, ActionId a,
                    const RegressionContext& ctx);

// Product of all factors over the union of their variables, renormalized.
// Guarded: refuses joint spaces above max_cells (TooLarge). Intended for
// oracle comparisons and tiny models only.
Table assemble_joint(const FactorSet& factors, const std::vector<int>& var_domains,
                     std::vector<VarId>& out_vars, size_t max_cells = (1u << 20));

// Marginal of one factor onto a subset of its variables (subset of factor.vars,
// in ascending order), normalized.
std::vector<double> factor_marginal(const BeliefFactor& factor,
                                    const std::vector<VarId>& target);

}  // namespace pbt
