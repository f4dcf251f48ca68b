#pragma once

#include <memory>

#include "pbt/engines.hpp"
#include "pbt/factors.hpp"
#include "pbt/rng.hpp"

namespace pbt {

enum class ProposalKind { kMotion, kOptimal };
ProposalKind proposal_from_name(const std::string& name);  // "motion" | "optimal"
const char* proposal_name(ProposalKind p);

// "never" or "ess:<fraction>" — resample when ESS drops below fraction * N.
struct ResamplePolicy {
  bool enabled = true;
  double ess_fraction = 0.5;
  static ResamplePolicy parse(const std::string& text);
  std::string to_string() const;
};

struct TrackerConfig {
  int particles = 1;
  ProposalKind proposal = ProposalKind::kOptimal;
  ResamplePolicy resample;
  uint64_t seed = 0;
};

struct Particle {
  std::shared_ptr<const FactorSet> factors;
  std::vector<Value> u;        // sampled values, aligned with sampled_union
  double log_weight = 0.0;
  double weight = 1.0;         // normalized across the filter
  int group = 0;               // particles with equal group share factors and u
};

// ---- free building blocks (also used directly by tests) ----

// Distribution over the joint next value of all sampled variables given the
// current sampled values and the covering beam's factor:
//   P(u' | .) = sum_x B_c(x) * prod_v P(v' | parents(x, u_now), a)
// Indexed by the mixed-radix space over sampled_union domains (first variable
// most significant). NoCoveringBeam if no beam contains every sampled var.
std::vector<double> motion_distribution(const BeamStructure& s, const FactorSet& factors,
                                        const std::vector<Value>& u_now, ActionId a);

// prod_j sum_{x_j} q_j(o_j | x_j, a) * Bpred_j(x_j), the per-beam product
// likelihood of the observation given sampled values in ctx (u_now and
// u_next must be set). When prediction preserves factors the current factors
// are used as the predicted ones; otherwise a predicted copy is made.
double observation_likelihood(const BeamStructure& s, const FactorSet& factors, ActionId a,
                              const std::vector<Value>& obs, const RegressionContext& ctx);

// Number of children per parent under systematic (stratified, single uniform
// offset) resampling. weights must be normalized; offset in [0,1).
std::vector<int> systematic_resample_counts(const std::vector<double>& weights, int n,
                                            double offset);

// 1 / sum w_i^2 over normalized weights.
double effective_sample_size(const std::vector<double>& weights);

// ---- the filter ----

// Factored particle filter: exact per-beam factor updates conditioned on
// sampled-variable trajectories, one trajectory per particle. Models with no
// sampled variables collapse to a single exact particle.
class ParticleFilter {
 public:
  ParticleFilter(const BeamStructure& s, TrackerConfig cfg);

  // Advance the belief by one executed action and its observation (one value
  // per observation variable, in model order).
  void observe(ActionId action, const std::vector<Value>& obs);

  // Mixture marginal over target: sampled components come from the particle
  // values, the rest from the engine applied to each particle's factors.
  // Result is over the sorted deduplicated target, first variable most
  // significant. Non-sampled components must fit inside one beam.
  std::vector<double> query_marginal(const std::vector<VarId>& target, MarginalEngine& engine);
  std::vector<double> var_marginal(VarId v, MarginalEngine& engine);

  // All requested single-variable marginals at once, sharing one inference
  // pass per distinct particle factor set across every variable.
  std::vector<std::vector<double>> query_var_marginals(const std::vector<VarId>& vars,
                                                       MarginalEngine& engine);

  double ess() const;
  int step_count() const { return step_; }
  const std::vector<Particle>& particles() const { return particles_; }
  const BeamStructure& structure() const { return *s_; }
  const RegressionContext& context() const { return ctx_; }
  const TrackerConfig& config() const { return cfg_; }

 private:
  void normalize_weights();

  const BeamStructure* s_;
  TrackerConfig cfg_;
  RegressionContext ctx_;
  std::vector<Particle> particles_;
  DiscreteSpace u_space_;        // joint space of sampled variables
  int step_ = 0;
  int next_group_ = 0;
};

}  // namespace pbt
