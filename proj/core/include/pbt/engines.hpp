#pragma once

#include <string>
#include <vector>

#include "pbt/factors.hpp"

namespace pbt {

enum class EngineKind { kJointree, kLoopyBp, kIteratedAc };

EngineKind engine_kind_from_name(const std::string& name);  // "jt" | "bp" | "ac"
const char* engine_kind_name(EngineKind k);

struct EngineConfig {
  EngineKind kind = EngineKind::kJointree;

  // Iterated arc consistency: number of refinement levels beyond the minimum
  // (m); surprise base epsilon.
  int ac_m = 0;
  double ac_epsilon = 0.1;

  // Loopy belief propagation (synchronous flooding schedule).
  int bp_max_iters = 100;
  double bp_tol = 1e-9;
  double bp_damping = 0.0;

  // Join tree guard: refuse cliques larger than this many cells.
  size_t max_clique_cells = (1u << 20);
};

// Computes marginals of the product of the belief factors. The structural
// work (join tree skeleton, factor-graph topology, shared-variable projection
// maps) is done once at construction; propagate() is called with fresh factor
// values as often as needed.
//
// Queries are restricted to variable sets contained in a single beam; anything
// wider raises TargetSpansBeams, as does a query touching a sampled variable
// (those live in the particle layer).
class MarginalEngine {
 public:
  MarginalEngine(const BeamStructure& s, EngineConfig cfg);

  // Runs inference over the given factor values. The factors must have the
  // shapes produced by make_prior_factors for the same structure.
  void propagate(const FactorSet& factors);

  // Marginal over target (deduplicated, any order) from the last propagate.
  std::vector<double> marginal(const std::vector<VarId>& target);
  std::vector<double> var_marginal(VarId v);

  // True if the last propagate reached a fixed point (always true for the
  // join tree; for BP, message change fell below tolerance; for AC, always).
  bool converged() const { return converged_; }
  // Iterations used by the last BP propagate (0 for other engines).
  int iterations() const { return iterations_; }

  // Iterated AC only: per beam, per factor cell, the first refinement level
  // at which the cell survives arc consistency (-1 when it never does).
  const std::vector<std::vector<int>>& ac_cell_levels() const { return ac_kappa_; }

  const EngineConfig& config() const { return cfg_; }
  const BeamStructure& structure() const { return *s_; }

 private:
  struct Clique {
    std::vector<VarId> vars;
    DiscreteSpace space;
    std::vector<double> potential;
    std::vector<double> belief;
    bool belief_ready = false;
    std::vector<int> neighbors;       // clique indices
    std::vector<int> edge_ids;        // aligned with neighbors
  };
  struct Edge {  // undirected clique pair; messages stored per direction
    int a = 0, b = 0;
    std::vector<VarId> separator;
    DiscreteSpace sep_space;
    std::vector<uint32_t> proj_a;     // clique a cell -> separator cell
    std::vector<uint32_t> proj_b;
    std::vector<double> msg_ab, msg_ba;
  };

  void build_jointree();
  void build_bp();
  void build_ac();
  void jt_propagate(const FactorSet& f);
  void bp_propagate(const FactorSet& f);
  void ac_propagate(const FactorSet& f);
  const std::vector<double>& jt_belief(int clique);
  std::vector<double> marginal_impl(const std::vector<VarId>& target);

  const BeamStructure* s_;
  EngineConfig cfg_;
  bool converged_ = true;
  int iterations_ = 0;
  bool propagated_ = false;

  // --- join tree state ---
  std::vector<Clique> cliques_;
  std::vector<Edge> edges_;
  std::vector<int> collect_order_;              // edge ids, leaves first
  std::vector<bool> collect_toward_b_;          // direction per collect edge
  //  factor placement: per beam, target clique + cell map clique->factor
  std::vector<int> factor_clique_;
  std::vector<std::vector<uint32_t>> factor_map_;
  std::vector<int> var_home_clique_;            // smallest clique holding var

  // --- BP state ---
  struct BpFactor {
    int beam = -1;
    std::vector<int> var_nodes;                  // indices into bp_vars_
    std::vector<std::vector<uint16_t>> cell_val; // per slot: cell -> var value
  };
  std::vector<VarId> bp_vars_;
  std::vector<int> bp_var_dom_;
  std::vector<BpFactor> bp_factors_;
  std::vector<std::vector<std::pair<int, int>>> bp_incident_;  // var -> (factor, slot)
  std::vector<std::vector<std::vector<double>>> msg_vf_, msg_fv_;  // [f][slot][val]
  std::vector<std::vector<double>> bp_var_belief_;
  std::vector<std::vector<double>> bp_potentials_;  // factor values at last propagate

  // --- AC state ---
  struct AcPair {
    int a, b;
    std::vector<uint32_t> proj_a, proj_b;  // beam cell -> shared valuation id
    size_t shared_cells;
  };
  std::vector<AcPair> ac_pairs_;
  std::vector<std::vector<int>> ac_neighbors_;   // beam -> pair ids
  std::vector<std::vector<int>> ac_kappa_;       // per beam: surviving level per cell, -1 = never
  static constexpr int kAcNever = -1;

  friend struct EngineTestPeer;
};

// Smallest kappa >= 0 with epsilon^(kappa+1) < p; infinity (INT_MAX) for p <= 0.
int kappa_of(double p, double epsilon);

// Per beam, the level-i membership mask over the factor's cells: a cell is a
// member iff its rank kappa_of(p, epsilon), offset by the beam's minimum
// finite rank, is <= i. Zero-probability cells are excluded at every level,
// so masks grow monotonically with i.
std::vector<std::vector<char>> build_level_tables(const FactorSet& factors, double epsilon,
                                                  int i);

// AC-3 fixpoint over the beams' membership masks: repeatedly removes cells
// whose shared-variable projection has no surviving counterpart in some
// overlapping beam's mask, in ascending beam-pair order. tables[j] must be
// indexed like beam j's factor cells. Emptied beams come back all-zero; no
// error is raised.
std::vector<std::vector<char>> arc_consistency(const BeamStructure& s,
                                               std::vector<std::vector<char>> tables);

}  // namespace pbt
