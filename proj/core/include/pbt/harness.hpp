#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pbt/domains.hpp"
#include "pbt/engines.hpp"
#include "pbt/rng.hpp"
#include "pbt/tracker.hpp"

namespace pbt {

// A map cell counts as labeled when some value's marginal reaches this.
inline constexpr double kLabelThreshold = 0.55;
// Two-sided 97.5% normal quantile used for confidence half-widths.
inline constexpr double kCiZ = 2.2414;

// Scoring of an estimated map against the truth: a cell is labeled when its
// top marginal reaches `threshold`; good_pct is the fraction of labeled cells
// whose top value matches the truth (0 when nothing is labeled), unknown_pct
// the fraction left unlabeled.
struct MappingScores {
  double good_pct = 0.0;
  double unknown_pct = 0.0;
  int labeled = 0;
  int cells = 0;
};
MappingScores mapping_metrics(const std::vector<std::vector<double>>& cell_marginals,
                              const std::vector<Value>& truth,
                              double threshold = kLabelThreshold);

// One minesweeper decision from per-candidate mine probabilities: pick the
// cell with the highest certainty max(p, 1-p), tagging when p > 1-p and
// opening otherwise (an exact 50/50 is opened); exact certainty ties are
// broken uniformly with rng. Throws NoCandidates when `candidate` has no set
// entries.
struct MinesweeperDecision {
  int cell = -1;
  bool tag = false;
};
MinesweeperDecision minesweeper_decide(const std::vector<double>& p_mine,
                                       const std::vector<char>& candidate, Rng& rng);

// Aggregated outcome of one experiment configuration.
struct RunResult {
  std::string domain;
  std::string config;
  std::string engine;
  int particles = 1;
  int runs = 0;
  double success_pct = 0.0;
  double good_pct = 0.0;
  double unknown_pct = 0.0;
  double time_per_step_s = 0.0;
  double time_per_exec_s = 0.0;
  std::uint64_t seed = 0;
  // 97.5% normal-approximation half-widths for the three percentages.
  double success_hw = 0.0;
  double good_hw = 0.0;
  double unknown_hw = 0.0;
};

struct ExperimentSpec {
  DomainKind kind = DomainKind::kMinesweeper;
  int rows = 6;
  int cols = 6;
  int length = 8;  // line domains
  int mines = 6;
  std::optional<double> density;  // overrides the builder's mines/cells prior

  EngineConfig engine;
  TrackerConfig tracker;  // .seed is ignored; per-run seeds derive from `seed`
  int runs = 1;
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Runs the domain's protocol `runs` times and aggregates:
//  - minesweeper: play with minesweeper_decide until the board is cleared
//    (success) or a wrong open/tag ends the game; reports %success.
//  - SLAM/minemapping: walk uniformly at random for 10x (line3/split/direct)
//    or 5x (minemapping) the cell count, then score the map against the
//    truth; reports %good / %unknown averaged over runs.
// Results depend only on (spec, seed), not on the worker count.
RunResult run_experiment(const ExperimentSpec& spec);

// Fixed-point result tables: header + one line per result, six decimals.
std::string results_to_csv(const std::vector<RunResult>& results);
std::string results_to_json(const std::vector<RunResult>& results);
std::vector<RunResult> results_from_json(const std::string& text);
// format: "csv" | "json". Throws IoError when the file cannot be written.
void write_results(const std::string& path, const std::vector<RunResult>& results,
                   const std::string& format);

// Cross-checks the factored machinery against the exhaustive references on
// small instances of one domain family (state count capped via max_vars):
// exact-path marginal agreement with the flat filter, split/direct posterior
// equivalence, and the support-tracker comparison for minesweeper. Logs one
// line per check; returns false when any check fails.
bool run_oracle_checks(DomainKind kind, int max_vars, std::uint64_t seed, std::ostream& log);

}  // namespace pbt
