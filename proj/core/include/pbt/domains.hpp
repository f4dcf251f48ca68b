#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pbt/model.hpp"
#include "pbt/rng.hpp"

namespace pbt {

// Benchmark model builders. Every domain is a grid (or line) of static binary
// map cells, optionally an agent location, and per-cell observations wired so
// that exactly one observation variable is informative on any given step.

enum class DomainKind {
  kMinesweeper,      // known probe position, deterministic count observation
  kLineSlamDirect,   // 1-D agent, one observation over all colors (wide beam)
  kLineSlamSplit,    // 1-D agent, per-cell binary observation
  kLine3Slam,        // 1-D agent, neighborhood-noise binary observation
  kMinemapping,      // 2-D agent, noisy-indicator mine-count observation
};

// CLI spellings: minesweeper | line-slam-direct | line-slam-split |
// line3-slam | minemapping.
DomainKind domain_kind_from_name(const std::string& name);
const char* domain_kind_name(DomainKind k);

// Movement actions reach their target cell with this probability and
// otherwise leave the agent in place (moves into a wall always stay).
inline constexpr double kMoveSuccess = 0.9;
// Binary color/mine sensors read the true value with this probability; the
// per-cell mine indicators in minemapping fire with it on the mined side.
inline constexpr double kSensorAccuracy = 0.9;

// A built model plus the metadata the experiment harness needs to drive it.
struct DomainModel {
  DomainKind kind = DomainKind::kMinesweeper;
  TwoSliceDbn model;

  int rows = 1;
  int cols = 1;       // line domains use rows = 1, cols = n
  int mines = 0;      // mine count parameter (minesweeper / minemapping)
  double density = 0.5;  // per-cell Bernoulli prior actually used

  std::vector<VarId> cell_vars;        // per-cell map variable, row-major
  std::optional<VarId> location_var;   // agent location, if the domain has one
  std::vector<ObsId> cell_obs;         // per-cell observation, row-major
                                       // (line-slam-direct: the single obs)
  std::vector<ActionId> probe_actions; // minesweeper probes, row-major
  int start_cell = -1;                 // initial agent cell (SLAM family)

  int cells() const { return rows * cols; }
};

// Minesweeper: static binary mine variables, one probe action per cell, and a
// per-cell observation whose token is the 8-neighborhood mine count when the
// probed cell is clear and a distinct "mine" token when it is mined. Only the
// probed cell's observation depends on the state; every other cell reports a
// constant token 0. Cell priors are i.i.d. Bernoulli(density), with density
// defaulting to mines/cells.
DomainModel build_minesweeper(int rows, int cols, int mines,
                              std::optional<double> density = std::nullopt);

// 1-D localization with one location variable (domain n, point prior at the
// center), n static binary colors with Bernoulli(0.5) priors, left/right
// moves, and a single observation reading the color under the agent with
// accuracy 0.9. The observation depends on every color, so the whole model is
// one block of n+1 variables; intended as an oracle target and to exhibit the
// width blow-up the split variant avoids.
DomainModel build_line_slam_direct(int n);

// Same process as line-slam-direct, but the observation is split into one
// binary variable per cell: cell i reads the color with accuracy 0.9 when the
// agent is at i and is a fair coin otherwise. The harness assigns the one
// real reading to all n observation variables; the coin rows make the extra
// assignments state-independent, so the joint likelihood is proportional to
// the direct model's.
DomainModel build_line_slam_split(int n);

// Split 1-D localization where the reading is the current cell's color with
// probability 0.9^noise, noise = 1 + number of in-bounds adjacent cells of a
// different color. Observation i depends on {location, colors i-1, i, i+1}
// (truncated at the ends); off-agent cells are fair coins.
DomainModel build_line3_slam(int n);

// 2-D mapping: static binary mine variables, a sampled agent location with
// up/down/left/right moves, and per-cell count observations. At the agent's
// cell the count is the sum of independent per-cell indicators over the 3x3
// neighborhood, each reading 1 with probability 0.9 if the cell is mined and
// 0.1 if clear (exact convolution); elsewhere the observation is uniform over
// the shared token domain {0..max neighborhood size}. Cell priors are i.i.d.
// Bernoulli(density), defaulting to mines/cells.
DomainModel build_minemapping(int rows, int cols, int mines,
                              std::optional<double> density = std::nullopt);

// Ground-truth map draw. Mine domains (minesweeper, minemapping) place
// exactly `mines` mines uniformly at random, excluding `safe_cell` when given
// (first-click safety); color domains draw each cell i.i.d. Bernoulli(0.5).
// Returned values are indexed by cell, row-major.
std::vector<Value> draw_true_map(const DomainModel& d, Rng& rng,
                                 std::optional<int> safe_cell = std::nullopt);

// Full model state for a freshly drawn map (agent placed at start_cell).
std::vector<Value> initial_state(const DomainModel& d,
                                 const std::vector<Value>& true_map);

// Draws the observation vector the agent actually receives after the state
// transition to next_state under action a, following each domain's
// convention: minesweeper emits the probed cell's deterministic token (0
// elsewhere); the SLAM/mapping domains sample the one real reading at the
// agent's cell and assign it to every observation variable.
std::vector<Value> sample_observation(const DomainModel& d,
                                      const std::vector<Value>& next_state,
                                      ActionId a, Rng& rng);

// Minesweeper observation token for probing `cell` on a given map: the
// 8-neighborhood mine count, or neighborhood size + 1 when the cell is mined.
int minesweeper_token(const DomainModel& d, int cell,
                      const std::vector<Value>& map_values);

// line3-slam noise exponent at `cell`: 1 + number of in-bounds adjacent cells
// whose color differs from the cell's.
int line3_noise(const DomainModel& d, int cell,
                const std::vector<Value>& map_values);

// Distribution of the minemapping count at `cell` given mine values: the
// exact convolution of the neighborhood's indicator variables, padded with
// zeros to the shared token domain.
std::vector<double> minemapping_count_distribution(
    const DomainModel& d, int cell, const std::vector<Value>& map_values);

// Short human-readable configuration tag, e.g. "6x6 6" or "1x64".
std::string config_label(const DomainModel& d);

}  // namespace pbt
