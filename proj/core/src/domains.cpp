#include "pbt/domains.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "pbt/errors.hpp"
#include "pbt/table.hpp"

namespace pbt {
namespace {

using TablePtr = std::shared_ptr<const CondTable>;

TablePtr make_table(std::vector<VarId> parents, std::vector<double> rows) {
  auto t = std::make_shared<CondTable>();
  t->parents = std::move(parents);
  t->rows = std::move(rows);
  return t;
}

TablePtr identity_table(VarId v, int dom) {
  std::vector<double> rows(static_cast<size_t>(dom) * dom, 0.0);
  for (int i = 0; i < dom; ++i) rows[static_cast<size_t>(i) * dom + i] = 1.0;
  return make_table({v}, std::move(rows));
}

// Movement over an rows x cols grid (row-major cells): reach the clamped
// (dr, dc) neighbor with probability kMoveSuccess, else stay; moves off the
// grid always stay.
TablePtr move_table(VarId loc, int rows, int cols, int dr, int dc) {
  int n = rows * cols;
  std::vector<double> t(static_cast<size_t>(n) * n, 0.0);
  for (int cell = 0; cell < n; ++cell) {
    int r = cell / cols, c = cell % cols;
    int tr = std::clamp(r + dr, 0, rows - 1);
    int tc = std::clamp(c + dc, 0, cols - 1);
    int target = tr * cols + tc;
    double* row = &t[static_cast<size_t>(cell) * n];
    if (target == cell) {
      row[cell] = 1.0;
    } else {
      row[target] = kMoveSuccess;
      row[cell] += 1.0 - kMoveSuccess;
    }
  }
  return make_table({loc}, std::move(t));
}

std::vector<std::string> numeral_values(int n) {
  std::vector<std::string> v;
  v.reserve(n);
  for (int i = 0; i < n; ++i) v.push_back(std::to_string(i));
  return v;
}

// Cells adjacent to `cell` (8-neighborhood), ascending.
std::vector<int> neighbors8(int rows, int cols, int cell) {
  int r = cell / cols, c = cell % cols;
  std::vector<int> out;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      int nr = r + dr, nc = c + dc;
      if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
      out.push_back(nr * cols + nc);
    }
  std::sort(out.begin(), out.end());
  return out;
}

// `cell` plus its 8-neighborhood, ascending.
std::vector<int> block9(int rows, int cols, int cell) {
  std::vector<int> out = neighbors8(rows, cols, cell);
  out.push_back(cell);
  std::sort(out.begin(), out.end());
  return out;
}

PriorBlock point_prior(VarId v, int dom, Value at) {
  PriorBlock b;
  b.vars = {v};
  b.table.assign(dom, 0.0);
  b.table[at] = 1.0;
  return b;
}

PriorBlock bernoulli_prior(VarId v, double p) {
  PriorBlock b;
  b.vars = {v};
  b.table = {1.0 - p, p};
  return b;
}

void check_grid(int rows, int cols, int mines, const std::optional<double>& density) {
  if (rows < 1 || cols < 1) fail(ErrorCode::BadArgument, "grid dimensions must be >= 1");
  if (mines < 0 || mines > rows * cols)
    fail(ErrorCode::BadArgument, "mine count must lie in [0, cells]");
  if (density && (*density < 0.0 || *density > 1.0))
    fail(ErrorCode::BadArgument, "mine density must lie in [0, 1]");
}

// Sum of independent Bernoulli indicators, one per block cell: probability
// kSensorAccuracy of reading 1 over a mine and 1 - kSensorAccuracy over a
// clear cell. Exact convolution, padded with zeros to `dom` tokens.
std::vector<double> indicator_convolution(const std::vector<int>& block,
                                          const std::vector<Value>& mine_of_block, int dom) {
  std::vector<double> dist{1.0};
  for (size_t j = 0; j < block.size(); ++j) {
    double p1 = mine_of_block[j] ? kSensorAccuracy : 1.0 - kSensorAccuracy;
    std::vector<double> next(dist.size() + 1, 0.0);
    for (size_t k = 0; k < dist.size(); ++k) {
      next[k] += dist[k] * (1.0 - p1);
      next[k + 1] += dist[k] * p1;
    }
    dist = std::move(next);
  }
  dist.resize(dom, 0.0);
  return dist;
}

const std::vector<std::string> kMineValues = {"clear", "mine"};
const std::vector<std::string> kColorValues = {"white", "black"};

// Shared scaffolding for the SLAM-family domains: location variable 0 over
// `cells` positions starting at the grid center, one static binary color/mine
// variable per cell, and the given movement actions.
void init_agent_domain(DomainModel& d, int rows, int cols,
                       const std::vector<std::string>& cell_values, double cell_prior,
                       const std::vector<std::pair<std::string, std::pair<int, int>>>& moves) {
  int cells = rows * cols;
  TwoSliceDbn& m = d.model;
  m.state_vars.push_back({"loc", numeral_values(cells)});
  for (int i = 0; i < cells; ++i) {
    std::string name = rows == 1 ? "m_" + std::to_string(i)
                                 : "m_" + std::to_string(i / cols) + "_" + std::to_string(i % cols);
    m.state_vars.push_back({name, cell_values});
    d.cell_vars.push_back(1 + i);
  }
  d.location_var = 0;
  d.rows = rows;
  d.cols = cols;
  d.start_cell = (rows / 2) * cols + cols / 2;

  int na = static_cast<int>(moves.size());
  for (const auto& mv : moves) m.actions.push_back(mv.first);
  m.transitions.assign(m.state_vars.size(), {});
  for (auto& per_action : m.transitions) per_action.resize(na);
  for (int a = 0; a < na; ++a)
    m.transitions[0][a] = move_table(0, rows, cols, moves[a].second.first, moves[a].second.second);
  for (int i = 0; i < cells; ++i) {
    TablePtr id = identity_table(1 + i, 2);
    for (int a = 0; a < na; ++a) m.transitions[1 + i][a] = id;
  }

  m.priors.push_back(point_prior(0, cells, d.start_cell));
  for (int i = 0; i < cells; ++i) m.priors.push_back(bernoulli_prior(1 + i, cell_prior));
}

void attach_sensor_all_actions(TwoSliceDbn& m, TablePtr t) {
  m.sensors.emplace_back(m.actions.size(), std::move(t));
}

}  // namespace

DomainKind domain_kind_from_name(const std::string& name) {
  if (name == "minesweeper") return DomainKind::kMinesweeper;
  if (name == "line-slam-direct") return DomainKind::kLineSlamDirect;
  if (name == "line-slam-split") return DomainKind::kLineSlamSplit;
  if (name == "line3-slam") return DomainKind::kLine3Slam;
  if (name == "minemapping") return DomainKind::kMinemapping;
  fail(ErrorCode::BadArgument, "unknown domain: " + name);
}

const char* domain_kind_name(DomainKind k) {
  switch (k) {
    case DomainKind::kMinesweeper: return "minesweeper";
    case DomainKind::kLineSlamDirect: return "line-slam-direct";
    case DomainKind::kLineSlamSplit: return "line-slam-split";
    case DomainKind::kLine3Slam: return "line3-slam";
    case DomainKind::kMinemapping: return "minemapping";
  }
  return "?";
}

DomainModel build_minesweeper(int rows, int cols, int mines, std::optional<double> density) {
  check_grid(rows, cols, mines, density);
  int cells = rows * cols;

  DomainModel d;
  d.kind = DomainKind::kMinesweeper;
  d.rows = rows;
  d.cols = cols;
  d.mines = mines;
  d.density = density ? *density : static_cast<double>(mines) / cells;

  TwoSliceDbn& m = d.model;
  for (int i = 0; i < cells; ++i) {
    std::string rc = std::to_string(i / cols) + "_" + std::to_string(i % cols);
    m.state_vars.push_back({"m_" + rc, kMineValues});
    d.cell_vars.push_back(i);
  }
  for (int i = 0; i < cells; ++i) {
    std::string rc = std::to_string(i / cols) + "_" + std::to_string(i % cols);
    int k = static_cast<int>(neighbors8(rows, cols, i).size());
    std::vector<std::string> tokens = numeral_values(k + 1);
    tokens.push_back("mine");
    m.obs_vars.push_back({"o_" + rc, tokens});
    d.cell_obs.push_back(i);
  }
  for (int i = 0; i < cells; ++i) {
    std::string rc = std::to_string(i / cols) + "_" + std::to_string(i % cols);
    m.actions.push_back("probe_" + rc);
    d.probe_actions.push_back(i);
  }

  m.transitions.assign(cells, {});
  for (int v = 0; v < cells; ++v) {
    TablePtr id = identity_table(v, 2);
    m.transitions[v].assign(cells, id);
  }

  m.sensors.assign(cells, {});
  for (int i = 0; i < cells; ++i) {
    std::vector<int> block = block9(rows, cols, i);
    int dom = static_cast<int>(block.size()) + 1;  // counts 0..k plus "mine"
    size_t self_pos = std::lower_bound(block.begin(), block.end(), i) - block.begin();

    DiscreteSpace space(std::vector<int>(block.size(), 2));
    std::vector<double> rows_informative(space.total * dom, 0.0);
    for (size_t r = 0; r < space.total; ++r) {
      int token;
      if (space.digit(r, self_pos) == 1) {
        token = dom - 1;
      } else {
        token = 0;
        for (size_t p = 0; p < block.size(); ++p)
          if (p != self_pos) token += space.digit(r, p);
      }
      rows_informative[r * dom + token] = 1.0;
    }
    TablePtr informative =
        make_table(std::vector<VarId>(block.begin(), block.end()), std::move(rows_informative));

    std::vector<double> silent_row(dom, 0.0);
    silent_row[0] = 1.0;
    TablePtr silent = make_table({}, std::move(silent_row));

    m.sensors[i].assign(cells, silent);
    m.sensors[i][i] = informative;
  }

  for (int i = 0; i < cells; ++i) m.priors.push_back(bernoulli_prior(i, d.density));

  validate_model(m);
  return d;
}

DomainModel build_line_slam_direct(int n) {
  if (n < 1) fail(ErrorCode::BadArgument, "line length must be >= 1");
  if (n > 24) fail(ErrorCode::TooLarge, "direct-observation line model is exponential in n");

  DomainModel d;
  d.kind = DomainKind::kLineSlamDirect;
  d.density = 0.5;
  init_agent_domain(d, 1, n, kColorValues, 0.5,
                    {{"left", {0, -1}}, {"right", {0, 1}}});
  TwoSliceDbn& m = d.model;

  m.obs_vars.push_back({"o", kColorValues});
  d.cell_obs.push_back(0);  // the one observation serves every cell
  std::vector<VarId> parents(1 + n);
  for (int i = 0; i <= n; ++i) parents[i] = i;  // loc, then every color
  std::vector<int> sizes{n};
  sizes.insert(sizes.end(), n, 2);
  DiscreteSpace space(sizes);
  std::vector<double> rows(space.total * 2, 0.0);
  for (size_t r = 0; r < space.total; ++r) {
    int loc = space.digit(r, 0);
    int color = space.digit(r, 1 + static_cast<size_t>(loc));
    rows[r * 2 + color] = kSensorAccuracy;
    rows[r * 2 + (1 - color)] = 1.0 - kSensorAccuracy;
  }
  attach_sensor_all_actions(m, make_table(std::move(parents), std::move(rows)));

  validate_model(m);
  return d;
}

DomainModel build_line_slam_split(int n) {
  if (n < 1) fail(ErrorCode::BadArgument, "line length must be >= 1");

  DomainModel d;
  d.kind = DomainKind::kLineSlamSplit;
  d.density = 0.5;
  init_agent_domain(d, 1, n, kColorValues, 0.5,
                    {{"left", {0, -1}}, {"right", {0, 1}}});
  TwoSliceDbn& m = d.model;

  for (int i = 0; i < n; ++i) {
    m.obs_vars.push_back({"o_" + std::to_string(i), kColorValues});
    d.cell_obs.push_back(i);
    std::vector<double> rows(static_cast<size_t>(n) * 2 * 2, 0.0);
    for (int loc = 0; loc < n; ++loc)
      for (int color = 0; color < 2; ++color) {
        double* row = &rows[(static_cast<size_t>(loc) * 2 + color) * 2];
        if (loc == i) {
          row[color] = kSensorAccuracy;
          row[1 - color] = 1.0 - kSensorAccuracy;
        } else {
          row[0] = row[1] = 0.5;
        }
      }
    attach_sensor_all_actions(m, make_table({0, 1 + i}, std::move(rows)));
  }

  validate_model(m);
  return d;
}

DomainModel build_line3_slam(int n) {
  if (n < 3) fail(ErrorCode::BadArgument, "line3 length must be >= 3");

  DomainModel d;
  d.kind = DomainKind::kLine3Slam;
  d.density = 0.5;
  init_agent_domain(d, 1, n, kColorValues, 0.5,
                    {{"left", {0, -1}}, {"right", {0, 1}}});
  TwoSliceDbn& m = d.model;

  for (int i = 0; i < n; ++i) {
    m.obs_vars.push_back({"o_" + std::to_string(i), kColorValues});
    d.cell_obs.push_back(i);

    std::vector<int> window;  // cells i-1, i, i+1 clipped to the line
    for (int j = std::max(0, i - 1); j <= std::min(n - 1, i + 1); ++j) window.push_back(j);
    size_t self_pos = std::lower_bound(window.begin(), window.end(), i) - window.begin();

    std::vector<VarId> parents{0};
    for (int j : window) parents.push_back(1 + j);
    std::vector<int> sizes{n};
    sizes.insert(sizes.end(), window.size(), 2);
    DiscreteSpace space(sizes);
    std::vector<double> rows(space.total * 2, 0.0);
    for (size_t r = 0; r < space.total; ++r) {
      double* row = &rows[r * 2];
      int loc = space.digit(r, 0);
      if (loc != i) {
        row[0] = row[1] = 0.5;
        continue;
      }
      int self = space.digit(r, 1 + self_pos);
      int noise = 1;
      for (size_t p = 0; p < window.size(); ++p)
        if (p != self_pos && space.digit(r, 1 + p) != self) ++noise;
      double acc = std::pow(kSensorAccuracy, noise);
      row[self] = acc;
      row[1 - self] = 1.0 - acc;
    }
    attach_sensor_all_actions(m, make_table(std::move(parents), std::move(rows)));
  }

  validate_model(m);
  return d;
}

DomainModel build_minemapping(int rows, int cols, int mines, std::optional<double> density) {
  check_grid(rows, cols, mines, density);
  int cells = rows * cols;

  DomainModel d;
  d.kind = DomainKind::kMinemapping;
  d.mines = mines;
  d.density = density ? *density : static_cast<double>(mines) / cells;
  init_agent_domain(d, rows, cols, kMineValues, d.density,
                    {{"up", {-1, 0}}, {"down", {1, 0}}, {"left", {0, -1}}, {"right", {0, 1}}});
  TwoSliceDbn& m = d.model;

  // One shared count-token domain so the same reading can be assigned to
  // every cell's observation variable; border cells keep zero mass on counts
  // their smaller neighborhoods cannot produce.
  int max_block = 0;
  for (int i = 0; i < cells; ++i)
    max_block = std::max(max_block, static_cast<int>(block9(rows, cols, i).size()));
  int dom = max_block + 1;

  for (int i = 0; i < cells; ++i) {
    std::string rc = std::to_string(i / cols) + "_" + std::to_string(i % cols);
    m.obs_vars.push_back({"o_" + rc, numeral_values(dom)});
    d.cell_obs.push_back(i);

    std::vector<int> block = block9(rows, cols, i);
    std::vector<VarId> parents{0};
    for (int j : block) parents.push_back(1 + j);
    std::vector<int> sizes{cells};
    sizes.insert(sizes.end(), block.size(), 2);
    DiscreteSpace space(sizes);
    std::vector<double> table(space.total * dom, 0.0);
    std::vector<Value> mines_here(block.size());
    for (size_t r = 0; r < space.total; ++r) {
      double* row = &table[r * dom];
      if (space.digit(r, 0) != i) {
        for (int t = 0; t < dom; ++t) row[t] = 1.0 / dom;
        continue;
      }
      for (size_t p = 0; p < block.size(); ++p) mines_here[p] = space.digit(r, 1 + p);
      std::vector<double> dist = indicator_convolution(block, mines_here, dom);
      std::copy(dist.begin(), dist.end(), row);
    }
    attach_sensor_all_actions(m, make_table(std::move(parents), std::move(table)));
  }

  validate_model(m);
  return d;
}

std::vector<Value> draw_true_map(const DomainModel& d, Rng& rng, std::optional<int> safe_cell) {
  int cells = d.cells();
  std::vector<Value> map(cells, 0);
  if (d.kind == DomainKind::kMinesweeper || d.kind == DomainKind::kMinemapping) {
    std::vector<int> eligible;
    for (int i = 0; i < cells; ++i)
      if (!safe_cell || i != *safe_cell) eligible.push_back(i);
    if (d.mines > static_cast<int>(eligible.size()))
      eligible.assign({});  // cannot honor safety; fall back to all cells
    if (eligible.empty())
      for (int i = 0; i < cells; ++i) eligible.push_back(i);
    // Partial Fisher-Yates: the first `mines` entries become the mined cells.
    for (int k = 0; k < d.mines; ++k) {
      size_t j = k + static_cast<size_t>(rng.next_below(eligible.size() - k));
      std::swap(eligible[k], eligible[j]);
      map[eligible[k]] = 1;
    }
  } else {
    for (int i = 0; i < cells; ++i) map[i] = rng.next_double() < 0.5 ? 1 : 0;
  }
  return map;
}

std::vector<Value> initial_state(const DomainModel& d, const std::vector<Value>& true_map) {
  std::vector<Value> state(d.model.num_state_vars(), 0);
  for (int i = 0; i < d.cells(); ++i) state[d.cell_vars[i]] = true_map[i];
  if (d.location_var) state[*d.location_var] = d.start_cell;
  return state;
}

int minesweeper_token(const DomainModel& d, int cell, const std::vector<Value>& map_values) {
  std::vector<int> nb = neighbors8(d.rows, d.cols, cell);
  if (map_values[cell]) return static_cast<int>(nb.size()) + 1;
  int count = 0;
  for (int j : nb) count += map_values[j];
  return count;
}

int line3_noise(const DomainModel& d, int cell, const std::vector<Value>& map_values) {
  int n = d.cells();
  int noise = 1;
  if (cell > 0 && map_values[cell - 1] != map_values[cell]) ++noise;
  if (cell + 1 < n && map_values[cell + 1] != map_values[cell]) ++noise;
  return noise;
}

std::vector<double> minemapping_count_distribution(const DomainModel& d, int cell,
                                                   const std::vector<Value>& map_values) {
  std::vector<int> block = block9(d.rows, d.cols, cell);
  std::vector<Value> mines_here;
  for (int j : block) mines_here.push_back(map_values[j]);
  return indicator_convolution(block, mines_here, d.model.obs_vars[cell].domain_size());
}

std::vector<Value> sample_observation(const DomainModel& d, const std::vector<Value>& next_state,
                                      ActionId a, Rng& rng) {
  std::vector<Value> map(d.cells());
  for (int i = 0; i < d.cells(); ++i) map[i] = next_state[d.cell_vars[i]];

  switch (d.kind) {
    case DomainKind::kMinesweeper: {
      std::vector<Value> obs(d.model.num_obs_vars(), 0);
      obs[a] = minesweeper_token(d, a, map);
      return obs;
    }
    case DomainKind::kLineSlamDirect:
    case DomainKind::kLineSlamSplit:
    case DomainKind::kLine3Slam: {
      int loc = next_state[*d.location_var];
      double acc = d.kind == DomainKind::kLine3Slam
                       ? std::pow(kSensorAccuracy, line3_noise(d, loc, map))
                       : kSensorAccuracy;
      Value color = map[loc];
      Value o = rng.next_double() < acc ? color : 1 - color;
      return std::vector<Value>(d.model.num_obs_vars(), o);
    }
    case DomainKind::kMinemapping: {
      int loc = next_state[*d.location_var];
      int count = 0;
      for (int j : block9(d.rows, d.cols, loc)) {
        double p1 = map[j] ? kSensorAccuracy : 1.0 - kSensorAccuracy;
        if (rng.next_double() < p1) ++count;
      }
      return std::vector<Value>(d.model.num_obs_vars(), count);
    }
  }
  fail(ErrorCode::BadArgument, "unknown domain kind");
}

std::string config_label(const DomainModel& d) {
  std::string label = std::to_string(d.rows) + "x" + std::to_string(d.cols);
  if (d.kind == DomainKind::kMinesweeper || d.kind == DomainKind::kMinemapping)
    label += " " + std::to_string(d.mines);
  return label;
}

}  // namespace pbt
