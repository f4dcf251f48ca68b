#include "pbt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "pbt/beams.hpp"
#include "pbt/errors.hpp"
#include "pbt/factors.hpp"
#include "pbt/oracles.hpp"

namespace pbt {
namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kTagRun = 101;
constexpr std::uint64_t kTagWorld = 1;    // map draw, walks, tie-breaks
constexpr std::uint64_t kTagTracker = 2;  // particle filter seed

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct PerRun {
  double success = 0.0;  // minesweeper: 1 on a cleared board
  double good = 0.0;
  double unknown = 0.0;
  double seconds = 0.0;  // filter updates + engine queries only
  int steps = 0;
};

DomainModel build_domain(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case DomainKind::kMinesweeper:
      return build_minesweeper(spec.rows, spec.cols, spec.mines, spec.density);
    case DomainKind::kLineSlamDirect: return build_line_slam_direct(spec.length);
    case DomainKind::kLineSlamSplit: return build_line_slam_split(spec.length);
    case DomainKind::kLine3Slam: return build_line3_slam(spec.length);
    case DomainKind::kMinemapping:
      return build_minemapping(spec.rows, spec.cols, spec.mines, spec.density);
  }
  fail(ErrorCode::BadArgument, "unknown domain kind");
}

// Samples the next state variable-by-variable from the transition tables.
// Observations are drawn separately by sample_observation, which knows each
// domain's convention for assigning the one real reading.
std::vector<Value> sample_next_state(const TwoSliceDbn& m, const std::vector<Value>& state,
                                     ActionId a, Rng& rng) {
  std::vector<Value> next(state.size());
  std::vector<double> row;
  for (VarId v = 0; v < m.num_state_vars(); ++v) {
    int dom = m.state_vars[v].domain_size();
    row.resize(dom);
    for (int val = 0; val < dom; ++val) row[val] = transition_prob(m, v, a, state, val);
    next[v] = static_cast<Value>(rng.next_categorical(row));
  }
  return next;
}

PerRun play_minesweeper_run(const DomainModel& d, const BeamStructure& s, MarginalEngine& engine,
                            TrackerConfig tracker, std::uint64_t run_seed) {
  PerRun out;
  Rng rng(derive_seed(run_seed, {kTagWorld}));
  tracker.seed = derive_seed(run_seed, {kTagTracker});
  ParticleFilter filter(s, tracker);

  int cells = d.cells();
  std::vector<char> candidate(cells, 1);
  // Cells no probe window has touched yet: the tracked factors know nothing
  // beyond the prior about them, but the game publishes its mine count, so
  // the policy rates them at the true mine rate instead of the factor
  // marginal. Cells inside any observed window use the engine's marginal.
  std::vector<char> informed(cells, 0);
  const double offboard_rate = static_cast<double>(d.mines) / cells;
  int opened = 0;
  std::optional<std::vector<Value>> map;

  Clock::time_point t0 = Clock::now();
  while (std::any_of(candidate.begin(), candidate.end(), [](char c) { return c != 0; })) {
    Clock::time_point q0 = Clock::now();
    std::vector<std::vector<double>> marginals = filter.query_var_marginals(d.cell_vars, engine);
    out.seconds += seconds_since(q0);
    std::vector<double> p_mine(cells);
    for (int i = 0; i < cells; ++i)
      p_mine[i] = informed[i] ? marginals[i][1] : offboard_rate;

    MinesweeperDecision decision = minesweeper_decide(p_mine, candidate, rng);
    ++out.steps;

    if (decision.tag) {
      if (!map) map = draw_true_map(d, rng);
      if ((*map)[decision.cell] != 1) return out;  // tagged a clear cell
      candidate[decision.cell] = 0;
    } else {
      if (!map) map = draw_true_map(d, rng, decision.cell);  // first probe is safe
      if ((*map)[decision.cell] == 1) return out;            // opened a mine
      std::vector<Value> state = initial_state(d, *map);
      std::vector<Value> obs =
          sample_observation(d, state, d.probe_actions[decision.cell], rng);
      Clock::time_point u0 = Clock::now();
      filter.observe(d.probe_actions[decision.cell], obs);
      out.seconds += seconds_since(u0);
      candidate[decision.cell] = 0;
      int r0 = decision.cell / d.cols;
      int c0 = decision.cell % d.cols;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          int rr = r0 + dr, cc = c0 + dc;
          if (rr >= 0 && rr < d.rows && cc >= 0 && cc < d.cols)
            informed[rr * d.cols + cc] = 1;
        }
      ++opened;
      if (opened == cells - d.mines) break;  // every clear cell is open
    }
  }
  out.success = 1.0;
  (void)t0;
  return out;
}

PerRun play_mapping_run(const DomainModel& d, const BeamStructure& s, MarginalEngine& engine,
                        TrackerConfig tracker, std::uint64_t run_seed) {
  PerRun out;
  Rng rng(derive_seed(run_seed, {kTagWorld}));
  tracker.seed = derive_seed(run_seed, {kTagTracker});
  ParticleFilter filter(s, tracker);

  std::vector<Value> map = draw_true_map(d, rng);
  std::vector<Value> state = initial_state(d, map);
  int steps = (d.kind == DomainKind::kMinemapping ? 5 : 10) * d.cells();

  for (int t = 0; t < steps; ++t) {
    ActionId a = static_cast<ActionId>(rng.next_below(d.model.num_actions()));
    std::vector<Value> next = sample_next_state(d.model, state, a, rng);
    std::vector<Value> obs = sample_observation(d, next, a, rng);
    Clock::time_point u0 = Clock::now();
    filter.observe(a, obs);
    out.seconds += seconds_since(u0);
    state = std::move(next);
    ++out.steps;
  }

  Clock::time_point q0 = Clock::now();
  std::vector<std::vector<double>> marginals = filter.query_var_marginals(d.cell_vars, engine);
  out.seconds += seconds_since(q0);
  MappingScores scores = mapping_metrics(marginals, map);
  out.good = scores.good_pct;
  out.unknown = scores.unknown_pct;
  return out;
}

std::string engine_label(const EngineConfig& e) {
  if (e.kind == EngineKind::kIteratedAc)
    return std::string("ac") + std::to_string(e.ac_m);
  return engine_kind_name(e.kind);
}

double round6(double x) { return std::round(x * 1e6) / 1e6; }

std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

}  // namespace

MappingScores mapping_metrics(const std::vector<std::vector<double>>& cell_marginals,
                              const std::vector<Value>& truth, double threshold) {
  if (cell_marginals.size() != truth.size())
    fail(ErrorCode::BadArgument, "marginals and truth disagree on the cell count");
  MappingScores out;
  out.cells = static_cast<int>(truth.size());
  int good = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const std::vector<double>& m = cell_marginals[i];
    if (m.empty()) fail(ErrorCode::BadArgument, "empty cell marginal");
    size_t arg = 0;
    for (size_t v = 1; v < m.size(); ++v)
      if (m[v] > m[arg]) arg = v;
    if (m[arg] < threshold) continue;
    ++out.labeled;
    if (static_cast<Value>(arg) == truth[i]) ++good;
  }
  int unknown = out.cells - out.labeled;
  out.unknown_pct = out.cells > 0 ? 100.0 * unknown / out.cells : 0.0;
  out.good_pct = out.labeled > 0 ? 100.0 * good / out.labeled : 0.0;
  return out;
}

MinesweeperDecision minesweeper_decide(const std::vector<double>& p_mine,
                                       const std::vector<char>& candidate, Rng& rng) {
  if (p_mine.size() != candidate.size())
    fail(ErrorCode::BadArgument, "probability and candidate vectors disagree");
  double best = -1.0;
  std::vector<int> ties;
  for (size_t i = 0; i < p_mine.size(); ++i) {
    if (!candidate[i]) continue;
    double certainty = std::max(p_mine[i], 1.0 - p_mine[i]);
    if (certainty > best) {
      best = certainty;
      ties.clear();
    }
    if (certainty == best) ties.push_back(static_cast<int>(i));
  }
  if (ties.empty()) fail(ErrorCode::NoCandidates, "no cell left to act on");
  int cell = ties[rng.next_below(ties.size())];
  // At an exact 50/50 the cell is opened: a tag is only worth making when the
  // mine side is strictly more likely (and a forced-guess open can still win
  // the game, while a coin-flip tag on a clear cell always loses it).
  return {cell, p_mine[cell] > 1.0 - p_mine[cell]};
}

RunResult run_experiment(const ExperimentSpec& spec) {
  if (spec.runs < 0) fail(ErrorCode::BadArgument, "runs must be >= 0");
  if (spec.jobs < 1) fail(ErrorCode::BadArgument, "jobs must be >= 1");

  DomainModel d = build_domain(spec);
  BeamStructure s = analyze_model(d.model);

  RunResult res;
  res.domain = domain_kind_name(spec.kind);
  res.config = config_label(d);
  res.engine = engine_label(spec.engine);
  res.particles = spec.tracker.particles;
  res.runs = spec.runs;
  res.seed = spec.seed;
  if (spec.runs == 0) return res;

  std::vector<PerRun> runs(spec.runs);
  std::atomic<int> next_run{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto work = [&]() {
    try {
      MarginalEngine engine(s, spec.engine);
      for (;;) {
        int r = next_run.fetch_add(1);
        if (r >= spec.runs) break;
        std::uint64_t run_seed =
            derive_seed(spec.seed, {kTagRun, static_cast<std::uint64_t>(r)});
        runs[r] = spec.kind == DomainKind::kMinesweeper
                      ? play_minesweeper_run(d, s, engine, spec.tracker, run_seed)
                      : play_mapping_run(d, s, engine, spec.tracker, run_seed);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
      next_run.store(spec.runs);  // stop the other workers
    }
  };

  if (spec.jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < spec.jobs; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  double n = static_cast<double>(spec.runs);
  double seconds = 0.0;
  long steps = 0;
  for (const PerRun& r : runs) {
    res.success_pct += r.success;
    res.good_pct += r.good;
    res.unknown_pct += r.unknown;
    seconds += r.seconds;
    steps += r.steps;
  }
  double p = res.success_pct / n;
  res.success_pct = 100.0 * p;
  res.success_hw = 100.0 * kCiZ * std::sqrt(p * (1.0 - p) / n);
  res.good_pct /= n;
  res.unknown_pct /= n;
  double var_good = 0.0, var_unknown = 0.0;
  for (const PerRun& r : runs) {
    var_good += (r.good - res.good_pct) * (r.good - res.good_pct);
    var_unknown += (r.unknown - res.unknown_pct) * (r.unknown - res.unknown_pct);
  }
  if (spec.runs > 1) {
    res.good_hw = kCiZ * std::sqrt(var_good / (n - 1.0) / n);
    res.unknown_hw = kCiZ * std::sqrt(var_unknown / (n - 1.0) / n);
  }
  res.time_per_step_s = steps > 0 ? seconds / static_cast<double>(steps) : 0.0;
  res.time_per_exec_s = seconds / n;
  return res;
}

std::string results_to_csv(const std::vector<RunResult>& results) {
  std::ostringstream out;
  out << "domain,config,engine,particles,runs,success_pct,good_pct,unknown_pct,"
         "time_per_step_s,time_per_exec_s,seed,success_hw,good_hw,unknown_hw\n";
  for (const RunResult& r : results) {
    out << r.domain << ',' << r.config << ',' << r.engine << ',' << r.particles << ','
        << r.runs << ',' << fmt6(r.success_pct) << ',' << fmt6(r.good_pct) << ','
        << fmt6(r.unknown_pct) << ',' << fmt6(r.time_per_step_s) << ','
        << fmt6(r.time_per_exec_s) << ',' << r.seed << ',' << fmt6(r.success_hw) << ','
        << fmt6(r.good_hw) << ',' << fmt6(r.unknown_hw) << '\n';
  }
  return out.str();
}

std::string results_to_json(const std::vector<RunResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const RunResult& r : results) {
    nlohmann::json e;
    e["domain"] = r.domain;
    e["config"] = r.config;
    e["engine"] = r.engine;
    e["particles"] = r.particles;
    e["runs"] = r.runs;
    e["success_pct"] = round6(r.success_pct);
    e["good_pct"] = round6(r.good_pct);
    e["unknown_pct"] = round6(r.unknown_pct);
    e["time_per_step_s"] = round6(r.time_per_step_s);
    e["time_per_exec_s"] = round6(r.time_per_exec_s);
    e["seed"] = r.seed;
    e["success_hw"] = round6(r.success_hw);
    e["good_hw"] = round6(r.good_hw);
    e["unknown_hw"] = round6(r.unknown_hw);
    arr.push_back(std::move(e));
  }
  return arr.dump(2) + "\n";
}

std::vector<RunResult> results_from_json(const std::string& text) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, std::string("cannot parse result json: ") + e.what());
  }
  std::vector<RunResult> out;
  for (const auto& e : arr) {
    RunResult r;
    r.domain = e.at("domain").get<std::string>();
    r.config = e.at("config").get<std::string>();
    r.engine = e.at("engine").get<std::string>();
    r.particles = e.at("particles").get<int>();
    r.runs = e.at("runs").get<int>();
    r.success_pct = e.at("success_pct").get<double>();
    r.good_pct = e.at("good_pct").get<double>();
    r.unknown_pct = e.at("unknown_pct").get<double>();
    r.time_per_step_s = e.at("time_per_step_s").get<double>();
    r.time_per_exec_s = e.at("time_per_exec_s").get<double>();
    r.seed = e.at("seed").get<std::uint64_t>();
    r.success_hw = e.at("success_hw").get<double>();
    r.good_hw = e.at("good_hw").get<double>();
    r.unknown_hw = e.at("unknown_hw").get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

void write_results(const std::string& path, const std::vector<RunResult>& results,
                   const std::string& format) {
  std::string text;
  if (format == "csv") {
    text = results_to_csv(results);
  } else if (format == "json") {
    text = results_to_json(results);
  } else {
    fail(ErrorCode::BadArgument, "format must be csv or json");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) fail(ErrorCode::IoError, "failed writing " + path);
}

// ---------------------------------------------------------------------------
// Oracle cross-checks
// ---------------------------------------------------------------------------

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return 1.0;
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

class CheckLog {
 public:
  CheckLog(std::ostream& log) : log_(log) {}
  void check(const std::string& name, bool ok) {
    log_ << (ok ? "[ OK ] " : "[FAIL] ") << name << "\n";
    if (!ok) failed_ = true;
  }
  void skip(const std::string& name) { log_ << "[skip] " << name << "\n"; }
  bool all_ok() const { return !failed_; }

 private:
  std::ostream& log_;
  bool failed_ = false;
};

// Exact-path agreement: runs `histories` random consistent executions and
// compares every per-cell marginal of the factored tracker (all external
// variables backward-deterministic, nothing sampled) against the flat filter.
bool exact_agreement(const DomainModel& d, int histories, int steps_per_history,
                     std::uint64_t seed, double tol) {
  BeamStructure s = analyze_model(d.model);
  if (!s.sampled_union.empty()) return false;  // exact path required
  EngineConfig ec;
  ec.kind = EngineKind::kJointree;
  MarginalEngine engine(s, ec);
  for (int h = 0; h < histories; ++h) {
    Rng rng(derive_seed(seed, {7, static_cast<std::uint64_t>(h)}));
    TrackerConfig tc;
    tc.seed = derive_seed(seed, {8, static_cast<std::uint64_t>(h)});
    ParticleFilter filter(s, tc);
    FlatFilter flat(d.model);
    std::vector<Value> map = draw_true_map(d, rng);
    std::vector<Value> state = initial_state(d, map);
    for (int t = 0; t < steps_per_history; ++t) {
      ActionId a = d.kind == DomainKind::kMinesweeper
                       ? d.probe_actions[rng.next_below(d.probe_actions.size())]
                       : static_cast<ActionId>(rng.next_below(d.model.num_actions()));
      std::vector<Value> next = sample_next_state(d.model, state, a, rng);
      std::vector<Value> obs = sample_observation(d, next, a, rng);
      filter.observe(a, obs);
      flat.observe(a, obs);
      state = std::move(next);
      for (VarId v : d.cell_vars)
        if (max_abs_diff(filter.var_marginal(v, engine), flat.marginal({v})) > tol) return false;
      if (d.location_var) {
        if (max_abs_diff(filter.var_marginal(*d.location_var, engine),
                         flat.marginal({*d.location_var})) > tol)
          return false;
      }
    }
  }
  return true;
}

// Level-0 iterated-AC support versus the independent support-set tracker on
// noise-free minesweeper games with uniform cell priors, checked every step.
bool support_agreement(int rows, int cols, int mines, int games, std::uint64_t seed) {
  DomainModel d = build_minesweeper(rows, cols, mines, 0.5);
  BeamStructure s = analyze_model(d.model);
  EngineConfig ec;
  ec.kind = EngineKind::kIteratedAc;
  ec.ac_m = 0;
  MarginalEngine engine(s, ec);

  for (int g = 0; g < games; ++g) {
    Rng rng(derive_seed(seed, {9, static_cast<std::uint64_t>(g)}));
    TrackerConfig tc;
    tc.seed = derive_seed(seed, {10, static_cast<std::uint64_t>(g)});
    ParticleFilter filter(s, tc);
    SupportTracker sets(s);
    std::vector<Value> map = draw_true_map(d, rng);
    std::vector<Value> state = initial_state(d, map);
    std::vector<int> order(d.cells());
    for (int i = 0; i < d.cells(); ++i) order[i] = i;
    for (int i = d.cells() - 1; i > 0; --i)
      std::swap(order[i], order[rng.next_below(static_cast<std::uint64_t>(i) + 1)]);

    for (int cell : order) {
      if (map[cell] == 1) continue;  // probe only clear cells: noise-free play
      ActionId a = d.probe_actions[cell];
      std::vector<Value> obs = sample_observation(d, state, a, rng);
      filter.observe(a, obs);
      sets.observe(a, obs);
      engine.propagate(*filter.particles()[0].factors);
      const auto& levels = engine.ac_cell_levels();
      for (int j = 0; j < s.beam_count(); ++j) {
        const std::vector<char>& alive = sets.support(j);
        for (size_t c = 0; c < alive.size(); ++c) {
          bool engine_alive = levels[j][c] == 0;
          if (engine_alive != (alive[c] != 0)) return false;
        }
      }
    }
  }
  return true;
}

int count_state_vars(const DomainModel& d) { return d.model.num_state_vars(); }

}  // namespace

bool run_oracle_checks(DomainKind kind, int max_vars, std::uint64_t seed, std::ostream& log) {
  CheckLog c(log);
  auto gate = [&](const DomainModel& d) { return count_state_vars(d) <= max_vars; };

  switch (kind) {
    case DomainKind::kMinesweeper: {
      {
        DomainModel d = build_minesweeper(2, 2, 1);
        if (gate(d))
          c.check("minesweeper 2x2: factored tracking equals the flat filter",
                  exact_agreement(d, 20, 4, seed, 1e-9));
        else
          c.skip("minesweeper 2x2 (needs 4 variables)");
      }
      {
        DomainModel d = build_minesweeper(3, 3, 2);
        if (gate(d))
          c.check("minesweeper 3x3: factored tracking equals the flat filter",
                  exact_agreement(d, 10, 9, seed, 1e-9));
        else
          c.skip("minesweeper 3x3 (needs 9 variables)");
      }
      {
        DomainModel d = build_minesweeper(4, 4, 3);
        if (gate(d))
          c.check("minesweeper 4x4: level-0 AC support equals the set tracker",
                  support_agreement(4, 4, 3, 10, seed));
        else
          c.skip("minesweeper 4x4 support comparison (needs 16 variables)");
      }
      break;
    }
    case DomainKind::kLineSlamDirect: {
      for (int n : {2, 3, 4}) {
        DomainModel d = build_line_slam_direct(n);
        if (!gate(d)) {
          c.skip("direct line n=" + std::to_string(n));
          continue;
        }
        BeamStructure s = analyze_model(d.model);
        c.check("direct line n=" + std::to_string(n) + ": one block of n+1 variables",
                s.beam_count() == 1 && s.causal_width == n + 1);
        c.check("direct line n=" + std::to_string(n) + ": factored tracking equals the flat filter",
                exact_agreement(d, 10, 8, seed, 1e-9));
      }
      break;
    }
    case DomainKind::kLineSlamSplit: {
      for (int n : {3, 4}) {
        DomainModel split = build_line_slam_split(n);
        if (!gate(split)) {
          c.skip("split line n=" + std::to_string(n));
          continue;
        }
        BeamStructure s = analyze_model(split.model);
        c.check("split line n=" + std::to_string(n) + ": n blocks of width 2",
                s.beam_count() == n && s.causal_width == 2);
        // Posterior equivalence with the direct model over shared histories.
        DomainModel direct = build_line_slam_direct(n);
        bool ok = true;
        for (int h = 0; h < 10 && ok; ++h) {
          Rng rng(derive_seed(seed, {11, static_cast<std::uint64_t>(h)}));
          FlatFilter fs(split.model);
          FlatFilter fd(direct.model);
          std::vector<Value> map = draw_true_map(split, rng);
          std::vector<Value> state = initial_state(split, map);
          for (int t = 0; t < 6 && ok; ++t) {
            ActionId a = static_cast<ActionId>(rng.next_below(2));
            std::vector<Value> next = sample_next_state(split.model, state, a, rng);
            std::vector<Value> obs = sample_observation(split, next, a, rng);
            fs.observe(a, obs);
            fd.observe(a, {obs[0]});  // same reading, single observation variable
            state = std::move(next);
            for (VarId v = 0; v < split.model.num_state_vars(); ++v)
              if (max_abs_diff(fs.marginal({v}), fd.marginal({v})) > 1e-9) ok = false;
          }
        }
        c.check("split line n=" + std::to_string(n) +
                    ": flat posterior equals the direct model's",
                ok);
      }
      break;
    }
    case DomainKind::kLine3Slam: {
      {
        DomainModel d = build_line3_slam(3);
        if (gate(d)) {
          BeamStructure s = analyze_model(d.model);
          c.check("line3 n=3: single block, nothing sampled",
                  s.beam_count() == 1 && s.sampled_union.empty());
          c.check("line3 n=3: factored tracking equals the flat filter",
                  exact_agreement(d, 10, 8, seed, 1e-9));
        } else {
          c.skip("line3 n=3");
        }
      }
      {
        DomainModel d = build_line3_slam(6);
        if (gate(d)) {
          BeamStructure s = analyze_model(d.model);
          bool ok = s.beam_count() == 4 && s.sampled_union.size() == 1 &&
                    s.sampled_union[0] == *d.location_var;
          c.check("line3 n=6: n-2 blocks, location sampled", ok);
        } else {
          c.skip("line3 n=6 structure");
        }
      }
      break;
    }
    case DomainKind::kMinemapping: {
      {
        DomainModel d = build_minemapping(2, 2, 1);
        if (gate(d))
          c.check("minemapping 2x2: factored tracking equals the flat filter",
                  exact_agreement(d, 10, 6, seed, 1e-9));
        else
          c.skip("minemapping 2x2 (needs 5 variables)");
      }
      {
        DomainModel d = build_minemapping(3, 3, 4);
        if (gate(d))
          c.check("minemapping 3x3: factored tracking equals the flat filter",
                  exact_agreement(d, 2, 5, seed, 1e-9));
        else
          c.skip("minemapping 3x3 (needs 10 variables)");
      }
      {
        // The count distribution over a fully mined interior neighborhood is
        // Binomial(9, 0.9); over a clear one it is Binomial(9, 0.1).
        DomainModel d = build_minemapping(3, 3, 0);
        std::vector<Value> mined(9, 1), clear(9, 0);
        auto binom = [](int n, double p) {
          std::vector<double> dist{1.0};
          for (int i = 0; i < n; ++i) {
            std::vector<double> nx(dist.size() + 1, 0.0);
            for (size_t k = 0; k < dist.size(); ++k) {
              nx[k] += dist[k] * (1 - p);
              nx[k + 1] += dist[k] * p;
            }
            dist = std::move(nx);
          }
          return dist;
        };
        std::vector<double> want_mined = binom(9, 0.9);
        std::vector<double> want_clear = binom(9, 0.1);
        want_mined.resize(10, 0.0);
        want_clear.resize(10, 0.0);
        bool ok =
            max_abs_diff(minemapping_count_distribution(d, 4, mined), want_mined) < 1e-12 &&
            max_abs_diff(minemapping_count_distribution(d, 4, clear), want_clear) < 1e-12;
        c.check("minemapping: count sensor matches the binomial convolution", ok);
      }
      break;
    }
  }
  return c.all_ok();
}

}  // namespace pbt
