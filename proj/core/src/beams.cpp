#include "pbt/beams.hpp"

#include <algorithm>
#include <queue>
#include <set>

namespace pbt {

namespace {

constexpr double kDetTol = 1e-9;

// Index of the single value with probability ~1 in a row, or -1 if the row is
// not a point mass.
int point_mass_of(const double* row, int domain) {
  for (int c = 0; c < domain; ++c)
    if (row[c] >= 1.0 - kDetTol) return c;
  return -1;
}

// Closure of a seed set under "add the transition parents of every member".
std::vector<VarId> close_under_causes(const TwoSliceDbn& model, std::vector<VarId> seed) {
  std::set<VarId> seen(seed.begin(), seed.end());
  std::queue<VarId> todo;
  for (VarId v : seed) todo.push(v);
  while (!todo.empty()) {
    VarId v = todo.front();
    todo.pop();
    for (ActionId a = 0; a < model.num_actions(); ++a)
      for (VarId p : model.transition(v, a).parents)
        if (seen.insert(p).second) todo.push(p);
  }
  return {seen.begin(), seen.end()};
}

// Point-mass prior value of a variable, or nullopt. Computed from the block
// containing the variable by marginalization.
std::optional<Value> point_prior_value(const TwoSliceDbn& model, VarId v) {
  for (const auto& b : model.priors) {
    auto it = std::find(b.vars.begin(), b.vars.end(), v);
    if (it == b.vars.end()) continue;
    size_t pos = static_cast<size_t>(it - b.vars.begin());
    std::vector<int> sizes;
    for (VarId w : b.vars) sizes.push_back(model.state_vars[w].domain_size());
    DiscreteSpace space(sizes);
    std::vector<double> marginal(model.state_vars[v].domain_size(), 0.0);
    for (size_t i = 0; i < space.total; ++i) marginal[space.digit(i, pos)] += b.table[i];
    for (size_t c = 0; c < marginal.size(); ++c)
      if (marginal[c] >= 1.0 - kDetTol) return static_cast<Value>(c);
    return std::nullopt;
  }
  return std::nullopt;
}

// If, under action a, the next value of v is a well-defined deterministic
// function of v alone (any extra parents ignored), return the map v -> v'.
std::optional<std::vector<Value>> self_map(const TwoSliceDbn& model, VarId v, ActionId a) {
  const CondTable& t = model.transition(v, a);
  auto self = std::find(t.parents.begin(), t.parents.end(), v);
  if (self == t.parents.end()) return std::nullopt;
  size_t self_pos = static_cast<size_t>(self - t.parents.begin());
  std::vector<int> sizes;
  for (VarId p : t.parents) sizes.push_back(model.state_vars[p].domain_size());
  DiscreteSpace rows(sizes);
  const int dom = model.state_vars[v].domain_size();
  std::vector<Value> map(dom, -1);
  for (size_t r = 0; r < rows.total; ++r) {
    int next = point_mass_of(&t.rows[r * dom], dom);
    if (next < 0) return std::nullopt;  // stochastic row
    Value cur = rows.digit(r, self_pos);
    if (map[cur] == -1)
      map[cur] = next;
    else if (map[cur] != next)
      return std::nullopt;  // depends on a parent other than v
  }
  return map;
}

bool is_identity(const std::vector<Value>& map) {
  for (size_t i = 0; i < map.size(); ++i)
    if (map[i] != static_cast<Value>(i)) return false;
  return true;
}

std::optional<std::vector<Value>> invert_injective(const std::vector<Value>& map) {
  std::vector<Value> inv(map.size(), -1);
  for (size_t v = 0; v < map.size(); ++v) {
    if (inv[map[v]] != -1) return std::nullopt;  // not injective
    inv[map[v]] = static_cast<Value>(v);
  }
  return inv;
}

}  // namespace

const char* bd_class_name(BdClass c) {
  switch (c) {
    case BdClass::kStatic: return "static";
    case BdClass::kFullyObservable: return "fully_observable";
    case BdClass::kDetermined: return "determined";
    case BdClass::kInjectiveDeterministic: return "injective_deterministic";
    case BdClass::kForced: return "forced";
    case BdClass::kSampled: return "sampled";
  }
  return "?";
}

bool BeamStructure::is_sampled(VarId v) const {
  return std::binary_search(sampled_union.begin(), sampled_union.end(), v);
}

int BeamStructure::beam_slot(BeamId b, VarId v) const {
  const auto& vars = beams[b].vars;
  auto it = std::lower_bound(vars.begin(), vars.end(), v);
  if (it == vars.end() || *it != v) return -1;
  return static_cast<int>(it - vars.begin());
}

std::vector<VarId> causally_relevant_set(const TwoSliceDbn& model, VarId v) {
  return close_under_causes(model, {v});
}

std::vector<VarId> causally_relevant_set_obs(const TwoSliceDbn& model, ObsId o) {
  std::set<VarId> seed;
  for (ActionId a = 0; a < model.num_actions(); ++a)
    for (VarId p : model.sensor(o, a).parents) seed.insert(p);
  return close_under_causes(model, {seed.begin(), seed.end()});
}

std::vector<std::vector<VarId>> minimal_beam_collection(const TwoSliceDbn& model) {
  std::vector<std::vector<VarId>> candidates;
  for (VarId v = 0; v < model.num_state_vars(); ++v)
    candidates.push_back(causally_relevant_set(model, v));
  for (ObsId o = 0; o < model.num_obs_vars(); ++o)
    candidates.push_back(causally_relevant_set_obs(model, o));

  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                  [](const std::vector<VarId>& v) { return v.empty(); }),
                   candidates.end());

  // Drop beams properly contained in another beam.
  std::vector<std::vector<VarId>> beams;
  for (const auto& c : candidates) {
    bool contained = false;
    for (const auto& other : candidates) {
      if (other.size() <= c.size()) continue;
      if (std::includes(other.begin(), other.end(), c.begin(), c.end())) {
        contained = true;
        break;
      }
    }
    if (!contained) beams.push_back(c);
  }
  return beams;  // already in lexicographic order
}

int causal_width(const std::vector<std::vector<VarId>>& beams) {
  size_t w = 0;
  for (const auto& b : beams) w = std::max(w, b.size());
  return static_cast<int>(w);
}

BeamStructure analyze_model(const TwoSliceDbn& model) {
  BeamStructure s;
  s.model = &model;

  auto beam_sets = minimal_beam_collection(model);
  s.beams.resize(beam_sets.size());
  for (size_t i = 0; i < beam_sets.size(); ++i) {
    s.beams[i].index = static_cast<BeamId>(i);
    s.beams[i].vars = std::move(beam_sets[i]);
  }
  s.causal_width = causal_width([&] {
    std::vector<std::vector<VarId>> vs;
    for (const auto& b : s.beams) vs.push_back(b.vars);
    return vs;
  }());

  const int nv = model.num_state_vars();
  std::vector<std::vector<BeamId>> containing(nv);
  for (const auto& b : s.beams)
    for (VarId v : b.vars) containing[v].push_back(b.index);

  s.owner_beam.assign(nv, -1);
  for (VarId v = 0; v < nv; ++v) {
    if (containing[v].empty())
      fail(ErrorCode::DanglingReference,
           "state variable " + model.state_vars[v].name + " appears in no beam");
    s.owner_beam[v] = containing[v].front();
  }

  // Determined set: point prior, deterministic transitions, parents determined.
  std::set<VarId> determined;
  std::map<VarId, Value> det_init;
  for (VarId v = 0; v < nv; ++v) {
    auto init = point_prior_value(model, v);
    if (!init) continue;
    bool deterministic = true;
    const int dom = model.state_vars[v].domain_size();
    for (ActionId a = 0; a < model.num_actions() && deterministic; ++a) {
      const CondTable& t = model.transition(v, a);
      size_t rows = t.row_count(model.state_vars);
      for (size_t r = 0; r < rows; ++r)
        if (point_mass_of(&t.rows[r * dom], dom) < 0) {
          deterministic = false;
          break;
        }
    }
    if (deterministic) det_init[v] = *init;
  }
  // Close under "all parents determined".
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [v, init] : det_init) {
      if (determined.count(v)) continue;
      bool ok = true;
      for (ActionId a = 0; a < model.num_actions() && ok; ++a)
        for (VarId p : model.transition(v, a).parents)
          if (p != v && !determined.count(p)) {
            ok = false;
            break;
          }
      if (ok) {
        determined.insert(v);
        changed = true;
      }
    }
  }
  // Self-loops among determined vars are fine (their parents are determined
  // too once the set settles); redo a fixpoint allowing self-reference.
  changed = true;
  while (changed) {
    changed = false;
    for (const auto& [v, init] : det_init) {
      if (determined.count(v)) continue;
      bool ok = true;
      for (ActionId a = 0; a < model.num_actions() && ok; ++a)
        for (VarId p : model.transition(v, a).parents)
          if (p == v ? !det_init.count(p) : !determined.count(p)) {
            ok = false;
            break;
          }
      if (ok) {
        determined.insert(v);
        changed = true;
      }
    }
  }

  // Classify externals.
  for (VarId v = 0; v < nv; ++v) {
    bool external = containing[v].size() > 1;
    bool forced_sampled = model.force_sampled.count(v) > 0;
    if (!external && !forced_sampled) continue;  // internal: no class needed

    BdClass cls = BdClass::kSampled;
    if (forced_sampled) {
      cls = BdClass::kSampled;
    } else {
      // static?
      bool is_static = true;
      std::vector<std::vector<Value>> maps(model.num_actions());
      for (ActionId a = 0; a < model.num_actions(); ++a) {
        auto m = self_map(model, v, a);
        if (!m || !is_identity(*m)) {
          is_static = false;
          break;
        }
        maps[a] = *m;
      }
      if (is_static) {
        cls = BdClass::kStatic;
      } else {
        // fully observable? needs a revealing sensor with parent exactly {v}
        // plus a point prior for the very first step.
        std::optional<BeamStructure::FullyObservableInfo> fo;
        if (auto init = point_prior_value(model, v)) {
          for (ObsId o = 0; o < model.num_obs_vars() && !fo; ++o) {
            bool reveals = true;
            BeamStructure::FullyObservableInfo info;
            info.obs = o;
            info.init = *init;
            info.reveal.assign(model.num_actions(), {});
            for (ActionId a = 0; a < model.num_actions() && reveals; ++a) {
              const CondTable& t = model.sensor(o, a);
              if (t.parents.size() != 1 || t.parents[0] != v) {
                reveals = false;
                break;
              }
              const int odom = model.obs_vars[o].domain_size();
              const int vdom = model.state_vars[v].domain_size();
              info.reveal[a].assign(odom, std::nullopt);
              for (Value val = 0; val < vdom; ++val) {
                int obs = point_mass_of(&t.rows[static_cast<size_t>(val) * odom], odom);
                if (obs < 0 || info.reveal[a][obs]) {  // noisy or not injective
                  reveals = false;
                  break;
                }
                info.reveal[a][obs] = val;
              }
            }
            if (reveals) fo = info;
          }
        }
        if (fo) {
          cls = BdClass::kFullyObservable;
          s.fully_observable[v] = *fo;
        } else if (determined.count(v)) {
          cls = BdClass::kDetermined;
          s.determined_init[v] = det_init[v];
          auto& fmaps = s.determined_map[v];
          fmaps.resize(model.num_actions());
          for (ActionId a = 0; a < model.num_actions(); ++a) {
            const CondTable& t = model.transition(v, a);
            const int dom = model.state_vars[v].domain_size();
            // Evaluate f_a at the tracked valuation lazily: store the full
            // row->value map only when v is the sole parent; otherwise the
            // regression path recomputes from the CPT.
            if (t.parents.size() == 1 && t.parents[0] == v) {
              fmaps[a].resize(dom);
              for (Value val = 0; val < dom; ++val)
                fmaps[a][val] = point_mass_of(&t.rows[static_cast<size_t>(val) * dom], dom);
            } else {
              fmaps[a].clear();  // marker: consult CPT with full determined context
            }
          }
        } else {
          bool injective = true;
          std::vector<std::vector<Value>> inverses(model.num_actions());
          for (ActionId a = 0; a < model.num_actions(); ++a) {
            auto m = self_map(model, v, a);
            auto inv = m ? invert_injective(*m) : std::nullopt;
            if (!inv) {
              injective = false;
              break;
            }
            inverses[a] = *inv;
          }
          if (injective) {
            cls = BdClass::kInjectiveDeterministic;
            s.injective_inverse[v] = std::move(inverses);
          } else if (model.force_bd.count(v)) {
            cls = BdClass::kForced;
          } else {
            cls = BdClass::kSampled;
          }
        }
      }
    }
    s.bd_class[v] = cls;
    if (cls == BdClass::kSampled) s.sampled_union.push_back(v);
  }
  std::sort(s.sampled_union.begin(), s.sampled_union.end());

  // Partition per beam.
  const int nb = s.beam_count();
  s.internal_vars.resize(nb);
  s.external_bd.resize(nb);
  s.sampled_vars.resize(nb);
  s.factor_vars.resize(nb);
  s.owned_state_vars.resize(nb);
  for (const auto& b : s.beams) {
    for (VarId v : b.vars) {
      if (s.is_sampled(v))
        s.sampled_vars[b.index].push_back(v);
      else if (containing[v].size() == 1)
        s.internal_vars[b.index].push_back(v);
      else
        s.external_bd[b.index].push_back(v);
      if (!s.is_sampled(v)) s.factor_vars[b.index].push_back(v);
    }
  }
  for (VarId v = 0; v < nv; ++v) s.owned_state_vars[s.owner_beam[v]].push_back(v);

  // Observation ownership: lowest beam containing all parents of the sensor.
  s.obs_owner_beam.assign(model.num_obs_vars(), -1);
  for (ObsId o = 0; o < model.num_obs_vars(); ++o) {
    std::set<VarId> causes;
    for (ActionId a = 0; a < model.num_actions(); ++a)
      for (VarId p : model.sensor(o, a).parents) causes.insert(p);
    for (const auto& b : s.beams) {
      if (std::includes(b.vars.begin(), b.vars.end(), causes.begin(), causes.end())) {
        s.obs_owner_beam[o] = b.index;
        break;
      }
    }
    if (s.obs_owner_beam[o] < 0)
      fail(ErrorCode::DanglingReference,
           "observation " + model.obs_vars[o].name + " has causes covered by no beam");
    s.beams[s.obs_owner_beam[o]].obs.push_back(o);
  }

  // Covering beam for the sampled union.
  if (!s.sampled_union.empty()) {
    for (const auto& b : s.beams) {
      if (std::includes(b.vars.begin(), b.vars.end(), s.sampled_union.begin(),
                        s.sampled_union.end())) {
        s.covering_beam = b.index;
        break;
      }
    }
  }

  s.prediction_preserves_factors = true;
  for (VarId v = 0; v < nv && s.prediction_preserves_factors; ++v) {
    if (s.is_sampled(v)) {
      for (ActionId a = 0; a < model.num_actions(); ++a)
        for (VarId p : model.transition(v, a).parents)
          if (!s.is_sampled(p)) {
            s.prediction_preserves_factors = false;
            break;
          }
    } else {
      for (ActionId a = 0; a < model.num_actions(); ++a) {
        auto m = self_map(model, v, a);
        if (!m || !is_identity(*m)) {
          s.prediction_preserves_factors = false;
          break;
        }
      }
    }
  }

  // Fast-path precomputation. Tables are deduplicated through their shared
  // pointers, so each distinct table is scanned once.
  std::map<const CondTable*, bool> exact_identity_memo;
  auto table_is_exact_identity = [&](VarId v, const CondTable& t) {
    auto memo = exact_identity_memo.find(&t);
    if (memo != exact_identity_memo.end()) return memo->second;
    bool ok = false;
    auto self = std::find(t.parents.begin(), t.parents.end(), v);
    if (self != t.parents.end()) {
      size_t self_pos = static_cast<size_t>(self - t.parents.begin());
      std::vector<int> sizes;
      for (VarId p : t.parents) sizes.push_back(model.state_vars[p].domain_size());
      DiscreteSpace rows(sizes);
      const int dom = model.state_vars[v].domain_size();
      ok = true;
      for (size_t r = 0; r < rows.total && ok; ++r) {
        Value cur = rows.digit(r, self_pos);
        for (int c = 0; c < dom; ++c)
          if (t.rows[r * static_cast<size_t>(dom) + static_cast<size_t>(c)] !=
              (c == cur ? 1.0 : 0.0)) {
            ok = false;
            break;
          }
      }
    }
    exact_identity_memo[&t] = ok;
    return ok;
  };
  std::vector<char> var_exact_static(nv, 1);
  for (VarId v = 0; v < nv; ++v)
    for (ActionId a = 0; a < model.num_actions() && var_exact_static[v]; ++a)
      if (!table_is_exact_identity(v, model.transition(v, a))) var_exact_static[v] = 0;

  s.static_progression.assign(s.beams.size(), 1);
  for (const Beam& b : s.beams) {
    for (VarId v : s.factor_vars[b.index])
      if (!var_exact_static[v]) {
        s.static_progression[b.index] = 0;
        break;
      }
    if (!s.static_progression[b.index]) continue;
    for (VarId v : s.owned_state_vars[b.index]) {
      if (!s.is_sampled(v)) continue;
      for (ActionId a = 0; a < model.num_actions(); ++a)
        for (VarId p : model.transition(v, a).parents)
          if (!s.is_sampled(p)) {
            s.static_progression[b.index] = 0;
            break;
          }
    }
  }

  std::map<const CondTable*, bool> constant_memo;
  auto rows_all_equal = [&](const CondTable& t, int dom) {
    auto memo = constant_memo.find(&t);
    if (memo != constant_memo.end()) return memo->second;
    bool ok = true;
    const size_t rows = t.rows.size() / static_cast<size_t>(dom);
    for (size_t r = 1; r < rows && ok; ++r)
      for (int c = 0; c < dom; ++c)
        if (t.rows[r * static_cast<size_t>(dom) + static_cast<size_t>(c)] !=
            t.rows[static_cast<size_t>(c)]) {
          ok = false;
          break;
        }
    constant_memo[&t] = ok;
    return ok;
  };
  s.sensor_state_free.assign(model.num_obs_vars(), {});
  for (ObsId o = 0; o < model.num_obs_vars(); ++o) {
    s.sensor_state_free[o].assign(model.num_actions(), 0);
    for (ActionId a = 0; a < model.num_actions(); ++a)
      s.sensor_state_free[o][a] =
          rows_all_equal(model.sensor(o, a), model.obs_vars[o].domain_size());
  }
  return s;
}

RegressionContext RegressionContext::initial(const BeamStructure& s) {
  RegressionContext ctx;
  ctx.step = 0;
  for (const auto& [v, init] : s.determined_init) ctx.determined_now[v] = init;
  for (const auto& [v, info] : s.fully_observable) ctx.observed_now[v] = info.init;
  return ctx;
}

void RegressionContext::advance(const BeamStructure& s, ActionId a,
                                const std::vector<Value>& obs) {
  const TwoSliceDbn& model = *s.model;
  // Determined: apply the deterministic transition at the current valuation.
  std::map<VarId, Value> next_det;
  for (auto& [v, cur] : determined_now) {
    const auto& fmaps = s.determined_map.at(v)[a];
    if (!fmaps.empty()) {
      next_det[v] = fmaps[cur];
    } else {
      const CondTable& t = model.transition(v, a);
      size_t idx = 0;
      for (VarId p : t.parents)
        idx = idx * static_cast<size_t>(model.state_vars[p].domain_size()) +
              static_cast<size_t>(p == v ? cur : determined_now.at(p));
      const int dom = model.state_vars[v].domain_size();
      int nxt = -1;
      for (int c = 0; c < dom; ++c)
        if (t.rows[idx * dom + c] >= 1.0 - 1e-9) nxt = c;
      next_det[v] = nxt;
    }
  }
  for (auto& [v, val] : next_det) determined_now[v] = val;

  for (auto& [v, cur] : observed_now) {
    const auto& info = s.fully_observable.at(v);
    auto revealed = info.reveal[a][obs[info.obs]];
    if (!revealed)
      fail(ErrorCode::ImpossibleObservation,
           "observation incompatible with noiseless sensor for " + model.state_vars[v].name);
    cur = *revealed;
  }
  ++step;
}

std::optional<Value> regress(const BeamStructure& s, VarId v, Value v_next, ActionId a,
                             const RegressionContext& ctx) {
  if (s.is_sampled(v)) {
    if (ctx.u_now.empty())
      fail(ErrorCode::NotRegressable,
           "variable " + s.model->state_vars[v].name + " is sampled and no samples were given");
    auto it = std::lower_bound(s.sampled_union.begin(), s.sampled_union.end(), v);
    return ctx.u_now[static_cast<size_t>(it - s.sampled_union.begin())];
  }
  auto cls = s.bd_class.find(v);
  if (cls == s.bd_class.end())
    fail(ErrorCode::BadArgument,
         "variable " + s.model->state_vars[v].name + " is internal; regression never applies");
  switch (cls->second) {
    case BdClass::kStatic:
      return v_next;
    case BdClass::kInjectiveDeterministic:
      return s.injective_inverse.at(v)[a][v_next];
    case BdClass::kForced: {
      return s.model->force_bd.at(v).inverse[a][v_next];
    }
    case BdClass::kDetermined: {
      Value cur = ctx.determined_now.at(v);
      const auto& fmaps = s.determined_map.at(v)[a];
      Value nxt;
      if (!fmaps.empty()) {
        nxt = fmaps[cur];
      } else {
        const TwoSliceDbn& model = *s.model;
        const CondTable& t = model.transition(v, a);
        size_t idx = 0;
        for (VarId p : t.parents)
          idx = idx * static_cast<size_t>(model.state_vars[p].domain_size()) +
                static_cast<size_t>(p == v ? cur : ctx.determined_now.at(p));
        const int dom = model.state_vars[v].domain_size();
        nxt = -1;
        for (int c = 0; c < dom; ++c)
          if (t.rows[idx * dom + c] >= 1.0 - 1e-9) nxt = c;
      }
      if (nxt != v_next) return std::nullopt;  // v_next unreachable this step
      return cur;
    }
    case BdClass::kFullyObservable:
      return ctx.observed_now.at(v);
    case BdClass::kSampled:
      break;  // handled above
  }
  return std::nullopt;
}

}  // namespace pbt
