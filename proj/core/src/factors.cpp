#include "pbt/factors.hpp"

#include <algorithm>
#include <cmath>

namespace pbt {

namespace {

// Where a CPT argument's value comes from during an update: a slot in the
// beam's factor valuation, or an index into the sampled-value vector.
struct ValueRef {
  int slot = -1;     // position in factor vars, -1 if sampled
  int sampled = -1;  // position in sampled_union, -1 if in-factor
  int dom = 1;
};

struct CompiledCpt {
  const CondTable* table = nullptr;
  ValueRef child;
  std::vector<ValueRef> parents;
};

ValueRef make_ref(const BeamStructure& s, const BeliefFactor& f, VarId v) {
  ValueRef r;
  r.dom = s.model->state_vars[v].domain_size();
  if (s.is_sampled(v)) {
    auto it = std::lower_bound(s.sampled_union.begin(), s.sampled_union.end(), v);
    r.sampled = static_cast<int>(it - s.sampled_union.begin());
  } else {
    auto it = std::lower_bound(f.vars.begin(), f.vars.end(), v);
    if (it == f.vars.end() || *it != v)
      fail(ErrorCode::DanglingReference,
           "variable " + s.model->state_vars[v].name + " missing from its beam factor");
    r.slot = static_cast<int>(it - f.vars.begin());
  }
  return r;
}

inline Value ref_value(const ValueRef& r, const std::vector<Value>& factor_vals,
                       const std::vector<Value>& sampled_vals) {
  return r.slot >= 0 ? factor_vals[r.slot] : sampled_vals[r.sampled];
}

inline size_t row_of(const CompiledCpt& c, const std::vector<Value>& factor_vals,
                     const std::vector<Value>& sampled_vals) {
  size_t idx = 0;
  for (const ValueRef& p : c.parents)
    idx = idx * static_cast<size_t>(p.dom) +
          static_cast<size_t>(ref_value(p, factor_vals, sampled_vals));
  return idx;
}

// Shared body of predict / progress. With `observe` false the observation
// multiply and the zero-sum guard are skipped.
// Fast update for beams whose prediction provably leaves the factor alone
// (exactly static factor variables, sampled-only parents for owned sampled
// variables): the cells change only through state-dependent sensors. The
// constant part — owned sampled transitions and state-free sensors — scales
// every cell equally; a zero there zeroes the whole factor, exactly as the
// general update would.
void step_factor_static(const BeamStructure& s, BeliefFactor& factor, ActionId a,
                        const std::vector<Value>* obs, const RegressionContext& ctx) {
  const TwoSliceDbn& model = *s.model;
  const BeamId j = factor.beam;

  double constant = 1.0;
  for (VarId v : s.owned_state_vars[j]) {
    if (!s.is_sampled(v)) continue;
    const CondTable& t = model.transition(v, a);
    size_t row = 0;
    for (VarId p : t.parents) {
      auto it = std::lower_bound(s.sampled_union.begin(), s.sampled_union.end(), p);
      row = row * static_cast<size_t>(model.state_vars[p].domain_size()) +
            static_cast<size_t>(ctx.u_now[static_cast<size_t>(it - s.sampled_union.begin())]);
    }
    auto self = std::lower_bound(s.sampled_union.begin(), s.sampled_union.end(), v);
    const int dom = model.state_vars[v].domain_size();
    constant *= t.rows[row * static_cast<size_t>(dom) +
                       static_cast<size_t>(
                           ctx.u_next[static_cast<size_t>(self - s.sampled_union.begin())])];
  }

  std::vector<CompiledCpt> sens;  // state-dependent sensors only
  if (obs) {
    for (ObsId o : s.beams[j].obs) {
      const CondTable& t = model.sensor(o, a);
      if (s.sensor_state_free[o][a]) {
        constant *= t.rows[static_cast<size_t>((*obs)[o])];
      } else {
        CompiledCpt c;
        c.table = &t;
        c.child.slot = -2;
        c.child.dom = model.obs_vars[o].domain_size();
        c.child.sampled = static_cast<int>(o);
        for (VarId p : c.table->parents) c.parents.push_back(make_ref(s, factor, p));
        sens.push_back(std::move(c));
      }
      if (constant == 0.0) break;
    }
  }

  if (constant == 0.0) {
    if (obs)
      fail(ErrorCode::ImpossibleObservation,
           "observation has probability zero under the belief of beam " + std::to_string(j));
    factor.probs.assign(factor.probs.size(), 0.0);
    return;
  }
  if (sens.empty()) return;  // every cell scales equally; normalization undoes it

  std::vector<double> out(factor.probs.size(), 0.0);
  std::vector<Value> vals(factor.vars.size());
  double total = 0.0;
  for (size_t i = 0; i < factor.space.total; ++i) {
    double q = factor.probs[i];
    if (q == 0.0) continue;
    factor.space.valuation_of(i, vals);
    for (const CompiledCpt& c : sens) {
      size_t row = row_of(c, vals, ctx.u_next);
      q *= c.table->rows[row * static_cast<size_t>(c.child.dom) +
                         static_cast<size_t>((*obs)[c.child.sampled])];
      if (q == 0.0) break;
    }
    out[i] = q;
    total += q;
  }
  if (total <= 0.0)
    fail(ErrorCode::ImpossibleObservation,
         "observation has probability zero under the belief of beam " + std::to_string(j));
  for (double& p : out) p /= total;
  factor.probs = std::move(out);
}

void step_factor(const BeamStructure& s, BeliefFactor& factor, ActionId a,
                 const std::vector<Value>* obs, const RegressionContext& ctx) {
  const TwoSliceDbn& model = *s.model;
  const BeamId j = factor.beam;

  if (static_cast<size_t>(j) < s.static_progression.size() && s.static_progression[j]) {
    step_factor_static(s, factor, a, obs, ctx);
    return;
  }

  // Compile owned transition CPTs (parents read at time t, child at t+1).
  std::vector<CompiledCpt> trans;
  for (VarId v : s.owned_state_vars[j]) {
    CompiledCpt c;
    c.table = &model.transition(v, a);
    c.child = make_ref(s, factor, v);
    for (VarId p : c.table->parents) c.parents.push_back(make_ref(s, factor, p));
    trans.push_back(std::move(c));
  }
  // Compile owned sensor CPTs (parents read at time t+1).
  std::vector<CompiledCpt> sens;
  if (obs) {
    for (ObsId o : s.beams[j].obs) {
      CompiledCpt c;
      c.table = &model.sensor(o, a);
      c.child.slot = -2;  // child is the observation itself
      c.child.dom = model.obs_vars[o].domain_size();
      c.child.sampled = static_cast<int>(o);  // reuse field: which obs
      for (VarId p : c.table->parents) c.parents.push_back(make_ref(s, factor, p));
      sens.push_back(std::move(c));
    }
  }

  // Internal/external split of the factor slots.
  std::vector<int> internal_slots, external_slots;
  std::vector<VarId> external_vars;
  for (size_t k = 0; k < factor.vars.size(); ++k) {
    VarId v = factor.vars[k];
    bool internal =
        std::binary_search(s.internal_vars[j].begin(), s.internal_vars[j].end(), v);
    if (internal)
      internal_slots.push_back(static_cast<int>(k));
    else
      external_slots.push_back(static_cast<int>(k)), external_vars.push_back(v);
  }
  std::vector<int> internal_sizes;
  for (int k : internal_slots) internal_sizes.push_back(factor.space.sizes[k]);
  DiscreteSpace internal_space(internal_sizes);

  // Statically classified externals regress to themselves; skip the dispatch
  // inside the hot loop.
  std::vector<char> ext_static(external_vars.size(), 0);
  for (size_t k = 0; k < external_vars.size(); ++k) {
    VarId v = external_vars[k];
    if (!s.is_sampled(v)) {
      auto cls = s.bd_class.find(v);
      ext_static[k] = cls != s.bd_class.end() && cls->second == BdClass::kStatic;
    }
  }

  const std::vector<double> old = factor.probs;
  std::vector<double> out(factor.probs.size(), 0.0);

  std::vector<Value> vals_next(factor.vars.size());
  std::vector<Value> vals_cur(factor.vars.size());
  std::vector<Value> internal_vals(internal_slots.size());

  for (size_t i = 0; i < factor.space.total; ++i) {
    factor.space.valuation_of(i, vals_next);

    // Regress the external values; unreachable ones zero the cell.
    bool reachable = true;
    for (size_t k = 0; k < external_slots.size(); ++k) {
      if (ext_static[k]) {
        vals_cur[external_slots[k]] = vals_next[external_slots[k]];
        continue;
      }
      auto r = regress(s, external_vars[k], vals_next[external_slots[k]], a, ctx);
      if (!r) {
        reachable = false;
        break;
      }
      vals_cur[external_slots[k]] = *r;
    }
    if (!reachable) continue;

    double q = 1.0;
    for (const CompiledCpt& c : sens) {
      size_t row = row_of(c, vals_next, ctx.u_next);
      q *= c.table->rows[row * static_cast<size_t>(c.child.dom) +
                         static_cast<size_t>((*obs)[c.child.sampled])];
      if (q == 0.0) break;
    }
    if (q == 0.0) continue;

    double sum = 0.0;
    for (size_t yi = 0; yi < internal_space.total; ++yi) {
      internal_space.valuation_of(yi, internal_vals);
      for (size_t k = 0; k < internal_slots.size(); ++k)
        vals_cur[internal_slots[k]] = internal_vals[k];
      double prev = old[factor.space.index_of(vals_cur)];
      if (prev == 0.0) continue;
      double tr = 1.0;
      for (const CompiledCpt& c : trans) {
        size_t row = row_of(c, vals_cur, ctx.u_now);
        Value child = ref_value(c.child, vals_next, ctx.u_next);
        tr *= c.table->rows[row * static_cast<size_t>(c.child.dom) +
                            static_cast<size_t>(child)];
        if (tr == 0.0) break;
      }
      sum += prev * tr;
    }
    out[i] = q * sum;
  }

  double total = 0.0;
  for (double p : out) total += p;
  if (obs && total <= 0.0)
    fail(ErrorCode::ImpossibleObservation,
         "observation has probability zero under the belief of beam " + std::to_string(j));
  if (total > 0.0)
    for (double& p : out) p /= total;
  factor.probs = std::move(out);
}

}  // namespace

FactorSet make_prior_factors(const BeamStructure& s, const std::vector<Value>& u0) {
  const TwoSliceDbn& model = *s.model;
  if (u0.size() != s.sampled_union.size())
    fail(ErrorCode::BadArgument, "sampled-value vector does not match the sampled variables");

  FactorSet factors(s.beams.size());
  for (const Beam& b : s.beams) {
    BeliefFactor& f = factors[b.index];
    f.beam = b.index;
    f.vars = s.factor_vars[b.index];
    std::vector<int> sizes;
    for (VarId v : f.vars) sizes.push_back(model.state_vars[v].domain_size());
    f.space = DiscreteSpace(sizes);
    f.probs.assign(f.space.total, 1.0);
  }

  for (const PriorBlock& block : model.priors) {
    // Owner: lowest beam containing the whole block.
    BeamId owner = -1;
    std::vector<VarId> sorted_block = block.vars;
    std::sort(sorted_block.begin(), sorted_block.end());
    for (const Beam& b : s.beams) {
      if (std::includes(b.vars.begin(), b.vars.end(), sorted_block.begin(),
                        sorted_block.end())) {
        owner = b.index;
        break;
      }
    }
    if (owner < 0) {
      std::string names;
      for (VarId v : block.vars) names += (names.empty() ? "" : ",") + model.state_vars[v].name;
      fail(ErrorCode::PriorNotFactorized,
           "prior block {" + names + "} fits inside no beam");
    }

    BeliefFactor& f = factors[owner];
    std::vector<ValueRef> refs;
    std::vector<int> block_sizes;
    for (VarId v : block.vars) {
      refs.push_back(make_ref(s, f, v));
      block_sizes.push_back(model.state_vars[v].domain_size());
    }
    DiscreteSpace block_space(block_sizes);
    std::vector<Value> vals(f.vars.size());
    std::vector<Value> block_vals(block.vars.size());
    for (size_t i = 0; i < f.space.total; ++i) {
      f.space.valuation_of(i, vals);
      for (size_t k = 0; k < refs.size(); ++k) block_vals[k] = ref_value(refs[k], vals, u0);
      f.probs[i] *= block.table[block_space.index_of(block_vals)];
    }
  }

  for (BeliefFactor& f : factors) {
    double total = 0.0;
    for (double p : f.probs) total += p;
    if (total <= 0.0)
      fail(ErrorCode::ImpossibleObservation,
           "prior assigns zero mass to beam " + std::to_string(f.beam) +
               " under the sampled initial values");
    for (double& p : f.probs) p /= total;
  }
  return factors;
}

void progress_factor_exact(const BeamStructure& s, BeliefFactor& factor, ActionId a,
                           const std::vector<Value>& obs, const RegressionContext& ctx) {
  step_factor(s, factor, a, &obs, ctx);
}

void progress_factors_exact(const BeamStructure& s, FactorSet& factors, ActionId a,
                            const std::vector<Value>& obs, const RegressionContext& ctx) {
  for (BeliefFactor& f : factors) progress_factor_exact(s, f, a, obs, ctx);
}

void predict_factor(const BeamStructure& s, BeliefFactor& factor, ActionId a,
                    const RegressionContext& ctx) {
  step_factor(s, factor, a, nullptr, ctx);
}

Table assemble_joint(const FactorSet& factors, const std::vector<int>& var_domains,
                     std::vector<VarId>& out_vars, size_t max_cells) {
  std::vector<VarId> vars;
  for (const BeliefFactor& f : factors) vars.insert(vars.end(), f.vars.begin(), f.vars.end());
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());

  std::vector<int> sizes;
  size_t total = 1;
  for (VarId v : vars) {
    sizes.push_back(var_domains[v]);
    total *= static_cast<size_t>(var_domains[v]);
    if (total > max_cells)
      fail(ErrorCode::TooLarge, "joint distribution exceeds " + std::to_string(max_cells) +
                                    " cells; refusing to materialize");
  }
  Table joint(DiscreteSpace(sizes), 1.0);

  // Per factor: map its slots to positions in the union.
  std::vector<Value> vals(vars.size());
  std::vector<Value> fvals;
  for (const BeliefFactor& f : factors) {
    std::vector<size_t> pos;
    for (VarId v : f.vars)
      pos.push_back(static_cast<size_t>(
          std::lower_bound(vars.begin(), vars.end(), v) - vars.begin()));
    fvals.resize(f.vars.size());
    for (size_t i = 0; i < joint.v.size(); ++i) {
      joint.space.valuation_of(i, vals);
      for (size_t k = 0; k < pos.size(); ++k) fvals[k] = vals[pos[k]];
      joint.v[i] *= f.probs[f.space.index_of(fvals)];
    }
  }
  double total_mass = joint.normalize();
  if (total_mass <= 0.0)
    fail(ErrorCode::ImpossibleObservation, "belief product is identically zero");
  out_vars = vars;
  return joint;
}

std::vector<double> factor_marginal(const BeliefFactor& factor,
                                    const std::vector<VarId>& target) {
  std::vector<size_t> slots;
  std::vector<int> sizes;
  for (VarId v : target) {
    auto it = std::lower_bound(factor.vars.begin(), factor.vars.end(), v);
    if (it == factor.vars.end() || *it != v)
      fail(ErrorCode::TargetSpansBeams, "marginal target not contained in the factor");
    slots.push_back(static_cast<size_t>(it - factor.vars.begin()));
    sizes.push_back(factor.space.sizes[static_cast<size_t>(it - factor.vars.begin())]);
  }
  DiscreteSpace tspace(sizes);
  std::vector<double> out(tspace.total, 0.0);
  std::vector<Value> vals(factor.vars.size());
  std::vector<Value> tvals(target.size());
  for (size_t i = 0; i < factor.space.total; ++i) {
    if (factor.probs[i] == 0.0) continue;
    factor.space.valuation_of(i, vals);
    for (size_t k = 0; k < slots.size(); ++k) tvals[k] = vals[slots[k]];
    out[tspace.index_of(tvals)] += factor.probs[i];
  }
  normalize_vector(out);
  return out;
}

}  // namespace pbt
