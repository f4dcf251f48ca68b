#include "pbt/oracles.hpp"

#include <algorithm>

#include "pbt/errors.hpp"

namespace pbt {

FlatFilter::FlatFilter(const TwoSliceDbn& model, size_t max_states) : model_(&model) {
  std::vector<int> sizes;
  size_t total = 1;
  for (const auto& v : model.state_vars) {
    sizes.push_back(v.domain_size());
    total *= static_cast<size_t>(v.domain_size());
    if (total > max_states)
      fail(ErrorCode::TooLarge, "state space exceeds " + std::to_string(max_states) + " states");
  }
  space_ = DiscreteSpace(sizes);
  belief_.assign(space_.total, 0.0);
  scratch_state_.resize(model.state_vars.size());
  scratch_next_.resize(model.state_vars.size());

  double sum = 0.0;
  for (size_t i = 0; i < space_.total; ++i) {
    space_.valuation_of(i, scratch_state_);
    belief_[i] = prior_prob(model, scratch_state_);
    sum += belief_[i];
  }
  if (sum <= 0.0) fail(ErrorCode::ImpossibleHistory, "prior assigns zero mass everywhere");
  for (double& p : belief_) p /= sum;
}

void FlatFilter::observe(ActionId action, const std::vector<Value>& obs) {
  const TwoSliceDbn& model = *model_;
  if (action < 0 || action >= model.num_actions())
    fail(ErrorCode::DanglingReference, "unknown action id");
  if (obs.size() != model.obs_vars.size())
    fail(ErrorCode::BadArgument, "observation vector length mismatch");

  std::vector<double> next(space_.total, 0.0);
  for (size_t s = 0; s < space_.total; ++s) {
    if (belief_[s] == 0.0) continue;
    space_.valuation_of(s, scratch_state_);
    for (size_t t = 0; t < space_.total; ++t) {
      space_.valuation_of(t, scratch_next_);
      double tr = joint_transition_prob(model, action, scratch_state_, scratch_next_);
      if (tr > 0.0) next[t] += belief_[s] * tr;
    }
  }

  double sum = 0.0;
  for (size_t t = 0; t < space_.total; ++t) {
    if (next[t] == 0.0) continue;
    space_.valuation_of(t, scratch_next_);
    next[t] *= joint_sensor_prob(model, action, scratch_next_, obs);
    sum += next[t];
  }
  if (sum <= 0.0)
    fail(ErrorCode::ImpossibleHistory, "observation has probability zero under every state");
  for (double& p : next) p /= sum;
  belief_ = std::move(next);
}

std::vector<double> FlatFilter::marginal(const std::vector<VarId>& target) const {
  const TwoSliceDbn& model = *model_;
  if (target.empty()) fail(ErrorCode::BadArgument, "empty marginal target");
  std::vector<VarId> sorted = target;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<int> sizes;
  for (VarId v : sorted) {
    if (v < 0 || v >= model.num_state_vars())
      fail(ErrorCode::DanglingReference, "marginal target names an unknown variable");
    sizes.push_back(model.state_vars[v].domain_size());
  }
  DiscreteSpace tspace(sizes);
  std::vector<double> out(tspace.total, 0.0);
  std::vector<Value> state(model.state_vars.size());
  std::vector<Value> tv(sorted.size());
  for (size_t i = 0; i < space_.total; ++i) {
    if (belief_[i] == 0.0) continue;
    space_.valuation_of(i, state);
    for (size_t k = 0; k < sorted.size(); ++k) tv[k] = state[sorted[k]];
    out[tspace.index_of(tv)] += belief_[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// SupportTracker
// ---------------------------------------------------------------------------

namespace {

bool is_identity_of_self(const CondTable& t, VarId v, int dom) {
  if (t.parents.size() != 1 || t.parents[0] != v) return false;
  if (t.rows.size() != static_cast<size_t>(dom) * dom) return false;
  for (int a = 0; a < dom; ++a)
    for (int b = 0; b < dom; ++b)
      if (t.rows[static_cast<size_t>(a) * dom + b] != (a == b ? 1.0 : 0.0)) return false;
  return true;
}

}  // namespace

SupportTracker::SupportTracker(const BeamStructure& s) : s_(&s) {
  const TwoSliceDbn& model = *s.model;
  if (!s.sampled_union.empty())
    fail(ErrorCode::BadArgument, "support tracking requires no sampled variables");
  for (VarId v = 0; v < model.num_state_vars(); ++v)
    for (ActionId a = 0; a < model.num_actions(); ++a)
      if (!is_identity_of_self(model.transition(v, a), v, model.state_vars[v].domain_size()))
        fail(ErrorCode::BadArgument,
             "support tracking requires identity dynamics; " + model.state_vars[v].name +
                 " changes under " + model.actions[a]);

  alive_.resize(s.beam_count());
  spaces_.resize(s.beam_count());
  for (int j = 0; j < s.beam_count(); ++j) {
    const std::vector<VarId>& vars = s.beams[j].vars;
    std::vector<int> sizes;
    for (VarId v : vars) sizes.push_back(model.state_vars[v].domain_size());
    spaces_[j] = DiscreteSpace(sizes);
    alive_[j].assign(spaces_[j].total, 1);

    // A valuation starts alive iff every overlapping prior block gives it
    // positive marginal mass.
    std::vector<Value> cell(vars.size());
    for (const PriorBlock& block : model.priors) {
      std::vector<size_t> inside_pos;   // position within the block
      std::vector<size_t> beam_pos;     // matching position within the beam
      for (size_t k = 0; k < block.vars.size(); ++k) {
        auto it = std::lower_bound(vars.begin(), vars.end(), block.vars[k]);
        if (it != vars.end() && *it == block.vars[k]) {
          inside_pos.push_back(k);
          beam_pos.push_back(static_cast<size_t>(it - vars.begin()));
        }
      }
      if (inside_pos.empty()) continue;
      std::vector<int> bsizes;
      for (VarId v : block.vars) bsizes.push_back(model.state_vars[v].domain_size());
      DiscreteSpace bspace(bsizes);
      std::vector<Value> bv(block.vars.size());
      for (size_t i = 0; i < spaces_[j].total; ++i) {
        if (!alive_[j][i]) continue;
        spaces_[j].valuation_of(i, cell);
        double mass = 0.0;
        for (size_t b = 0; b < bspace.total; ++b) {
          bspace.valuation_of(b, bv);
          bool match = true;
          for (size_t k = 0; k < inside_pos.size(); ++k)
            if (bv[inside_pos[k]] != cell[beam_pos[k]]) {
              match = false;
              break;
            }
          if (match) mass += block.table[b];
        }
        if (mass <= 0.0) alive_[j][i] = 0;
      }
    }
  }
  enforce_pairwise();
}

void SupportTracker::observe(ActionId action, const std::vector<Value>& obs) {
  const TwoSliceDbn& model = *s_->model;
  if (obs.size() != model.obs_vars.size())
    fail(ErrorCode::BadArgument, "observation vector length mismatch");

  for (int j = 0; j < s_->beam_count(); ++j) {
    const std::vector<VarId>& vars = s_->beams[j].vars;
    std::vector<Value> cell(vars.size());
    for (ObsId o = 0; o < model.num_obs_vars(); ++o) {
      const CondTable& t = model.sensor(o, action);
      // Prune in every beam that sees all of this sensor's inputs.
      std::vector<size_t> parent_pos;
      bool contained = true;
      for (VarId p : t.parents) {
        auto it = std::lower_bound(vars.begin(), vars.end(), p);
        if (it == vars.end() || *it != p) {
          contained = false;
          break;
        }
        parent_pos.push_back(static_cast<size_t>(it - vars.begin()));
      }
      if (!contained) continue;
      int dom = model.obs_vars[o].domain_size();
      for (size_t i = 0; i < spaces_[j].total; ++i) {
        if (!alive_[j][i]) continue;
        spaces_[j].valuation_of(i, cell);
        size_t row = 0;
        for (size_t k = 0; k < t.parents.size(); ++k)
          row = row * static_cast<size_t>(model.state_vars[t.parents[k]].domain_size()) +
                static_cast<size_t>(cell[parent_pos[k]]);
        if (t.rows[row * dom + obs[o]] == 0.0) alive_[j][i] = 0;
      }
    }
  }
  enforce_pairwise();
}

void SupportTracker::enforce_pairwise() {
  const TwoSliceDbn& model = *s_->model;
  bool changed = true;
  std::vector<Value> cell;
  while (changed) {
    changed = false;
    for (int i = 0; i < s_->beam_count(); ++i) {
      for (int j = 0; j < s_->beam_count(); ++j) {
        if (i == j) continue;
        const std::vector<VarId>& vi = s_->beams[i].vars;
        const std::vector<VarId>& vj = s_->beams[j].vars;
        std::vector<VarId> shared;
        std::set_intersection(vi.begin(), vi.end(), vj.begin(), vj.end(),
                              std::back_inserter(shared));
        if (shared.empty()) continue;

        std::vector<size_t> pos_i, pos_j;
        std::vector<int> sizes;
        for (VarId v : shared) {
          pos_i.push_back(static_cast<size_t>(
              std::lower_bound(vi.begin(), vi.end(), v) - vi.begin()));
          pos_j.push_back(static_cast<size_t>(
              std::lower_bound(vj.begin(), vj.end(), v) - vj.begin()));
          sizes.push_back(model.state_vars[v].domain_size());
        }
        DiscreteSpace shared_space(sizes);

        std::vector<char> seen(shared_space.total, 0);
        cell.resize(vj.size());
        std::vector<Value> sv(shared.size());
        for (size_t c = 0; c < spaces_[j].total; ++c) {
          if (!alive_[j][c]) continue;
          spaces_[j].valuation_of(c, cell);
          for (size_t k = 0; k < shared.size(); ++k) sv[k] = cell[pos_j[k]];
          seen[shared_space.index_of(sv)] = 1;
        }
        cell.resize(vi.size());
        for (size_t c = 0; c < spaces_[i].total; ++c) {
          if (!alive_[i][c]) continue;
          spaces_[i].valuation_of(c, cell);
          for (size_t k = 0; k < shared.size(); ++k) sv[k] = cell[pos_i[k]];
          if (!seen[shared_space.index_of(sv)]) {
            alive_[i][c] = 0;
            changed = true;
          }
        }
      }
    }
  }
}

std::vector<char> SupportTracker::value_support(VarId v) const {
  const TwoSliceDbn& model = *s_->model;
  if (v < 0 || v >= model.num_state_vars())
    fail(ErrorCode::DanglingReference, "unknown variable");
  for (int j = 0; j < s_->beam_count(); ++j) {
    const std::vector<VarId>& vars = s_->beams[j].vars;
    auto it = std::lower_bound(vars.begin(), vars.end(), v);
    if (it == vars.end() || *it != v) continue;
    size_t pos = static_cast<size_t>(it - vars.begin());
    std::vector<char> out(model.state_vars[v].domain_size(), 0);
    for (size_t c = 0; c < spaces_[j].total; ++c)
      if (alive_[j][c]) out[spaces_[j].digit(c, pos)] = 1;
    return out;
  }
  fail(ErrorCode::DanglingReference, "variable belongs to no beam");
}

bool SupportTracker::wiped_out() const {
  for (const auto& a : alive_)
    if (std::none_of(a.begin(), a.end(), [](char c) { return c != 0; })) return true;
  return false;
}

}  // namespace pbt
