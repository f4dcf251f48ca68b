#include "pbt/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace pbt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Tags for independent random streams derived from the filter seed.
enum : uint64_t { kTagInit = 1, kTagStep = 2, kTagResample = 3 };

std::vector<int> sampled_domains(const BeamStructure& s) {
  std::vector<int> doms;
  for (VarId v : s.sampled_union) doms.push_back(s.model->state_vars[v].domain_size());
  return doms;
}

int sampled_slot(const BeamStructure& s, VarId v) {
  auto it = std::lower_bound(s.sampled_union.begin(), s.sampled_union.end(), v);
  return static_cast<int>(it - s.sampled_union.begin());
}

}  // namespace

ProposalKind proposal_from_name(const std::string& name) {
  if (name == "motion") return ProposalKind::kMotion;
  if (name == "optimal") return ProposalKind::kOptimal;
  fail(ErrorCode::BadArgument, "unknown proposal '" + name + "' (expected motion or optimal)");
}

const char* proposal_name(ProposalKind p) {
  return p == ProposalKind::kMotion ? "motion" : "optimal";
}

ResamplePolicy ResamplePolicy::parse(const std::string& text) {
  ResamplePolicy p;
  if (text == "never") {
    p.enabled = false;
    return p;
  }
  if (text.rfind("ess:", 0) == 0) {
    p.enabled = true;
    try {
      p.ess_fraction = std::stod(text.substr(4));
    } catch (const std::exception&) {
      fail(ErrorCode::BadArgument, "bad resample threshold in '" + text + "'");
    }
    if (!(p.ess_fraction > 0.0) || p.ess_fraction > 1.0)
      fail(ErrorCode::BadArgument, "resample threshold must lie in (0, 1]");
    return p;
  }
  fail(ErrorCode::BadArgument,
       "unknown resample policy '" + text + "' (expected never or ess:<fraction>)");
}

std::string ResamplePolicy::to_string() const {
  if (!enabled) return "never";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ess:%g", ess_fraction);
  return buf;
}

std::vector<double> motion_distribution(const BeamStructure& s, const FactorSet& factors,
                                        const std::vector<Value>& u_now, ActionId a) {
  if (s.sampled_union.empty()) return {1.0};
  if (s.covering_beam < 0)
    fail(ErrorCode::NoCoveringBeam, "no beam contains every sampled variable");
  const TwoSliceDbn& model = *s.model;
  const BeliefFactor& B = factors[s.covering_beam];

  DiscreteSpace u_space(sampled_domains(s));

  // Per sampled variable: its CPT for this action plus where each parent's
  // time-t value comes from (covering-beam factor slot or u_now slot).
  struct Compiled {
    const CondTable* table;
    int dom;
    std::vector<int> parent_factor_slot;  // -1 when the parent is sampled
    std::vector<int> parent_sampled_slot;
    std::vector<int> parent_dom;
  };
  std::vector<Compiled> cpts;
  for (VarId v : s.sampled_union) {
    Compiled c;
    c.table = &model.transition(v, a);
    c.dom = model.state_vars[v].domain_size();
    for (VarId p : c.table->parents) {
      c.parent_dom.push_back(model.state_vars[p].domain_size());
      if (s.is_sampled(p)) {
        c.parent_factor_slot.push_back(-1);
        c.parent_sampled_slot.push_back(sampled_slot(s, p));
      } else {
        // The parent lives in the covering beam by causal closure; its slot is
        // relative to the factor scope (sampled members excluded).
        auto it = std::lower_bound(B.vars.begin(), B.vars.end(), p);
        if (it == B.vars.end() || *it != p)
          fail(ErrorCode::NoCoveringBeam,
               "covering beam lacks a parent of a sampled variable");
        c.parent_factor_slot.push_back(static_cast<int>(it - B.vars.begin()));
        c.parent_sampled_slot.push_back(-1);
      }
    }
    cpts.push_back(std::move(c));
  }

  std::vector<double> out(u_space.total, 0.0);
  std::vector<Value> x(B.vars.size());
  std::vector<Value> uv(s.sampled_union.size());
  std::vector<const double*> row(cpts.size());
  for (size_t cell = 0; cell < B.space.total; ++cell) {
    double w = B.probs[cell];
    if (w == 0.0) continue;
    B.space.valuation_of(cell, x);
    for (size_t k = 0; k < cpts.size(); ++k) {
      const Compiled& c = cpts[k];
      size_t idx = 0;
      for (size_t pi = 0; pi < c.parent_dom.size(); ++pi) {
        Value pv = c.parent_factor_slot[pi] >= 0 ? x[c.parent_factor_slot[pi]]
                                                 : u_now[c.parent_sampled_slot[pi]];
        idx = idx * static_cast<size_t>(c.parent_dom[pi]) + static_cast<size_t>(pv);
      }
      row[k] = &c.table->rows[idx * static_cast<size_t>(c.dom)];
    }
    for (size_t ui = 0; ui < u_space.total; ++ui) {
      double p = w;
      u_space.valuation_of(ui, uv);
      for (size_t k = 0; k < cpts.size(); ++k) p *= row[k][uv[k]];
      out[ui] += p;
    }
  }
  normalize_vector(out);
  return out;
}

double observation_likelihood(const BeamStructure& s, const FactorSet& factors, ActionId a,
                              const std::vector<Value>& obs, const RegressionContext& ctx) {
  const TwoSliceDbn& model = *s.model;
  const FactorSet* predicted = &factors;
  FactorSet copy;
  if (!s.prediction_preserves_factors) {
    copy = factors;
    for (BeliefFactor& f : copy) predict_factor(s, f, a, ctx);
    predicted = &copy;
  }

  double lik = 1.0;
  std::vector<Value> x;
  for (int j = 0; j < s.beam_count(); ++j) {
    if (s.beams[j].obs.empty()) continue;
    const BeliefFactor& B = (*predicted)[j];
    double sj = 0.0;
    for (size_t cell = 0; cell < B.space.total; ++cell) {
      double w = B.probs[cell];
      if (w == 0.0) continue;
      B.space.valuation_of(cell, x);
      double q = 1.0;
      for (ObsId o : s.beams[j].obs) {
        const CondTable& t = model.sensor(o, a);
        size_t idx = 0;
        for (VarId p : t.parents) {
          Value pv;
          if (s.is_sampled(p)) {
            pv = ctx.u_next[sampled_slot(s, p)];
          } else {
            auto it = std::lower_bound(B.vars.begin(), B.vars.end(), p);
            pv = x[static_cast<size_t>(it - B.vars.begin())];
          }
          idx = idx * static_cast<size_t>(model.state_vars[p].domain_size()) +
                static_cast<size_t>(pv);
        }
        int odom = model.obs_vars[o].domain_size();
        q *= t.rows[idx * static_cast<size_t>(odom) + static_cast<size_t>(obs[o])];
        if (q == 0.0) break;
      }
      sj += w * q;
    }
    lik *= sj;
    if (lik == 0.0) break;
  }
  return lik;
}

std::vector<int> systematic_resample_counts(const std::vector<double>& weights, int n,
                                            double offset) {
  if (n <= 0 || weights.empty())
    fail(ErrorCode::BadArgument, "resampling needs at least one slot and one weight");
  std::vector<int> counts(weights.size(), 0);
  size_t i = 0;
  double cdf = weights[0];
  for (int k = 0; k < n; ++k) {
    double p = (offset + k) / n;
    while (p >= cdf && i + 1 < weights.size()) {
      ++i;
      cdf += weights[i];
    }
    ++counts[i];
  }
  return counts;
}

double effective_sample_size(const std::vector<double>& weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  if (sq <= 0.0) fail(ErrorCode::BadArgument, "effective sample size of all-zero weights");
  return 1.0 / sq;
}

// ---------------------------------------------------------------------------
// ParticleFilter
// ---------------------------------------------------------------------------

ParticleFilter::ParticleFilter(const BeamStructure& s, TrackerConfig cfg)
    : s_(&s), cfg_(cfg) {
  if (cfg_.particles < 1)
    fail(ErrorCode::BadArgument, "particle count must be at least 1");
  const TwoSliceDbn& model = *s.model;
  ctx_ = RegressionContext::initial(s);
  u_space_ = DiscreteSpace(sampled_domains(s));

  const bool has_u = !s.sampled_union.empty();
  const int n = has_u ? cfg_.particles : 1;
  cfg_.particles = n;

  // Marginal of each prior block onto its sampled members, for drawing u0.
  struct BlockDraw {
    std::vector<int> slots;      // positions in sampled_union
    DiscreteSpace space;
    std::vector<double> marginal;
  };
  std::vector<BlockDraw> draws;
  if (has_u) {
    for (const PriorBlock& block : model.priors) {
      std::vector<std::pair<VarId, size_t>> svars;  // (var, position in block)
      for (size_t k = 0; k < block.vars.size(); ++k)
        if (s.is_sampled(block.vars[k])) svars.push_back({block.vars[k], k});
      if (svars.empty()) continue;
      std::sort(svars.begin(), svars.end());
      BlockDraw d;
      std::vector<int> sizes;
      for (auto& [v, pos] : svars) {
        d.slots.push_back(sampled_slot(s, v));
        sizes.push_back(model.state_vars[v].domain_size());
      }
      d.space = DiscreteSpace(sizes);
      d.marginal.assign(d.space.total, 0.0);
      std::vector<int> bsizes;
      for (VarId v : block.vars) bsizes.push_back(model.state_vars[v].domain_size());
      DiscreteSpace bspace(bsizes);
      std::vector<Value> sv(svars.size());
      for (size_t i = 0; i < bspace.total; ++i) {
        for (size_t k = 0; k < svars.size(); ++k) sv[k] = bspace.digit(i, svars[k].second);
        d.marginal[d.space.index_of(sv)] += block.table[i];
      }
      draws.push_back(std::move(d));
    }
  }

  particles_.resize(n);
  std::map<std::vector<Value>, std::pair<std::shared_ptr<const FactorSet>, int>> seen;
  for (int i = 0; i < n; ++i) {
    Particle& p = particles_[i];
    p.u.assign(s.sampled_union.size(), 0);
    if (has_u) {
      Rng rng(derive_seed(cfg_.seed, {kTagInit, static_cast<uint64_t>(i)}));
      for (const BlockDraw& d : draws) {
        size_t pick = static_cast<size_t>(rng.next_categorical(d.marginal));
        for (size_t k = 0; k < d.slots.size(); ++k)
          p.u[d.slots[k]] = d.space.digit(pick, k);
      }
    }
    auto it = seen.find(p.u);
    if (it == seen.end()) {
      p.factors = std::make_shared<FactorSet>(make_prior_factors(s, p.u));
      p.group = next_group_++;
      seen[p.u] = {p.factors, p.group};
    } else {
      p.factors = it->second.first;
      p.group = it->second.second;
    }
    p.log_weight = 0.0;
  }
  normalize_weights();
}

void ParticleFilter::normalize_weights() {
  double mx = kNegInf;
  for (const Particle& p : particles_) mx = std::max(mx, p.log_weight);
  if (mx == kNegInf) {
    if (particles_.size() == 1)
      fail(ErrorCode::ZeroLikelihood, "the observation sequence has probability zero");
    fail(ErrorCode::AllParticlesDead, "every particle reached probability zero");
  }
  double total = 0.0;
  for (Particle& p : particles_) {
    p.weight = std::exp(p.log_weight - mx);
    total += p.weight;
  }
  for (Particle& p : particles_) p.weight /= total;
}

double ParticleFilter::ess() const {
  std::vector<double> w;
  for (const Particle& p : particles_) w.push_back(p.weight);
  return effective_sample_size(w);
}

void ParticleFilter::observe(ActionId action, const std::vector<Value>& obs) {
  const TwoSliceDbn& model = *s_->model;
  if (action < 0 || action >= model.num_actions())
    fail(ErrorCode::BadArgument, "unknown action id");
  if (static_cast<int>(obs.size()) != model.num_obs_vars())
    fail(ErrorCode::BadArgument, "observation vector does not match the model");
  for (ObsId o = 0; o < model.num_obs_vars(); ++o)
    if (obs[o] < 0 || obs[o] >= model.obs_vars[o].domain_size())
      fail(ErrorCode::BadArgument, "observation value out of range");

  if (s_->sampled_union.empty()) {
    FactorSet next = *particles_[0].factors;
    progress_factors_exact(*s_, next, action, obs, ctx_);
    particles_[0].factors = std::make_shared<const FactorSet>(std::move(next));
    ctx_.advance(*s_, action, obs);
    ++step_;
    return;
  }

  // Work shared by all particles of a group (same factors, same u).
  struct GroupWork {
    std::vector<double> motion;
    std::vector<double> lik;        // per candidate, optimal proposal only
    std::vector<double> posterior;  // motion * lik
    double mult = 0.0;              // optimal: total of posterior
    bool lik_ready = false;
    const Particle* rep = nullptr;
  };
  std::map<int, GroupWork> groups;
  for (const Particle& p : particles_) {
    if (p.log_weight == kNegInf) continue;
    GroupWork& g = groups[p.group];
    if (g.rep) continue;
    g.rep = &p;
    g.motion = motion_distribution(*s_, *p.factors, p.u, action);
    if (cfg_.proposal == ProposalKind::kOptimal) {
      g.lik.assign(u_space_.total, 0.0);
      g.posterior.assign(u_space_.total, 0.0);
      RegressionContext trial = ctx_;
      trial.u_now = p.u;
      for (size_t ui = 0; ui < u_space_.total; ++ui) {
        if (g.motion[ui] == 0.0) continue;
        trial.u_next = u_space_.valuation_of(ui);
        g.lik[ui] = observation_likelihood(*s_, *p.factors, action, obs, trial);
        g.posterior[ui] = g.motion[ui] * g.lik[ui];
        g.mult += g.posterior[ui];
      }
      g.lik_ready = true;
    }
  }

  // Per (group, chosen candidate): progressed factors and new group id.
  std::map<std::pair<int, size_t>, std::pair<std::shared_ptr<const FactorSet>, int>> advanced;
  std::map<std::pair<int, size_t>, double> motion_lik;  // motion proposal weight cache

  for (size_t i = 0; i < particles_.size(); ++i) {
    Particle& p = particles_[i];
    if (p.log_weight == kNegInf) continue;
    GroupWork& g = groups[p.group];
    Rng rng(derive_seed(cfg_.seed,
                        {kTagStep, static_cast<uint64_t>(step_), static_cast<uint64_t>(i)}));

    size_t choice = 0;
    double mult = 0.0;
    if (cfg_.proposal == ProposalKind::kOptimal) {
      if (g.mult <= 0.0) {
        p.log_weight = kNegInf;
        continue;
      }
      choice = static_cast<size_t>(rng.next_categorical(g.posterior));
      mult = g.mult;
    } else {
      choice = static_cast<size_t>(rng.next_categorical(g.motion));
      auto key = std::make_pair(p.group, choice);
      auto it = motion_lik.find(key);
      if (it == motion_lik.end()) {
        RegressionContext trial = ctx_;
        trial.u_now = p.u;
        trial.u_next = u_space_.valuation_of(choice);
        it = motion_lik.emplace(key, observation_likelihood(*s_, *p.factors, action, obs, trial))
                 .first;
      }
      mult = it->second;
      if (mult <= 0.0) {
        p.log_weight = kNegInf;
        continue;
      }
    }

    auto key = std::make_pair(p.group, choice);
    auto it = advanced.find(key);
    if (it == advanced.end()) {
      RegressionContext pctx = ctx_;
      pctx.u_now = p.u;
      pctx.u_next = u_space_.valuation_of(choice);
      FactorSet next = *p.factors;
      try {
        progress_factors_exact(*s_, next, action, obs, pctx);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ImpossibleObservation) throw;
        p.log_weight = kNegInf;
        continue;
      }
      it = advanced
               .emplace(key, std::make_pair(
                                 std::make_shared<const FactorSet>(std::move(next)),
                                 next_group_++))
               .first;
    }
    p.factors = it->second.first;
    p.group = it->second.second;
    p.u = u_space_.valuation_of(choice);
    p.log_weight += std::log(mult);
  }

  normalize_weights();

  if (cfg_.resample.enabled && particles_.size() > 1) {
    double threshold = cfg_.resample.ess_fraction * static_cast<double>(particles_.size());
    if (ess() < threshold) {
      std::vector<double> w;
      for (const Particle& p : particles_) w.push_back(p.weight);
      Rng rng(derive_seed(cfg_.seed, {kTagResample, static_cast<uint64_t>(step_)}));
      std::vector<int> counts =
          systematic_resample_counts(w, static_cast<int>(particles_.size()), rng.next_double());
      std::vector<Particle> next;
      next.reserve(particles_.size());
      for (size_t i = 0; i < particles_.size(); ++i)
        for (int c = 0; c < counts[i]; ++c) {
          Particle child = particles_[i];
          child.log_weight = 0.0;
          next.push_back(std::move(child));
        }
      particles_ = std::move(next);
      normalize_weights();
    }
  }

  ctx_.advance(*s_, action, obs);
  ++step_;
}

std::vector<double> ParticleFilter::query_marginal(const std::vector<VarId>& target,
                                                   MarginalEngine& engine) {
  const TwoSliceDbn& model = *s_->model;
  if (target.empty()) fail(ErrorCode::BadArgument, "empty marginal target");
  std::vector<VarId> sorted = target;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (VarId v : sorted)
    if (v < 0 || v >= model.num_state_vars())
      fail(ErrorCode::DanglingReference, "marginal target names an unknown variable");

  std::vector<VarId> plain;
  std::vector<int> uslot_of;  // per target position: sampled slot or -1
  std::vector<int> sizes;
  for (VarId v : sorted) {
    sizes.push_back(model.state_vars[v].domain_size());
    if (s_->is_sampled(v)) {
      uslot_of.push_back(sampled_slot(*s_, v));
    } else {
      uslot_of.push_back(-1);
      plain.push_back(v);
    }
  }
  DiscreteSpace out_space(sizes);
  std::vector<double> out(out_space.total, 0.0);

  std::vector<int> plain_sizes;
  for (VarId v : plain) plain_sizes.push_back(model.state_vars[v].domain_size());
  DiscreteSpace plain_space(plain_sizes);

  std::map<const FactorSet*, std::vector<double>> plain_cache;
  std::vector<Value> full(sorted.size());
  std::vector<Value> pv(plain.size());
  for (const Particle& p : particles_) {
    if (p.weight == 0.0) continue;
    const std::vector<double>* dist = nullptr;
    if (!plain.empty()) {
      auto it = plain_cache.find(p.factors.get());
      if (it == plain_cache.end()) {
        engine.propagate(*p.factors);
        it = plain_cache.emplace(p.factors.get(), engine.marginal(plain)).first;
      }
      dist = &it->second;
    }
    if (plain.empty()) {
      for (size_t k = 0; k < sorted.size(); ++k) full[k] = p.u[uslot_of[k]];
      out[out_space.index_of(full)] += p.weight;
      continue;
    }
    for (size_t pi = 0; pi < dist->size(); ++pi) {
      double mass = (*dist)[pi];
      if (mass == 0.0) continue;
      plain_space.valuation_of(pi, pv);
      size_t pk = 0;
      for (size_t k = 0; k < sorted.size(); ++k)
        full[k] = uslot_of[k] >= 0 ? p.u[uslot_of[k]] : pv[pk++];
      out[out_space.index_of(full)] += p.weight * mass;
    }
  }
  normalize_vector(out);
  return out;
}

std::vector<double> ParticleFilter::var_marginal(VarId v, MarginalEngine& engine) {
  return query_marginal({v}, engine);
}

std::vector<std::vector<double>> ParticleFilter::query_var_marginals(
    const std::vector<VarId>& vars, MarginalEngine& engine) {
  const TwoSliceDbn& model = *s_->model;
  std::vector<std::vector<double>> out(vars.size());
  std::vector<int> uslot_of(vars.size(), -1);
  for (size_t k = 0; k < vars.size(); ++k) {
    VarId v = vars[k];
    if (v < 0 || v >= model.num_state_vars())
      fail(ErrorCode::DanglingReference, "marginal target names an unknown variable");
    out[k].assign(model.state_vars[v].domain_size(), 0.0);
    if (s_->is_sampled(v)) uslot_of[k] = sampled_slot(*s_, v);
  }

  std::map<const FactorSet*, std::vector<std::vector<double>>> cache;
  for (const Particle& p : particles_) {
    if (p.weight == 0.0) continue;
    const std::vector<std::vector<double>>* dists = nullptr;
    auto it = cache.find(p.factors.get());
    if (it == cache.end()) {
      std::vector<std::vector<double>> per_var(vars.size());
      bool propagated = false;
      for (size_t k = 0; k < vars.size(); ++k) {
        if (uslot_of[k] >= 0) continue;
        if (!propagated) {
          engine.propagate(*p.factors);
          propagated = true;
        }
        per_var[k] = engine.marginal({vars[k]});
      }
      it = cache.emplace(p.factors.get(), std::move(per_var)).first;
    }
    dists = &it->second;
    for (size_t k = 0; k < vars.size(); ++k) {
      if (uslot_of[k] >= 0) {
        out[k][p.u[uslot_of[k]]] += p.weight;
      } else {
        const std::vector<double>& d = (*dists)[k];
        for (size_t x = 0; x < d.size(); ++x) out[k][x] += p.weight * d[x];
      }
    }
  }
  for (auto& d : out) normalize_vector(d);
  return out;
}

}  // namespace pbt
