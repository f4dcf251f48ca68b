#include "pbt/engines.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <set>

namespace pbt {

namespace {

// Positions of target vars inside a sorted scope; DanglingReference if absent.
std::vector<size_t> positions_in(const std::vector<VarId>& scope,
                                 const std::vector<VarId>& target) {
  std::vector<size_t> pos;
  for (VarId v : target) {
    auto it = std::lower_bound(scope.begin(), scope.end(), v);
    if (it == scope.end() || *it != v)
      fail(ErrorCode::DanglingReference, "query variable missing from scope");
    pos.push_back(static_cast<size_t>(it - scope.begin()));
  }
  return pos;
}

// Sum a table down to target (subset of scope, ascending), normalized.
std::vector<double> project_table(const std::vector<VarId>& scope, const DiscreteSpace& space,
                                  const std::vector<double>& vals,
                                  const std::vector<VarId>& target,
                                  const std::vector<int>& target_doms) {
  std::vector<size_t> pos = positions_in(scope, target);
  DiscreteSpace tspace(target_doms);
  std::vector<double> out(tspace.total, 0.0);
  std::vector<Value> tvals(target.size());
  for (size_t i = 0; i < space.total; ++i) {
    if (vals[i] == 0.0) continue;
    for (size_t k = 0; k < pos.size(); ++k) tvals[k] = space.digit(i, pos[k]);
    out[tspace.index_of(tvals)] += vals[i];
  }
  normalize_vector(out);
  return out;
}

}  // namespace

int kappa_of(double p, double epsilon) {
  if (p <= 0.0) return INT_MAX;
  int k = 0;
  double power = epsilon;
  while (!(power < p)) {
    ++k;
    power *= epsilon;
    if (k > 4096) return k;  // p is denormal-small; treat as effectively bottom
  }
  return k;
}

std::vector<std::vector<char>> build_level_tables(const FactorSet& factors, double epsilon,
                                                  int i) {
  if (i < 0) fail(ErrorCode::BadArgument, "level index must be >= 0");
  std::vector<std::vector<char>> tables(factors.size());
  for (size_t j = 0; j < factors.size(); ++j) {
    const std::vector<double>& probs = factors[j].probs;
    std::vector<int> kappa(probs.size());
    int eta = INT_MAX;
    for (size_t c = 0; c < probs.size(); ++c) {
      kappa[c] = kappa_of(probs[c], epsilon);
      eta = std::min(eta, kappa[c]);
    }
    tables[j].resize(probs.size());
    for (size_t c = 0; c < probs.size(); ++c)
      tables[j][c] = kappa[c] != INT_MAX && kappa[c] - eta <= i;
  }
  return tables;
}

std::vector<std::vector<char>> arc_consistency(const BeamStructure& s,
                                               std::vector<std::vector<char>> tables) {
  const TwoSliceDbn& model = *s.model;
  if (static_cast<int>(tables.size()) != s.beam_count())
    fail(ErrorCode::BadArgument, "one membership mask per beam is required");

  struct Pair {
    int a, b;
    std::vector<uint32_t> proj_a, proj_b;  // beam cell -> shared valuation id
    size_t shared_cells = 0;
  };
  std::vector<Pair> pairs;
  std::vector<std::vector<int>> neighbors(tables.size());
  for (int a = 0; a < s.beam_count(); ++a) {
    for (int b = a + 1; b < s.beam_count(); ++b) {
      std::vector<VarId> shared;
      std::set_intersection(s.factor_vars[a].begin(), s.factor_vars[a].end(),
                            s.factor_vars[b].begin(), s.factor_vars[b].end(),
                            std::back_inserter(shared));
      if (shared.empty()) continue;
      Pair pair;
      pair.a = a;
      pair.b = b;
      std::vector<int> sizes;
      for (VarId v : shared) sizes.push_back(model.state_vars[v].domain_size());
      DiscreteSpace sspace(sizes);
      pair.shared_cells = sspace.total;
      auto project = [&](int beam) {
        const auto& scope = s.factor_vars[beam];
        std::vector<int> scope_sizes;
        for (VarId v : scope) scope_sizes.push_back(model.state_vars[v].domain_size());
        DiscreteSpace space(scope_sizes);
        std::vector<size_t> pos = positions_in(scope, shared);
        std::vector<uint32_t> map(space.total);
        std::vector<Value> sv(shared.size());
        for (size_t i = 0; i < space.total; ++i) {
          for (size_t k = 0; k < pos.size(); ++k) sv[k] = space.digit(i, pos[k]);
          map[i] = static_cast<uint32_t>(sspace.index_of(sv));
        }
        return map;
      };
      pair.proj_a = project(a);
      pair.proj_b = project(b);
      if (tables[a].size() != pair.proj_a.size() || tables[b].size() != pair.proj_b.size())
        fail(ErrorCode::BadArgument, "membership mask does not match the beam's factor cells");
      neighbors[a].push_back(static_cast<int>(pairs.size()));
      neighbors[b].push_back(static_cast<int>(pairs.size()));
      pairs.push_back(std::move(pair));
    }
  }

  std::vector<std::vector<int>> support_a(pairs.size()), support_b(pairs.size());
  for (size_t p = 0; p < pairs.size(); ++p) {
    support_a[p].assign(pairs[p].shared_cells, 0);
    support_b[p].assign(pairs[p].shared_cells, 0);
    for (size_t i = 0; i < tables[pairs[p].a].size(); ++i)
      if (tables[pairs[p].a][i]) ++support_a[p][pairs[p].proj_a[i]];
    for (size_t i = 0; i < tables[pairs[p].b].size(); ++i)
      if (tables[pairs[p].b][i]) ++support_b[p][pairs[p].proj_b[i]];
  }

  std::deque<std::pair<int, bool>> queue;
  std::vector<char> queued(pairs.size() * 2, 0);
  auto push = [&](int pair, bool revise_a) {
    int slot = pair * 2 + (revise_a ? 0 : 1);
    if (queued[slot]) return;
    queued[slot] = 1;
    queue.emplace_back(pair, revise_a);
  };
  for (size_t p = 0; p < pairs.size(); ++p) {
    push(static_cast<int>(p), true);
    push(static_cast<int>(p), false);
  }
  while (!queue.empty()) {
    auto [p, revise_a] = queue.front();
    queue.pop_front();
    queued[p * 2 + (revise_a ? 0 : 1)] = 0;
    const Pair& pr = pairs[p];
    int beam = revise_a ? pr.a : pr.b;
    const std::vector<uint32_t>& proj = revise_a ? pr.proj_a : pr.proj_b;
    const std::vector<int>& other_support = revise_a ? support_b[p] : support_a[p];
    bool changed = false;
    for (size_t i = 0; i < tables[beam].size(); ++i) {
      if (!tables[beam][i]) continue;
      if (other_support[proj[i]] > 0) continue;
      tables[beam][i] = 0;
      changed = true;
      for (int q : neighbors[beam]) {
        if (pairs[q].a == beam)
          --support_a[q][pairs[q].proj_a[i]];
        else
          --support_b[q][pairs[q].proj_b[i]];
      }
    }
    if (changed)
      for (int q : neighbors[beam]) push(q, pairs[q].a != beam);
  }
  return tables;
}

EngineKind engine_kind_from_name(const std::string& name) {
  if (name == "jt") return EngineKind::kJointree;
  if (name == "bp") return EngineKind::kLoopyBp;
  if (name == "ac") return EngineKind::kIteratedAc;
  fail(ErrorCode::BadArgument, "unknown engine '" + name + "' (expected jt, bp, or ac)");
}

const char* engine_kind_name(EngineKind k) {
  switch (k) {
    case EngineKind::kJointree: return "jt";
    case EngineKind::kLoopyBp: return "bp";
    case EngineKind::kIteratedAc: return "ac";
  }
  return "?";
}

MarginalEngine::MarginalEngine(const BeamStructure& s, EngineConfig cfg)
    : s_(&s), cfg_(cfg) {
  if (cfg_.ac_epsilon <= 0.0 || cfg_.ac_epsilon >= 1.0)
    fail(ErrorCode::BadArgument, "ac epsilon must lie strictly between 0 and 1");
  if (cfg_.ac_m < 0) fail(ErrorCode::BadArgument, "ac level count must be >= 0");
  if (cfg_.bp_damping < 0.0 || cfg_.bp_damping >= 1.0)
    fail(ErrorCode::BadArgument, "bp damping must lie in [0, 1)");
  switch (cfg_.kind) {
    case EngineKind::kJointree: build_jointree(); break;
    case EngineKind::kLoopyBp: build_bp(); break;
    case EngineKind::kIteratedAc: build_ac(); break;
  }
}

// ---------------------------------------------------------------------------
// Join tree
// ---------------------------------------------------------------------------

void MarginalEngine::build_jointree() {
  const TwoSliceDbn& model = *s_->model;

  std::vector<VarId> vars;
  for (int j = 0; j < s_->beam_count(); ++j)
    vars.insert(vars.end(), s_->factor_vars[j].begin(), s_->factor_vars[j].end());
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  if (vars.empty()) return;  // nothing to infer over

  const int n = static_cast<int>(vars.size());
  auto compact = [&](VarId v) {
    return static_cast<int>(std::lower_bound(vars.begin(), vars.end(), v) - vars.begin());
  };

  // Moral graph: each factor scope is a clique.
  std::vector<std::set<int>> adj(n);
  for (int j = 0; j < s_->beam_count(); ++j) {
    const auto& scope = s_->factor_vars[j];
    for (size_t a = 0; a < scope.size(); ++a)
      for (size_t b = a + 1; b < scope.size(); ++b) {
        adj[compact(scope[a])].insert(compact(scope[b]));
        adj[compact(scope[b])].insert(compact(scope[a]));
      }
  }

  // Min-fill elimination, ties broken by lowest variable index.
  std::vector<bool> eliminated(n, false);
  std::vector<std::vector<VarId>> elim_cliques;
  auto work = adj;
  for (int round = 0; round < n; ++round) {
    int best = -1;
    long best_fill = LONG_MAX;
    for (int v = 0; v < n; ++v) {
      if (eliminated[v]) continue;
      std::vector<int> nb;
      for (int w : work[v])
        if (!eliminated[w]) nb.push_back(w);
      long fill = 0;
      for (size_t a = 0; a < nb.size(); ++a)
        for (size_t b = a + 1; b < nb.size(); ++b)
          if (!work[nb[a]].count(nb[b])) ++fill;
      if (fill < best_fill) {
        best_fill = fill;
        best = v;
      }
    }
    std::vector<int> nb;
    for (int w : work[best])
      if (!eliminated[w]) nb.push_back(w);
    std::vector<VarId> clique{vars[best]};
    for (int w : nb) clique.push_back(vars[w]);
    std::sort(clique.begin(), clique.end());
    elim_cliques.push_back(std::move(clique));
    for (size_t a = 0; a < nb.size(); ++a)
      for (size_t b = a + 1; b < nb.size(); ++b) {
        work[nb[a]].insert(nb[b]);
        work[nb[b]].insert(nb[a]);
      }
    eliminated[best] = true;
  }

  // Keep maximal cliques only (first occurrence wins on duplicates).
  std::vector<std::vector<VarId>> maximal;
  for (size_t i = 0; i < elim_cliques.size(); ++i) {
    bool contained = false;
    for (size_t j = 0; j < elim_cliques.size() && !contained; ++j) {
      if (i == j) continue;
      const auto& a = elim_cliques[i];
      const auto& b = elim_cliques[j];
      bool subset = a.size() < b.size() ||
                    (a.size() == b.size() && j < i && a == b);
      if (subset && std::includes(b.begin(), b.end(), a.begin(), a.end()))
        contained = true;
    }
    if (!contained) maximal.push_back(elim_cliques[i]);
  }

  cliques_.resize(maximal.size());
  for (size_t i = 0; i < maximal.size(); ++i) {
    Clique& c = cliques_[i];
    c.vars = maximal[i];
    std::vector<int> sizes;
    size_t total = 1;
    for (VarId v : c.vars) {
      sizes.push_back(model.state_vars[v].domain_size());
      total *= static_cast<size_t>(model.state_vars[v].domain_size());
      if (total > cfg_.max_clique_cells)
        fail(ErrorCode::TreewidthExceeded,
             "join tree clique exceeds " + std::to_string(cfg_.max_clique_cells) + " cells");
    }
    c.space = DiscreteSpace(sizes);
    c.potential.assign(c.space.total, 1.0);
  }

  // Maximum-weight spanning tree on separator sizes; zero-weight links keep
  // disconnected components attached so one rooted schedule covers everything.
  struct Cand { int w, a, b; };
  std::vector<Cand> cands;
  for (int a = 0; a < static_cast<int>(cliques_.size()); ++a)
    for (int b = a + 1; b < static_cast<int>(cliques_.size()); ++b) {
      std::vector<VarId> sep;
      std::set_intersection(cliques_[a].vars.begin(), cliques_[a].vars.end(),
                            cliques_[b].vars.begin(), cliques_[b].vars.end(),
                            std::back_inserter(sep));
      cands.push_back({static_cast<int>(sep.size()), a, b});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    if (x.w != y.w) return x.w > y.w;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  std::vector<int> root(cliques_.size());
  std::iota(root.begin(), root.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (root[x] != x) x = root[x] = root[root[x]];
    return x;
  };
  for (const Cand& c : cands) {
    int ra = find(c.a), rb = find(c.b);
    if (ra == rb) continue;
    root[ra] = rb;
    Edge e;
    e.a = c.a;
    e.b = c.b;
    std::set_intersection(cliques_[c.a].vars.begin(), cliques_[c.a].vars.end(),
                          cliques_[c.b].vars.begin(), cliques_[c.b].vars.end(),
                          std::back_inserter(e.separator));
    std::vector<int> sizes;
    for (VarId v : e.separator) sizes.push_back(model.state_vars[v].domain_size());
    e.sep_space = DiscreteSpace(sizes);
    auto project = [&](const Clique& cl) {
      std::vector<size_t> pos = positions_in(cl.vars, e.separator);
      std::vector<uint32_t> map(cl.space.total);
      std::vector<Value> sv(e.separator.size());
      for (size_t i = 0; i < cl.space.total; ++i) {
        for (size_t k = 0; k < pos.size(); ++k) sv[k] = cl.space.digit(i, pos[k]);
        map[i] = static_cast<uint32_t>(e.sep_space.index_of(sv));
      }
      return map;
    };
    e.proj_a = project(cliques_[c.a]);
    e.proj_b = project(cliques_[c.b]);
    e.msg_ab.assign(e.sep_space.total, 0.0);
    e.msg_ba.assign(e.sep_space.total, 0.0);
    int id = static_cast<int>(edges_.size());
    cliques_[c.a].neighbors.push_back(c.b);
    cliques_[c.a].edge_ids.push_back(id);
    cliques_[c.b].neighbors.push_back(c.a);
    cliques_[c.b].edge_ids.push_back(id);
    edges_.push_back(std::move(e));
  }

  // Rooted schedule: BFS from clique 0; collect = deepest first.
  std::vector<int> bfs{0};
  std::vector<int> parent_edge(cliques_.size(), -1);
  std::vector<bool> seen(cliques_.size(), false);
  seen[0] = true;
  for (size_t h = 0; h < bfs.size(); ++h) {
    const Clique& c = cliques_[bfs[h]];
    for (size_t k = 0; k < c.neighbors.size(); ++k) {
      int nb = c.neighbors[k];
      if (seen[nb]) continue;
      seen[nb] = true;
      parent_edge[nb] = c.edge_ids[k];
      bfs.push_back(nb);
    }
  }
  for (size_t h = bfs.size(); h-- > 1;) {
    int cl = bfs[h];
    int e = parent_edge[cl];
    collect_order_.push_back(e);
    collect_toward_b_.push_back(edges_[e].a == cl);  // message flows away from cl
  }

  // Factor placement and per-variable home cliques.
  factor_clique_.assign(s_->beam_count(), -1);
  factor_map_.resize(s_->beam_count());
  for (int j = 0; j < s_->beam_count(); ++j) {
    const auto& scope = s_->factor_vars[j];
    if (scope.empty()) continue;
    for (size_t c = 0; c < cliques_.size(); ++c) {
      if (!std::includes(cliques_[c].vars.begin(), cliques_[c].vars.end(), scope.begin(),
                         scope.end()))
        continue;
      factor_clique_[j] = static_cast<int>(c);
      const Clique& cl = cliques_[c];
      std::vector<size_t> pos = positions_in(cl.vars, scope);
      std::vector<int> sizes;
      for (VarId v : scope) sizes.push_back(model.state_vars[v].domain_size());
      DiscreteSpace fspace(sizes);
      std::vector<Value> fv(scope.size());
      factor_map_[j].resize(cl.space.total);
      for (size_t i = 0; i < cl.space.total; ++i) {
        for (size_t k = 0; k < pos.size(); ++k) fv[k] = cl.space.digit(i, pos[k]);
        factor_map_[j][i] = static_cast<uint32_t>(fspace.index_of(fv));
      }
      break;
    }
    if (factor_clique_[j] < 0)
      fail(ErrorCode::DanglingReference, "no clique covers a factor scope");
  }
  var_home_clique_.assign(model.num_state_vars(), -1);
  for (VarId v : vars) {
    size_t best_cells = SIZE_MAX;
    for (size_t c = 0; c < cliques_.size(); ++c) {
      if (!std::binary_search(cliques_[c].vars.begin(), cliques_[c].vars.end(), v)) continue;
      if (cliques_[c].space.total < best_cells) {
        best_cells = cliques_[c].space.total;
        var_home_clique_[v] = static_cast<int>(c);
      }
    }
  }
}

void MarginalEngine::jt_propagate(const FactorSet& factors) {
  for (Clique& c : cliques_) {
    std::fill(c.potential.begin(), c.potential.end(), 1.0);
    c.belief_ready = false;
  }
  for (int j = 0; j < s_->beam_count(); ++j) {
    if (factor_clique_[j] < 0) continue;
    Clique& c = cliques_[factor_clique_[j]];
    const auto& map = factor_map_[j];
    const auto& probs = factors[j].probs;
    for (size_t i = 0; i < c.space.total; ++i) c.potential[i] *= probs[map[i]];
  }

  auto send = [&](int edge_id, bool toward_b) {
    Edge& e = edges_[edge_id];
    int from = toward_b ? e.a : e.b;
    int skip = toward_b ? e.b : e.a;
    const Clique& c = cliques_[from];
    std::vector<double> tmp = c.potential;
    for (size_t k = 0; k < c.neighbors.size(); ++k) {
      if (c.neighbors[k] == skip) continue;
      const Edge& in = edges_[c.edge_ids[k]];
      const std::vector<double>& msg = (in.a == from) ? in.msg_ba : in.msg_ab;
      const std::vector<uint32_t>& proj = (in.a == from) ? in.proj_a : in.proj_b;
      for (size_t i = 0; i < tmp.size(); ++i) tmp[i] *= msg[proj[i]];
    }
    std::vector<double>& out = toward_b ? e.msg_ab : e.msg_ba;
    const std::vector<uint32_t>& proj = toward_b ? e.proj_a : e.proj_b;
    std::fill(out.begin(), out.end(), 0.0);
    for (size_t i = 0; i < tmp.size(); ++i) out[proj[i]] += tmp[i];
    double total = 0.0;
    for (double x : out) total += x;
    if (total <= 0.0)
      fail(ErrorCode::ImpossibleObservation, "belief product is identically zero");
    for (double& x : out) x /= total;
  };

  for (size_t k = 0; k < collect_order_.size(); ++k) send(collect_order_[k], collect_toward_b_[k]);
  for (size_t k = collect_order_.size(); k-- > 0;) send(collect_order_[k], !collect_toward_b_[k]);
  converged_ = true;
  iterations_ = 0;
}

const std::vector<double>& MarginalEngine::jt_belief(int clique) {
  Clique& c = cliques_[clique];
  if (!c.belief_ready) {
    c.belief = c.potential;
    for (size_t k = 0; k < c.neighbors.size(); ++k) {
      const Edge& in = edges_[c.edge_ids[k]];
      const std::vector<double>& msg = (in.a == clique) ? in.msg_ba : in.msg_ab;
      const std::vector<uint32_t>& proj = (in.a == clique) ? in.proj_a : in.proj_b;
      for (size_t i = 0; i < c.belief.size(); ++i) c.belief[i] *= msg[proj[i]];
    }
    normalize_vector(c.belief);
    c.belief_ready = true;
  }
  return c.belief;
}

// ---------------------------------------------------------------------------
// Loopy belief propagation
// ---------------------------------------------------------------------------

void MarginalEngine::build_bp() {
  const TwoSliceDbn& model = *s_->model;
  for (int j = 0; j < s_->beam_count(); ++j)
    bp_vars_.insert(bp_vars_.end(), s_->factor_vars[j].begin(), s_->factor_vars[j].end());
  std::sort(bp_vars_.begin(), bp_vars_.end());
  bp_vars_.erase(std::unique(bp_vars_.begin(), bp_vars_.end()), bp_vars_.end());
  for (VarId v : bp_vars_) bp_var_dom_.push_back(model.state_vars[v].domain_size());

  bp_incident_.resize(bp_vars_.size());
  for (int j = 0; j < s_->beam_count(); ++j) {
    const auto& scope = s_->factor_vars[j];
    if (scope.empty()) continue;
    BpFactor f;
    f.beam = j;
    std::vector<int> sizes;
    for (VarId v : scope) sizes.push_back(model.state_vars[v].domain_size());
    DiscreteSpace space(sizes);
    for (size_t slot = 0; slot < scope.size(); ++slot) {
      int node = static_cast<int>(
          std::lower_bound(bp_vars_.begin(), bp_vars_.end(), scope[slot]) - bp_vars_.begin());
      f.var_nodes.push_back(node);
      std::vector<uint16_t> map(space.total);
      for (size_t i = 0; i < space.total; ++i)
        map[i] = static_cast<uint16_t>(space.digit(i, slot));
      f.cell_val.push_back(std::move(map));
      bp_incident_[node].push_back({static_cast<int>(bp_factors_.size()),
                                    static_cast<int>(slot)});
    }
    bp_factors_.push_back(std::move(f));
  }
  msg_vf_.resize(bp_factors_.size());
  msg_fv_.resize(bp_factors_.size());
  bp_potentials_.resize(bp_factors_.size());
  for (size_t f = 0; f < bp_factors_.size(); ++f) {
    msg_vf_[f].resize(bp_factors_[f].var_nodes.size());
    msg_fv_[f].resize(bp_factors_[f].var_nodes.size());
    for (size_t slot = 0; slot < bp_factors_[f].var_nodes.size(); ++slot) {
      int dom = bp_var_dom_[bp_factors_[f].var_nodes[slot]];
      msg_vf_[f][slot].assign(dom, 1.0 / dom);
      msg_fv_[f][slot].assign(dom, 1.0 / dom);
    }
  }
  bp_var_belief_.resize(bp_vars_.size());
}

void MarginalEngine::bp_propagate(const FactorSet& factors) {
  for (size_t f = 0; f < bp_factors_.size(); ++f)
    bp_potentials_[f] = factors[bp_factors_[f].beam].probs;

  // Fresh uniform start every propagate keeps results independent of what the
  // engine was asked before.
  for (auto& per_factor : msg_vf_)
    for (auto& m : per_factor) std::fill(m.begin(), m.end(), 1.0 / m.size());
  for (auto& per_factor : msg_fv_)
    for (auto& m : per_factor) std::fill(m.begin(), m.end(), 1.0 / m.size());

  converged_ = false;
  iterations_ = cfg_.bp_max_iters;
  std::vector<double> fresh;
  for (int it = 1; it <= cfg_.bp_max_iters; ++it) {
    double delta = 0.0;
    // factor -> variable
    for (size_t f = 0; f < bp_factors_.size(); ++f) {
      const BpFactor& bf = bp_factors_[f];
      const std::vector<double>& pot = bp_potentials_[f];
      const size_t slots = bf.var_nodes.size();
      for (size_t s = 0; s < slots; ++s) {
        fresh.assign(msg_fv_[f][s].size(), 0.0);
        for (size_t cell = 0; cell < pot.size(); ++cell) {
          double w = pot[cell];
          if (w == 0.0) continue;
          for (size_t s2 = 0; s2 < slots; ++s2) {
            if (s2 == s) continue;
            w *= msg_vf_[f][s2][bf.cell_val[s2][cell]];
          }
          fresh[bf.cell_val[s][cell]] += w;
        }
        double total = 0.0;
        for (double x : fresh) total += x;
        if (total > 0.0)
          for (double& x : fresh) x /= total;
        else  // transient contradiction: fall back to uniform and keep going
          std::fill(fresh.begin(), fresh.end(), 1.0 / fresh.size());
        std::vector<double>& cur = msg_fv_[f][s];
        for (size_t v = 0; v < cur.size(); ++v) {
          double next = (1.0 - cfg_.bp_damping) * fresh[v] + cfg_.bp_damping * cur[v];
          delta = std::max(delta, std::fabs(next - cur[v]));
          cur[v] = next;
        }
      }
    }
    // variable -> factor. The running product is rescaled by its peak after
    // every multiply: evidence zeros make message entries contract
    // geometrically, and an unscaled product of many near-point-mass messages
    // underflows to exact zero even though the posterior is consistent. A
    // message that would zero the whole product (a cycle artifact) is skipped.
    for (size_t v = 0; v < bp_vars_.size(); ++v) {
      const auto& inc = bp_incident_[v];
      for (size_t k = 0; k < inc.size(); ++k) {
        std::vector<double>& out = msg_vf_[inc[k].first][inc[k].second];
        std::fill(out.begin(), out.end(), 1.0);
        for (size_t k2 = 0; k2 < inc.size(); ++k2) {
          if (k2 == k) continue;
          const std::vector<double>& in = msg_fv_[inc[k2].first][inc[k2].second];
          double peak = 0.0;
          for (size_t val = 0; val < out.size(); ++val) peak = std::max(peak, out[val] * in[val]);
          if (peak == 0.0) continue;
          for (size_t val = 0; val < out.size(); ++val) out[val] = out[val] * in[val] / peak;
        }
        double total = 0.0;
        for (double x : out) total += x;
        for (double& x : out) x /= total;
      }
    }
    if (delta <= cfg_.bp_tol) {
      converged_ = true;
      iterations_ = it;
      break;
    }
  }

  // Variable beliefs, with the same peak rescaling as the message products: a
  // dozen sharply peaked incoming messages multiply down to ~1e-300 scale and
  // would otherwise round to an identically zero belief.
  for (size_t v = 0; v < bp_vars_.size(); ++v) {
    std::vector<double>& belief = bp_var_belief_[v];
    belief.assign(bp_var_dom_[v], 1.0);
    for (const auto& [f, slot] : bp_incident_[v]) {
      const std::vector<double>& in = msg_fv_[f][slot];
      double peak = 0.0;
      for (size_t val = 0; val < belief.size(); ++val) peak = std::max(peak, belief[val] * in[val]);
      if (peak == 0.0) continue;
      for (size_t val = 0; val < belief.size(); ++val) belief[val] = belief[val] * in[val] / peak;
    }
    double total = 0.0;
    for (double x : belief) total += x;
    for (double& x : belief) x /= total;
  }
}

// ---------------------------------------------------------------------------
// Iterated arc consistency
// ---------------------------------------------------------------------------

void MarginalEngine::build_ac() {
  const TwoSliceDbn& model = *s_->model;
  ac_neighbors_.resize(s_->beam_count());
  for (int a = 0; a < s_->beam_count(); ++a) {
    for (int b = a + 1; b < s_->beam_count(); ++b) {
      std::vector<VarId> shared;
      std::set_intersection(s_->factor_vars[a].begin(), s_->factor_vars[a].end(),
                            s_->factor_vars[b].begin(), s_->factor_vars[b].end(),
                            std::back_inserter(shared));
      if (shared.empty()) continue;
      AcPair pair;
      pair.a = a;
      pair.b = b;
      std::vector<int> sizes;
      for (VarId v : shared) sizes.push_back(model.state_vars[v].domain_size());
      DiscreteSpace sspace(sizes);
      pair.shared_cells = sspace.total;
      auto project = [&](int beam) {
        const auto& scope = s_->factor_vars[beam];
        std::vector<int> scope_sizes;
        for (VarId v : scope) scope_sizes.push_back(model.state_vars[v].domain_size());
        DiscreteSpace space(scope_sizes);
        std::vector<size_t> pos = positions_in(scope, shared);
        std::vector<uint32_t> map(space.total);
        std::vector<Value> sv(shared.size());
        for (size_t i = 0; i < space.total; ++i) {
          for (size_t k = 0; k < pos.size(); ++k) sv[k] = space.digit(i, pos[k]);
          map[i] = static_cast<uint32_t>(sspace.index_of(sv));
        }
        return map;
      };
      pair.proj_a = project(a);
      pair.proj_b = project(b);
      int id = static_cast<int>(ac_pairs_.size());
      ac_neighbors_[a].push_back(id);
      ac_neighbors_[b].push_back(id);
      ac_pairs_.push_back(std::move(pair));
    }
  }
  ac_kappa_.resize(s_->beam_count());
}

void MarginalEngine::ac_propagate(const FactorSet& factors) {
  const int nb = s_->beam_count();
  std::vector<std::vector<int>> kappa(nb);
  std::vector<int> eta(nb, 0);
  for (int j = 0; j < nb; ++j) {
    kappa[j].resize(factors[j].probs.size());
    int best = INT_MAX;
    for (size_t i = 0; i < factors[j].probs.size(); ++i) {
      kappa[j][i] = kappa_of(factors[j].probs[i], cfg_.ac_epsilon);
      best = std::min(best, kappa[j][i]);
    }
    eta[j] = best;
    ac_kappa_[j].assign(kappa[j].size(), kAcNever);
  }

  std::vector<std::vector<char>> alive(nb);
  std::vector<std::vector<int>> support_a(ac_pairs_.size()), support_b(ac_pairs_.size());

  for (int level = 0; level <= cfg_.ac_m; ++level) {
    for (int j = 0; j < nb; ++j) {
      alive[j].resize(kappa[j].size());
      for (size_t i = 0; i < kappa[j].size(); ++i)
        alive[j][i] = kappa[j][i] != INT_MAX && kappa[j][i] <= level + eta[j];
    }
    for (size_t p = 0; p < ac_pairs_.size(); ++p) {
      support_a[p].assign(ac_pairs_[p].shared_cells, 0);
      support_b[p].assign(ac_pairs_[p].shared_cells, 0);
      for (size_t i = 0; i < alive[ac_pairs_[p].a].size(); ++i)
        if (alive[ac_pairs_[p].a][i]) ++support_a[p][ac_pairs_[p].proj_a[i]];
      for (size_t i = 0; i < alive[ac_pairs_[p].b].size(); ++i)
        if (alive[ac_pairs_[p].b][i]) ++support_b[p][ac_pairs_[p].proj_b[i]];
    }

    // AC-3 over directed arcs (pair, revise-first-side?), FIFO, seeded in
    // ascending pair order.
    std::deque<std::pair<int, bool>> queue;
    std::vector<char> queued(ac_pairs_.size() * 2, 0);
    auto push = [&](int pair, bool revise_a) {
      int slot = pair * 2 + (revise_a ? 0 : 1);
      if (queued[slot]) return;
      queued[slot] = 1;
      queue.emplace_back(pair, revise_a);
    };
    for (size_t p = 0; p < ac_pairs_.size(); ++p) {
      push(static_cast<int>(p), true);
      push(static_cast<int>(p), false);
    }
    while (!queue.empty()) {
      auto [p, revise_a] = queue.front();
      queue.pop_front();
      queued[p * 2 + (revise_a ? 0 : 1)] = 0;
      const AcPair& pr = ac_pairs_[p];
      int beam = revise_a ? pr.a : pr.b;
      const std::vector<uint32_t>& proj = revise_a ? pr.proj_a : pr.proj_b;
      const std::vector<int>& other_support = revise_a ? support_b[p] : support_a[p];
      bool changed = false;
      for (size_t i = 0; i < alive[beam].size(); ++i) {
        if (!alive[beam][i]) continue;
        if (other_support[proj[i]] > 0) continue;
        alive[beam][i] = 0;
        changed = true;
        for (int q : ac_neighbors_[beam]) {
          if (ac_pairs_[q].a == beam)
            --support_a[q][ac_pairs_[q].proj_a[i]];
          else
            --support_b[q][ac_pairs_[q].proj_b[i]];
        }
      }
      if (changed)
        for (int q : ac_neighbors_[beam])
          push(q, ac_pairs_[q].a != beam);  // revise the *other* side against beam
    }

    for (int j = 0; j < nb; ++j)
      for (size_t i = 0; i < alive[j].size(); ++i)
        if (alive[j][i] && ac_kappa_[j][i] == kAcNever) ac_kappa_[j][i] = level;

    if (level == cfg_.ac_m) {
      for (int j = 0; j < nb; ++j) {
        if (alive[j].empty()) continue;
        bool any = false;
        for (char c : alive[j])
          if (c) {
            any = true;
            break;
          }
        if (!any)
          fail(ErrorCode::WipeOut,
               "arc consistency eliminated every joint value of beam " + std::to_string(j));
      }
    }
  }
  converged_ = true;
  iterations_ = 0;
}

// ---------------------------------------------------------------------------
// Shared query paths
// ---------------------------------------------------------------------------

void MarginalEngine::propagate(const FactorSet& factors) {
  if (static_cast<int>(factors.size()) != s_->beam_count())
    fail(ErrorCode::BadArgument, "factor set does not match the analyzed model");
  switch (cfg_.kind) {
    case EngineKind::kJointree: jt_propagate(factors); break;
    case EngineKind::kLoopyBp: bp_propagate(factors); break;
    case EngineKind::kIteratedAc: ac_propagate(factors); break;
  }
  propagated_ = true;
}

std::vector<double> MarginalEngine::marginal_impl(const std::vector<VarId>& target) {
  const TwoSliceDbn& model = *s_->model;
  std::vector<int> doms;
  for (VarId v : target) doms.push_back(model.state_vars[v].domain_size());

  if (cfg_.kind == EngineKind::kJointree) {
    // Any clique containing the whole target gives the same answer; take the
    // cheapest. Single-variable queries use the precomputed home clique.
    int best = -1;
    size_t best_cells = SIZE_MAX;
    if (target.size() == 1) {
      best = var_home_clique_[target[0]];
    } else {
      for (size_t c = 0; c < cliques_.size(); ++c) {
        if (!std::includes(cliques_[c].vars.begin(), cliques_[c].vars.end(), target.begin(),
                           target.end()))
          continue;
        if (cliques_[c].space.total < best_cells) {
          best_cells = cliques_[c].space.total;
          best = static_cast<int>(c);
        }
      }
    }
    if (best < 0)
      fail(ErrorCode::TargetSpansBeams, "no join tree clique covers the query");
    const Clique& c = cliques_[best];
    return project_table(c.vars, c.space, jt_belief(best), target, doms);
  }

  // BP and AC answer from the lowest beam containing the target.
  int beam = -1;
  for (int j = 0; j < s_->beam_count(); ++j) {
    if (std::includes(s_->factor_vars[j].begin(), s_->factor_vars[j].end(), target.begin(),
                      target.end())) {
      beam = j;
      break;
    }
  }
  if (beam < 0)
    fail(ErrorCode::TargetSpansBeams, "query is not contained in any single beam");

  const auto& scope = s_->factor_vars[beam];
  std::vector<int> scope_sizes;
  for (VarId v : scope) scope_sizes.push_back(model.state_vars[v].domain_size());
  DiscreteSpace space(scope_sizes);

  if (cfg_.kind == EngineKind::kLoopyBp) {
    if (target.size() == 1) return bp_var_belief_[static_cast<size_t>(
        std::lower_bound(bp_vars_.begin(), bp_vars_.end(), target[0]) - bp_vars_.begin())];
    int f = -1;
    for (size_t i = 0; i < bp_factors_.size(); ++i)
      if (bp_factors_[i].beam == beam) {
        f = static_cast<int>(i);
        break;
      }
    // Factor belief with per-slot peak rescaling, mirroring bp_propagate: the
    // slot messages are sharply peaked once evidence pins most variables, and
    // an unscaled product across many slots can underflow to zero.
    std::vector<double> belief = bp_potentials_[f];
    const BpFactor& bf = bp_factors_[f];
    std::vector<double> scaled(belief.size());
    for (size_t slot = 0; slot < bf.var_nodes.size(); ++slot) {
      double peak = 0.0;
      for (size_t cell = 0; cell < belief.size(); ++cell) {
        scaled[cell] = belief[cell] * msg_vf_[f][slot][bf.cell_val[slot][cell]];
        peak = std::max(peak, scaled[cell]);
      }
      if (peak == 0.0) continue;
      for (size_t cell = 0; cell < belief.size(); ++cell) belief[cell] = scaled[cell] / peak;
    }
    return project_table(scope, space, belief, target, doms);
  }

  // Iterated AC: each surviving cell carries mass epsilon^kappa; the query
  // marginal sums those masses like any other table projection.
  std::vector<size_t> pos = positions_in(scope, target);
  DiscreteSpace tspace(doms);
  std::vector<double> out(tspace.total, 0.0);
  std::vector<Value> tv(target.size());
  for (size_t i = 0; i < space.total; ++i) {
    int k = ac_kappa_[beam][i];
    if (k == kAcNever) continue;
    for (size_t q = 0; q < pos.size(); ++q) tv[q] = space.digit(i, pos[q]);
    out[tspace.index_of(tv)] += std::pow(cfg_.ac_epsilon, k);
  }
  double total = 0.0;
  for (double x : out) total += x;
  if (total <= 0.0)
    fail(ErrorCode::WipeOut, "no value of the query survives arc consistency");
  for (double& x : out) x /= total;
  return out;
}

std::vector<double> MarginalEngine::marginal(const std::vector<VarId>& target) {
  if (!propagated_) fail(ErrorCode::BadArgument, "marginal requested before propagate");
  if (target.empty()) fail(ErrorCode::BadArgument, "empty marginal target");
  std::vector<VarId> sorted = target;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (VarId v : sorted) {
    if (v < 0 || v >= s_->model->num_state_vars())
      fail(ErrorCode::DanglingReference, "marginal target names an unknown variable");
    if (s_->is_sampled(v))
      fail(ErrorCode::TargetSpansBeams,
           "variable " + s_->model->state_vars[v].name +
               " is sampled; its marginal lives in the particle layer");
  }
  return marginal_impl(sorted);
}

std::vector<double> MarginalEngine::var_marginal(VarId v) { return marginal({v}); }

}  // namespace pbt
