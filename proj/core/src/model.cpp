#include "pbt/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace pbt {

namespace {

constexpr double kRowTol = 1e-9;

size_t row_index(const TwoSliceDbn& model, const CondTable& t, const std::vector<Value>& state) {
  size_t idx = 0;
  for (VarId p : t.parents) {
    idx = idx * static_cast<size_t>(model.state_vars[p].domain_size()) +
          static_cast<size_t>(state[p]);
  }
  return idx;
}

}  // namespace

std::optional<VarId> TwoSliceDbn::state_var_id(const std::string& name) const {
  for (size_t i = 0; i < state_vars.size(); ++i)
    if (state_vars[i].name == name) return static_cast<VarId>(i);
  return std::nullopt;
}

std::optional<ObsId> TwoSliceDbn::obs_var_id(const std::string& name) const {
  for (size_t i = 0; i < obs_vars.size(); ++i)
    if (obs_vars[i].name == name) return static_cast<ObsId>(i);
  return std::nullopt;
}

std::optional<ActionId> TwoSliceDbn::action_id(const std::string& name) const {
  for (size_t i = 0; i < actions.size(); ++i)
    if (actions[i] == name) return static_cast<ActionId>(i);
  return std::nullopt;
}

void validate_model(const TwoSliceDbn& model) {
  const int nv = model.num_state_vars();
  const int no = model.num_obs_vars();
  const int na = model.num_actions();
  if (na == 0) fail(ErrorCode::BadArgument, "model declares no actions");

  std::set<std::string> names;
  for (const auto& v : model.state_vars) {
    if (v.values.empty()) fail(ErrorCode::BadArgument, "variable " + v.name + " has empty domain");
    if (!names.insert(v.name).second) fail(ErrorCode::BadArgument, "duplicate name " + v.name);
  }
  for (const auto& v : model.obs_vars) {
    if (v.values.empty()) fail(ErrorCode::BadArgument, "variable " + v.name + " has empty domain");
    if (!names.insert(v.name).second) fail(ErrorCode::BadArgument, "duplicate name " + v.name);
  }

  auto check_table = [&](const CondTable& t, int child_domain, const std::string& where) {
    for (VarId p : t.parents)
      if (p < 0 || p >= nv) fail(ErrorCode::DanglingReference, where + " references unknown parent");
    size_t rows = t.row_count(model.state_vars);
    if (t.rows.size() != rows * static_cast<size_t>(child_domain))
      fail(ErrorCode::BadArgument, where + " has wrong row data size");
    for (size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < child_domain; ++c) {
        double p = t.rows[r * child_domain + c];
        if (p < 0.0) fail(ErrorCode::UnnormalizedRow, where + " has a negative entry");
        s += p;
      }
      if (std::abs(s - 1.0) > kRowTol) fail(ErrorCode::UnnormalizedRow, where + " row does not sum to 1");
    }
  };

  if (model.transitions.size() != static_cast<size_t>(nv))
    fail(ErrorCode::MissingTable, "transitions must cover every state variable");
  for (VarId v = 0; v < nv; ++v) {
    if (model.transitions[v].size() != static_cast<size_t>(na))
      fail(ErrorCode::MissingTable, "state variable " + model.state_vars[v].name +
                                        " lacks a table for some action");
    for (ActionId a = 0; a < na; ++a) {
      if (!model.transitions[v][a])
        fail(ErrorCode::MissingTable, "state variable " + model.state_vars[v].name +
                                          " lacks a table for action " + model.actions[a]);
      check_table(model.transition(v, a), model.state_vars[v].domain_size(),
                  "transition " + model.state_vars[v].name + "/" + model.actions[a]);
    }
  }

  if (model.sensors.size() != static_cast<size_t>(no))
    fail(ErrorCode::MissingTable, "sensors must cover every observation variable");
  for (ObsId o = 0; o < no; ++o) {
    if (model.sensors[o].size() != static_cast<size_t>(na))
      fail(ErrorCode::MissingTable, "observation variable " + model.obs_vars[o].name +
                                        " lacks a table for some action");
    for (ActionId a = 0; a < na; ++a) {
      if (!model.sensors[o][a])
        fail(ErrorCode::MissingTable, "observation variable " + model.obs_vars[o].name +
                                          " lacks a table for action " + model.actions[a]);
      check_table(model.sensor(o, a), model.obs_vars[o].domain_size(),
                  "sensor " + model.obs_vars[o].name + "/" + model.actions[a]);
    }
  }

  // Prior blocks: disjoint, covering, normalized.
  std::vector<char> covered(nv, 0);
  for (const auto& b : model.priors) {
    size_t size = 1;
    for (VarId v : b.vars) {
      if (v < 0 || v >= nv) fail(ErrorCode::DanglingReference, "prior block references unknown variable");
      if (covered[v]) fail(ErrorCode::BadArgument, "prior blocks overlap on " + model.state_vars[v].name);
      covered[v] = 1;
      size *= static_cast<size_t>(model.state_vars[v].domain_size());
    }
    if (b.table.size() != size) fail(ErrorCode::BadArgument, "prior block has wrong table size");
    double s = 0.0;
    for (double p : b.table) {
      if (p < 0.0) fail(ErrorCode::UnnormalizedRow, "prior block has a negative entry");
      s += p;
    }
    if (std::abs(s - 1.0) > kRowTol) fail(ErrorCode::UnnormalizedRow, "prior block does not sum to 1");
  }
  for (VarId v = 0; v < nv; ++v)
    if (!covered[v])
      fail(ErrorCode::BadArgument, "prior covers no block for " + model.state_vars[v].name);

  for (const auto& [v, inv] : model.force_bd) {
    if (v < 0 || v >= nv) fail(ErrorCode::DanglingReference, "force_bd references unknown variable");
    if (inv.inverse.size() != static_cast<size_t>(na))
      fail(ErrorCode::BadArgument, "force_bd inverse must cover every action");
    for (const auto& per_action : inv.inverse) {
      if (per_action.size() != static_cast<size_t>(model.state_vars[v].domain_size()))
        fail(ErrorCode::BadArgument, "force_bd inverse has wrong domain size");
      for (const auto& val : per_action)
        if (val && (*val < 0 || *val >= model.state_vars[v].domain_size()))
          fail(ErrorCode::BadArgument, "force_bd inverse value out of range");
    }
    if (model.force_sampled.count(v))
      fail(ErrorCode::BadArgument, "variable is both force_bd and force_sampled");
  }
  for (VarId v : model.force_sampled)
    if (v < 0 || v >= nv) fail(ErrorCode::DanglingReference, "force_sampled references unknown variable");
}

double transition_prob(const TwoSliceDbn& model, VarId v, ActionId a,
                       const std::vector<Value>& state, Value next) {
  const CondTable& t = model.transition(v, a);
  int dom = model.state_vars[v].domain_size();
  return t.rows[row_index(model, t, state) * dom + next];
}

double sensor_prob(const TwoSliceDbn& model, ObsId o, ActionId a,
                   const std::vector<Value>& next_state, Value value) {
  const CondTable& t = model.sensor(o, a);
  int dom = model.obs_vars[o].domain_size();
  return t.rows[row_index(model, t, next_state) * dom + value];
}

double joint_transition_prob(const TwoSliceDbn& model, ActionId a,
                             const std::vector<Value>& state, const std::vector<Value>& next) {
  double p = 1.0;
  for (VarId v = 0; v < model.num_state_vars() && p > 0.0; ++v)
    p *= transition_prob(model, v, a, state, next[v]);
  return p;
}

double joint_sensor_prob(const TwoSliceDbn& model, ActionId a,
                         const std::vector<Value>& next_state, const std::vector<Value>& obs) {
  double p = 1.0;
  for (ObsId o = 0; o < model.num_obs_vars() && p > 0.0; ++o)
    p *= sensor_prob(model, o, a, next_state, obs[o]);
  return p;
}

double prior_prob(const TwoSliceDbn& model, const std::vector<Value>& state) {
  double p = 1.0;
  for (const auto& b : model.priors) {
    size_t idx = 0;
    for (VarId v : b.vars)
      idx = idx * static_cast<size_t>(model.state_vars[v].domain_size()) +
            static_cast<size_t>(state[v]);
    p *= b.table[idx];
    if (p == 0.0) break;
  }
  return p;
}

std::vector<Value> sample_prior(const TwoSliceDbn& model, Rng& rng) {
  std::vector<Value> state(model.num_state_vars(), 0);
  for (const auto& b : model.priors) {
    size_t idx = static_cast<size_t>(rng.next_categorical(b.table));
    for (size_t i = b.vars.size(); i-- > 0;) {
      int dom = model.state_vars[b.vars[i]].domain_size();
      state[b.vars[i]] = static_cast<Value>(idx % static_cast<size_t>(dom));
      idx /= static_cast<size_t>(dom);
    }
  }
  return state;
}

StepSample simulate_step(const TwoSliceDbn& model, const std::vector<Value>& state, ActionId a,
                         Rng& rng) {
  StepSample out;
  out.next_state.resize(model.num_state_vars());
  std::vector<double> row;
  for (VarId v = 0; v < model.num_state_vars(); ++v) {
    const CondTable& t = model.transition(v, a);
    int dom = model.state_vars[v].domain_size();
    size_t r = row_index(model, t, state) * dom;
    row.assign(t.rows.begin() + r, t.rows.begin() + r + dom);
    out.next_state[v] = rng.next_categorical(row);
  }
  out.obs.resize(model.num_obs_vars());
  for (ObsId o = 0; o < model.num_obs_vars(); ++o) {
    const CondTable& t = model.sensor(o, a);
    int dom = model.obs_vars[o].domain_size();
    size_t r = row_index(model, t, out.next_state) * dom;
    row.assign(t.rows.begin() + r, t.rows.begin() + r + dom);
    out.obs[o] = rng.next_categorical(row);
  }
  return out;
}

// ---- JSON schema ----

namespace {

using nlohmann::json;

VarId resolve_state_var(const TwoSliceDbn& model, const std::string& name, const char* where) {
  auto id = model.state_var_id(name);
  if (!id) fail(ErrorCode::DanglingReference, std::string(where) + ": unknown state variable " + name);
  return *id;
}

Value resolve_value(const VariableDecl& var, const std::string& label, const char* where) {
  for (size_t i = 0; i < var.values.size(); ++i)
    if (var.values[i] == label) return static_cast<Value>(i);
  fail(ErrorCode::DanglingReference, std::string(where) + ": unknown value " + label);
}

std::vector<VariableDecl> parse_var_list(const json& j, const char* where) {
  std::vector<VariableDecl> out;
  for (const auto& e : j) {
    VariableDecl d;
    d.name = e.at("name").get<std::string>();
    for (const auto& v : e.at("domain")) d.values.push_back(v.get<std::string>());
    if (d.values.empty()) fail(ErrorCode::BadArgument, std::string(where) + ": empty domain");
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

TwoSliceDbn parse_model_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::BadArgument, std::string("model file is not valid JSON: ") + e.what());
  }

  TwoSliceDbn model;
  model.state_vars = parse_var_list(j.at("state_vars"), "state_vars");
  if (j.contains("obs_vars")) model.obs_vars = parse_var_list(j.at("obs_vars"), "obs_vars");
  for (const auto& a : j.at("actions")) model.actions.push_back(a.get<std::string>());

  const int na = model.num_actions();
  model.transitions.assign(model.state_vars.size(), {});
  model.sensors.assign(model.obs_vars.size(), {});
  std::vector<std::vector<char>> have_tr(model.state_vars.size(), std::vector<char>(na, 0));
  std::vector<std::vector<char>> have_se(model.obs_vars.size(), std::vector<char>(na, 0));
  for (auto& v : model.transitions) v.resize(na);
  for (auto& v : model.sensors) v.resize(na);

  auto action_ids = [&](const json& e, const char* where) {
    std::vector<ActionId> ids;
    std::string a = e.at("action").get<std::string>();
    if (a == "*") {
      for (ActionId i = 0; i < na; ++i) ids.push_back(i);
    } else {
      auto id = model.action_id(a);
      if (!id) fail(ErrorCode::DanglingReference, std::string(where) + ": unknown action " + a);
      ids.push_back(*id);
    }
    return ids;
  };

  if (j.contains("transitions")) {
    for (const auto& e : j.at("transitions")) {
      std::string child = e.at("child").get<std::string>();
      VarId v = resolve_state_var(model, child, "transitions");
      CondTable t;
      for (const auto& p : e.at("parents")) {
        std::string name = p.get<std::string>();
        if (!name.empty() && name.back() == '\'')
          fail(ErrorCode::BadParentSlice,
               "transition parent " + name + " refers to the next slice");
        t.parents.push_back(resolve_state_var(model, name, "transitions"));
      }
      for (const auto& r : e.at("rows")) t.rows.push_back(r.get<double>());
      auto shared = std::make_shared<const CondTable>(std::move(t));
      for (ActionId a : action_ids(e, "transitions")) {
        if (have_tr[v][a])
          fail(ErrorCode::BadArgument, "duplicate transition table for " + child);
        model.transitions[v][a] = shared;
        have_tr[v][a] = 1;
      }
    }
  }

  if (j.contains("sensors")) {
    for (const auto& e : j.at("sensors")) {
      std::string child = e.at("child").get<std::string>();
      auto o = model.obs_var_id(child);
      if (!o) fail(ErrorCode::DanglingReference, "sensors: unknown observation variable " + child);
      CondTable t;
      for (const auto& p : e.at("parents")) {
        std::string name = p.get<std::string>();
        if (!name.empty() && name.back() == '\'') name.pop_back();  // sensors read slice t+1
        t.parents.push_back(resolve_state_var(model, name, "sensors"));
      }
      for (const auto& r : e.at("rows")) t.rows.push_back(r.get<double>());
      auto shared = std::make_shared<const CondTable>(std::move(t));
      for (ActionId a : action_ids(e, "sensors")) {
        if (have_se[*o][a]) fail(ErrorCode::BadArgument, "duplicate sensor table for " + child);
        model.sensors[*o][a] = shared;
        have_se[*o][a] = 1;
      }
    }
  }

  for (VarId v = 0; v < model.num_state_vars(); ++v)
    for (ActionId a = 0; a < na; ++a)
      if (!have_tr[v][a])
        fail(ErrorCode::MissingTable, "no transition table for " + model.state_vars[v].name +
                                          " under " + model.actions[a]);
  for (ObsId o = 0; o < model.num_obs_vars(); ++o)
    for (ActionId a = 0; a < na; ++a)
      if (!have_se[o][a])
        fail(ErrorCode::MissingTable, "no sensor table for " + model.obs_vars[o].name + " under " +
                                          model.actions[a]);

  for (const auto& e : j.at("priors")) {
    PriorBlock b;
    for (const auto& v : e.at("vars")) b.vars.push_back(resolve_state_var(model, v.get<std::string>(), "priors"));
    for (const auto& p : e.at("table")) b.table.push_back(p.get<double>());
    model.priors.push_back(std::move(b));
  }

  if (j.contains("force_bd")) {
    for (const auto& [name, per_action] : j.at("force_bd").items()) {
      VarId v = resolve_state_var(model, name, "force_bd");
      ForcedInverse inv;
      inv.inverse.assign(na, {});
      for (const auto& [aname, values] : per_action.items()) {
        auto a = model.action_id(aname);
        if (!a) fail(ErrorCode::DanglingReference, "force_bd: unknown action " + aname);
        std::vector<std::optional<Value>> map;
        for (const auto& val : values) {
          if (val.is_null())
            map.push_back(std::nullopt);
          else
            map.push_back(resolve_value(model.state_vars[v], val.get<std::string>(), "force_bd"));
        }
        inv.inverse[*a] = std::move(map);
      }
      for (ActionId a = 0; a < na; ++a)
        if (inv.inverse[a].empty())
          fail(ErrorCode::BadArgument, "force_bd for " + name + " misses an action");
      model.force_bd.emplace(v, std::move(inv));
    }
  }
  if (j.contains("force_sampled"))
    for (const auto& name : j.at("force_sampled"))
      model.force_sampled.insert(resolve_state_var(model, name.get<std::string>(), "force_sampled"));

  validate_model(model);
  return model;
}

std::string model_to_json(const TwoSliceDbn& model) {
  json j;
  j["state_vars"] = json::array();
  for (const auto& v : model.state_vars)
    j["state_vars"].push_back({{"name", v.name}, {"domain", v.values}});
  j["obs_vars"] = json::array();
  for (const auto& v : model.obs_vars)
    j["obs_vars"].push_back({{"name", v.name}, {"domain", v.values}});
  j["actions"] = model.actions;

  auto emit_tables = [&](const std::vector<std::vector<std::shared_ptr<const CondTable>>>& tables,
                         const std::vector<VariableDecl>& children, bool primed) {
    json out = json::array();
    for (size_t v = 0; v < tables.size(); ++v) {
      // Tables shared across every action collapse to one "*" entry.
      bool uniform = true;
      for (size_t a = 1; a < tables[v].size(); ++a)
        if (tables[v][a] != tables[v][0]) uniform = false;
      size_t limit = uniform ? 1 : tables[v].size();
      for (size_t a = 0; a < limit; ++a) {
        json e;
        e["child"] = children[v].name;
        e["action"] = uniform ? std::string("*") : model.actions[a];
        json parents = json::array();
        for (VarId p : tables[v][a]->parents)
          parents.push_back(model.state_vars[p].name + (primed ? "'" : ""));
        e["parents"] = parents;
        e["rows"] = tables[v][a]->rows;
        out.push_back(std::move(e));
      }
    }
    return out;
  };
  j["transitions"] = emit_tables(model.transitions, model.state_vars, false);
  j["sensors"] = emit_tables(model.sensors, model.obs_vars, true);

  j["priors"] = json::array();
  for (const auto& b : model.priors) {
    json e;
    json vars = json::array();
    for (VarId v : b.vars) vars.push_back(model.state_vars[v].name);
    e["vars"] = vars;
    e["table"] = b.table;
    j["priors"].push_back(std::move(e));
  }

  if (!model.force_bd.empty()) {
    json fb = json::object();
    for (const auto& [v, inv] : model.force_bd) {
      json per_action = json::object();
      for (size_t a = 0; a < inv.inverse.size(); ++a) {
        json values = json::array();
        for (const auto& val : inv.inverse[a]) {
          if (val)
            values.push_back(model.state_vars[v].values[*val]);
          else
            values.push_back(nullptr);
        }
        per_action[model.actions[a]] = std::move(values);
      }
      fb[model.state_vars[v].name] = std::move(per_action);
    }
    j["force_bd"] = std::move(fb);
  }
  if (!model.force_sampled.empty()) {
    json fs = json::array();
    for (VarId v : model.force_sampled) fs.push_back(model.state_vars[v].name);
    j["force_sampled"] = std::move(fs);
  }
  return j.dump(2);
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnnormalizedRow: return "UnnormalizedRow";
    case ErrorCode::BadParentSlice: return "BadParentSlice";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::MissingTable: return "MissingTable";
    case ErrorCode::PriorNotFactorized: return "PriorNotFactorized";
    case ErrorCode::NotRegressable: return "NotRegressable";
    case ErrorCode::ImpossibleObservation: return "ImpossibleObservation";
    case ErrorCode::ImpossibleHistory: return "ImpossibleHistory";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::NoCoveringBeam: return "NoCoveringBeam";
    case ErrorCode::ZeroLikelihood: return "ZeroLikelihood";
    case ErrorCode::AllParticlesDead: return "AllParticlesDead";
    case ErrorCode::TargetSpansBeams: return "TargetSpansBeams";
    case ErrorCode::TreewidthExceeded: return "TreewidthExceeded";
    case ErrorCode::WipeOut: return "WipeOut";
    case ErrorCode::BadArgument: return "BadArgument";
  }
  return "UnknownError";
}

}  // namespace pbt
