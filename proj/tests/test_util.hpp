#pragma once
// Hand-built miniature models and a random-model generator shared by the
// test suites and the acceptance gate.

#include <memory>
#include <string>
#include <vector>

#include "pbt/model.hpp"
#include "pbt/rng.hpp"

namespace testutil {

inline std::shared_ptr<const pbt::CondTable> table(std::vector<pbt::VarId> parents,
                                                   std::vector<double> rows) {
  auto t = std::make_shared<pbt::CondTable>();
  t->parents = std::move(parents);
  t->rows = std::move(rows);
  return t;
}

inline pbt::VariableDecl binary_var(const std::string& name) {
  return pbt::VariableDecl{name, {"0", "1"}};
}

// Two static binary state variables A and B, one "look" action, and one
// observation reading A with the given accuracy. Uniform independent priors.
inline pbt::TwoSliceDbn static_pair_model(double accuracy = 0.9) {
  pbt::TwoSliceDbn m;
  m.state_vars = {binary_var("A"), binary_var("B")};
  m.obs_vars = {binary_var("O")};
  m.actions = {"look"};
  m.transitions.assign(2, {table({0}, {1, 0, 0, 1})});
  m.transitions[1][0] = table({1}, {1, 0, 0, 1});
  m.sensors.assign(1, {table({0}, {accuracy, 1 - accuracy, 1 - accuracy, accuracy})});
  m.priors = {{{0}, {0.5, 0.5}}, {{1}, {0.5, 0.5}}};
  return m;
}

// A randomly generated model whose block structure is a chain of overlapping
// variable windows: shared variables are static (identity dynamics), private
// variables get random strictly positive transitions with parents inside
// their window, and each window carries one observation variable over all of
// its members. Every external variable is regressable by construction and the
// minimal block collection is exactly the windows.
struct ChainModel {
  pbt::TwoSliceDbn model;
  std::vector<std::vector<pbt::VarId>> windows;
};

// Draws `k` probabilities in [lo, 1-lo] and normalizes rows of width `width`.
inline std::vector<double> random_rows(pbt::Rng& rng, int row_count, int width,
                                       double lo = 0.05) {
  std::vector<double> rows(static_cast<size_t>(row_count) * width);
  for (int r = 0; r < row_count; ++r) {
    double sum = 0;
    for (int c = 0; c < width; ++c) {
      double x = lo + (1 - 2 * lo) * rng.next_double();
      rows[static_cast<size_t>(r) * width + c] = x;
      sum += x;
    }
    for (int c = 0; c < width; ++c) rows[static_cast<size_t>(r) * width + c] /= sum;
  }
  return rows;
}

// max_vars caps the total state variable count (>= 5). single_var_overlaps
// forces consecutive windows to share exactly one variable, which makes the
// factor graph of the block beliefs a tree.
inline ChainModel random_chain_model(pbt::Rng& rng, int max_vars = 8,
                                     bool single_var_overlaps = false) {
  const int n_windows = 2 + static_cast<int>(rng.next_below(2));  // 2 or 3
  std::vector<int> overlap(n_windows - 1);
  for (int& o : overlap) o = single_var_overlaps ? 1 : 1 + static_cast<int>(rng.next_below(2));

  // Window k owns overlap[k-1] left-shared vars, `extra` private vars, and
  // overlap[k] right-shared vars. Budget the private vars to stay <= max_vars.
  std::vector<int> extra(n_windows, 1);
  int used = 0;
  for (int o : overlap) used += o;
  for (int e : extra) used += e;
  while (used < max_vars && rng.next_below(3) != 0) {
    ++extra[rng.next_below(static_cast<uint64_t>(n_windows))];
    ++used;
  }

  ChainModel out;
  pbt::TwoSliceDbn& m = out.model;
  int start = 0;
  for (int k = 0; k < n_windows; ++k) {
    int left = k > 0 ? overlap[k - 1] : 0;
    int right = k + 1 < n_windows ? overlap[k] : 0;
    int len = left + extra[k] + right;
    std::vector<pbt::VarId> win(len);
    for (int i = 0; i < len; ++i) win[i] = start + i;
    out.windows.push_back(win);
    start += len - right;
  }
  const int total = out.windows.back().back() + 1;

  for (int v = 0; v < total; ++v) m.state_vars.push_back(binary_var("v" + std::to_string(v)));
  const int n_actions = 1 + static_cast<int>(rng.next_below(2));
  for (int a = 0; a < n_actions; ++a) m.actions.push_back("act" + std::to_string(a));

  // Shared variables appear in two windows; everything else is private.
  std::vector<int> containing(total, 0);
  for (const auto& w : out.windows)
    for (pbt::VarId v : w) ++containing[v];

  m.transitions.assign(total, std::vector<std::shared_ptr<const pbt::CondTable>>(n_actions));
  for (int k = 0; k < n_windows; ++k) {
    for (pbt::VarId v : out.windows[k]) {
      if (!m.transitions[v][0]) {
        for (int a = 0; a < n_actions; ++a) {
          if (containing[v] > 1) {
            m.transitions[v][a] = table({v}, {1, 0, 0, 1});
          } else {
            // Random parents inside this window, always including v itself.
            std::vector<pbt::VarId> parents;
            for (pbt::VarId p : out.windows[k])
              if (p == v || rng.next_below(2) == 0) parents.push_back(p);
            int rows = 1 << parents.size();
            m.transitions[v][a] = table(parents, random_rows(rng, rows, 2));
          }
        }
      }
    }
  }

  m.sensors.resize(n_windows);
  for (int k = 0; k < n_windows; ++k) {
    m.obs_vars.push_back(pbt::VariableDecl{"o" + std::to_string(k), {"0", "1", "2"}});
    for (int a = 0; a < n_actions; ++a) {
      int rows = 1 << out.windows[k].size();
      m.sensors[k].push_back(table(out.windows[k], random_rows(rng, rows, 3)));
    }
  }

  for (int v = 0; v < total; ++v) {
    double p = 0.1 + 0.8 * rng.next_double();
    m.priors.push_back({{v}, {1 - p, p}});
  }
  return out;
}

}  // namespace testutil
