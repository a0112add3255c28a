#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <utility>
#include <vector>

#include "gramdiff/diffcore.hpp"
#include "gramdiff/matrix.hpp"
#include "gramdiff/random.hpp"
#include "gramdiff/symbolic.hpp"

namespace gramdiff::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = lo + (hi - lo) * rng.uniform();
  return m;
}

// Builds a scalar from graph parameters created for `inputs`, in order.
using ScalarBuilder = std::function<Tensor(Graph&, const std::vector<Tensor>&)>;

inline double evaluate(const std::vector<Matrix>& inputs, const ScalarBuilder& build) {
  Graph g;
  std::vector<Tensor> params;
  for (const auto& m : inputs) params.push_back(g.parameter(m));
  return g.value(build(g, params))(0, 0);
}

// Largest relative disagreement between backward() and central differences
// over every input entry.
inline double max_gradient_error(const std::vector<Matrix>& inputs, const ScalarBuilder& build,
                                 double h = 1e-5) {
  Graph g;
  std::vector<Tensor> params;
  for (const auto& m : inputs) params.push_back(g.parameter(m));
  g.backward(build(g, params));

  double worst = 0.0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    const Matrix analytic = g.grad(params[p]);
    for (std::size_t k = 0; k < inputs[p].size(); ++k) {
      std::vector<Matrix> plus = inputs, minus = inputs;
      plus[p].values()[k] += h;
      minus[p].values()[k] -= h;
      const double numeric = (evaluate(plus, build) - evaluate(minus, build)) / (2.0 * h);
      const double a = analytic.values()[k];
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(a - numeric) / scale);
    }
  }
  return worst;
}

// Every non-terminal gets 1..max_rules productions with distinct
// (terminal, rhs) pairs and probabilities no smaller than 1/(1 + 1.8 * 2).
inline SymbolicGrammar random_grammar(Rng& rng, std::size_t max_n, std::size_t max_rules) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1));
  };
  SymbolicGrammar g;
  const std::size_t n = pick(1, max_n);
  const std::size_t t = pick(2, 4);
  for (std::size_t i = 0; i < n; ++i) g.nonterminals.push_back(nonterminal_name(i));
  g.terminals = default_terminal_names(t);
  g.start = pick(0, n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t count = std::min(pick(1, max_rules), n * t);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<Production> rules;
    double total = 0.0;
    while (rules.size() < count) {
      const std::pair<std::size_t, std::size_t> key{pick(0, t - 1), pick(0, n - 1)};
      if (!seen.insert(key).second) continue;
      const double w = 1.0 + 0.8 * rng.uniform();
      rules.push_back({i, key.first, key.second, w});
      total += w;
    }
    for (auto& r : rules) {
      r.probability /= total;
      g.rules.push_back(r);
    }
  }
  g.mark_reachable();
  return g;
}

}  // namespace gramdiff::testing
