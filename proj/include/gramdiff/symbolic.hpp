#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace gramdiff {

// A production A -> a B with its probability.
struct Production {
  std::size_t lhs = 0;
  std::size_t terminal = 0;
  std::size_t rhs = 0;
  double probability = 1.0;

  bool operator==(const Production&) const = default;
};

// Discrete stochastic regular grammar over named symbols. Used both for
// ground-truth grammars that generate data and for grammars read out of a
// trained model.
struct SymbolicGrammar {
  std::vector<std::string> nonterminals;
  std::vector<std::string> terminals;
  std::size_t start = 0;
  std::vector<Production> rules;
  double prune_threshold = 0.0;
  // Non-terminals reachable from the start symbol; empty means all used.
  std::vector<bool> used;

  bool is_used(std::size_t nonterminal) const {
    return used.empty() || used[nonterminal];
  }
  // Rule indices with the given left-hand side, in rule order.
  std::vector<std::size_t> rules_of(std::size_t lhs) const;
  // Throws when an index is out of range or a used lhs has probabilities that
  // do not sum to 1 within `tolerance`.
  void validate(double tolerance = 1e-6) const;
  // Recomputes `used` as reachability from the start symbol.
  void mark_reachable();

  std::string describe(const Production& rule) const;
};

nlohmann::json to_json(const SymbolicGrammar& grammar);
SymbolicGrammar symbolic_grammar_from_json(const nlohmann::json& doc);

// Default non-terminal names: A, B, ..., Z, then N26, N27, ...
std::string nonterminal_name(std::size_t index);
std::vector<std::string> default_terminal_names(std::size_t count);

}  // namespace gramdiff
