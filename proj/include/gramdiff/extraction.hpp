#pragma once

// Reading a discrete grammar out of a trained model, rendering it, and
// comparing grammars up to a renaming of non-terminals.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gramdiff/grammar.hpp"
#include "gramdiff/symbolic.hpp"

namespace gramdiff {

inline constexpr double kDefaultPruneThreshold = 0.2;

// Row i = softmax(Wc row i / temperature); defaults to the model's training
// temperature.
Matrix rule_probabilities(const GrammarModel& model, std::optional<double> temperature = {});

struct ExtractOptions {
  double threshold = kDefaultPruneThreshold;
  // Overrides model.terminal_names (and the a, b, c... fallback).
  std::vector<std::string> terminal_names;
  // Picks the start symbol through psi instead of the start logits.
  const std::vector<double>* context = nullptr;
  std::optional<double> temperature;
};

// For every non-terminal, rules with probability >= threshold are kept. A
// kept rule emits argmax squash(H2 row). Its next non-terminal is read from
// softmax(H1 row): every non-terminal with mass >= threshold becomes a
// production, sharing the rule's probability in proportion to that mass. A
// model may express a branch either as two rules or as one rule whose H1 row
// is split; both read out as the same productions. Productions with equal
// (terminal, rhs) are merged by adding probabilities, then renormalized per
// left-hand side. Where nothing reaches the threshold the argmax is kept.
// Non-terminals unreachable from the start symbol are marked unused.
SymbolicGrammar extract(const GrammarModel& model, const ExtractOptions& options = {});

// Graphviz digraph: one node per used non-terminal (start drawn as a double
// circle), one edge per rule of a used non-terminal labelled
// "terminal (p.pp)". Edges are ordered by (lhs, terminal, rhs).
std::string render_dot(const SymbolicGrammar& grammar);

// One line per rule of a used non-terminal, "A -> a B (0.50)", in the same
// order as render_dot.
std::string render_text(const SymbolicGrammar& grammar);

struct Equivalence {
  bool equivalent = false;
  // mapping[i] = non-terminal of b matched to non-terminal i of a, for used
  // non-terminals of a; unset elsewhere. On failure it holds the closest
  // candidate found.
  std::vector<std::optional<std::size_t>> mapping;
  // Human-readable reason: the bijection, or the first rule without a match.
  std::string witness;
};

// True when some bijection between the used non-terminals of a and b maps
// a's rules onto b's with equal terminal names and probabilities within
// prob_tol. With match_start the bijection must also map start to start.
// Exhaustive over bijections; intended for N <= 10.
Equivalence grammar_equivalence(const SymbolicGrammar& a, const SymbolicGrammar& b,
                                double prob_tol, bool match_start = true);

// Parameters that encode `grammar` exactly: +/-10 logits for H1, H2 and the
// start vector, and Wc = temperature * (log p + 10) for rule slots in use
// (-10 * temperature for empty slots). `rules_per_nonterminal` defaults to
// the largest rule count of any non-terminal.
GrammarModel model_from_grammar(const SymbolicGrammar& grammar,
                                std::optional<std::size_t> rules_per_nonterminal = {},
                                double temperature = 1.0);

}  // namespace gramdiff
