#include "gramdiff/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>
#include <utility>

#include "gramdiff/errors.hpp"

namespace gramdiff {

namespace {

constexpr double kExactLogit = 10.0;

std::string format_probability(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", p);
  return buf;
}

std::string quoted(const std::string& name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

// Rules of one non-terminal keyed by (terminal name, rhs index).
using RuleKey = std::pair<std::string, std::size_t>;
using RuleSet = std::map<RuleKey, double>;

std::vector<RuleSet> rule_sets(const SymbolicGrammar& g) {
  std::vector<RuleSet> out(g.nonterminals.size());
  for (const Production& r : g.rules) {
    out[r.lhs][{g.terminals[r.terminal], r.rhs}] += r.probability;
  }
  return out;
}

class BijectionSearch {
 public:
  BijectionSearch(const SymbolicGrammar& a, const SymbolicGrammar& b, double tol,
                  bool match_start)
      : a_(a), b_(b), tol_(tol), match_start_(match_start),
        rules_a_(rule_sets(a)), rules_b_(rule_sets(b)) {
    for (std::size_t i = 0; i < a.nonterminals.size(); ++i) {
      if (a.is_used(i)) order_.push_back(i);
    }
    for (std::size_t i = 0; i < b.nonterminals.size(); ++i) {
      if (b.is_used(i)) used_b_.push_back(i);
    }
    // The start symbol goes first so match_start prunes at the root.
    for (std::size_t k = 0; k < order_.size(); ++k) {
      if (order_[k] == a.start) std::swap(order_[0], order_[k]);
    }
    map_ab_.assign(a.nonterminals.size(), kUnset);
    map_ba_.assign(b.nonterminals.size(), kUnset);
  }

  std::size_t used_a() const { return order_.size(); }
  std::size_t used_b() const { return used_b_.size(); }

  // Returns the minimum mismatch count and leaves the best map in best_.
  std::size_t run() {
    best_cost_ = std::numeric_limits<std::size_t>::max();
    descend(0, 0);
    return best_cost_;
  }

  const std::vector<std::size_t>& best() const { return best_; }

  // Mismatches of a complete assignment, listed for the witness.
  std::string first_mismatch(const std::vector<std::size_t>& map_ab) const {
    std::vector<std::size_t> map_ba(b_.nonterminals.size(), kUnset);
    for (std::size_t i = 0; i < map_ab.size(); ++i) {
      if (map_ab[i] != kUnset) map_ba[map_ab[i]] = i;
    }
    for (const Production& r : a_.rules) {
      if (!a_.is_used(r.lhs)) continue;
      if (!matched(r.lhs, {a_.terminals[r.terminal], r.rhs}, map_ab, rules_a_, rules_b_)) {
        return "no counterpart in b for rule " + a_.describe(r);
      }
    }
    for (const Production& r : b_.rules) {
      if (!b_.is_used(r.lhs)) continue;
      if (!matched(r.lhs, {b_.terminals[r.terminal], r.rhs}, map_ba, rules_b_, rules_a_)) {
        return "no counterpart in a for rule " + b_.describe(r);
      }
    }
    return "";
  }

  static constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();

 private:
  // Whether rule (lhs, key) of x has a partner in y under map.
  bool matched(std::size_t lhs, const RuleKey& key, const std::vector<std::size_t>& map,
               const std::vector<RuleSet>& xs, const std::vector<RuleSet>& ys) const {
    if (map[lhs] == kUnset || map[key.second] == kUnset) return false;
    const RuleSet& target = ys[map[lhs]];
    auto it = target.find({key.first, map[key.second]});
    return it != target.end() && std::abs(it->second - xs[lhs].at(key)) <= tol_;
  }

  // Mismatches that become decidable once x is mapped to y.
  std::size_t cost_of(std::size_t x, std::size_t y) const {
    std::size_t cost = 0;
    for (const auto& [key, p] : rules_a_[x]) {
      if (map_ab_[key.second] != kUnset && !matched(x, key, map_ab_, rules_a_, rules_b_)) ++cost;
    }
    for (std::size_t other : order_) {
      if (other == x || map_ab_[other] == kUnset) continue;
      for (const auto& [key, p] : rules_a_[other]) {
        if (key.second == x && !matched(other, key, map_ab_, rules_a_, rules_b_)) ++cost;
      }
    }
    for (const auto& [key, p] : rules_b_[y]) {
      if (map_ba_[key.second] != kUnset && !matched(y, key, map_ba_, rules_b_, rules_a_)) ++cost;
    }
    for (std::size_t other : used_b_) {
      if (other == y || map_ba_[other] == kUnset) continue;
      for (const auto& [key, p] : rules_b_[other]) {
        if (key.second == y && !matched(other, key, map_ba_, rules_b_, rules_a_)) ++cost;
      }
    }
    return cost;
  }

  void descend(std::size_t depth, std::size_t cost) {
    if (cost >= best_cost_) return;
    if (depth == order_.size()) {
      best_cost_ = cost;
      best_ = map_ab_;
      return;
    }
    const std::size_t x = order_[depth];
    for (std::size_t y : used_b_) {
      if (map_ba_[y] != kUnset) continue;
      if (match_start_ && x == a_.start && y != b_.start) continue;
      map_ab_[x] = y;
      map_ba_[y] = x;
      descend(depth + 1, cost + cost_of(x, y));
      map_ab_[x] = kUnset;
      map_ba_[y] = kUnset;
      if (best_cost_ == 0) return;
    }
  }

  const SymbolicGrammar& a_;
  const SymbolicGrammar& b_;
  double tol_;
  bool match_start_;
  std::vector<RuleSet> rules_a_;
  std::vector<RuleSet> rules_b_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> used_b_;
  std::vector<std::size_t> map_ab_;
  std::vector<std::size_t> map_ba_;
  std::vector<std::size_t> best_;
  std::size_t best_cost_ = 0;
};

}  // namespace

Matrix rule_probabilities(const GrammarModel& model, std::optional<double> temperature) {
  return rule_probabilities(model.rules, temperature.value_or(model.temperature));
}

SymbolicGrammar extract(const GrammarModel& model, const ExtractOptions& options) {
  model.validate();
  if (!(options.threshold >= 0.0) || options.threshold >= 1.0) {
    throw ParameterError("prune threshold must lie in [0, 1), got " +
                         std::to_string(options.threshold));
  }
  const Dimensions& d = model.dims;
  SymbolicGrammar g;
  for (std::size_t i = 0; i < d.nonterminals; ++i) g.nonterminals.push_back(nonterminal_name(i));
  g.terminals = !options.terminal_names.empty() ? options.terminal_names
                : !model.terminal_names.empty() ? model.terminal_names
                                                : default_terminal_names(d.terminals);
  if (g.terminals.size() != d.terminals) {
    throw DimensionError("got " + std::to_string(g.terminals.size()) +
                         " terminal names for a model with T=" + std::to_string(d.terminals));
  }
  g.prune_threshold = options.threshold;

  const StepEvaluator eval(model);
  g.start = argmax(eval.initial(options.context));

  const Matrix probs = rule_probabilities(model, options.temperature);
  std::vector<double> emission(d.terminals), moves(d.nonterminals);
  // Indices with value >= threshold, or the argmax alone when none qualify.
  auto kept_indices = [&](std::span<const double> values) {
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (values[k] >= options.threshold) kept.push_back(k);
    }
    if (kept.empty()) kept.push_back(argmax(values));
    return kept;
  };
  for (std::size_t i = 0; i < d.nonterminals; ++i) {
    const auto row = probs.row(i);
    const std::size_t first = g.rules.size();
    double mass = 0.0;
    for (std::size_t r : kept_indices(row)) {
      const std::size_t slot = i * d.rules + r;
      if (model.activation == TerminalActivation::logistic) {
        kernels::sigmoid(model.emit.row(slot), emission);
      } else {
        kernels::softmax(model.emit.row(slot), {}, 1.0, emission);
      }
      const std::size_t terminal = argmax(emission);
      kernels::softmax(model.next.row(slot), {}, 1.0, moves);
      const std::vector<std::size_t> targets = kept_indices(moves);
      double move_mass = 0.0;
      for (std::size_t j : targets) move_mass += moves[j];
      for (std::size_t j : targets) {
        const double p = row[r] * moves[j] / move_mass;
        mass += p;
        bool merged = false;
        for (std::size_t k = first; k < g.rules.size(); ++k) {
          if (g.rules[k].terminal == terminal && g.rules[k].rhs == j) {
            g.rules[k].probability += p;
            merged = true;
            break;
          }
        }
        if (!merged) g.rules.push_back(Production{i, terminal, j, p});
      }
    }
    for (std::size_t k = first; k < g.rules.size(); ++k) g.rules[k].probability /= mass;
  }
  g.mark_reachable();
  return g;
}

namespace {

// Rules of used non-terminals ordered by (lhs, terminal, rhs), so renderings
// do not depend on rule order.
std::vector<const Production*> rendered_rules(const SymbolicGrammar& g) {
  std::vector<const Production*> out;
  for (const Production& r : g.rules) {
    if (g.is_used(r.lhs)) out.push_back(&r);
  }
  std::stable_sort(out.begin(), out.end(), [](const Production* a, const Production* b) {
    return std::tie(a->lhs, a->terminal, a->rhs) < std::tie(b->lhs, b->terminal, b->rhs);
  });
  return out;
}

}  // namespace

std::string render_dot(const SymbolicGrammar& g) {
  std::ostringstream out;
  out << "digraph grammar {\n";
  out << "  rankdir=LR;\n";
  for (std::size_t i = 0; i < g.nonterminals.size(); ++i) {
    if (i != g.start && !g.is_used(i)) continue;
    out << "  " << quoted(g.nonterminals[i])
        << (i == g.start ? " [shape=doublecircle];\n" : " [shape=circle];\n");
  }
  for (const Production* r : rendered_rules(g)) {
    out << "  " << quoted(g.nonterminals[r->lhs]) << " -> " << quoted(g.nonterminals[r->rhs])
        << " [label="
        << quoted(g.terminals[r->terminal] + " (" + format_probability(r->probability) + ")")
        << "];\n";
  }
  out << "}\n";
  return out.str();
}

std::string render_text(const SymbolicGrammar& g) {
  std::string out;
  for (const Production* r : rendered_rules(g)) out += g.describe(*r) + "\n";
  return out;
}

Equivalence grammar_equivalence(const SymbolicGrammar& a, const SymbolicGrammar& b,
                                double prob_tol, bool match_start) {
  a.validate(std::numeric_limits<double>::infinity());
  b.validate(std::numeric_limits<double>::infinity());
  Equivalence result;
  result.mapping.assign(a.nonterminals.size(), std::nullopt);

  BijectionSearch search(a, b, prob_tol, match_start);
  if (search.used_a() != search.used_b()) {
    result.witness = "a uses " + std::to_string(search.used_a()) + " non-terminals, b uses " +
                     std::to_string(search.used_b());
    return result;
  }
  if (match_start && (!a.is_used(a.start) || !b.is_used(b.start))) {
    result.witness = "start symbol is marked unused";
    return result;
  }
  const std::size_t cost = search.run();
  const auto& best = search.best();
  for (std::size_t i = 0; i < best.size(); ++i) {
    if (best[i] != BijectionSearch::kUnset) result.mapping[i] = best[i];
  }
  result.equivalent = cost == 0;
  if (result.equivalent) {
    std::string text;
    for (std::size_t i = 0; i < best.size(); ++i) {
      if (best[i] == BijectionSearch::kUnset) continue;
      if (!text.empty()) text += ", ";
      text += a.nonterminals[i] + "=" + b.nonterminals[best[i]];
    }
    result.witness = text;
  } else if (best.empty()) {
    result.witness = "no bijection maps the start symbols";
  } else {
    result.witness = search.first_mismatch(best);
  }
  return result;
}

GrammarModel model_from_grammar(const SymbolicGrammar& grammar,
                                std::optional<std::size_t> rules_per_nonterminal,
                                double temperature) {
  grammar.validate();
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  const std::size_t n = grammar.nonterminals.size();
  std::size_t widest = 1;
  for (std::size_t i = 0; i < n; ++i) widest = std::max(widest, grammar.rules_of(i).size());
  const std::size_t r = rules_per_nonterminal.value_or(widest);
  if (r < widest) {
    throw ParameterError("grammar has a non-terminal with " + std::to_string(widest) +
                         " rules, more than R=" + std::to_string(r));
  }

  GrammarModel m(Dimensions{n, r, grammar.terminals.size(), 0});
  m.temperature = temperature;
  m.terminal_names = grammar.terminals;
  for (double& v : m.rules.values()) v = -kExactLogit * temperature;
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = grammar.rules_of(i);
    for (std::size_t k = 0; k < own.size(); ++k) {
      const Production& p = grammar.rules[own[k]];
      const std::size_t slot = i * r + k;
      if (p.probability > 0.0) {
        m.rules(i, k) = temperature * (std::log(p.probability) + kExactLogit);
      }
      for (std::size_t c = 0; c < n; ++c) m.next(slot, c) = c == p.rhs ? kExactLogit : -kExactLogit;
      for (std::size_t c = 0; c < grammar.terminals.size(); ++c) {
        m.emit(slot, c) = c == p.terminal ? kExactLogit : -kExactLogit;
      }
    }
  }
  for (std::size_t c = 0; c < n; ++c) {
    m.start(0, c) = c == grammar.start ? kExactLogit : -kExactLogit;
  }
  return m;
}

}  // namespace gramdiff
