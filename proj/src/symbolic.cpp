#include "gramdiff/symbolic.hpp"

#include <cmath>
#include <cstdio>

#include "gramdiff/errors.hpp"

namespace gramdiff {

std::vector<std::size_t> SymbolicGrammar::rules_of(std::size_t lhs) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (rules[i].lhs == lhs) out.push_back(i);
  }
  return out;
}

void SymbolicGrammar::validate(double tolerance) const {
  const std::size_t n = nonterminals.size();
  if (start >= n) throw InputError("start symbol index out of range");
  if (!used.empty() && used.size() != n) throw InputError("used mask has wrong length");
  std::vector<double> mass(n, 0.0);
  std::vector<bool> has_rule(n, false);
  for (const Production& r : rules) {
    if (r.lhs >= n || r.rhs >= n || r.terminal >= terminals.size()) {
      throw InputError("rule index out of range");
    }
    if (!(r.probability >= 0.0) || r.probability > 1.0 + tolerance) {
      throw InputError("rule probability outside [0, 1]: " + describe(r));
    }
    mass[r.lhs] += r.probability;
    has_rule[r.lhs] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (has_rule[i] && std::abs(mass[i] - 1.0) > tolerance) {
      throw InputError("probabilities of " + nonterminals[i] + " sum to " +
                       std::to_string(mass[i]));
    }
  }
}

void SymbolicGrammar::mark_reachable() {
  used.assign(nonterminals.size(), false);
  if (nonterminals.empty()) return;
  std::vector<std::size_t> stack{start};
  used[start] = true;
  while (!stack.empty()) {
    const std::size_t cur = stack.back();
    stack.pop_back();
    for (const Production& r : rules) {
      if (r.lhs == cur && !used[r.rhs]) {
        used[r.rhs] = true;
        stack.push_back(r.rhs);
      }
    }
  }
}

std::string SymbolicGrammar::describe(const Production& rule) const {
  char prob[32];
  std::snprintf(prob, sizeof prob, "%.2f", rule.probability);
  return nonterminals.at(rule.lhs) + " -> " + terminals.at(rule.terminal) + " " +
         nonterminals.at(rule.rhs) + " (" + prob + ")";
}

nlohmann::json to_json(const SymbolicGrammar& g) {
  nlohmann::json doc;
  doc["nonterminals"] = g.nonterminals;
  doc["terminals"] = g.terminals;
  doc["start"] = g.nonterminals.at(g.start);
  doc["prune_threshold"] = g.prune_threshold;
  nlohmann::json unused = nlohmann::json::array();
  for (std::size_t i = 0; i < g.nonterminals.size(); ++i) {
    if (!g.is_used(i)) unused.push_back(g.nonterminals[i]);
  }
  doc["unused"] = unused;
  nlohmann::json rules = nlohmann::json::array();
  for (const Production& r : g.rules) {
    rules.push_back({{"lhs", g.nonterminals[r.lhs]},
                     {"terminal", g.terminals[r.terminal]},
                     {"rhs", g.nonterminals[r.rhs]},
                     {"probability", r.probability}});
  }
  doc["rules"] = rules;
  return doc;
}

namespace {

std::size_t index_of(const std::vector<std::string>& names, const std::string& name,
                     const char* what) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw InputError(std::string("unknown ") + what + " '" + name + "'");
}

}  // namespace

SymbolicGrammar symbolic_grammar_from_json(const nlohmann::json& doc) {
  try {
    SymbolicGrammar g;
    g.nonterminals = doc.at("nonterminals").get<std::vector<std::string>>();
    g.terminals = doc.at("terminals").get<std::vector<std::string>>();
    g.start = index_of(g.nonterminals, doc.at("start").get<std::string>(), "non-terminal");
    g.prune_threshold = doc.value("prune_threshold", 0.0);
    for (const auto& r : doc.at("rules")) {
      g.rules.push_back({index_of(g.nonterminals, r.at("lhs").get<std::string>(), "non-terminal"),
                         index_of(g.terminals, r.at("terminal").get<std::string>(), "terminal"),
                         index_of(g.nonterminals, r.at("rhs").get<std::string>(), "non-terminal"),
                         r.at("probability").get<double>()});
    }
    g.used.assign(g.nonterminals.size(), true);
    for (const auto& name : doc.value("unused", std::vector<std::string>{})) {
      g.used[index_of(g.nonterminals, name, "non-terminal")] = false;
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed grammar document: ") + e.what());
  }
}

std::string nonterminal_name(std::size_t index) {
  if (index < 26) return std::string(1, static_cast<char>('A' + index));
  return "N" + std::to_string(index);
}

std::vector<std::string> default_terminal_names(std::size_t count) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(i < 26 ? std::string(1, static_cast<char>('a' + i)) : "t" + std::to_string(i));
  }
  return out;
}

}  // namespace gramdiff
