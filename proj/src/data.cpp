#include "gramdiff/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "gramdiff/errors.hpp"

namespace gramdiff {

namespace {

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::size_t intern(std::vector<std::string>& names, const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  names.push_back(name);
  return names.size() - 1;
}

double parse_probability(const std::string& tok, std::size_t line_no) {
  const auto fail = [&] {
    return InputError("grammar line " + std::to_string(line_no) + ": bad probability '" + tok + "'");
  };
  try {
    std::size_t used = 0;
    const auto slash = tok.find('/');
    if (slash == std::string::npos) {
      const double p = std::stod(tok, &used);
      if (used != tok.size()) throw fail();
      return p;
    }
    const std::string num = tok.substr(0, slash);
    const std::string den = tok.substr(slash + 1);
    const double a = std::stod(num, &used);
    if (used != num.size()) throw fail();
    const double b = std::stod(den, &used);
    if (used != den.size() || b == 0.0) throw fail();
    return a / b;
  } catch (const std::logic_error&) {
    throw fail();
  }
}

}  // namespace

SymbolicGrammar parse_grammar_text(std::string_view text) {
  SymbolicGrammar g;
  std::vector<std::optional<double>> given;
  std::optional<std::string> start_name;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "%terminals") {
      for (std::size_t i = 1; i < tok.size(); ++i) intern(g.terminals, tok[i]);
      continue;
    }
    if (tok[0] == "%start") {
      if (tok.size() != 2) {
        throw InputError("grammar line " + std::to_string(line_no) + ": %start takes one symbol");
      }
      start_name = tok[1];
      continue;
    }
    if (tok.size() < 4 || tok.size() > 5 || tok[1] != "->") {
      throw InputError("grammar line " + std::to_string(line_no) +
                       ": expected 'A -> a B [probability]'");
    }
    Production rule;
    rule.lhs = intern(g.nonterminals, tok[0]);
    rule.terminal = intern(g.terminals, tok[2]);
    rule.rhs = intern(g.nonterminals, tok[3]);
    g.rules.push_back(rule);
    given.push_back(tok.size() == 5 ? std::optional(parse_probability(tok[4], line_no))
                                    : std::nullopt);
  }
  if (g.rules.empty()) throw InputError("grammar has no rules");

  for (std::size_t lhs = 0; lhs < g.nonterminals.size(); ++lhs) {
    const auto idx = g.rules_of(lhs);
    if (idx.empty()) continue;
    const auto with_p = std::count_if(idx.begin(), idx.end(),
                                      [&](std::size_t i) { return given[i].has_value(); });
    if (with_p == 0) {
      for (std::size_t i : idx) g.rules[i].probability = 1.0 / static_cast<double>(idx.size());
      continue;
    }
    if (static_cast<std::size_t>(with_p) != idx.size()) {
      throw InputError("non-terminal " + g.nonterminals[lhs] +
                       " mixes rules with and without probabilities");
    }
    double total = 0.0;
    for (std::size_t i : idx) {
      if (*given[i] < 0.0) throw InputError("negative probability for " + g.nonterminals[lhs]);
      total += *given[i];
    }
    if (!(total > 0.0)) throw InputError("probabilities of " + g.nonterminals[lhs] + " sum to 0");
    for (std::size_t i : idx) g.rules[i].probability = *given[i] / total;
  }
  if (start_name) {
    const auto it = std::find(g.nonterminals.begin(), g.nonterminals.end(), *start_name);
    if (it == g.nonterminals.end()) throw InputError("unknown start symbol " + *start_name);
    g.start = static_cast<std::size_t>(it - g.nonterminals.begin());
  }
  g.mark_reachable();
  g.validate();
  return g;
}

SymbolicGrammar load_grammar_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open grammar file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_grammar_text(buf.str());
}

SymbolicGrammar toy_grammar() {
  return parse_grammar_text(
      "%terminals a b c\n"
      "A -> a B\n"
      "B -> b C 0.5\n"
      "B -> b A 0.5\n"
      "C -> c A\n");
}

SymbolicGrammar cycle_grammar() {
  return parse_grammar_text(
      "%terminals a b c\n"
      "A -> a B\n"
      "B -> b C\n"
      "C -> c A\n");
}

SymbolicGrammar builtin_grammar(std::string_view name) {
  if (name == "toy") return toy_grammar();
  if (name == "cycle") return cycle_grammar();
  throw InputError("unknown builtin grammar '" + std::string(name) + "' (expected toy|cycle)");
}

SampledString sample_string(const SymbolicGrammar& grammar, std::size_t length, Rng& rng) {
  if (length == 0) throw ParameterError("sample length must be at least 1");
  SampledString out;
  std::size_t state = grammar.start;
  out.states.push_back(state);
  for (std::size_t t = 0; t < length; ++t) {
    const auto idx = grammar.rules_of(state);
    if (idx.empty()) {
      throw GenerationError("non-terminal " + grammar.nonterminals[state] + " has no rules");
    }
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t chosen = idx.back();
    for (std::size_t i : idx) {
      acc += grammar.rules[i].probability;
      if (u < acc) {
        chosen = i;
        break;
      }
    }
    out.terminals.push_back(grammar.rules[chosen].terminal);
    state = grammar.rules[chosen].rhs;
    out.states.push_back(state);
  }
  return out;
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "none") return NoiseKind::none;
  if (name == "logistic") return NoiseKind::logistic;
  throw InputError("unknown noise kind '" + std::string(name) + "' (expected none|logistic)");
}

Matrix to_targets(std::span<const std::size_t> labels, std::size_t terminals,
                  const NoiseSpec& noise, Rng& rng) {
  Matrix out(labels.size(), terminals);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] >= terminals) {
      throw InputError("label " + std::to_string(labels[t]) + " out of range for T=" +
                       std::to_string(terminals));
    }
    if (noise.kind == NoiseKind::none || noise.strength == 0.0) {
      out(t, labels[t]) = 1.0;
      continue;
    }
    const double sigma = noise.strength / 2.0;
    for (std::size_t c = 0; c < terminals; ++c) {
      const double logit = (c == labels[t] ? kNoiseMargin : -kNoiseMargin) + rng.normal(0.0, sigma);
      out(t, c) = std::clamp(1.0 / (1.0 + std::exp(-logit)), 0.0, 1.0);
    }
  }
  return out;
}

void write_dataset(std::span<const SequenceRecord> records, std::ostream& out) {
  for (const SequenceRecord& r : records) {
    nlohmann::json doc;
    doc["id"] = r.id;
    doc["targets"] = r.targets.to_rows();
    if (!r.labels.empty()) doc["labels"] = r.labels;
    if (r.context) doc["context"] = *r.context;
    out << doc.dump() << '\n';
  }
}

void write_dataset(std::span<const SequenceRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write dataset " + path.string());
  write_dataset(records, out);
}

std::vector<SequenceRecord> read_dataset(std::istream& in) {
  std::vector<SequenceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fail = [&](const std::string& why) {
      return InputError("dataset line " + std::to_string(line_no) + ": " + why);
    };
    try {
      const auto doc = nlohmann::json::parse(line);
      SequenceRecord r;
      r.id = doc.at("id").is_string() ? doc["id"].get<std::string>() : doc["id"].dump();
      r.targets = Matrix::from_rows(doc.at("targets").get<std::vector<std::vector<double>>>());
      if (r.targets.rows() == 0 || r.targets.cols() == 0) throw fail("record has no steps");
      for (double v : r.targets.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw fail("target value outside [0, 1]");
      }
      if (doc.contains("labels")) {
        r.labels = doc["labels"].get<std::vector<std::size_t>>();
        if (r.labels.size() != r.targets.rows()) throw fail("labels length differs from targets");
      }
      if (doc.contains("context")) r.context = doc["context"].get<std::vector<double>>();
      if (!out.empty() && out.front().targets.cols() != r.targets.cols()) {
        throw fail("terminal dimension differs from earlier records");
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    } catch (const DimensionError& e) {
      throw fail(e.what());
    }
  }
  return out;
}

std::vector<SequenceRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path.string());
  return read_dataset(in);
}

std::vector<SequenceRecord> generate_dataset(const SymbolicGrammar& grammar, std::size_t count,
                                             std::size_t length, const NoiseSpec& noise,
                                             std::uint64_t seed) {
  std::vector<SequenceRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, i));
    const SampledString s = sample_string(grammar, length, rng);
    char id[32];
    std::snprintf(id, sizeof id, "seq-%05zu", i);
    out.push_back({id, to_targets(s.terminals, grammar.terminals.size(), noise, rng), s.terminals,
                   std::nullopt});
  }
  return out;
}

std::vector<SequenceRecord> builtin_toy_dataset(std::size_t count, std::size_t length,
                                                std::uint64_t seed) {
  return generate_dataset(toy_grammar(), count, length, NoiseSpec{}, seed);
}

ForecastWindow forecast_window(std::size_t length, double observe_fraction,
                               double predict_fraction) {
  if (!(observe_fraction > 0.0 && observe_fraction < 1.0) ||
      !(predict_fraction > 0.0 && predict_fraction < 1.0)) {
    throw ParameterError("forecast fractions must lie in (0, 1)");
  }
  const auto steps = [&](double f) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(f * static_cast<double>(length))));
  };
  return {steps(observe_fraction), steps(predict_fraction)};
}

std::vector<double> state_posterior(const SymbolicGrammar& grammar,
                                    std::span<const std::size_t> prefix) {
  const std::size_t n = grammar.nonterminals.size();
  std::vector<double> belief(n, 0.0);
  belief[grammar.start] = 1.0;
  for (std::size_t label : prefix) {
    std::vector<double> next(n, 0.0);
    for (const Production& r : grammar.rules) {
      if (r.terminal == label) next[r.rhs] += belief[r.lhs] * r.probability;
    }
    double total = 0.0;
    for (double p : next) total += p;
    if (!(total > 0.0)) throw InputError("prefix has zero probability under the grammar");
    for (double& p : next) p /= total;
    belief = std::move(next);
  }
  return belief;
}

Matrix terminal_marginals(const SymbolicGrammar& grammar, std::vector<double> belief,
                          std::size_t horizon) {
  const std::size_t n = grammar.nonterminals.size();
  Matrix out(horizon, grammar.terminals.size());
  for (std::size_t h = 0; h < horizon; ++h) {
    std::vector<double> next(n, 0.0);
    for (const Production& r : grammar.rules) {
      const double mass = belief[r.lhs] * r.probability;
      out(h, r.terminal) += mass;
      next[r.rhs] += mass;
    }
    belief = std::move(next);
  }
  return out;
}

ForecastScore bayes_forecast_accuracy(const SymbolicGrammar& grammar,
                                      std::span<const SequenceRecord> records,
                                      double observe_fraction, double predict_fraction) {
  ForecastScore score;
  double total = 0.0;
  for (const SequenceRecord& r : records) {
    if (r.labels.empty()) throw InputError("record '" + r.id + "' has no clean labels");
    const ForecastWindow w = forecast_window(r.labels.size(), observe_fraction, predict_fraction);
    if (w.observe + w.horizon > r.labels.size()) {
      ++score.skipped;
      continue;
    }
    const std::span<const std::size_t> prefix(r.labels.data(), w.observe);
    const Matrix marginals = terminal_marginals(grammar, state_posterior(grammar, prefix), w.horizon);
    std::size_t hits = 0;
    for (std::size_t h = 0; h < w.horizon; ++h) {
      if (argmax(marginals.row(h)) == r.labels[w.observe + h]) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(w.horizon);
    ++score.scored;
  }
  if (score.scored > 0) score.accuracy = total / static_cast<double>(score.scored);
  return score;
}

}  // namespace gramdiff
