#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"

#include "gramdiff/data.hpp"
#include "gramdiff/errors.hpp"

using namespace gramdiff;

namespace {

// Pearson statistic's upper tail under the chi-squared law.
double chi_squared_p_value(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    stat += (observed[k] - expected[k]) * (observed[k] - expected[k]) / expected[k];
  }
  const boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// P(argmax is the true class) for T classes under the noise model: the true
// logit is margin + sigma z, every other one -margin + sigma z_c.
double noisy_argmax_accuracy(double sigma, std::size_t terminals) {
  const auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
  const auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  constexpr int kSteps = 4000;
  const double lo = -10.0, hi = 10.0, h = (hi - lo) / kSteps;
  double sum = 0.0;
  for (int i = 0; i <= kSteps; ++i) {
    const double z = lo + i * h;
    const double f = phi(z) * std::pow(cdf((2.0 * kNoiseMargin + sigma * z) / sigma),
                                       static_cast<double>(terminals - 1));
    sum += f * (i == 0 || i == kSteps ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0));
  }
  return sum * h / 3.0;
}

// Brute force: enumerate every derivation of the prefix and sum weights per
// final state.
void enumerate(const SymbolicGrammar& g, std::span<const std::size_t> prefix, std::size_t state,
               double weight, std::vector<double>& mass) {
  if (prefix.empty()) {
    mass[state] += weight;
    return;
  }
  for (const auto& r : g.rules) {
    if (r.lhs == state && r.terminal == prefix.front()) {
      enumerate(g, prefix.subspan(1), r.rhs, weight * r.probability, mass);
    }
  }
}

}  // namespace

TEST_CASE("grammar text parsing") {
  const SymbolicGrammar g = parse_grammar_text(
      "# comment\n%terminals x y\n%start Q\nP -> x Q 1/3\nP -> y P 2/3\nQ -> y P\n");
  CHECK(g.nonterminals == std::vector<std::string>{"P", "Q"});
  CHECK(g.terminals == std::vector<std::string>{"x", "y"});
  CHECK(g.start == 1);
  REQUIRE(g.rules.size() == 3);
  CHECK(g.rules[0].probability == doctest::Approx(1.0 / 3.0));
  CHECK(g.rules[2].probability == 1.0);

  const SymbolicGrammar uniform = parse_grammar_text("A -> a A\nA -> b A\nA -> c A\n");
  for (const auto& r : uniform.rules) CHECK(r.probability == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(parse_grammar_text(""), InputError);
  CHECK_THROWS_AS(parse_grammar_text("A -> a B 0.5\nA -> b A\n"), InputError);
  CHECK_THROWS_AS(parse_grammar_text("A -> a A 1/0\n"), InputError);
  CHECK_THROWS_AS(parse_grammar_text("%start Z\nA -> a A\n"), InputError);
  CHECK_THROWS_AS(builtin_grammar("nope"), InputError);
}

TEST_CASE("toy strings start with a, b") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto s = sample_string(toy_grammar(), 4, rng);
    CHECK(s.terminals[0] == 0);
    CHECK(s.terminals[1] == 1);
    CHECK(s.states.size() == 5);
    CHECK(s.states[0] == 0);
  }
}

TEST_CASE("toy strings only contain allowed bigrams") {
  const std::set<std::pair<std::size_t, std::size_t>> allowed{{0, 1}, {1, 2}, {1, 0}, {2, 0}};
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const auto s = sample_string(toy_grammar(), 12, rng);
    for (std::size_t t = 1; t < s.terminals.size(); ++t) {
      CHECK(allowed.contains({s.terminals[t - 1], s.terminals[t]}));
    }
  }
}

TEST_CASE("the symbol after b is c half the time") {
  Rng rng(3);
  std::size_t after_b = 0, c_after_b = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto s = sample_string(toy_grammar(), 12, rng);
    for (std::size_t t = 1; t < s.terminals.size(); ++t) {
      if (s.terminals[t - 1] != 1) continue;
      ++after_b;
      c_after_b += s.terminals[t] == 2 ? 1 : 0;
    }
  }
  CHECK(std::abs(static_cast<double>(c_after_b) / static_cast<double>(after_b) - 0.5) <= 0.02);
}

TEST_CASE("rule choices pass a chi-squared goodness-of-fit test") {
  const SymbolicGrammar g = parse_grammar_text(
      "%terminals a b c\nA -> a A 0.2\nA -> b A 0.3\nA -> c A 0.5\n");
  Rng rng(4);
  std::vector<double> observed(3, 0.0);
  const auto s = sample_string(g, 20000, rng);
  for (std::size_t t : s.terminals) observed[t] += 1.0;
  const std::vector<double> expected{4000.0, 6000.0, 10000.0};
  CHECK(chi_squared_p_value(observed, expected) > 1e-3);

  // A wrong hypothesis must be rejected, or the test has no power.
  const std::vector<double> wrong{5000.0, 5000.0, 10000.0};
  CHECK(chi_squared_p_value(observed, wrong) < 1e-6);
}

TEST_CASE("noise model") {
  Rng rng(5);
  const std::vector<std::size_t> labels{0, 2, 1};
  CHECK(to_targets(labels, 3, {NoiseKind::logistic, 0.0}, rng) ==
        Matrix::from_rows({{1, 0, 0}, {0, 0, 1}, {0, 1, 0}}));
  const Matrix noisy = to_targets(labels, 3, {NoiseKind::logistic, 1.0}, rng);
  for (double v : noisy.values()) CHECK((v > 0.0 && v < 1.0));
  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(to_targets(bad, 3, {}, rng), InputError);
  CHECK_THROWS_AS(parse_noise_kind("gaussian"), InputError);
}

TEST_CASE("noise calibration at strength 2.0 matches the analytic accuracy") {
  constexpr int kDraws = 10000;
  Rng rng(6);
  std::vector<std::size_t> labels(kDraws);
  for (int i = 0; i < kDraws; ++i) labels[i] = static_cast<std::size_t>(i % 3);
  const Matrix noisy = to_targets(labels, 3, {NoiseKind::logistic, 2.0}, rng);
  int correct = 0;
  for (int i = 0; i < kDraws; ++i) correct += argmax(noisy.row(i)) == labels[i] ? 1 : 0;
  const double accuracy = static_cast<double>(correct) / kDraws;
  CHECK(accuracy >= 0.8);
  CHECK(std::abs(accuracy - noisy_argmax_accuracy(1.0, 3)) <= 0.015);
}

TEST_CASE("dataset generation and JSONL round trip") {
  const auto records = generate_dataset(toy_grammar(), 5, 7, {NoiseKind::logistic, 1.0}, 9);
  REQUIRE(records.size() == 5);
  CHECK(records[0].id == "seq-00000");
  CHECK(records[4].id == "seq-00004");
  CHECK(records[0].targets.rows() == 7);
  CHECK(records[0].labels.size() == 7);
  CHECK(generate_dataset(toy_grammar(), 5, 7, {NoiseKind::logistic, 1.0}, 9) == records);
  CHECK(generate_dataset(toy_grammar(), 5, 7, {NoiseKind::logistic, 1.0}, 10) != records);

  std::vector<SequenceRecord> with_context = records;
  with_context[1].context = std::vector<double>{0.25, -1.5};
  std::stringstream io;
  write_dataset(with_context, io);
  CHECK(read_dataset(io) == with_context);
}

TEST_CASE("malformed datasets are rejected with the line number") {
  auto rejects = [](const std::string& text) {
    std::istringstream in(text);
    CHECK_THROWS_AS(read_dataset(in), InputError);
  };
  rejects("{\"id\":\"x\",\"targets\":[[0.5,1.5]]}\n");
  rejects("{\"id\":\"x\",\"targets\":[]}\n");
  rejects("{\"id\":\"x\",\"targets\":[[1,0]],\"labels\":[0,1]}\n");
  rejects("{\"id\":\"x\",\"targets\":[[1,0]]}\n{\"id\":\"y\",\"targets\":[[1,0,0]]}\n");
  rejects("not json\n");
  try {
    std::istringstream in("{\"id\":\"x\",\"targets\":[[1,0]]}\n{\"id\":\"y\"}\n");
    read_dataset(in);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("forecast windows round to the nearest step") {
  CHECK(forecast_window(12, 0.2, 0.5).observe == 2);
  CHECK(forecast_window(12, 0.3, 0.1).observe == 4);
  CHECK(forecast_window(12, 0.3, 0.1).horizon == 1);
  CHECK(forecast_window(12, 0.2, 0.5).horizon == 6);
  CHECK(forecast_window(3, 0.1, 0.1).observe == 1);
  CHECK_THROWS_AS(forecast_window(12, 0.0, 0.5), ParameterError);
  CHECK_THROWS_AS(forecast_window(12, 0.5, 1.0), ParameterError);
}

TEST_CASE("state posterior matches enumeration of derivations") {
  const SymbolicGrammar g = parse_grammar_text(
      "%terminals a b\nA -> a A 0.3\nA -> a B 0.4\nA -> b B 0.3\nB -> b A 0.6\nB -> a B 0.4\n");
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = sample_string(g, 1 + trial % 6, rng);
    std::vector<double> mass(2, 0.0);
    enumerate(g, s.terminals, g.start, 1.0, mass);
    const double total = mass[0] + mass[1];
    const auto post = state_posterior(g, s.terminals);
    CHECK(post[0] == doctest::Approx(mass[0] / total).epsilon(1e-12));
    CHECK(post[1] == doctest::Approx(mass[1] / total).epsilon(1e-12));
  }
  const std::vector<std::size_t> ab{0, 1};
  const auto toy_post = state_posterior(toy_grammar(), ab);
  CHECK(toy_post[0] == doctest::Approx(0.5));
  CHECK(toy_post[2] == doctest::Approx(0.5));
}

TEST_CASE("terminal marginals and the Bayes forecaster") {
  const Matrix m = terminal_marginals(toy_grammar(), {0.0, 1.0, 0.0}, 2);
  CHECK(m(0, 1) == doctest::Approx(1.0));
  CHECK(m(1, 0) == doctest::Approx(0.5));
  CHECK(m(1, 2) == doctest::Approx(0.5));

  const auto cycle = generate_dataset(cycle_grammar(), 50, 20, {}, 1);
  for (double p : {0.1, 0.3, 0.5}) {
    const ForecastScore s = bayes_forecast_accuracy(cycle_grammar(), cycle, 0.2, p);
    CHECK(s.accuracy == 1.0);
    CHECK(s.scored == 50);
  }
}
