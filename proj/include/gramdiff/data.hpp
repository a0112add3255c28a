#pragma once

// Synthetic sequence data: ground-truth grammar sampling, a noise model that
// stands in for detector class probabilities, JSON Lines dataset IO, and the
// exact-posterior forecasting oracle.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gramdiff/matrix.hpp"
#include "gramdiff/random.hpp"
#include "gramdiff/symbolic.hpp"

namespace gramdiff {

// Grammar text: one rule per line, "A -> a B [p]". Probabilities may be
// decimals or rationals ("1/3"); a non-terminal lists all or none of them,
// and "none" means uniform. Optional directives:
//   %terminals a b c    fix the terminal order (default: first appearance)
//   %start A            start symbol (default: first left-hand side)
// '#' starts a comment.
SymbolicGrammar parse_grammar_text(std::string_view text);
SymbolicGrammar load_grammar_file(const std::filesystem::path& path);

// A -> aB; B -> bC (0.5) | bA (0.5); C -> cA
SymbolicGrammar toy_grammar();
// A -> aB; B -> bC; C -> cA
SymbolicGrammar cycle_grammar();
// "toy" or "cycle"; throws InputError otherwise.
SymbolicGrammar builtin_grammar(std::string_view name);

struct SampledString {
  std::vector<std::size_t> terminals;  // L entries
  std::vector<std::size_t> states;     // L + 1 entries, states[0] is the start
};

SampledString sample_string(const SymbolicGrammar& grammar, std::size_t length, Rng& rng);

enum class NoiseKind { none, logistic };

NoiseKind parse_noise_kind(std::string_view name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double strength = 0.0;
};

// Clean logit margin of the logistic noise model: the true class sits at
// +kNoiseMargin, the others at -kNoiseMargin, before jitter.
inline constexpr double kNoiseMargin = 1.0;

// Per-step target vectors. none: one-hot. logistic: logits at +/-kNoiseMargin
// plus Gaussian jitter with sigma = strength / 2, through the logistic
// function. Strength 0 yields exact one-hot vectors.
Matrix to_targets(std::span<const std::size_t> labels, std::size_t terminals,
                  const NoiseSpec& noise, Rng& rng);

struct SequenceRecord {
  std::string id;
  Matrix targets;                    // L x T, values in [0, 1]
  std::vector<std::size_t> labels;   // clean labels; empty when absent
  std::optional<std::vector<double>> context;

  bool operator==(const SequenceRecord&) const = default;
};

// JSON Lines, one object per record:
//   {"id":..., "targets":[[...],...], "labels":[...]?, "context":[...]?}
void write_dataset(std::span<const SequenceRecord> records, std::ostream& out);
void write_dataset(std::span<const SequenceRecord> records, const std::filesystem::path& path);
std::vector<SequenceRecord> read_dataset(std::istream& in);
std::vector<SequenceRecord> read_dataset(const std::filesystem::path& path);

// Record i is drawn from an rng seeded with mix_seed(seed, i).
std::vector<SequenceRecord> generate_dataset(const SymbolicGrammar& grammar, std::size_t count,
                                             std::size_t length, const NoiseSpec& noise,
                                             std::uint64_t seed);
std::vector<SequenceRecord> builtin_toy_dataset(std::size_t count, std::size_t length,
                                                std::uint64_t seed);

// Observed prefix and scored horizon for one record, both rounded to the
// nearest step and at least 1.
struct ForecastWindow {
  std::size_t observe = 0;
  std::size_t horizon = 0;
};
ForecastWindow forecast_window(std::size_t length, double observe_fraction,
                               double predict_fraction);

struct ForecastScore {
  double accuracy = 0.0;       // mean over scored records of per-step accuracy
  std::size_t scored = 0;
  std::size_t skipped = 0;     // records too short for the window
};

// Exact distribution over the current non-terminal after emitting `prefix`.
std::vector<double> state_posterior(const SymbolicGrammar& grammar,
                                    std::span<const std::size_t> prefix);
// H x T marginal distributions of the next H terminals from a state belief.
Matrix terminal_marginals(const SymbolicGrammar& grammar, std::vector<double> belief,
                          std::size_t horizon);

// Bayes-optimal forecaster: predict the most probable terminal at every
// future step given the clean prefix. Records must carry labels.
ForecastScore bayes_forecast_accuracy(const SymbolicGrammar& grammar,
                                      std::span<const SequenceRecord> records,
                                      double observe_fraction, double predict_fraction);

}  // namespace gramdiff
