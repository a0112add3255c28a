#pragma once

// Using a trained model on observed sequences: grammar-constrained decoding
// of noisy per-step class probabilities, forecasting of future terminals, and
// the evaluation metrics for both.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gramdiff/data.hpp"
#include "gramdiff/grammar.hpp"
#include "gramdiff/matrix.hpp"

namespace gramdiff {

// Discrete view of a model. Slot s = i * R + r is rule r of non-terminal i.
struct RuleTable {
  Dimensions dims;
  Matrix probability;              // N x R, softmax(Wc / tau) per row
  Matrix transition;               // (R*N) x N, softmax of each H1 row
  std::vector<std::size_t> next;   // per slot: argmax of the H1 row
  Matrix emission;                 // (R*N) x T: squash of the H2 row
  std::vector<double> initial;     // v0 over non-terminals
};

RuleTable rule_table(const GrammarModel& model, std::optional<double> temperature = {},
                     const std::vector<double>* context = nullptr);

struct DecodeOptions {
  // Hypotheses kept per step. Hypotheses that reach the same non-terminal are
  // merged, so beam >= N is exact Viterbi; 1 is greedy.
  std::size_t beam = 8;
  // Add log p(rule | non-terminal) to the match score.
  bool rule_prior = true;
  std::optional<double> temperature;
  const std::vector<double>* context = nullptr;
};

struct DecodeResult {
  Matrix fused;                        // L x T, grammar * observation
  Matrix grammar;                      // L x T, emission of the chosen rule
  std::vector<std::size_t> rules;      // chosen slot per step
  std::vector<std::size_t> states;     // L + 1 non-terminals, states[0] the start
  double score = 0.0;                  // log score of the chosen derivation
};

// Finds the derivation maximizing
//   sum_t log(<emission(rule_t), obs_t> + eps)
//         [+ log p(rule_t | state_t) + log P(state_t+1 | rule_t)]
// starting from log v0, within the beam. The bracketed terms are the rule
// prior; without it the next state is the argmax of the H1 row.
DecodeResult constrained_decode(const GrammarModel& model, const Matrix& observations,
                                const DecodeOptions& options = {});
DecodeResult constrained_decode(const RuleTable& table, const Matrix& observations,
                                const DecodeOptions& options = {});

enum class ForecastMode {
  // Carry a distribution over non-terminals: the exact filter over the
  // prefix, then rule and transition probabilities pushed forward step by
  // step.
  belief,
  // Decode the prefix, then follow the most probable rule from the final
  // non-terminal.
  single_path,
};

ForecastMode parse_forecast_mode(const std::string& name);
std::string to_string(ForecastMode mode);

struct ForecastOptions {
  ForecastMode mode = ForecastMode::belief;
  DecodeOptions decode;
};

struct ForecastResult {
  Matrix predicted;                  // H x T
  std::vector<std::size_t> rules;    // most probable slot per future step
  std::vector<std::size_t> states;   // H + 1 non-terminals on the traced path
};

// The prefix may be empty, in which case forecasting starts from v0.
ForecastResult forecast(const GrammarModel& model, const Matrix& prefix, std::size_t horizon,
                        const ForecastOptions& options = {});
ForecastResult forecast(const RuleTable& table, const Matrix& prefix, std::size_t horizon,
                        const ForecastOptions& options = {});

// Mean per-record accuracy of argmax forecasts against clean labels (argmax
// of the targets when a record has none). Records shorter than the window
// are skipped and counted.
ForecastScore forecast_accuracy(const GrammarModel& model,
                                std::span<const SequenceRecord> records,
                                double observe_fraction, double predict_fraction,
                                const ForecastOptions& options = {});
ForecastScore forecast_accuracy_steps(const GrammarModel& model,
                                      std::span<const SequenceRecord> records,
                                      std::size_t observe, std::size_t horizon,
                                      const ForecastOptions& options = {});

// Average precision of one class: frames ranked by score, precision summed
// at each distinct score threshold weighted by the recall gained there. A
// group of tied scores counts as one threshold.
double average_precision(std::span<const double> scores, std::span<const bool> positive);

struct MapResult {
  std::vector<std::optional<double>> per_class;  // empty for classes without positives
  double mean = 0.0;
};

// Per-frame mAP over L x T matrices; a target entry >= 0.5 is a positive.
// Throws UndefinedMetricError when no class has a positive.
MapResult per_frame_map(const Matrix& predictions, const Matrix& targets);
// Frames of all sequences pooled per class.
MapResult per_frame_map(std::span<const Matrix> predictions, std::span<const Matrix> targets);

// "class,ap" rows then "mAP,<mean>"; classes without positives print "nan".
void write_map_csv(const MapResult& result, std::span<const std::string> class_names,
                   std::ostream& out);

struct ForecastRow {
  double observe_fraction = 0.0;
  double predict_fraction = 0.0;
  ForecastScore score;
};

// "observe,predict,accuracy,scored,skipped"
void write_forecast_csv(std::span<const ForecastRow> rows, std::ostream& out);

}  // namespace gramdiff
