#pragma once

// Differentiable stochastic regular grammar.
//
// A model with N non-terminals, R rules per non-terminal and T-dimensional
// terminals holds:
//   rules   (Wc)  N x R      compact rule logits; row i, softmaxed, holds
//                            the probabilities of the R rules of
//                            non-terminal i. Those rows are inflated to the
//                            block-diagonal N x (R*N) matrix W on use
//   next    (H1)  (R*N) x N  rule -> next non-terminal logits
//   emit    (H2)  (R*N) x T  rule -> terminal logits
//   start         1 x N      start non-terminal logits
//   psi           D x N      optional context -> start map
//
// One generation step from a soft non-terminal v:
//   k  = v W                         a distribution over all R*N rules
//   F  = softmax(log k / tau)        (deterministic)
//      | softmax((log k + g) / tau)  (sampled, g ~ Gumbel)
//   v' = softmax(F H1)
//   w  = squash(F H2)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gramdiff/diffcore.hpp"
#include "gramdiff/matrix.hpp"
#include "gramdiff/random.hpp"

namespace gramdiff {

struct Dimensions {
  std::size_t nonterminals = 0;  // N
  std::size_t rules = 0;         // R, rules per non-terminal
  std::size_t terminals = 0;     // T
  std::size_t context = 0;       // D, 0 when there is no psi map

  std::size_t total_rules() const { return nonterminals * rules; }
  bool operator==(const Dimensions&) const = default;
};

// How F H2 is squashed into a terminal vector.
enum class TerminalActivation { logistic, softmax };

TerminalActivation parse_terminal_activation(const std::string& name);
std::string to_string(TerminalActivation activation);

enum class StepMode { deterministic, sampled };

struct GrammarModel {
  Dimensions dims;
  TerminalActivation activation = TerminalActivation::logistic;
  Matrix rules;         // Wc
  Matrix next;          // H1
  Matrix emit;          // H2
  Matrix start;         // start logits
  Matrix context_map;   // psi; empty when dims.context == 0
  // Rule-selection temperature the model was trained with; extraction reads
  // rule probabilities at this temperature.
  double temperature = 1.0;
  std::vector<std::string> terminal_names;

  // All parameters zero.
  explicit GrammarModel(Dimensions dims = {},
                        TerminalActivation activation = TerminalActivation::logistic);

  // Every learnable matrix drawn from uniform(-scale, scale).
  static GrammarModel random(Dimensions dims, Rng& rng, double scale = 0.1,
                             TerminalActivation activation = TerminalActivation::logistic);

  bool has_context_map() const { return dims.context > 0; }
  // Throws DimensionError when a matrix disagrees with dims.
  void validate() const;

  // Parameter matrices in a fixed order, with their checkpoint names.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  static std::vector<std::string> parameter_names(bool with_context);

  bool operator==(const GrammarModel&) const = default;
};

// Block-diagonal expansion of an N x R matrix.
Matrix inflate_block_diagonal(const Matrix& compact);
// Row-wise softmax(Wc / temperature).
Matrix rule_probabilities(const Matrix& rules, double temperature = 1.0);

// Graph-side view of a model: every parameter registered as a graph leaf.
class BoundModel {
 public:
  BoundModel(Graph& graph, const GrammarModel& model);

  Graph& graph() const { return *graph_; }
  const GrammarModel& model() const { return *model_; }

  Tensor rules() const { return rules_; }
  Tensor rule_probabilities() const { return rule_probs_; }
  Tensor inflated_rules() const { return inflated_; }
  Tensor next() const { return next_; }
  Tensor emit() const { return emit_; }
  Tensor start() const { return start_; }
  std::optional<Tensor> context_map() const { return context_map_; }
  std::vector<Tensor> parameters() const;

  // k = v W
  Tensor rule_activation(Tensor v) const;
  // log k
  Tensor rule_logits(Tensor v) const;

  struct Expansion {
    Tensor next;      // v'
    Tensor terminal;  // w
  };
  // (softmax(F H1), squash(F H2))
  Expansion expand(Tensor selection) const;

  struct Step {
    Tensor next;
    Tensor terminal;
    Tensor selection;  // F, kept for traces
  };
  // `noise` is only read in sampled mode; an empty span there means "draw
  // from rng". Passing zeros reproduces deterministic mode exactly.
  Step step(Tensor v, StepMode mode, double temperature, std::span<const double> noise = {},
            Rng* rng = nullptr) const;

  // softmax(start) or softmax(context psi).
  Tensor initial(const std::vector<double>* context = nullptr) const;

 private:
  Graph* graph_;
  const GrammarModel* model_;
  Tensor rules_;
  Tensor rule_probs_;
  Tensor inflated_;
  Tensor next_;
  Tensor emit_;
  Tensor start_;
  std::optional<Tensor> context_map_;
};

// Graph-free forward evaluation of one step. Values match BoundModel::step
// bit for bit; used where only the forward value is needed.
class StepEvaluator {
 public:
  explicit StepEvaluator(const GrammarModel& model);

  std::size_t nonterminals() const { return dims_.nonterminals; }
  std::size_t total_rules() const { return dims_.total_rules(); }
  std::size_t terminals() const { return dims_.terminals; }

  // Scratch spans must hold total_rules() (selection), nonterminals() (next)
  // and terminals() (terminal) doubles. `noise` empty = deterministic.
  void step(std::span<const double> v, std::span<const double> noise, double temperature,
            std::span<double> selection, std::span<double> next,
            std::span<double> terminal) const;

  // The two halves of step(). The logits depend only on v, so branches that
  // share a parent compute them once.
  void rule_logits(std::span<const double> v, std::span<double> logits) const;
  void expand(std::span<const double> logits, std::span<const double> noise,
              double temperature, std::span<double> selection, std::span<double> next,
              std::span<double> terminal) const;

  std::vector<double> initial(const std::vector<double>* context = nullptr) const;

 private:
  const GrammarModel* model_;
  Dimensions dims_;
  Matrix inflated_;
};

struct Generation {
  Matrix terminals;                  // L x T
  Matrix nonterminals;               // (L + 1) x N, row 0 is v0
  std::vector<std::size_t> rules;    // argmax of each selection vector
};

Generation generate(const GrammarModel& model, std::size_t length, StepMode mode,
                    std::uint64_t seed, double temperature = 1.0,
                    const std::vector<double>* context = nullptr);

// Checkpoint document.
inline constexpr int kCheckpointVersion = 1;

nlohmann::json to_json(const GrammarModel& model);
GrammarModel model_from_json(const nlohmann::json& doc);
void save_checkpoint(const GrammarModel& model, const std::filesystem::path& path);
GrammarModel load_checkpoint(const std::filesystem::path& path);

}  // namespace gramdiff
