#pragma once

// Branch-expanding training of a GrammarModel.
//
// Each target sequence is matched by a tree of sampled derivations: at every
// step every live branch spawns `branching` children, each with its own
// Gumbel draw. The tree is capped at `max_branches` by uniform random
// selection. The loss is the minimum summed BCE over the surviving leaves and
// only the winning branch is differentiated.
//
// Branches are scored without a graph. Every child owns a noise seed derived
// from its parent's seed and its child index, so the winner's noise can be
// regenerated and the branch replayed on a Graph for backpropagation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gramdiff/diffcore.hpp"
#include "gramdiff/grammar.hpp"
#include "gramdiff/random.hpp"

namespace gramdiff {

// Source of the per-child Gumbel noise. `zero` reproduces the deterministic
// single-rule path and exists for tests and ablations.
enum class NoiseMode { gumbel, zero };

// How the winner's per-step BCE terms become the differentiated objective.
// Branch ranking always uses the sum; for a fixed sequence the two orders
// agree. `mean` divides by the sequence length.
enum class LossReduction { mean, sum };

LossReduction parse_loss_reduction(const std::string& name);
std::string to_string(LossReduction reduction);

struct TrainConfig {
  std::size_t branching = 2;          // b
  std::size_t max_branches = 2048;    // prune cap
  std::size_t epochs = 400;
  double learning_rate = 0.1;
  std::size_t lr_decay_every = 50;    // epochs; 0 disables decay
  double lr_decay_factor = 10.0;      // lr /= factor at each decay
  double momentum = 0.0;
  double temperature = 1.0;           // tau
  std::uint64_t seed = 0;
  // Extension: never prune the current minimum-loss branch.
  bool keep_best = false;
  NoiseMode noise = NoiseMode::gumbel;
  LossReduction reduction = LossReduction::mean;

  void validate() const;
  double learning_rate_at(std::size_t epoch) const;
};

struct Branch {
  std::vector<double> v;                       // current soft non-terminal
  std::vector<std::vector<double>> emitted;    // one terminal per step so far
  double loss = 0.0;                           // sum of per-step BCE
  std::vector<std::size_t> rule_trace;         // argmax of each selection
  std::uint64_t noise_seed = 0;
};

// Seed of the `child`-th child of a branch seeded with `parent_seed`.
std::uint64_t child_seed(std::uint64_t parent_seed, std::size_t child);

// Gumbel noise owned by a branch seed (zeros in NoiseMode::zero).
void branch_noise(std::uint64_t seed, NoiseMode mode, std::span<double> out);

// Root branch at v0 for a fresh sequence visit.
Branch root_branch(const GrammarModel& model, std::uint64_t noise_seed,
                   const std::vector<double>* context = nullptr);

// Every branch spawns `branching` children scored against `target`. Children
// are ordered parent-major.
std::vector<Branch> expand_branches(const std::vector<Branch>& branches,
                                    const GrammarModel& model, std::span<const double> target,
                                    std::size_t branching, double temperature,
                                    NoiseMode noise = NoiseMode::gumbel);

// Indices (ascending) of the `cap` survivors among `count` candidates, chosen
// uniformly at random; all indices when count <= cap.
std::vector<std::size_t> select_survivors(std::size_t count, std::size_t cap, Rng& rng);

// Random subset of size `cap`. With keep_best set, the minimum-loss branch is
// swapped in for the worst survivor when the draw missed it.
std::vector<Branch> prune_branches(std::vector<Branch> branches, std::size_t cap, Rng& rng,
                                   bool keep_best = false);

struct SequenceLoss {
  Tensor loss;           // reduced objective on the caller's graph; grads reach the winner only
  double value = 0.0;    // min summed BCE over surviving branches
  Branch best;           // the winning branch, replayed
  std::size_t evaluated = 0;  // child evaluations performed
};

// Runs the branch tree over `targets` (L x T) and replays the winner on
// `bound`'s graph. Consumes the root seed and pruning draws from `rng`.
SequenceLoss sequence_loss(const BoundModel& bound, const Matrix& targets,
                           const TrainConfig& config, Rng& rng,
                           const std::vector<double>* context = nullptr);

// Forward-only variant: min loss and winning branch, no graph.
struct BranchSearch {
  double value = 0.0;
  Branch best;
  std::size_t evaluated = 0;
};
BranchSearch search_branches(const GrammarModel& model, const Matrix& targets,
                             const TrainConfig& config, Rng& rng,
                             const std::vector<double>* context = nullptr);

// p <- p - lr * g, elementwise.
void sgd_update(Matrix& param, const Matrix& grad, double lr);

// SGD with optional momentum over a fixed parameter list.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(double momentum = 0.0) : momentum_(momentum) {}
  void step(std::span<Matrix* const> params, std::span<const Matrix> grads, double lr);

 private:
  double momentum_;
  std::vector<Matrix> velocity_;
};

struct EpochLog {
  std::size_t epoch = 0;     // 1-based
  double mean_loss = 0.0;    // summed BCE per time step
  double learning_rate = 0.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
};

struct TrainingSequence {
  const Matrix* targets = nullptr;
  const std::vector<double>* context = nullptr;
  std::string id;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains `model` in place. Sequences are visited in a seed-shuffled order each
// epoch with one update per sequence.
TrainReport train(GrammarModel& model, std::span<const TrainingSequence> sequences,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// CSV with header "epoch,mean_loss,lr".
void write_report_csv(const TrainReport& report, std::ostream& out);

}  // namespace gramdiff
