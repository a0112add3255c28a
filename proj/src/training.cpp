#include "gramdiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <ostream>

#include "gramdiff/errors.hpp"

namespace gramdiff {

void TrainConfig::validate() const {
  if (branching < 1) throw ParameterError("branching factor must be at least 1");
  if (max_branches < branching) {
    throw ParameterError("max_branches (" + std::to_string(max_branches) +
                         ") must be at least the branching factor (" +
                         std::to_string(branching) + ")");
  }
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  if (!(lr_decay_factor > 0.0)) throw ParameterError("lr_decay_factor must be positive");
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ParameterError("momentum must lie in [0, 1)");
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  if (lr_decay_every == 0) return learning_rate;
  return learning_rate / std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_every));
}

std::uint64_t child_seed(std::uint64_t parent_seed, std::size_t child) {
  return mix_seed(parent_seed, static_cast<std::uint64_t>(child) + 1);
}

void branch_noise(std::uint64_t seed, NoiseMode mode, std::span<double> out) {
  if (mode == NoiseMode::zero) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  SplitMix64 gen(seed);
  fill_gumbel(gen, out);
}

Branch root_branch(const GrammarModel& model, std::uint64_t noise_seed,
                   const std::vector<double>* context) {
  const StepEvaluator eval(model);
  Branch b;
  b.v = eval.initial(context);
  b.noise_seed = noise_seed;
  return b;
}

std::vector<Branch> expand_branches(const std::vector<Branch>& branches,
                                    const GrammarModel& model, std::span<const double> target,
                                    std::size_t branching, double temperature, NoiseMode noise) {
  if (branches.empty()) throw ParameterError("cannot expand an empty branch set");
  if (branching < 1) throw ParameterError("branching factor must be at least 1");
  const StepEvaluator eval(model);
  if (target.size() != eval.terminals()) {
    throw DimensionError("target has " + std::to_string(target.size()) + " entries, model T=" +
                         std::to_string(eval.terminals()));
  }
  std::vector<double> gumbel(eval.total_rules()), selection(eval.total_rules());
  std::vector<Branch> children;
  children.reserve(branches.size() * branching);
  for (const Branch& parent : branches) {
    for (std::size_t c = 0; c < branching; ++c) {
      Branch child;
      child.noise_seed = child_seed(parent.noise_seed, c);
      branch_noise(child.noise_seed, noise, gumbel);
      child.v.resize(eval.nonterminals());
      std::vector<double> terminal(eval.terminals());
      eval.step(parent.v, gumbel, temperature, selection, child.v, terminal);
      child.loss = parent.loss + kernels::bce(terminal, target);
      child.emitted = parent.emitted;
      child.emitted.push_back(std::move(terminal));
      child.rule_trace = parent.rule_trace;
      child.rule_trace.push_back(argmax(selection));
      children.push_back(std::move(child));
    }
  }
  return children;
}

std::vector<std::size_t> select_survivors(std::size_t count, std::size_t cap, Rng& rng) {
  std::vector<std::size_t> all(count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count <= cap) return all;
  std::vector<std::size_t> kept;
  kept.reserve(cap);
  std::sample(all.begin(), all.end(), std::back_inserter(kept), cap, rng.engine());
  return kept;
}

namespace {

std::size_t min_index(std::span<const double> losses) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (losses[i] < losses[best]) best = i;
  }
  return best;
}

// Replaces the worst kept index by `best` if the random draw missed it.
void ensure_kept(std::vector<std::size_t>& kept, std::size_t best,
                 std::span<const double> losses) {
  if (kept.empty() || std::binary_search(kept.begin(), kept.end(), best)) return;
  auto worst = std::max_element(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
    return losses[a] < losses[b];
  });
  *worst = best;
  std::sort(kept.begin(), kept.end());
}

}  // namespace

std::vector<Branch> prune_branches(std::vector<Branch> branches, std::size_t cap, Rng& rng,
                                   bool keep_best) {
  if (branches.size() <= cap) return branches;
  std::vector<std::size_t> kept = select_survivors(branches.size(), cap, rng);
  if (keep_best && cap >= 1) {
    std::vector<double> losses(branches.size());
    for (std::size_t i = 0; i < branches.size(); ++i) losses[i] = branches[i].loss;
    ensure_kept(kept, min_index(losses), losses);
  }
  std::vector<Branch> out;
  out.reserve(kept.size());
  for (std::size_t i : kept) out.push_back(std::move(branches[i]));
  return out;
}

namespace {

// Live branches of one level in struct-of-arrays form.
struct Level {
  std::vector<std::uint32_t> parent;
  std::vector<std::uint64_t> seed;
  std::vector<double> v;      // count x N
  std::vector<double> loss;
};

struct SearchResult {
  double value = 0.0;
  std::vector<std::uint64_t> path_seeds;  // one per step
  std::uint64_t root_seed = 0;
  std::size_t evaluated = 0;
};

SearchResult run_search(const GrammarModel& model, const Matrix& targets,
                        const TrainConfig& config, Rng& rng,
                        const std::vector<double>* context) {
  config.validate();
  const StepEvaluator eval(model);
  const std::size_t steps = targets.rows();
  if (steps == 0) throw InputError("target sequence is empty");
  if (targets.cols() != eval.terminals()) {
    throw DimensionError("targets have " + std::to_string(targets.cols()) +
                         " columns, model T=" + std::to_string(eval.terminals()));
  }
  const std::size_t n = eval.nonterminals();
  const std::size_t rn = eval.total_rules();
  const std::size_t b = config.branching;

  SearchResult result;
  result.root_seed = rng.next_u64();

  Level current;
  current.parent = {0};
  current.seed = {result.root_seed};
  current.v = eval.initial(context);
  current.loss = {0.0};

  std::vector<Level> history;
  history.reserve(steps);
  std::vector<double> gumbel(rn), selection(rn), terminal(eval.terminals()), logits;

  auto evaluate = [&](const Level& from, std::size_t slot, double* v_out) {
    const std::size_t p = slot / b;
    const std::uint64_t seed = child_seed(from.seed[p], slot % b);
    branch_noise(seed, config.noise, gumbel);
    eval.expand(std::span<const double>(logits.data() + p * rn, rn), gumbel,
                config.temperature, selection, std::span<double>(v_out, n), terminal);
    ++result.evaluated;
    return std::pair{seed, from.loss[p] + kernels::bce(terminal, targets.row(history.size()))};
  };

  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t slots = current.seed.size() * b;
    logits.resize(current.seed.size() * rn);
    for (std::size_t p = 0; p < current.seed.size(); ++p) {
      eval.rule_logits(std::span<const double>(current.v.data() + p * n, n),
                       std::span<double>(logits.data() + p * rn, rn));
    }
    Level next;
    if (config.keep_best && slots > config.max_branches) {
      // Scoring every child first is required to know the best one.
      std::vector<double> all_v(slots * n), all_loss(slots);
      std::vector<std::uint64_t> all_seed(slots);
      for (std::size_t s = 0; s < slots; ++s) {
        auto [seed, loss] = evaluate(current, s, all_v.data() + s * n);
        all_seed[s] = seed;
        all_loss[s] = loss;
      }
      std::vector<std::size_t> kept = select_survivors(slots, config.max_branches, rng);
      ensure_kept(kept, min_index(all_loss), all_loss);
      for (std::size_t s : kept) {
        next.parent.push_back(static_cast<std::uint32_t>(s / b));
        next.seed.push_back(all_seed[s]);
        next.v.insert(next.v.end(), all_v.begin() + s * n, all_v.begin() + (s + 1) * n);
        next.loss.push_back(all_loss[s]);
      }
    } else {
      // Random pruning ignores scores, so only survivors need evaluating.
      const std::vector<std::size_t> kept = select_survivors(slots, config.max_branches, rng);
      next.parent.reserve(kept.size());
      next.seed.reserve(kept.size());
      next.loss.reserve(kept.size());
      next.v.resize(kept.size() * n);
      for (std::size_t i = 0; i < kept.size(); ++i) {
        auto [seed, loss] = evaluate(current, kept[i], next.v.data() + i * n);
        next.parent.push_back(static_cast<std::uint32_t>(kept[i] / b));
        next.seed.push_back(seed);
        next.loss.push_back(loss);
      }
    }
    history.push_back(std::move(current));
    current = std::move(next);
  }

  std::size_t idx = min_index(current.loss);
  result.value = current.loss[idx];
  result.path_seeds.assign(steps, 0);
  for (std::size_t t = steps; t-- > 0;) {
    result.path_seeds[t] = current.seed[idx];
    idx = current.parent[idx];
    current = std::move(history[t]);
  }
  return result;
}

}  // namespace

BranchSearch search_branches(const GrammarModel& model, const Matrix& targets,
                             const TrainConfig& config, Rng& rng,
                             const std::vector<double>* context) {
  const SearchResult found = run_search(model, targets, config, rng, context);
  // Replay the winner without a graph to materialize its trace.
  const StepEvaluator eval(model);
  BranchSearch out;
  out.value = found.value;
  out.evaluated = found.evaluated;
  Branch& best = out.best;
  best.v = eval.initial(context);
  std::vector<double> gumbel(eval.total_rules()), selection(eval.total_rules()),
      next(eval.nonterminals());
  for (std::size_t t = 0; t < targets.rows(); ++t) {
    branch_noise(found.path_seeds[t], config.noise, gumbel);
    std::vector<double> terminal(eval.terminals());
    eval.step(best.v, gumbel, config.temperature, selection, next, terminal);
    best.loss += kernels::bce(terminal, targets.row(t));
    best.emitted.push_back(std::move(terminal));
    best.rule_trace.push_back(argmax(selection));
    best.v = next;
    best.noise_seed = found.path_seeds[t];
  }
  return out;
}

SequenceLoss sequence_loss(const BoundModel& bound, const Matrix& targets,
                           const TrainConfig& config, Rng& rng,
                           const std::vector<double>* context) {
  const GrammarModel& model = bound.model();
  const SearchResult found = run_search(model, targets, config, rng, context);

  Graph& graph = bound.graph();
  SequenceLoss out;
  out.value = found.value;
  out.evaluated = found.evaluated;
  std::vector<double> gumbel(model.dims.total_rules());
  Tensor v = bound.initial(context);
  Tensor total;
  for (std::size_t t = 0; t < targets.rows(); ++t) {
    branch_noise(found.path_seeds[t], config.noise, gumbel);
    const auto step = bound.step(v, StepMode::sampled, config.temperature, gumbel);
    Tensor term_loss = graph.bce(step.terminal, targets.row(t));
    total = t == 0 ? term_loss : graph.add(total, term_loss);
    const auto w = step.terminal.value().values();
    out.best.emitted.emplace_back(w.begin(), w.end());
    out.best.rule_trace.push_back(argmax(step.selection.value().values()));
    out.best.noise_seed = found.path_seeds[t];
    v = step.next;
  }
  out.best.loss = total.value()(0, 0);
  out.loss = config.reduction == LossReduction::sum
                 ? total
                 : graph.weighted_sum(
                       total, Matrix(1, 1, 1.0 / static_cast<double>(targets.rows())));
  const auto vv = v.value().values();
  out.best.v.assign(vv.begin(), vv.end());
  return out;
}

LossReduction parse_loss_reduction(const std::string& name) {
  if (name == "mean") return LossReduction::mean;
  if (name == "sum") return LossReduction::sum;
  throw InputError("unknown loss reduction '" + name + "' (expected mean|sum)");
}

std::string to_string(LossReduction reduction) {
  return reduction == LossReduction::mean ? "mean" : "sum";
}

void sgd_update(Matrix& param, const Matrix& grad, double lr) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw DimensionError("sgd_update shape mismatch: parameter " + param.shape() +
                         " vs gradient " + grad.shape());
  }
  for (std::size_t i = 0; i < param.size(); ++i) param.values()[i] -= lr * grad.values()[i];
}

void SgdOptimizer::step(std::span<Matrix* const> params, std::span<const Matrix> grads,
                        double lr) {
  if (params.size() != grads.size()) {
    throw DimensionError("optimizer got " + std::to_string(params.size()) + " parameters and " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (momentum_ == 0.0) {
    for (std::size_t i = 0; i < params.size(); ++i) sgd_update(*params[i], grads[i], lr);
    return;
  }
  if (velocity_.empty()) {
    for (const Matrix& g : grads) velocity_.emplace_back(g.rows(), g.cols());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& vel = velocity_[i];
    for (std::size_t j = 0; j < vel.size(); ++j) {
      vel.values()[j] = momentum_ * vel.values()[j] + grads[i].values()[j];
    }
    sgd_update(*params[i], vel, lr);
  }
}

TrainReport train(GrammarModel& model, std::span<const TrainingSequence> sequences,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model.validate();
  TrainReport report;
  if (config.epochs == 0) return report;
  if (sequences.empty()) throw InputError("training set is empty");
  for (const auto& seq : sequences) {
    if (seq.targets == nullptr || seq.targets->rows() == 0) {
      throw InputError("sequence '" + seq.id + "' has no steps");
    }
    if (seq.targets->cols() != model.dims.terminals) {
      throw DimensionError("sequence '" + seq.id + "' has terminal dimension " +
                           std::to_string(seq.targets->cols()) + ", model T=" +
                           std::to_string(model.dims.terminals));
    }
  }
  model.temperature = config.temperature;

  const auto names = GrammarModel::parameter_names(model.has_context_map());
  Rng rng(config.seed);
  SgdOptimizer optimizer(config.momentum);
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate_at(epoch);
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    std::size_t step_count = 0;
    for (std::size_t idx : order) {
      const TrainingSequence& seq = sequences[idx];
      Graph graph;
      const BoundModel bound(graph, model);
      const SequenceLoss result = sequence_loss(bound, *seq.targets, config, rng, seq.context);
      if (!std::isfinite(result.value)) {
        throw NumericalError("loss became non-finite at epoch " + std::to_string(epoch + 1) +
                             " on sequence '" + seq.id + "'");
      }
      graph.backward(result.loss);
      std::vector<Matrix> grads;
      for (Tensor p : bound.parameters()) grads.push_back(graph.grad(p));
      const std::vector<Matrix*> params = model.parameters();
      optimizer.step(params, grads, lr);
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->all_finite()) {
          throw NumericalError("parameter " + names[i] + " became non-finite at epoch " +
                               std::to_string(epoch + 1) + " on sequence '" + seq.id + "'");
        }
      }
      loss_sum += result.value;
      step_count += seq.targets->rows();
    }
    EpochLog log{epoch + 1, loss_sum / static_cast<double>(step_count), lr};
    report.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return report;
}

void write_report_csv(const TrainReport& report, std::ostream& out) {
  out << "epoch,mean_loss,lr\n";
  const auto precision = out.precision(17);
  for (const EpochLog& e : report.epochs) {
    out << e.epoch << ',' << e.mean_loss << ',' << e.learning_rate << '\n';
  }
  out.precision(precision);
}

}  // namespace gramdiff
