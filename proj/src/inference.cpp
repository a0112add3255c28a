#include "gramdiff/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>

#include "gramdiff/errors.hpp"
#include "gramdiff/extraction.hpp"

namespace gramdiff {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

void check_observations(const RuleTable& table, const Matrix& obs, bool allow_empty) {
  if (obs.rows() == 0 && !allow_empty) throw InputError("observation sequence is empty");
  if (obs.rows() > 0 && obs.cols() != table.dims.terminals) {
    throw DimensionError("observations have " + std::to_string(obs.cols()) +
                         " columns, model T=" + std::to_string(table.dims.terminals));
  }
}

Matrix leading_rows(const Matrix& m, std::size_t count) {
  Matrix out(count, m.cols());
  for (std::size_t r = 0; r < count; ++r) {
    std::copy(m.row(r).begin(), m.row(r).end(), out.row(r).begin());
  }
  return out;
}

std::vector<std::size_t> record_labels(const SequenceRecord& r) {
  if (!r.labels.empty()) return r.labels;
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < r.targets.rows(); ++t) out.push_back(argmax(r.targets.row(t)));
  return out;
}

// Records carrying a context start from psi when the model has one.
ForecastScore score_forecasts(const GrammarModel& model, const RuleTable& table,
                              std::span<const SequenceRecord> records,
                              const ForecastOptions& options,
                              const std::function<ForecastWindow(std::size_t)>& window_of) {
  ForecastScore score;
  double total = 0.0;
  RuleTable own = table;
  const StepEvaluator eval(model);
  for (const SequenceRecord& r : records) {
    const bool contextual = r.context && model.has_context_map() && !options.decode.context;
    own.initial = contextual ? eval.initial(&*r.context) : table.initial;
    const std::vector<std::size_t> labels = record_labels(r);
    const ForecastWindow w = window_of(labels.size());
    if (w.observe + w.horizon > labels.size()) {
      ++score.skipped;
      continue;
    }
    const ForecastResult f = forecast(own, leading_rows(r.targets, w.observe), w.horizon, options);
    std::size_t hits = 0;
    for (std::size_t h = 0; h < w.horizon; ++h) {
      if (argmax(f.predicted.row(h)) == labels[w.observe + h]) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(w.horizon);
    ++score.scored;
  }
  if (score.scored > 0) score.accuracy = total / static_cast<double>(score.scored);
  return score;
}

}  // namespace

RuleTable rule_table(const GrammarModel& model, std::optional<double> temperature,
                     const std::vector<double>* context) {
  model.validate();
  const Dimensions& d = model.dims;
  RuleTable table;
  table.dims = d;
  table.probability = rule_probabilities(model, temperature);
  table.emission = Matrix(d.total_rules(), d.terminals);
  table.transition = Matrix(d.total_rules(), d.nonterminals);
  for (std::size_t s = 0; s < d.total_rules(); ++s) {
    kernels::softmax(model.next.row(s), {}, 1.0, table.transition.row(s));
    table.next.push_back(argmax(model.next.row(s)));
    if (model.activation == TerminalActivation::logistic) {
      kernels::sigmoid(model.emit.row(s), table.emission.row(s));
    } else {
      kernels::softmax(model.emit.row(s), {}, 1.0, table.emission.row(s));
    }
  }
  table.initial = StepEvaluator(model).initial(context);
  return table;
}

DecodeResult constrained_decode(const GrammarModel& model, const Matrix& observations,
                                const DecodeOptions& options) {
  return constrained_decode(rule_table(model, options.temperature, options.context),
                            observations, options);
}

DecodeResult constrained_decode(const RuleTable& table, const Matrix& observations,
                                const DecodeOptions& options) {
  check_observations(table, observations, false);
  if (options.beam == 0) throw ParameterError("beam width must be at least 1");
  const std::size_t n = table.dims.nonterminals;
  const std::size_t r_count = table.dims.rules;
  const std::size_t steps = observations.rows();

  struct Hyp {
    std::size_t state;
    double score;
    std::size_t prev;  // index into the previous level
    std::size_t slot;
  };
  auto rank = [](std::vector<Hyp>& hyps, std::size_t beam) {
    std::stable_sort(hyps.begin(), hyps.end(), [](const Hyp& a, const Hyp& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.state < b.state;
    });
    if (hyps.size() > beam) hyps.resize(beam);
  };

  std::vector<std::vector<Hyp>> levels;
  std::vector<Hyp> current;
  for (std::size_t i = 0; i < n; ++i) current.push_back({i, safe_log(table.initial[i]), 0, 0});
  rank(current, options.beam);
  levels.push_back(current);

  for (std::size_t t = 0; t < steps; ++t) {
    const auto obs = observations.row(t);
    std::vector<std::optional<Hyp>> best(n);
    for (std::size_t h = 0; h < current.size(); ++h) {
      const Hyp& hyp = current[h];
      for (std::size_t r = 0; r < r_count; ++r) {
        const std::size_t slot = hyp.state * r_count + r;
        double score = hyp.score + std::log(dot(table.emission.row(slot), obs) + kProbEpsilon);
        if (!options.rule_prior) {
          const std::size_t to = table.next[slot];
          if (!best[to] || score > best[to]->score) best[to] = Hyp{to, score, h, slot};
          continue;
        }
        score += safe_log(table.probability(hyp.state, r));
        for (std::size_t to = 0; to < n; ++to) {
          const double moved = score + safe_log(table.transition(slot, to));
          if (!best[to] || moved > best[to]->score) best[to] = Hyp{to, moved, h, slot};
        }
      }
    }
    current.clear();
    for (const auto& h : best) {
      if (h) current.push_back(*h);
    }
    rank(current, options.beam);
    levels.push_back(current);
  }

  DecodeResult out;
  out.fused = Matrix(steps, table.dims.terminals);
  out.grammar = Matrix(steps, table.dims.terminals);
  out.rules.assign(steps, 0);
  out.states.assign(steps + 1, 0);
  out.score = current.front().score;
  std::size_t idx = 0;
  for (std::size_t t = steps; t-- > 0;) {
    const Hyp& h = levels[t + 1][idx];
    out.rules[t] = h.slot;
    out.states[t + 1] = h.state;
    idx = h.prev;
  }
  out.states[0] = levels[0][idx].state;
  for (std::size_t t = 0; t < steps; ++t) {
    const auto e = table.emission.row(out.rules[t]);
    const auto obs = observations.row(t);
    for (std::size_t c = 0; c < e.size(); ++c) {
      out.grammar(t, c) = e[c];
      out.fused(t, c) = e[c] * obs[c];
    }
  }
  return out;
}

ForecastMode parse_forecast_mode(const std::string& name) {
  if (name == "belief") return ForecastMode::belief;
  if (name == "single_path") return ForecastMode::single_path;
  throw InputError("unknown forecast mode '" + name + "' (expected belief|single_path)");
}

std::string to_string(ForecastMode mode) {
  return mode == ForecastMode::belief ? "belief" : "single_path";
}

ForecastResult forecast(const GrammarModel& model, const Matrix& prefix, std::size_t horizon,
                        const ForecastOptions& options) {
  return forecast(rule_table(model, options.decode.temperature, options.decode.context), prefix,
                  horizon, options);
}

ForecastResult forecast(const RuleTable& table, const Matrix& prefix, std::size_t horizon,
                        const ForecastOptions& options) {
  if (horizon == 0) throw ParameterError("forecast horizon must be at least 1");
  check_observations(table, prefix, true);
  const std::size_t n = table.dims.nonterminals;
  const std::size_t r_count = table.dims.rules;
  const std::size_t t_count = table.dims.terminals;

  ForecastResult out;
  out.predicted = Matrix(horizon, t_count);

  if (options.mode == ForecastMode::single_path) {
    std::size_t state = prefix.rows() == 0
                            ? argmax(table.initial)
                            : constrained_decode(table, prefix, options.decode).states.back();
    out.states.push_back(state);
    for (std::size_t h = 0; h < horizon; ++h) {
      const std::size_t slot = state * r_count + argmax(table.probability.row(state));
      const auto e = table.emission.row(slot);
      std::copy(e.begin(), e.end(), out.predicted.row(h).begin());
      out.rules.push_back(slot);
      state = table.next[slot];
      out.states.push_back(state);
    }
    return out;
  }

  std::vector<double> belief = table.initial;
  for (std::size_t t = 0; t < prefix.rows(); ++t) {
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < r_count; ++r) {
        const std::size_t slot = i * r_count + r;
        const double weight = belief[i] * table.probability(i, r) *
                              (dot(table.emission.row(slot), prefix.row(t)) + kProbEpsilon);
        for (std::size_t j = 0; j < n; ++j) next[j] += weight * table.transition(slot, j);
      }
    }
    const double total = std::accumulate(next.begin(), next.end(), 0.0);
    if (!(total > 0.0)) throw NumericalError("state filter lost all probability mass");
    for (double& p : next) p /= total;
    belief = std::move(next);
  }

  out.states.push_back(argmax(belief));
  std::vector<double> slot_mass(table.dims.total_rules());
  for (std::size_t h = 0; h < horizon; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < r_count; ++r) {
        slot_mass[i * r_count + r] = belief[i] * table.probability(i, r);
      }
    }
    std::fill(belief.begin(), belief.end(), 0.0);
    auto row = out.predicted.row(h);
    for (std::size_t s = 0; s < slot_mass.size(); ++s) {
      for (std::size_t j = 0; j < n; ++j) belief[j] += slot_mass[s] * table.transition(s, j);
      const auto e = table.emission.row(s);
      for (std::size_t c = 0; c < t_count; ++c) row[c] += slot_mass[s] * e[c];
    }
    const std::size_t slot = argmax(slot_mass);
    out.rules.push_back(slot);
    out.states.push_back(table.next[slot]);
  }
  return out;
}

ForecastScore forecast_accuracy(const GrammarModel& model,
                                std::span<const SequenceRecord> records,
                                double observe_fraction, double predict_fraction,
                                const ForecastOptions& options) {
  forecast_window(1, observe_fraction, predict_fraction);  // validates the fractions
  const RuleTable table = rule_table(model, options.decode.temperature, options.decode.context);
  return score_forecasts(model, table, records, options, [&](std::size_t length) {
    return forecast_window(length, observe_fraction, predict_fraction);
  });
}

ForecastScore forecast_accuracy_steps(const GrammarModel& model,
                                      std::span<const SequenceRecord> records,
                                      std::size_t observe, std::size_t horizon,
                                      const ForecastOptions& options) {
  if (horizon == 0) throw ParameterError("forecast horizon must be at least 1");
  const RuleTable table = rule_table(model, options.decode.temperature, options.decode.context);
  return score_forecasts(model, table, records, options,
                         [&](std::size_t) { return ForecastWindow{observe, horizon}; });
}

double average_precision(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) {
    throw DimensionError("average_precision got " + std::to_string(scores.size()) +
                         " scores and " + std::to_string(positive.size()) + " labels");
  }
  const auto total_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  if (total_pos == 0.0) throw UndefinedMetricError("average precision needs a positive frame");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  double tp = 0.0;
  std::size_t seen = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double threshold = scores[order[k]];
    double gained = 0.0;
    while (k < order.size() && scores[order[k]] == threshold) {
      if (positive[order[k]]) gained += 1.0;
      ++seen;
      ++k;
    }
    tp += gained;
    ap += (gained / total_pos) * (tp / static_cast<double>(seen));
  }
  return ap;
}

MapResult per_frame_map(const Matrix& predictions, const Matrix& targets) {
  return per_frame_map(std::span<const Matrix>(&predictions, 1),
                       std::span<const Matrix>(&targets, 1));
}

MapResult per_frame_map(std::span<const Matrix> predictions, std::span<const Matrix> targets) {
  if (predictions.size() != targets.size()) {
    throw DimensionError("per_frame_map got " + std::to_string(predictions.size()) +
                         " predicted and " + std::to_string(targets.size()) + " target sequences");
  }
  std::size_t classes = 0;
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const Matrix& p = predictions[s];
    const Matrix& t = targets[s];
    if (p.rows() != t.rows() || p.cols() != t.cols()) {
      throw DimensionError("prediction " + p.shape() + " does not match target " + t.shape());
    }
    if (s == 0) classes = p.cols();
    if (p.cols() != classes) throw DimensionError("sequences disagree on the class count");
  }
  MapResult result;
  result.per_class.assign(classes, std::nullopt);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> scores;
    std::vector<bool> labels;
    for (std::size_t s = 0; s < predictions.size(); ++s) {
      for (std::size_t t = 0; t < predictions[s].rows(); ++t) {
        scores.push_back(predictions[s](t, c));
        labels.push_back(targets[s](t, c) >= 0.5);
      }
    }
    if (std::find(labels.begin(), labels.end(), true) == labels.end()) continue;
    // vector<bool> has no contiguous storage, so copy into a plain array.
    const std::unique_ptr<bool[]> flags(new bool[labels.size()]);
    std::copy(labels.begin(), labels.end(), flags.get());
    const double ap = average_precision(scores, std::span<const bool>(flags.get(), labels.size()));
    result.per_class[c] = ap;
    sum += ap;
    ++defined;
  }
  if (defined == 0) throw UndefinedMetricError("per-frame mAP is undefined: no positive frames");
  result.mean = sum / static_cast<double>(defined);
  return result;
}

void write_map_csv(const MapResult& result, std::span<const std::string> class_names,
                   std::ostream& out) {
  const auto precision = out.precision(17);
  out << "class,ap\n";
  for (std::size_t c = 0; c < result.per_class.size(); ++c) {
    out << (c < class_names.size() ? class_names[c] : std::to_string(c)) << ',';
    if (result.per_class[c]) {
      out << *result.per_class[c];
    } else {
      out << "nan";
    }
    out << '\n';
  }
  out << "mAP," << result.mean << '\n';
  out.precision(precision);
}

void write_forecast_csv(std::span<const ForecastRow> rows, std::ostream& out) {
  const auto precision = out.precision(17);
  out << "observe,predict,accuracy,scored,skipped\n";
  for (const ForecastRow& r : rows) {
    char fractions[64];
    std::snprintf(fractions, sizeof fractions, "%g,%g,", r.observe_fraction, r.predict_fraction);
    out << fractions << r.score.accuracy << ',' << r.score.scored << ',' << r.score.skipped << '\n';
  }
  out.precision(precision);
}

}  // namespace gramdiff
