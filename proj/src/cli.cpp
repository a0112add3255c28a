#include "gramdiff/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gramdiff/config.hpp"
#include "gramdiff/data.hpp"
#include "gramdiff/errors.hpp"
#include "gramdiff/extraction.hpp"
#include "gramdiff/grammar.hpp"
#include "gramdiff/inference.hpp"
#include "gramdiff/training.hpp"

namespace gramdiff {

namespace {

namespace fs = std::filesystem;

constexpr const char* kSeedVariable = "GRAMDIFF_SEED";

// Explicit flag, else GRAMDIFF_SEED, else `fallback`.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kSeedVariable); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw InputError(std::string(kSeedVariable) + " is not an unsigned integer: '" + env + "'");
  }
  return fallback;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_output(path);
  out << text;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) throw InputError("empty name in list '" + text + "'");
    out.push_back(item);
  }
  return out;
}

// Clean one-hot labels when present, otherwise the targets themselves.
Matrix ground_truth(const SequenceRecord& r) {
  if (r.labels.empty()) return r.targets;
  Matrix out(r.labels.size(), r.targets.cols());
  for (std::size_t t = 0; t < r.labels.size(); ++t) out(t, r.labels[t]) = 1.0;
  return out;
}

const std::vector<double>* record_context(const GrammarModel& model, const SequenceRecord& r) {
  return model.has_context_map() && r.context ? &*r.context : nullptr;
}

void check_terminals(const GrammarModel& model, const std::vector<SequenceRecord>& records) {
  if (!records.empty() && records.front().targets.cols() != model.dims.terminals) {
    throw InputError("dataset has " + std::to_string(records.front().targets.cols()) +
                     " terminals, checkpoint has T=" + std::to_string(model.dims.terminals));
  }
}

// Predictions JSONL: one object per line with "id" and "fused" (decode
// output) or "targets" (a dataset).
std::vector<std::pair<std::string, Matrix>> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open predictions " + path.string());
  std::vector<std::pair<std::string, Matrix>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      const char* key = doc.contains("fused") ? "fused" : "targets";
      out.emplace_back(doc.at("id").get<std::string>(),
                       Matrix::from_rows(doc.at(key).get<std::vector<std::vector<double>>>()));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void print_map(std::ostream& out, const char* label, const MapResult& m) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s mAP %.4f\n", label, m.mean);
  out << buf;
}

struct GenDataArgs {
  std::string builtin;
  std::string grammar;
  std::size_t count = 100;
  std::size_t length = 12;
  std::string noise = "none";
  double strength = 0.0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  if (a.builtin.empty() == a.grammar.empty()) {
    throw InputError("give exactly one of --builtin or --grammar");
  }
  const SymbolicGrammar g = a.builtin.empty() ? load_grammar_file(a.grammar)
                                              : builtin_grammar(a.builtin);
  const NoiseSpec noise{parse_noise_kind(a.noise), a.strength};
  if (noise.strength < 0.0) throw InputError("--strength must be non-negative");
  const auto records = generate_dataset(g, a.count, a.length, noise, resolve_seed(a.seed, 0));
  std::ofstream file = open_output(a.out);
  write_dataset(records, file);
  out << "wrote " << records.size() << " sequences to " << a.out << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string dataset;
  std::string out_dir;
  std::string terminal_names;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> nonterminals;
  std::optional<std::size_t> rules;
  std::optional<double> temperature;
  std::optional<std::size_t> branching;
  std::optional<std::size_t> max_branches;
  std::optional<double> momentum;
  std::optional<std::string> reduction;
  std::optional<std::string> activation;
  bool keep_best = false;
  std::size_t log_every = 50;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.learning_rate) cfg.train.learning_rate = *a.learning_rate;
  if (a.nonterminals) cfg.model.nonterminals = *a.nonterminals;
  if (a.rules) cfg.model.rules = *a.rules;
  if (a.temperature) cfg.train.temperature = *a.temperature;
  if (a.branching) cfg.train.branching = *a.branching;
  if (a.max_branches) cfg.train.max_branches = *a.max_branches;
  if (a.momentum) cfg.train.momentum = *a.momentum;
  if (a.reduction) cfg.train.reduction = parse_loss_reduction(*a.reduction);
  if (a.activation) cfg.model.activation = parse_terminal_activation(*a.activation);
  if (a.keep_best) cfg.train.keep_best = true;
  if (!cfg.seed_given || a.seed) cfg.train.seed = resolve_seed(a.seed, 0);
  cfg.train.validate();

  const std::vector<SequenceRecord> records = read_dataset(a.dataset);
  if (records.empty()) throw InputError("dataset " + a.dataset + " has no records");
  const std::size_t t = records.front().targets.cols();
  if (cfg.model.terminals != 0 && cfg.model.terminals != t) {
    throw InputError("config says T=" + std::to_string(cfg.model.terminals) + ", dataset has " +
                     std::to_string(t) + " terminals");
  }
  cfg.model.terminals = t;
  std::size_t d = 0;
  if (records.front().context) d = records.front().context->size();
  for (const auto& r : records) {
    if ((r.context ? r.context->size() : 0) != d) {
      throw InputError("record '" + r.id + "' disagrees on the context dimension");
    }
  }

  Rng init_rng(mix_seed(cfg.train.seed, 1));
  GrammarModel model = GrammarModel::random({cfg.model.nonterminals, cfg.model.rules, t, d},
                                            init_rng, cfg.model.init_scale, cfg.model.activation);
  model.temperature = cfg.train.temperature;
  model.terminal_names =
      a.terminal_names.empty() ? default_terminal_names(t) : split_names(a.terminal_names);
  model.validate();

  std::vector<TrainingSequence> sequences;
  for (const auto& r : records) {
    sequences.push_back({&r.targets, r.context ? &*r.context : nullptr, r.id});
  }
  const TrainReport report = train(model, sequences, cfg.train, [&](const EpochLog& e) {
    if (a.log_every > 0 && (e.epoch % a.log_every == 0 || e.epoch == cfg.train.epochs)) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f lr %g\n", e.epoch, e.mean_loss,
                    e.learning_rate);
      out << buf << std::flush;
    }
  });

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  save_checkpoint(model, dir / "checkpoint.json");
  {
    std::ofstream csv = open_output(dir / "train_report.csv");
    write_report_csv(report, csv);
  }
  {
    std::ofstream ini = open_output(dir / "effective_config.ini");
    write_run_config(cfg, ini);
  }
  out << "wrote " << (dir / "checkpoint.json").string() << '\n';
  return kExitOk;
}

struct ExtractArgs {
  std::string checkpoint;
  double threshold = kDefaultPruneThreshold;
  std::string dot;
  std::string json;
};

int cmd_extract(const ExtractArgs& a, std::ostream& out) {
  const GrammarModel model = load_checkpoint(a.checkpoint);
  ExtractOptions options;
  options.threshold = a.threshold;
  const SymbolicGrammar g = extract(model, options);
  out << "start " << g.nonterminals[g.start] << '\n' << render_text(g);
  if (!a.dot.empty()) write_text(a.dot, render_dot(g));
  if (!a.json.empty()) write_text(a.json, to_json(g).dump(2) + "\n");
  return kExitOk;
}

struct DecodeArgs {
  std::string checkpoint;
  std::string dataset;
  std::string out;
  std::size_t beam = 8;
  bool no_rule_prior = false;
};

int cmd_decode(const DecodeArgs& a, std::ostream& out) {
  const GrammarModel model = load_checkpoint(a.checkpoint);
  const auto records = read_dataset(a.dataset);
  check_terminals(model, records);
  std::ofstream file = open_output(a.out);
  for (const auto& r : records) {
    DecodeOptions options;
    options.beam = a.beam;
    options.rule_prior = !a.no_rule_prior;
    options.context = record_context(model, r);
    const DecodeResult d = constrained_decode(model, r.targets, options);
    nlohmann::json doc;
    doc["id"] = r.id;
    doc["fused"] = d.fused.to_rows();
    doc["rules"] = d.rules;
    doc["states"] = d.states;
    file << doc.dump() << '\n';
  }
  out << "decoded " << records.size() << " sequences to " << a.out << '\n';
  return kExitOk;
}

struct ForecastArgs {
  std::string checkpoint;
  std::string dataset;
  std::vector<double> observe{0.2, 0.3};
  std::vector<double> predict{0.1, 0.2, 0.3, 0.5};
  std::string mode = "belief";
  std::size_t beam = 8;
  std::string out;
};

int cmd_forecast(const ForecastArgs& a, std::ostream& out) {
  const GrammarModel model = load_checkpoint(a.checkpoint);
  const auto records = read_dataset(a.dataset);
  check_terminals(model, records);
  ForecastOptions options;
  options.mode = parse_forecast_mode(a.mode);
  options.decode.beam = a.beam;
  std::vector<ForecastRow> rows;
  for (double o : a.observe) {
    for (double p : a.predict) {
      rows.push_back({o, p, forecast_accuracy(model, records, o, p, options)});
      char buf[128];
      std::snprintf(buf, sizeof buf, "observe %g predict %g accuracy %.4f (%zu scored, %zu skipped)\n",
                    o, p, rows.back().score.accuracy, rows.back().score.scored,
                    rows.back().score.skipped);
      out << buf;
    }
  }
  if (!a.out.empty()) {
    std::ofstream csv = open_output(a.out);
    write_forecast_csv(rows, csv);
  }
  return kExitOk;
}

struct EvalArgs {
  std::string dataset;
  std::string predictions;
  std::string checkpoint;
  std::size_t beam = 8;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.predictions.empty() == a.checkpoint.empty()) {
    throw InputError("give exactly one of --predictions or --checkpoint");
  }
  const auto records = read_dataset(a.dataset);
  if (records.empty()) throw InputError("dataset " + a.dataset + " has no records");
  std::vector<Matrix> truth, predicted;
  for (const auto& r : records) truth.push_back(ground_truth(r));
  std::vector<std::string> names = default_terminal_names(records.front().targets.cols());

  if (!a.checkpoint.empty()) {
    const GrammarModel model = load_checkpoint(a.checkpoint);
    check_terminals(model, records);
    if (!model.terminal_names.empty()) names = model.terminal_names;
    std::vector<Matrix> raw;
    for (const auto& r : records) {
      DecodeOptions options;
      options.beam = a.beam;
      options.context = record_context(model, r);
      predicted.push_back(constrained_decode(model, r.targets, options).fused);
      raw.push_back(r.targets);
    }
    print_map(out, "raw", per_frame_map(raw, truth));
  } else {
    const auto preds = read_predictions(a.predictions);
    if (preds.size() != records.size()) {
      throw InputError("predictions hold " + std::to_string(preds.size()) +
                       " sequences, dataset " + std::to_string(records.size()));
    }
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i].first != records[i].id) {
        throw InputError("prediction " + std::to_string(i) + " has id '" + preds[i].first +
                         "', dataset has '" + records[i].id + "'");
      }
      predicted.push_back(preds[i].second);
    }
  }
  const MapResult m = per_frame_map(predicted, truth);
  print_map(out, a.checkpoint.empty() ? "predictions" : "fused", m);
  if (!a.out.empty()) {
    std::ofstream csv = open_output(a.out);
    write_map_csv(m, names, csv);
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable stochastic regular grammars"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gramdiff 0.1.0");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Sample a dataset from a grammar");
  gen_cmd->add_option("--builtin", gen.builtin, "Built-in grammar: toy or cycle");
  gen_cmd->add_option("--grammar", gen.grammar, "Grammar text file");
  gen_cmd->add_option("--count", gen.count, "Number of sequences")->capture_default_str();
  gen_cmd->add_option("--length", gen.length, "Steps per sequence")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "none or logistic")->capture_default_str();
  gen_cmd->add_option("--strength", gen.strength, "Noise strength")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Seed (default: $GRAMDIFF_SEED, else 0)");
  gen_cmd->add_option("--out", gen.out, "Output JSONL")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  train_cmd->add_option("--config", tr.config, "INI config file");
  train_cmd->add_option("--dataset", tr.dataset, "Dataset JSONL")->required();
  train_cmd->add_option("--out-dir", tr.out_dir, "Directory for checkpoint and reports")
      ->required();
  train_cmd->add_option("--terminal-names", tr.terminal_names, "Comma-separated names");
  train_cmd->add_option("--seed", tr.seed, "Seed (default: config, $GRAMDIFF_SEED, 0)");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--lr", tr.learning_rate);
  train_cmd->add_option("--nonterminals", tr.nonterminals);
  train_cmd->add_option("--rules", tr.rules);
  train_cmd->add_option("--temperature", tr.temperature);
  train_cmd->add_option("--branching", tr.branching);
  train_cmd->add_option("--max-branches", tr.max_branches);
  train_cmd->add_option("--momentum", tr.momentum);
  train_cmd->add_option("--reduction", tr.reduction, "mean or sum");
  train_cmd->add_option("--activation", tr.activation, "logistic or softmax");
  train_cmd->add_flag("--keep-best", tr.keep_best, "Never prune the best branch");
  train_cmd->add_option("--log-every", tr.log_every, "Epochs between progress lines (0: off)")
      ->capture_default_str();

  ExtractArgs ex;
  auto* extract_cmd = app.add_subcommand("extract", "Read a symbolic grammar from a checkpoint");
  extract_cmd->add_option("--checkpoint", ex.checkpoint)->required();
  extract_cmd->add_option("--threshold", ex.threshold, "Prune threshold in [0, 1)")
      ->capture_default_str();
  extract_cmd->add_option("--dot", ex.dot, "Write Graphviz DOT here");
  extract_cmd->add_option("--json", ex.json, "Write grammar JSON here");

  DecodeArgs de;
  auto* decode_cmd = app.add_subcommand("decode", "Grammar-constrained decoding of a dataset");
  decode_cmd->add_option("--checkpoint", de.checkpoint)->required();
  decode_cmd->add_option("--dataset", de.dataset)->required();
  decode_cmd->add_option("--out", de.out, "Output JSONL")->required();
  decode_cmd->add_option("--beam", de.beam)->capture_default_str();
  decode_cmd->add_flag("--no-rule-prior", de.no_rule_prior,
                       "Score rules by observation match only");

  ForecastArgs fc;
  auto* forecast_cmd = app.add_subcommand("forecast", "Forecast accuracy over a dataset");
  forecast_cmd->add_option("--checkpoint", fc.checkpoint)->required();
  forecast_cmd->add_option("--dataset", fc.dataset)->required();
  forecast_cmd->add_option("--observe", fc.observe, "Observed fractions")->delimiter(',')
      ->capture_default_str();
  forecast_cmd->add_option("--predict", fc.predict, "Predicted fractions")->delimiter(',')
      ->capture_default_str();
  forecast_cmd->add_option("--mode", fc.mode, "belief or single_path")->capture_default_str();
  forecast_cmd->add_option("--beam", fc.beam)->capture_default_str();
  forecast_cmd->add_option("--out", fc.out, "CSV report");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Per-frame mAP against a dataset");
  eval_cmd->add_option("--dataset", ev.dataset, "Ground-truth dataset JSONL")->required();
  eval_cmd->add_option("--predictions", ev.predictions, "Decode output or dataset JSONL");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Decode the dataset with this model");
  eval_cmd->add_option("--beam", ev.beam)->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "CSV report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*extract_cmd) return cmd_extract(ex, out);
    if (*decode_cmd) return cmd_decode(de, out);
    if (*forecast_cmd) return cmd_forecast(fc, out);
    if (*eval_cmd) return cmd_eval(ev, out);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumericalError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace gramdiff
