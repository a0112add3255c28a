#include "gramdiff/grammar.hpp"

#include <fstream>
#include <sstream>

#include "gramdiff/errors.hpp"

namespace gramdiff {

namespace {

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(name) + " has shape " + m.shape() + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = (2.0 * rng.uniform() - 1.0) * scale;
  return m;
}

void squash(TerminalActivation activation, std::span<const double> in, std::span<double> out) {
  if (activation == TerminalActivation::logistic) {
    kernels::sigmoid(in, out);
  } else {
    kernels::softmax(in, {}, 1.0, out);
  }
}

Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                        const char* name) {
  if (!j.is_array() || j.size() != rows) {
    throw InputError(std::string("checkpoint field ") + name + " must be an array of " +
                     std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != cols) {
      throw InputError(std::string("checkpoint field ") + name + " row " + std::to_string(r) +
                       " must hold " + std::to_string(cols) + " numbers");
    }
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

}  // namespace

TerminalActivation parse_terminal_activation(const std::string& name) {
  if (name == "logistic") return TerminalActivation::logistic;
  if (name == "softmax") return TerminalActivation::softmax;
  throw InputError("unknown terminal activation '" + name + "' (expected logistic|softmax)");
}

std::string to_string(TerminalActivation activation) {
  return activation == TerminalActivation::logistic ? "logistic" : "softmax";
}

GrammarModel::GrammarModel(Dimensions d, TerminalActivation act)
    : dims(d),
      activation(act),
      rules(d.nonterminals, d.rules),
      next(d.total_rules(), d.nonterminals),
      emit(d.total_rules(), d.terminals),
      start(1, d.nonterminals),
      context_map(d.context, d.context > 0 ? d.nonterminals : 0) {}

GrammarModel GrammarModel::random(Dimensions d, Rng& rng, double scale,
                                  TerminalActivation act) {
  if (d.nonterminals == 0 || d.rules == 0 || d.terminals == 0) {
    throw DimensionError("model dimensions must be positive");
  }
  GrammarModel m(d, act);
  m.rules = uniform_matrix(d.nonterminals, d.rules, rng, scale);
  m.next = uniform_matrix(d.total_rules(), d.nonterminals, rng, scale);
  m.emit = uniform_matrix(d.total_rules(), d.terminals, rng, scale);
  m.start = uniform_matrix(1, d.nonterminals, rng, scale);
  if (d.context > 0) m.context_map = uniform_matrix(d.context, d.nonterminals, rng, scale);
  return m;
}

void GrammarModel::validate() const {
  if (dims.nonterminals == 0 || dims.rules == 0 || dims.terminals == 0) {
    throw DimensionError("model dimensions must be positive");
  }
  expect_shape(rules, dims.nonterminals, dims.rules, "Wc");
  expect_shape(next, dims.total_rules(), dims.nonterminals, "H1");
  expect_shape(emit, dims.total_rules(), dims.terminals, "H2");
  expect_shape(start, 1, dims.nonterminals, "start_logits");
  if (dims.context > 0) expect_shape(context_map, dims.context, dims.nonterminals, "psi");
  if (!terminal_names.empty() && terminal_names.size() != dims.terminals) {
    throw DimensionError("symbol table names " + std::to_string(terminal_names.size()) +
                         " terminals, model has " + std::to_string(dims.terminals));
  }
  if (!(temperature > 0.0)) throw ParameterError("model temperature must be positive");
}

std::vector<Matrix*> GrammarModel::parameters() {
  std::vector<Matrix*> out{&rules, &next, &emit, &start};
  if (has_context_map()) out.push_back(&context_map);
  return out;
}

std::vector<const Matrix*> GrammarModel::parameters() const {
  std::vector<const Matrix*> out{&rules, &next, &emit, &start};
  if (has_context_map()) out.push_back(&context_map);
  return out;
}

std::vector<std::string> GrammarModel::parameter_names(bool with_context) {
  std::vector<std::string> out{"Wc", "H1", "H2", "start_logits"};
  if (with_context) out.emplace_back("psi");
  return out;
}

Matrix inflate_block_diagonal(const Matrix& compact) {
  Matrix out(compact.rows(), compact.rows() * compact.cols());
  kernels::inflate_block_diagonal(compact.values(), compact.rows(), compact.cols(),
                                  out.values());
  return out;
}

Matrix rule_probabilities(const Matrix& rules, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  Matrix out(rules.rows(), rules.cols());
  for (std::size_t r = 0; r < rules.rows(); ++r) {
    kernels::softmax(rules.row(r), {}, temperature, out.row(r));
  }
  return out;
}

BoundModel::BoundModel(Graph& graph, const GrammarModel& model)
    : graph_(&graph), model_(&model) {
  model.validate();
  rules_ = graph.parameter(model.rules);
  next_ = graph.parameter(model.next);
  emit_ = graph.parameter(model.emit);
  start_ = graph.parameter(model.start);
  if (model.has_context_map()) context_map_ = graph.parameter(model.context_map);
  rule_probs_ = graph.softmax(rules_);
  inflated_ = graph.inflate_block_diagonal(rule_probs_);
}

std::vector<Tensor> BoundModel::parameters() const {
  std::vector<Tensor> out{rules_, next_, emit_, start_};
  if (context_map_) out.push_back(*context_map_);
  return out;
}

Tensor BoundModel::rule_activation(Tensor v) const {
  if (v.rows() != 1 || v.cols() != model_->dims.nonterminals) {
    throw DimensionError("non-terminal vector has shape " + v.value().shape() + ", expected 1x" +
                         std::to_string(model_->dims.nonterminals));
  }
  return graph_->matmul(v, inflated_);
}

Tensor BoundModel::rule_logits(Tensor v) const { return graph_->log(rule_activation(v)); }

BoundModel::Expansion BoundModel::expand(Tensor selection) const {
  if (selection.rows() != 1 || selection.cols() != model_->dims.total_rules()) {
    throw DimensionError("rule selection has shape " + selection.value().shape() +
                         ", expected 1x" + std::to_string(model_->dims.total_rules()));
  }
  Tensor next = graph_->softmax(graph_->matmul(selection, next_));
  Tensor logits = graph_->matmul(selection, emit_);
  Tensor terminal = model_->activation == TerminalActivation::logistic
                        ? graph_->sigmoid(logits)
                        : graph_->softmax(logits);
  return {next, terminal};
}

BoundModel::Step BoundModel::step(Tensor v, StepMode mode, double temperature,
                                  std::span<const double> noise, Rng* rng) const {
  Tensor k = rule_logits(v);
  Tensor selection;
  if (mode == StepMode::deterministic) {
    selection = graph_->softmax(k, temperature);
  } else if (!noise.empty()) {
    selection = graph_->gumbel_softmax(k, temperature, noise);
  } else {
    if (rng == nullptr) throw ConfigurationError("sampled step needs noise or an rng");
    selection = graph_->gumbel_softmax(k, temperature, *rng);
  }
  const Expansion e = expand(selection);
  return {e.next, e.terminal, selection};
}

Tensor BoundModel::initial(const std::vector<double>* context) const {
  if (context == nullptr) return graph_->softmax(start_);
  if (!context_map_) {
    throw ConfigurationError("context vector given but the model has no psi map");
  }
  if (context->size() != model_->dims.context) {
    throw DimensionError("context has " + std::to_string(context->size()) +
                         " entries, psi expects " + std::to_string(model_->dims.context));
  }
  Tensor q = graph_->constant(Matrix::row_vector(*context));
  return graph_->softmax(graph_->matmul(q, *context_map_));
}

StepEvaluator::StepEvaluator(const GrammarModel& model)
    : model_(&model), dims_(model.dims) {
  model.validate();
  inflated_ = inflate_block_diagonal(rule_probabilities(model.rules));
}

void StepEvaluator::step(std::span<const double> v, std::span<const double> noise,
                         double temperature, std::span<double> selection,
                         std::span<double> next, std::span<double> terminal) const {
  // selection doubles as scratch for the logits.
  rule_logits(v, selection);
  expand(selection, noise, temperature, selection, next, terminal);
}

void StepEvaluator::rule_logits(std::span<const double> v, std::span<double> logits) const {
  kernels::matmul(v, 1, dims_.nonterminals, inflated_.values(), dims_.total_rules(), logits);
  kernels::log(logits, logits);
}

void StepEvaluator::expand(std::span<const double> logits, std::span<const double> noise,
                           double temperature, std::span<double> selection,
                           std::span<double> next, std::span<double> terminal) const {
  const std::size_t n = dims_.nonterminals;
  const std::size_t rn = dims_.total_rules();
  const std::size_t t = dims_.terminals;
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  kernels::softmax(logits, noise, temperature, selection);
  kernels::matmul(selection, 1, rn, model_->next.values(), n, next);
  kernels::softmax(next, {}, 1.0, next);
  kernels::matmul(selection, 1, rn, model_->emit.values(), t, terminal);
  squash(model_->activation, terminal, terminal);
}

std::vector<double> StepEvaluator::initial(const std::vector<double>* context) const {
  std::vector<double> v(dims_.nonterminals);
  if (context == nullptr) {
    kernels::softmax(model_->start.values(), {}, 1.0, v);
    return v;
  }
  if (!model_->has_context_map()) {
    throw ConfigurationError("context vector given but the model has no psi map");
  }
  if (context->size() != dims_.context) {
    throw DimensionError("context has " + std::to_string(context->size()) +
                         " entries, psi expects " + std::to_string(dims_.context));
  }
  kernels::matmul(*context, 1, dims_.context, model_->context_map.values(), dims_.nonterminals,
                  v);
  kernels::softmax(v, {}, 1.0, v);
  return v;
}

Generation generate(const GrammarModel& model, std::size_t length, StepMode mode,
                    std::uint64_t seed, double temperature,
                    const std::vector<double>* context) {
  if (length == 0) throw ParameterError("generation length must be at least 1");
  const StepEvaluator eval(model);
  const std::size_t n = eval.nonterminals();
  const std::size_t rn = eval.total_rules();
  Rng rng(seed);

  Generation out{Matrix(length, eval.terminals()), Matrix(length + 1, n), {}};
  std::vector<double> v = eval.initial(context);
  std::copy(v.begin(), v.end(), out.nonterminals.row(0).begin());
  std::vector<double> selection(rn), noise(rn), next(n);
  for (std::size_t t = 0; t < length; ++t) {
    std::span<const double> used_noise;
    if (mode == StepMode::sampled) {
      fill_gumbel(rng, noise);
      used_noise = noise;
    }
    eval.step(v, used_noise, temperature, selection, next, out.terminals.row(t));
    out.rules.push_back(argmax(selection));
    v = next;
    std::copy(v.begin(), v.end(), out.nonterminals.row(t + 1).begin());
  }
  return out;
}

nlohmann::json to_json(const GrammarModel& model) {
  model.validate();
  nlohmann::json doc;
  doc["version"] = kCheckpointVersion;
  doc["N"] = model.dims.nonterminals;
  doc["R"] = model.dims.rules;
  doc["T"] = model.dims.terminals;
  doc["D"] = model.dims.context;
  doc["terminal_activation"] = to_string(model.activation);
  doc["temperature"] = model.temperature;
  doc["Wc"] = model.rules.to_rows();
  doc["H1"] = model.next.to_rows();
  doc["H2"] = model.emit.to_rows();
  doc["start_logits"] = std::vector<double>(model.start.values().begin(), model.start.values().end());
  if (model.has_context_map()) doc["psi"] = model.context_map.to_rows();
  if (!model.terminal_names.empty()) doc["symbol_table"] = {{"terminals", model.terminal_names}};
  return doc;
}

GrammarModel model_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw InputError("unsupported checkpoint version " + std::to_string(version));
    }
    Dimensions d{doc.at("N").get<std::size_t>(), doc.at("R").get<std::size_t>(),
                 doc.at("T").get<std::size_t>(), doc.value("D", std::size_t{0})};
    if (d.nonterminals == 0 || d.rules == 0 || d.terminals == 0) {
      throw InputError("checkpoint dimensions must be positive");
    }
    GrammarModel m(d, parse_terminal_activation(doc.value("terminal_activation", "logistic")));
    m.temperature = doc.value("temperature", 1.0);
    m.rules = matrix_from_json(doc.at("Wc"), d.nonterminals, d.rules, "Wc");
    m.next = matrix_from_json(doc.at("H1"), d.total_rules(), d.nonterminals, "H1");
    m.emit = matrix_from_json(doc.at("H2"), d.total_rules(), d.terminals, "H2");
    const auto start = doc.at("start_logits").get<std::vector<double>>();
    if (start.size() != d.nonterminals) {
      throw InputError("checkpoint start_logits must hold N numbers");
    }
    m.start = Matrix::row_vector(start);
    if (d.context > 0) m.context_map = matrix_from_json(doc.at("psi"), d.context, d.nonterminals, "psi");
    if (doc.contains("symbol_table")) {
      m.terminal_names = doc["symbol_table"].value("terminals", std::vector<std::string>{});
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const GrammarModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out << to_json(model).dump(2) << '\n';
}

GrammarModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace gramdiff
