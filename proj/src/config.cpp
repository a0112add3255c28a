#include "gramdiff/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gramdiff/errors.hpp"

namespace gramdiff {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"model", {"nonterminals", "rules", "terminals", "terminal_activation", "init_scale"}},
      {"train",
       {"epochs", "learning_rate", "lr_decay_every", "lr_decay_factor", "momentum",
        "temperature", "branching", "max_branches", "seed", "keep_best", "noise",
        "reduction"}},
  };
  return keys;
}

template <typename T>
void read(const pt::ptree& tree, const std::string& key, T& into) {
  const auto value = tree.get_optional<std::string>(key);
  if (!value) return;
  try {
    into = tree.get<T>(key);
  } catch (const pt::ptree_error&) {
    throw InputError("config key " + key + " has invalid value '" + *value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw InputError("config key " + key + " must be true or false, got '" + text + "'");
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

NoiseMode parse_noise_mode(const std::string& name) {
  if (name == "gumbel") return NoiseMode::gumbel;
  if (name == "zero") return NoiseMode::zero;
  throw InputError("unknown noise mode '" + name + "' (expected gumbel|zero)");
}

std::string to_string(NoiseMode mode) { return mode == NoiseMode::gumbel ? "gumbel" : "zero"; }

RunConfig parse_run_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InputError(std::string("malformed config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw InputError("unknown config section [" + section + "]");
    for (const auto& entry : body) {
      if (!it->second.contains(entry.first)) {
        throw InputError("unknown config key " + section + "." + entry.first);
      }
    }
  }

  RunConfig c;
  read(tree, "model.nonterminals", c.model.nonterminals);
  read(tree, "model.rules", c.model.rules);
  read(tree, "model.terminals", c.model.terminals);
  read(tree, "model.init_scale", c.model.init_scale);
  if (auto act = tree.get_optional<std::string>("model.terminal_activation")) {
    c.model.activation = parse_terminal_activation(*act);
  }

  TrainConfig& t = c.train;
  read(tree, "train.epochs", t.epochs);
  read(tree, "train.learning_rate", t.learning_rate);
  read(tree, "train.lr_decay_every", t.lr_decay_every);
  read(tree, "train.lr_decay_factor", t.lr_decay_factor);
  read(tree, "train.momentum", t.momentum);
  read(tree, "train.temperature", t.temperature);
  read(tree, "train.branching", t.branching);
  read(tree, "train.max_branches", t.max_branches);
  read(tree, "train.seed", t.seed);
  c.seed_given = tree.get_optional<std::string>("train.seed").has_value();
  if (auto v = tree.get_optional<std::string>("train.keep_best")) {
    t.keep_best = parse_bool("train.keep_best", *v);
  }
  if (auto v = tree.get_optional<std::string>("train.noise")) t.noise = parse_noise_mode(*v);
  if (auto v = tree.get_optional<std::string>("train.reduction")) {
    t.reduction = parse_loss_reduction(*v);
  }

  if (c.model.nonterminals == 0 || c.model.rules == 0) {
    throw InputError("model.nonterminals and model.rules must be positive");
  }
  if (!(c.model.init_scale >= 0.0)) throw InputError("model.init_scale must be non-negative");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  return parse_run_config(in);
}

void write_run_config(const RunConfig& c, std::ostream& out) {
  const TrainConfig& t = c.train;
  out << "[model]\n"
      << "nonterminals = " << c.model.nonterminals << '\n'
      << "rules = " << c.model.rules << '\n'
      << "terminals = " << c.model.terminals << '\n'
      << "terminal_activation = " << to_string(c.model.activation) << '\n'
      << "init_scale = " << number(c.model.init_scale) << '\n'
      << '\n'
      << "[train]\n"
      << "epochs = " << t.epochs << '\n'
      << "learning_rate = " << number(t.learning_rate) << '\n'
      << "lr_decay_every = " << t.lr_decay_every << '\n'
      << "lr_decay_factor = " << number(t.lr_decay_factor) << '\n'
      << "momentum = " << number(t.momentum) << '\n'
      << "temperature = " << number(t.temperature) << '\n'
      << "branching = " << t.branching << '\n'
      << "max_branches = " << t.max_branches << '\n'
      << "seed = " << t.seed << '\n'
      << "keep_best = " << (t.keep_best ? "true" : "false") << '\n'
      << "noise = " << to_string(t.noise) << '\n'
      << "reduction = " << to_string(t.reduction) << '\n';
}

}  // namespace gramdiff
