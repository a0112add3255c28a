#pragma once

// Run configuration for the command-line tool, stored as INI:
//
//   [model]
//   nonterminals = 3
//   rules = 2
//   terminals = 0            ; 0 = take T from the dataset
//   terminal_activation = logistic
//   init_scale = 0.1
//
//   [train]
//   epochs = 400
//   learning_rate = 0.1
//   ...                      ; one key per TrainConfig field
//
// Missing keys keep their defaults; unknown keys are rejected.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "gramdiff/grammar.hpp"
#include "gramdiff/training.hpp"

namespace gramdiff {

struct ModelConfig {
  std::size_t nonterminals = 3;
  std::size_t rules = 2;
  std::size_t terminals = 0;
  TerminalActivation activation = TerminalActivation::logistic;
  double init_scale = 0.1;

  bool operator==(const ModelConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  bool seed_given = false;  // train.seed was present in the file
};

NoiseMode parse_noise_mode(const std::string& name);
std::string to_string(NoiseMode mode);

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);
// Every key, full precision; parse_run_config reads it back unchanged.
void write_run_config(const RunConfig& config, std::ostream& out);

}  // namespace gramdiff
