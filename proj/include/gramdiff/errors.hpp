#pragma once

#include <stdexcept>
#include <string>

namespace gramdiff {

// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar knob is outside its domain (temperature <= 0, threshold >= 1, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// The model and the request are incompatible (e.g. context without psi).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing user input: files, records, grammar text.
class InputError : public Error {
 public:
  using Error::Error;
};

// Loss or parameters left the finite range during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Sampling reached a non-terminal without productions.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// A metric has no defined value for the given data (e.g. no positives).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace gramdiff
