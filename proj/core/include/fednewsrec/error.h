#pragma once

#include <stdexcept>
#include <string>

namespace fednewsrec {

// Base class for every error raised by the library. Subclasses identify the
// failing contract so callers (and the CLI) can map them to messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameter, flag, or mechanism setting.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violates a documented invariant (unknown id, empty title, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed text input; the message carries the line number.
class ParseError : public DataError {
 public:
  using DataError::DataError;
};

// Client updates cannot be combined (layout mismatch, no participants).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Checkpoint file is unreadable or its layout does not match the model.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// The privacy budget 2*delta/lambda is undefined when lambda == 0.
class BudgetUndefinedError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace fednewsrec
