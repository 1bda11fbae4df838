#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace catgcn {

// Malformed or inconsistent input data (bad ids, empty feature lists, ...).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A line of an input file failed to parse.
class ParseError : public InputError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : InputError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Shape mismatch or violated precondition on an internal API.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values, overflow, or a failed numerical routine.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, int last_finite_epoch)
      : NumericError(what), last_finite_epoch_(last_finite_epoch) {}

  // Epochs are numbered from 1; 0 means no epoch finished with a finite loss.
  int last_finite_epoch() const noexcept { return last_finite_epoch_; }

 private:
  int last_finite_epoch_;
};

}  // namespace catgcn
