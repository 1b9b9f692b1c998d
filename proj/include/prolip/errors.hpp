#pragma once

#include <stdexcept>
#include <string>

namespace prolip {

// Invalid inputs: dimension mismatches, broken invariants, bad flags.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite intermediates, underflow, failed numeric contracts.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed persisted artifacts; carries a 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : std::runtime_error(what), line_(-1) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

// Synthetic corpus constraints unsatisfiable within the retry budget.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace prolip
