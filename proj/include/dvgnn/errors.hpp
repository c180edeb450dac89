#pragma once

#include <stdexcept>
#include <string>

namespace dvgnn {

// Base for every error raised by the library. The CLI maps subclasses onto
// exit codes (usage 2, data 3, divergence 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform for an op.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data is malformed, missing, or non-finite.
class DataError : public Error {
 public:
  using Error::Error;
};

// Parse failure with file/line context.
class ParseError : public DataError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

// Non-finite values appeared during optimization or evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dvgnn
