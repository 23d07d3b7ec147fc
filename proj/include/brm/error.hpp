#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace brm {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// An action was applied in a configuration where it is not legal.
class IllegalAction : public Error {
 public:
  using Error::Error;
};

// Bad caller input that is not a data problem (flag combinations, sizes).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace brm
