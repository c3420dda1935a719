#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace perronlab {

class ParseError : public std::runtime_error {
 public:
  enum class Kind { Syntax, UnknownIdentifier, VariableOutOfRange, BadLiteral };

  ParseError(Kind kind, std::size_t position, const std::string& what);

  Kind kind() const { return kind_; }
  /// Zero-based byte offset into the source text.
  std::size_t position() const { return position_; }

 private:
  Kind kind_;
  std::size_t position_;
};

/// Evaluation hit division by zero or produced a non-finite value.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested derivative passes through min/max/abs or a variable exponent.
class DifferentiationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExplosionError : public std::runtime_error {
 public:
  ExplosionError(long path, long step, const std::string& what)
      : std::runtime_error(what), path_(path), step_(step) {}
  long path() const { return path_; }
  long step() const { return step_; }

 private:
  long path_;
  long step_;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace perronlab
