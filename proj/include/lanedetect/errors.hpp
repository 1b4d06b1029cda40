#pragma once

#include <stdexcept>
#include <string>

namespace lanedetect {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible or invalid tensor/layer shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Element count does not fit the index type.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its mathematical domain (rates, thresholds, probabilities).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Dataset content that violates an invariant (mask values, dimensions).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Binary file that cannot be decoded (magic, truncation, missing fields).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or codec failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Optimizer or training state became non-finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lanedetect
