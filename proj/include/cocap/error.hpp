#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cocap {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters: dimensions, counts, or flags outside their contract.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A well-formed object whose internal relationships are broken
/// (reference ordering, missing reference frames, out-of-range ids).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that a primitive cannot combine.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized data; carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// File-system failures (missing files, unwritable paths).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cocap
