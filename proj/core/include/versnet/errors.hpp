#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace versnet {

// Every library failure derives from Error so callers (the CLI in
// particular) can map categories onto stable exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

class InvalidLabel : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        detail_(what),
        offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return offset_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Same error with a context prefix such as the file name.
  ParseError in_context(const std::string& context) const {
    return ParseError(context + ": " + detail_, offset_);
  }

 private:
  std::string detail_;
  std::size_t offset_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Raised when a dataset or checkpoint uses a different class alphabet than
// the consumer expects.
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace versnet
