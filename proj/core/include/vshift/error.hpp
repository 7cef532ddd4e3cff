#pragma once

#include <stdexcept>
#include <string>

namespace vshift {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data problems: malformed files, wrong shapes, bad domains.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t row)
      : DataError(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class DomainError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

/// Numerical failure: singular or indefinite systems.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Caller passed an argument outside its documented range.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace vshift
