#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eegadapt {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Iterative routines that did not converge, non-finite activations, diverging losses.
class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what, double residual = 0.0)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class NotPositiveSemidefinite : public Error {
 public:
  explicit NotPositiveSemidefinite(const std::string& what, double min_eigenvalue)
      : Error(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class EmptyState : public Error {
 public:
  using Error::Error;
};

class InvalidMode : public Error {
 public:
  using Error::Error;
};

// Malformed weight or trial files. `offset` is the byte position where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& field, std::size_t offset, const std::string& detail)
      : Error("format error in field '" + field + "' at byte " + std::to_string(offset) + ": " +
              detail),
        field_(field),
        offset_(offset) {}
  const std::string& field() const { return field_; }
  std::size_t offset() const { return offset_; }

 private:
  std::string field_;
  std::size_t offset_;
};

}  // namespace eegadapt
