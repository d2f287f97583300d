#pragma once

#include <stdexcept>
#include <string>

namespace refsr {

/// Base of every error the library throws. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Precondition violated by the caller (bad shape, bad scale, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Wrong or missing configuration: arch mismatch, missing weight file, unfitted model.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace refsr
