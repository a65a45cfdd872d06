#pragma once

#include <stdexcept>
#include <string>

namespace dunet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An operator attribute outside its legal range (e.g. dilation < 1).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an API contract, e.g. backward() from a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed WAV or checkpoint bytes.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid model/train/run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset layout or content problem (missing stems, empty split, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class NumericAbort : public Error {
 public:
  NumericAbort(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace dunet
