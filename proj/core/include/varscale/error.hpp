#pragma once

#include <stdexcept>
#include <string>

namespace varscale {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible vector/matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or a division by a vanishing norm.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid or missing configuration. `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

// A call that violates an operation's precondition (wrong mode, stale tape).
class ContractError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace varscale
