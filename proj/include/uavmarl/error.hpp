#pragma once

#include <stdexcept>
#include <string>

namespace uavmarl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value; field() names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Vector or sequence length does not match what the callee expects.
class ArityError : public Error {
 public:
  using Error::Error;
};

class EpisodeEndError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition (e.g. a stale forward cache).
class ContractError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Checkpoint does not fit the environment or network it is loaded into.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace uavmarl
