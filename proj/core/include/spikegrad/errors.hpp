#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikegrad {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied values: configs, hyperparameters, CSV/JSON documents.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not fit the operation.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed network graphs. Carries the node ids of a delay-0 cycle when
/// that is the reason for rejection.
class GraphError : public ValidationError {
 public:
  explicit GraphError(const std::string& what, std::vector<std::size_t> cycle = {})
      : ValidationError(what), cycle_(std::move(cycle)) {}

  const std::vector<std::size_t>& cycle() const noexcept { return cycle_; }

 private:
  std::vector<std::size_t> cycle_;
};

/// An execution plan that the graph cannot honour.
class PlanError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// API misuse that is a programming error rather than bad input.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses, failed gradient checks, diverging training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace spikegrad
