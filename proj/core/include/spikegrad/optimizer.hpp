#pragma once

#include <cstddef>
#include <string_view>

#include "spikegrad/parameters.hpp"

namespace spikegrad {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// learning_rate >= 0 (0 freezes the parameters), betas in [0, 1), eps > 0.
  void validate() const;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// Adam moments; empty for SGD.
template <typename T>
struct OptimizerState {
  std::size_t step = 0;
  ParameterSet<T> m;
  ParameterSet<T> v;
};

template <typename T>
struct OptimizerUpdate {
  ParameterSet<T> params;
  OptimizerState<T> state;
};

/// SGD: p - lr*g. Adam: bias-corrected first and second moments,
/// p - lr * m_hat / (sqrt(v_hat) + eps). Throws ContractError when the
/// gradient keys or shapes differ from the parameters.
template <typename T>
OptimizerUpdate<T> optimizer_step(ParameterSet<T> params, const ParameterSet<T>& grads,
                                  OptimizerState<T> state, const OptimizerConfig& config);

}  // namespace spikegrad
