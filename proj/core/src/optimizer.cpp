#include "spikegrad/optimizer.hpp"

#include <cmath>
#include <string>

namespace spikegrad {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ValidationError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning rate must be finite and non-negative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ValidationError("Adam eps must be positive");
}

template <typename T>
OptimizerUpdate<T> optimizer_step(ParameterSet<T> params, const ParameterSet<T>& grads,
                                  OptimizerState<T> state, const OptimizerConfig& config) {
  config.validate();
  if (grads.size() != params.size()) {
    throw ContractError("optimizer_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("optimizer_step: no gradient for " + name);
    if (it->second.shape() != p.shape()) {
      throw ContractError("optimizer_step: gradient of " + name + " has shape " +
                          to_string(it->second.shape()) + ", parameter has " + to_string(p.shape()));
    }
  }

  ++state.step;
  const T lr = static_cast<T>(config.learning_rate);
  if (config.kind == OptimizerKind::sgd) {
    for (auto& [name, p] : params) {
      const auto g = grads.at(name).data();
      auto d = p.mutable_data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * g[i];
    }
    return {std::move(params), std::move(state)};
  }

  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T eps = static_cast<T>(config.eps);
  const auto t = static_cast<double>(state.step);
  const T c1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  for (auto& [name, p] : params) {
    const auto g = grads.at(name).data();
    auto& m = state.m.try_emplace(name, p.shape()).first->second;
    auto& v = state.v.try_emplace(name, p.shape()).first->second;
    auto md = m.mutable_data();
    auto vd = v.mutable_data();
    auto d = p.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      md[i] = b1 * md[i] + (T{1} - b1) * g[i];
      vd[i] = b2 * vd[i] + (T{1} - b2) * g[i] * g[i];
      const T m_hat = md[i] / c1;
      const T v_hat = vd[i] / c2;
      d[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
  return {std::move(params), std::move(state)};
}

template OptimizerUpdate<float> optimizer_step<float>(ParameterSet<float>, const ParameterSet<float>&,
                                                      OptimizerState<float>, const OptimizerConfig&);
template OptimizerUpdate<double> optimizer_step<double>(ParameterSet<double>,
                                                        const ParameterSet<double>&,
                                                        OptimizerState<double>,
                                                        const OptimizerConfig&);

}  // namespace spikegrad
