#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "spikegrad/losses.hpp"
#include "spikegrad/optimizer.hpp"

namespace spikegrad {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer{};
  std::uint64_t seed = 0;
  ExecutionPlan plan{};
  /// Initial neuron states, re-drawn for every batch.
  StateInit state_init{};
  std::size_t threads = 1;
  /// Stop after the first epoch whose accuracy reaches this value.
  std::optional<double> stop_at_accuracy;

  /// Throws ValidationError for epochs 0, batch_size 0, threads 0 or a bad
  /// optimizer config.
  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  /// Fraction of samples whose argmax spike count matched the label during
  /// the epoch's forward passes.
  double accuracy = 0.0;
  double wall_ms = 0.0;
};

template <typename T>
struct TrainResult {
  ParameterSet<T> params;
  std::vector<EpochMetrics> metrics;
};

/// Mini-batch training with a seeded shuffle per epoch. Throws
/// NumericalError naming the epoch and batch if the loss stops being finite.
template <typename T>
TrainResult<T> train(const NetworkGraph& graph, ParameterSet<T> params, const Dataset<T>& data,
                     const TrainConfig& config,
                     const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Fraction of samples classified correctly by argmax spike count.
template <typename T>
double evaluate_accuracy(const NetworkGraph& graph, const ParameterSet<T>& params,
                         const Dataset<T>& data, const ExecutionPlan& plan,
                         const StateInit& init = {}, std::uint64_t seed = 0);

}  // namespace spikegrad
