#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spikegrad/executor.hpp"

namespace spikegrad {

/// One labelled example: input [T x input_shape] and a one-hot target.
template <typename T>
struct Sample {
  Tensor<T> input;
  Tensor<T> target;
};

template <typename T>
using Dataset = std::vector<Sample<T>>;

/// Record of the loss output node: the output with the largest node id.
template <typename T>
const Tensor<T>& last_output(const SpikeRecord<T>& record);

/// Per-class spike counts of the last output node, summed over time.
template <typename T>
Tensor<T> spike_counts(const SpikeRecord<T>& record);

/// Index of the largest count; ties go to the lowest index.
template <typename T>
std::size_t predicted_class(const Tensor<T>& counts);

/// Index of the 1 in a one-hot target.
template <typename T>
std::size_t target_class(const Tensor<T>& target);

/// Softmax cross-entropy of the summed output spikes against `target`.
/// Throws DimensionError when the class count differs from target length.
template <typename T>
Tensor<T> spike_count_ce_loss(Tape<T>& tape, const SpikeRecord<T>& record,
                              const Tensor<T>& target);

template <typename T>
LossHead<T> spike_count_ce_head(Tensor<T> target);

/// 0.5 * ||counts - target||^2 on the last output node.
template <typename T>
LossHead<T> count_squared_error_head(Tensor<T> target);

template <typename T>
using HeadFactory = std::function<LossHead<T>(const Sample<T>&)>;

template <typename T>
HeadFactory<T> cross_entropy_heads();

struct LossOptions {
  StateInit state_init{};
  /// Sample i of a batch starts from init_states(graph, state_init, mix_seed(state_seed, i)).
  std::uint64_t state_seed = 0;
  /// Worker threads for per-sample passes; gradients are reduced in sample order.
  std::size_t threads = 1;
};

template <typename T>
struct BatchResult {
  T loss{0};
  ParameterSet<T> grads;
  /// Per-sample output spike counts, in batch order.
  std::vector<Tensor<T>> counts;
};

/// Mean loss over the batch and its gradient. Throws ValidationError on an
/// empty batch. The default head is spike_count_ce_head.
template <typename T>
BatchResult<T> loss_and_grad(const NetworkGraph& graph, const ParameterSet<T>& params,
                             const ExecutionPlan& plan, std::span<const Sample<T>> batch,
                             const LossOptions& options = {}, const HeadFactory<T>& heads = {});

/// Forward-only mean loss, same conventions as loss_and_grad.
template <typename T>
T batch_loss(const NetworkGraph& graph, const ParameterSet<T>& params, const ExecutionPlan& plan,
             std::span<const Sample<T>> batch, const LossOptions& options = {},
             const HeadFactory<T>& heads = {});

}  // namespace spikegrad
