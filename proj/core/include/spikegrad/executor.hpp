#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string_view>

#include "spikegrad/graph.hpp"
#include "spikegrad/neurons.hpp"
#include "spikegrad/parameters.hpp"
#include "spikegrad/tape.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

enum class Scheduler { step_by_step, layer_by_layer };

std::string_view to_string(Scheduler s);
/// "step_by_step" / "layer_by_layer"; throws ValidationError otherwise.
Scheduler parse_scheduler(std::string_view name);

struct ExecutionPlan {
  Scheduler scheduler = Scheduler::step_by_step;
  /// Loop-body replication factor for layer_by_layer scans.
  std::size_t unroll = 1;
  /// Segment length for recompute-based backward passes.
  std::optional<std::size_t> checkpoint_every;

  /// Throws PlanError when the plan cannot execute `graph` (layer_by_layer
  /// with delay edges, checkpointing under layer_by_layer) and
  /// ValidationError for bad numbers (unroll 0, checkpoint_every 0 or > steps).
  void validate(const NetworkGraph& graph, std::size_t steps) const;

  friend bool operator==(const ExecutionPlan&, const ExecutionPlan&) = default;
};

template <typename T>
using StateMap = std::map<NodeId, NeuronState<T>>;

/// Per-step node outputs flattened to [T x N], or [T x B x N] for batched input.
template <typename T>
struct SpikeRecord {
  std::map<NodeId, Tensor<T>> outputs;
  /// Every node's output; filled only when tracing.
  std::map<NodeId, Tensor<T>> hidden;
};

template <typename T>
struct RunResult {
  StateMap<T> final_states;
  SpikeRecord<T> record;
};

struct RunOptions {
  bool trace = false;
};

/// One state block per stateful node. `batch` > 0 prepends a batch axis.
/// Each node draws from its own stream derived from (seed, node id).
template <typename T>
StateMap<T> init_states(const NetworkGraph& graph, const StateInit& init, std::uint64_t seed,
                        std::size_t batch = 0);

/// Forward evaluation without recording. `input` is [T x input_shape] or
/// [T x B x input_shape]; states must match (see init_states).
template <typename T>
RunResult<T> run(const NetworkGraph& graph, const ParameterSet<T>& params,
                 const ExecutionPlan& plan, const Tensor<T>& input, const StateMap<T>& init,
                 const RunOptions& options = {});

/// Forward evaluation on a caller-owned tape. Parameters may be leaves of
/// `tape`; every operation is recorded when the tape records.
template <typename T>
RunResult<T> run_on_tape(Tape<T>& tape, const NetworkGraph& graph, const ParameterSet<T>& params,
                         const ExecutionPlan& plan, const Tensor<T>& input,
                         const StateMap<T>& init, const RunOptions& options = {});

/// Maps the record of a run to a scalar loss on the given tape.
template <typename T>
using LossHead = std::function<Tensor<T>(Tape<T>&, const SpikeRecord<T>&)>;

/// Tape accounting of a gradient computation. Boundary tensors are the
/// states and delay carries kept between checkpoint segments.
struct MemoryStats {
  std::size_t forward_tape_nodes = 0;
  std::size_t peak_tape_nodes = 0;
  std::size_t boundary_tensors = 0;
  std::size_t segments = 1;

  std::size_t peak_live_tensors() const noexcept { return peak_tape_nodes + boundary_tensors; }
};

template <typename T>
struct GradResult {
  T loss{0};
  ParameterSet<T> grads;
  SpikeRecord<T> record;
  StateMap<T> final_states;
  MemoryStats memory;
};

/// Loss and parameter gradients by BPTT. Dispatches to
/// run_with_checkpointing when plan.checkpoint_every is set.
template <typename T>
GradResult<T> value_and_grad(const NetworkGraph& graph, const ParameterSet<T>& params,
                             const ExecutionPlan& plan, const Tensor<T>& input,
                             const StateMap<T>& init, const LossHead<T>& head);

/// Same result as full BPTT, bit for bit, while holding only one segment's
/// tape at a time. The forward pass keeps states at segment boundaries; the
/// backward pass replays each segment from its boundary, latest first.
template <typename T>
GradResult<T> run_with_checkpointing(const NetworkGraph& graph, const ParameterSet<T>& params,
                                     const ExecutionPlan& plan, const Tensor<T>& input,
                                     const StateMap<T>& init, const LossHead<T>& head);

}  // namespace spikegrad
