#include "spikegrad/executor.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "spikegrad/errors.hpp"
#include "spikegrad/random.hpp"
#include "scan.hpp"

namespace spikegrad {

std::string_view to_string(Scheduler s) {
  return s == Scheduler::step_by_step ? "step_by_step" : "layer_by_layer";
}

Scheduler parse_scheduler(std::string_view name) {
  if (name == "step_by_step") return Scheduler::step_by_step;
  if (name == "layer_by_layer") return Scheduler::layer_by_layer;
  throw ValidationError("unknown scheduler '" + std::string(name) +
                        "' (expected step_by_step or layer_by_layer)");
}

void ExecutionPlan::validate(const NetworkGraph& graph, std::size_t steps) const {
  if (unroll == 0) throw ValidationError("unroll must be at least 1");
  if (scheduler == Scheduler::layer_by_layer && graph.has_delay_edges()) {
    throw PlanError("layer_by_layer cannot run a graph with delay-1 edges; use step_by_step");
  }
  if (checkpoint_every) {
    if (*checkpoint_every == 0) throw ValidationError("checkpoint_every must be at least 1");
    if (*checkpoint_every > steps) {
      throw ValidationError("checkpoint_every " + std::to_string(*checkpoint_every) +
                            " exceeds the number of steps " + std::to_string(steps));
    }
    if (scheduler != Scheduler::step_by_step) {
      throw PlanError("checkpointing requires the step_by_step scheduler");
    }
  }
}

namespace {

Shape concat(const Shape& a, const Shape& b) {
  Shape out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

template <typename T>
Tensor<T> reshape_if(Tape<T>& tape, const Tensor<T>& t, const Shape& shape) {
  return t.shape() == shape ? t : tape.reshape(t, shape);
}

/// Row `index` of the leading axis as a standalone tensor.
template <typename T>
Tensor<T> row(const Tensor<T>& t, std::size_t index) {
  Shape shape(t.shape().begin() + 1, t.shape().end());
  const std::size_t n = numel(shape);
  const auto data = t.data().subspan(index * n, n);
  return Tensor<T>(std::move(shape), Buffer<T>(data.begin(), data.end()));
}

/// Validates the input tensor and returns (steps, batch lead shape).
template <typename T>
std::pair<std::size_t, Shape> check_input(const NetworkGraph& graph, const Tensor<T>& input) {
  const Shape& in = graph.input_shape();
  const Shape& s = input.shape();
  const bool plain = s.size() == in.size() + 1 && std::equal(in.begin(), in.end(), s.begin() + 1);
  const bool batched =
      s.size() == in.size() + 2 && std::equal(in.begin(), in.end(), s.begin() + 2);
  if (!plain && !batched) {
    throw DimensionError("input " + to_string(s) + " must be [T x " + to_string(in) +
                         "] or [T x B x " + to_string(in) + "]");
  }
  if (s[0] == 0) throw DimensionError("input has zero time steps");
  return {s[0], batched ? Shape{s[1]} : Shape{}};
}

template <typename T>
void check_states(const NetworkGraph& graph, const StateMap<T>& states, const Shape& lead) {
  const auto stateful = graph.stateful_nodes();
  for (NodeId id : stateful) {
    auto it = states.find(id);
    if (it == states.end()) {
      throw ValidationError("no initial state for stateful node " + graph.node(id).name);
    }
    const Shape want = concat(lead, graph.out_shape(id));
    const auto& st = it->second;
    if (st.U.shape() != want || st.I.shape() != want || st.S.shape() != want) {
      throw DimensionError("state of " + graph.node(id).name + " has shape " +
                           to_string(st.U.shape()) + ", expected " + to_string(want));
    }
  }
  if (states.size() != stateful.size()) {
    throw ValidationError("state map has entries for nodes that are not stateful");
  }
}

template <typename T>
ParameterSet<T> bind(Tape<T>& tape, const ParameterSet<T>& params) {
  ParameterSet<T> bound;
  for (const auto& [name, value] : params) bound.emplace(name, tape.leaf(value.detached()));
  return bound;
}

template <typename T>
struct StepLog {
  std::map<NodeId, std::vector<Tensor<T>>> outputs;
  std::map<NodeId, std::vector<Tensor<T>>> hidden;
};

template <typename T>
using CarryMap = std::map<NodeId, Tensor<T>>;

/// Evaluates graph nodes on one tape. `lead` is the batch axis (or nothing)
/// for per-step values; whole-sequence calls prepend the time axis.
template <typename T>
class Engine {
 public:
  Engine(Tape<T>& tape, const NetworkGraph& graph, const ParameterSet<T>& params, Shape lead)
      : tape_(tape), graph_(graph), lead_(std::move(lead)) {
    const auto find = [&](const std::string& name) {
      auto it = params.find(name);
      if (it == params.end()) throw ValidationError("missing parameter " + name);
      return it->second;
    };
    for (const auto& node : graph.nodes()) {
      Weights w;
      if (const auto* l = std::get_if<LinearLayer>(&node.kind)) {
        w.weight = find(weight_name(node));
        if (l->bias) w.bias = find(bias_name(node));
      } else if (const auto* c = std::get_if<ConvLayer>(&node.kind)) {
        w.weight = find(weight_name(node));
        if (c->bias) w.bias = find(bias_name(node));
      }
      weights_.emplace(node.id, std::move(w));
    }
    for (std::size_t i = 0; i < graph.edges().size(); ++i) {
      const Edge& e = graph.edges()[i];
      if (e.project) projections_.emplace(i, find(projection_name(graph, e)));
    }
  }

  CarryMap<T> initial_carry() const {
    CarryMap<T> carry;
    for (NodeId s : graph_.delay_sources()) {
      carry.emplace(s, Tensor<T>(concat(lead_, graph_.out_shape(s))));
    }
    return carry;
  }

  /// Step-by-step over [t0, t1). `states` and `carry` advance in place.
  void run_steps(const Tensor<T>& input, std::size_t t0, std::size_t t1, StateMap<T>& states,
                 CarryMap<T>& carry, StepLog<T>& log, bool trace) {
    std::map<NodeId, Tensor<T>> out;
    std::map<NodeId, Tensor<T>> delayed;
    for (std::size_t t = t0; t < t1; ++t) {
      // One identity per carry so every cross-step value has a single reader.
      delayed.clear();
      for (const auto& [src, value] : carry) delayed.emplace(src, tape_.identity(value));

      const Tensor<T> x = tape_.select(input, t);
      out.clear();
      for (NodeId id : graph_.order()) {
        const Tensor<T> acc = gather(id, graph_.is_input(id) ? &x : nullptr, out, &delayed, lead_);
        const LayerNode& node = graph_.node(id);
        if (const auto* l = std::get_if<LifLayer>(&node.kind)) {
          auto r = neuron_step(*l, states.at(id), acc);
          states[id] = std::move(r.state);
          out.emplace(id, std::move(r.spikes));
        } else {
          out.emplace(id, apply_stateless(node, acc, lead_));
        }
      }
      for (auto& [src, value] : carry) value = out.at(src);
      for (NodeId o : graph_.outputs()) {
        log.outputs[o].push_back(
            reshape_if(tape_, out.at(o), concat(lead_, {numel(graph_.out_shape(o))})));
      }
      if (trace) {
        for (const auto& [id, value] : out) {
          log.hidden[id].push_back(
              value.detached().reshaped(concat(lead_, {numel(graph_.out_shape(id))})));
        }
      }
    }
  }

  /// Layer-by-layer over the whole sequence; returns each node's [T x ...] output.
  std::map<NodeId, Tensor<T>> run_layers(const Tensor<T>& input, StateMap<T>& states,
                                         std::size_t unroll) {
    const std::size_t steps = input.dim(0);
    const Shape seq = concat({steps}, lead_);
    std::map<NodeId, Tensor<T>> full;
    for (NodeId id : graph_.order()) {
      const Tensor<T> acc = gather(id, graph_.is_input(id) ? &input : nullptr, full, nullptr, seq);
      const LayerNode& node = graph_.node(id);
      if (const auto* l = std::get_if<LifLayer>(&node.kind)) {
        NeuronState<T> st = states.at(id);
        if (!tape_.recording() && !l->smooth_sharpness) {
          // Nothing to record: run the recurrence as one fused loop over time.
          full.emplace(id, lif_scan(st, acc, l->params, unroll));
          states[id] = std::move(st);
          continue;
        }
        std::vector<Tensor<T>> spikes(steps);
        auto body = [&](std::size_t t) {
          auto r = neuron_step(*l, st, tape_.select(acc, t));
          st = std::move(r.state);
          spikes[t] = std::move(r.spikes);
        };
        detail::scan(steps, unroll, body);
        states[id] = std::move(st);
        full.emplace(id, tape_.stack(spikes));
      } else {
        full.emplace(id, apply_stateless(node, acc, seq));
      }
    }
    return full;
  }

  Tape<T>& tape() { return tape_; }

 private:
  struct Weights {
    Tensor<T> weight;
    std::optional<Tensor<T>> bias;
  };

  /// External input first, then incoming edges in edge-list order.
  Tensor<T> gather(NodeId id, const Tensor<T>* external, const std::map<NodeId, Tensor<T>>& now,
                   const std::map<NodeId, Tensor<T>>* delayed, const Shape& lead) {
    std::optional<Tensor<T>> acc;
    if (external != nullptr) acc = *external;
    for (std::size_t ei : graph_.incoming(id)) {
      const Edge& e = graph_.edges()[ei];
      const Tensor<T>& src = e.delay == 0 ? now.at(e.src) : delayed->at(e.src);
      Tensor<T> v = edge_value(ei, e, src, lead);
      acc = acc ? tape_.add(*acc, v) : std::move(v);
    }
    if (!acc) return Tensor<T>(concat(lead, graph_.in_shape(id)));
    return *acc;
  }

  Tensor<T> edge_value(std::size_t index, const Edge& e, const Tensor<T>& v, const Shape& lead) {
    if (!e.project) return v;
    const Tensor<T>& p = projections_.at(index);
    const std::size_t n_src = numel(graph_.out_shape(e.src));
    const std::size_t n_dst = numel(graph_.in_shape(e.dst));
    if (lead.empty()) return tape_.matmul(reshape_if(tape_, v, {n_src}), p);
    const Tensor<T> y = tape_.matmul(reshape_if(tape_, v, {numel(lead), n_src}), p);
    return reshape_if(tape_, y, concat(lead, {n_dst}));
  }

  Tensor<T> apply_stateless(const LayerNode& node, const Tensor<T>& x, const Shape& lead) {
    const Weights& w = weights_.at(node.id);
    if (const auto* l = std::get_if<LinearLayer>(&node.kind)) {
      if (lead.empty()) {
        Tensor<T> y = tape_.matmul(x, w.weight);
        return w.bias ? tape_.add_bias(y, *w.bias, 0) : y;
      }
      Tensor<T> y = tape_.matmul(reshape_if(tape_, x, {numel(lead), l->in}), w.weight);
      if (w.bias) y = tape_.add_bias(y, *w.bias, 1);
      return reshape_if(tape_, y, concat(lead, {l->out}));
    }
    if (const auto* c = std::get_if<ConvLayer>(&node.kind)) {
      if (lead.empty()) {
        Tensor<T> y = tape_.conv2d(x, w.weight, c->stride, c->padding);
        return w.bias ? tape_.add_bias(y, *w.bias, 0) : y;
      }
      const Shape& in = graph_.in_shape(node.id);
      Tensor<T> y = tape_.conv2d(reshape_if(tape_, x, concat({numel(lead)}, in)), w.weight,
                                 c->stride, c->padding);
      if (w.bias) y = tape_.add_bias(y, *w.bias, 1);
      return reshape_if(tape_, y, concat(lead, graph_.out_shape(node.id)));
    }
    // flatten
    return reshape_if(tape_, x, concat(lead, {numel(graph_.in_shape(node.id))}));
  }

  LifStepResult<T> neuron_step(const LifLayer& layer, const NeuronState<T>& state,
                               const Tensor<T>& x) {
    if (layer.smooth_sharpness) {
      return lif_smooth_step(tape_, state, x, layer.params, *layer.smooth_sharpness);
    }
    return lif_step(tape_, state, x, layer.params);
  }

  Tape<T>& tape_;
  const NetworkGraph& graph_;
  Shape lead_;
  std::map<NodeId, Weights> weights_;
  std::map<std::size_t, Tensor<T>> projections_;
};

template <typename T>
SpikeRecord<T> detach(const SpikeRecord<T>& r) {
  SpikeRecord<T> out;
  for (const auto& [id, t] : r.outputs) out.outputs.emplace(id, t.detached());
  for (const auto& [id, t] : r.hidden) out.hidden.emplace(id, t.detached());
  return out;
}

template <typename T>
StateMap<T> detach(const StateMap<T>& states) {
  StateMap<T> out;
  for (const auto& [id, s] : states) {
    out.emplace(id, NeuronState<T>{s.U.detached(), s.I.detached(), s.S.detached()});
  }
  return out;
}

template <typename T>
Tensor<T> check_loss(const Tensor<T>& loss) {
  if (loss.size() != 1 || loss.rank() > 1) {
    throw ContractError("loss head must return a scalar, got " + to_string(loss.shape()));
  }
  return loss;
}

}  // namespace

template <typename T>
StateMap<T> init_states(const NetworkGraph& graph, const StateInit& init, std::uint64_t seed,
                        std::size_t batch) {
  const Shape lead = batch > 0 ? Shape{batch} : Shape{};
  StateMap<T> states;
  for (NodeId id : graph.stateful_nodes()) {
    states.emplace(id, init_state<T>(concat(lead, graph.out_shape(id)), init, mix_seed(seed, id)));
  }
  return states;
}

template <typename T>
RunResult<T> run_on_tape(Tape<T>& tape, const NetworkGraph& graph, const ParameterSet<T>& params,
                         const ExecutionPlan& plan, const Tensor<T>& input,
                         const StateMap<T>& init, const RunOptions& options) {
  const auto [steps, lead] = check_input(graph, input);
  plan.validate(graph, steps);
  check_states(graph, init, lead);

  Engine<T> engine(tape, graph, params, lead);
  RunResult<T> result;
  result.final_states = init;

  if (plan.scheduler == Scheduler::step_by_step) {
    CarryMap<T> carry = engine.initial_carry();
    StepLog<T> log;
    engine.run_steps(input, 0, steps, result.final_states, carry, log, options.trace);
    for (auto& [id, parts] : log.outputs) result.record.outputs.emplace(id, tape.stack(parts));
    for (auto& [id, parts] : log.hidden) {
      result.record.hidden.emplace(id, Tape<T>(false).stack(parts));
    }
    return result;
  }

  auto full = engine.run_layers(input, result.final_states, plan.unroll);
  const Shape seq = concat({steps}, lead);
  for (NodeId o : graph.outputs()) {
    result.record.outputs.emplace(
        o, reshape_if(tape, full.at(o), concat(seq, {numel(graph.out_shape(o))})));
  }
  if (options.trace) {
    for (const auto& [id, value] : full) {
      result.record.hidden.emplace(
          id, value.detached().reshaped(concat(seq, {numel(graph.out_shape(id))})));
    }
  }
  return result;
}

template <typename T>
RunResult<T> run(const NetworkGraph& graph, const ParameterSet<T>& params,
                 const ExecutionPlan& plan, const Tensor<T>& input, const StateMap<T>& init,
                 const RunOptions& options) {
  check_parameters(graph, params);
  Tape<T> tape(false);
  return run_on_tape(tape, graph, params, plan, input, init, options);
}

template <typename T>
GradResult<T> value_and_grad(const NetworkGraph& graph, const ParameterSet<T>& params,
                             const ExecutionPlan& plan, const Tensor<T>& input,
                             const StateMap<T>& init, const LossHead<T>& head) {
  if (plan.checkpoint_every) return run_with_checkpointing(graph, params, plan, input, init, head);
  check_parameters(graph, params);

  Tape<T> tape;
  const ParameterSet<T> bound = bind(tape, params);
  RunResult<T> rr = run_on_tape(tape, graph, bound, plan, input, init);

  GradResult<T> result;
  result.memory.forward_tape_nodes = tape.size();
  const Tensor<T> loss = check_loss(head(tape, rr.record));
  result.memory.peak_tape_nodes = tape.size();
  result.loss = loss.item();

  const Gradients<T> g = tape.backward(loss);
  for (const auto& [name, leaf] : bound) result.grads.emplace(name, g.at(leaf));
  result.record = detach(rr.record);
  result.final_states = detach(rr.final_states);
  return result;
}

// Replaying a segment rebuilds exactly the nodes full BPTT records for those
// steps, in the same order. Seeding parameter leaves with the running sums,
// the per-step record nodes with their loss adjoints, and the segment-end
// state with the adjoints carried back from the later segment reproduces
// the full sweep's accumulation order, so results match bit for bit.
template <typename T>
GradResult<T> run_with_checkpointing(const NetworkGraph& graph, const ParameterSet<T>& params,
                                     const ExecutionPlan& plan, const Tensor<T>& input,
                                     const StateMap<T>& init, const LossHead<T>& head) {
  if (!plan.checkpoint_every) {
    throw ValidationError("run_with_checkpointing: checkpoint_every is not set");
  }
  check_parameters(graph, params);
  const auto [steps, lead] = check_input(graph, input);
  plan.validate(graph, steps);
  check_states(graph, init, lead);

  const std::size_t k = *plan.checkpoint_every;
  const std::size_t segments = (steps + k - 1) / k;

  struct Boundary {
    StateMap<T> states;
    CarryMap<T> carry;
  };

  GradResult<T> result;
  result.memory.segments = segments;

  // Forward: untaped, keeping only the segment boundaries.
  std::vector<Boundary> bounds;
  bounds.reserve(segments);
  {
    Tape<T> fwd(false);
    Engine<T> engine(fwd, graph, params, lead);
    StateMap<T> states = init;
    CarryMap<T> carry = engine.initial_carry();
    StepLog<T> log;
    for (std::size_t s = 0; s < segments; ++s) {
      bounds.push_back({states, carry});
      result.memory.boundary_tensors += 3 * states.size() + carry.size();
      engine.run_steps(input, s * k, std::min(steps, (s + 1) * k), states, carry, log, false);
    }
    for (auto& [id, parts] : log.outputs) result.record.outputs.emplace(id, fwd.stack(parts));
    result.final_states = std::move(states);
    result.memory.forward_tape_nodes = fwd.size();
  }

  // Loss and its adjoint with respect to the recorded outputs.
  std::map<NodeId, Tensor<T>> record_grad;
  {
    Tape<T> tape;
    SpikeRecord<T> leaves;
    for (const auto& [id, t] : result.record.outputs) leaves.outputs.emplace(id, tape.leaf(t));
    const Tensor<T> loss = check_loss(head(tape, leaves));
    result.loss = loss.item();
    const Gradients<T> g = tape.backward(loss);
    for (const auto& [id, leaf] : leaves.outputs) record_grad.emplace(id, g.at(leaf));
    result.memory.peak_tape_nodes = tape.size();
  }

  std::map<NodeId, std::pair<Tensor<T>, Tensor<T>>> state_grad;
  CarryMap<T> carry_grad;
  bool carried = false;

  for (std::size_t s = segments; s-- > 0;) {
    const std::size_t t0 = s * k;
    const std::size_t t1 = std::min(steps, t0 + k);

    Tape<T> tape;
    const ParameterSet<T> bound = bind(tape, params);
    StateMap<T> states = bounds[s].states;
    CarryMap<T> carry = bounds[s].carry;
    if (s > 0) {
      for (auto& [id, st] : states) {
        st.U = tape.leaf(st.U);
        st.I = tape.leaf(st.I);
      }
      for (auto& [id, c] : carry) c = tape.leaf(c);
    }
    const StateMap<T> start_states = states;
    const CarryMap<T> start_carry = carry;

    Engine<T> engine(tape, graph, bound, lead);
    StepLog<T> log;
    engine.run_steps(input, t0, t1, states, carry, log, false);

    std::vector<Seed<T>> seeds;
    const auto seed = [&](const Tensor<T>& node, Tensor<T> grad) {
      if (tape.requires_grad(node)) seeds.push_back({node, std::move(grad)});
    };
    for (const auto& [name, g] : result.grads) seed(bound.at(name), g);
    for (const auto& [id, parts] : log.outputs) {
      for (std::size_t j = 0; j < parts.size(); ++j) seed(parts[j], row(record_grad.at(id), t0 + j));
    }
    if (carried) {
      for (const auto& [id, st] : states) {
        seed(st.U, state_grad.at(id).first);
        seed(st.I, state_grad.at(id).second);
      }
      for (const auto& [src, c] : carry) seed(c, carry_grad.at(src));
    }

    const Gradients<T> g = tape.backward(seeds);
    result.memory.peak_tape_nodes = std::max(result.memory.peak_tape_nodes, tape.size());
    for (const auto& [name, leaf] : bound) result.grads.insert_or_assign(name, g.at(leaf));
    if (s > 0) {
      state_grad.clear();
      carry_grad.clear();
      for (const auto& [id, st] : start_states) {
        state_grad.emplace(id, std::make_pair(g.at(st.U), g.at(st.I)));
      }
      for (const auto& [src, c] : start_carry) carry_grad.emplace(src, g.at(c));
      carried = true;
    }
  }
  return result;
}

#define SPIKEGRAD_INSTANTIATE_EXECUTOR(T)                                                         \
  template StateMap<T> init_states<T>(const NetworkGraph&, const StateInit&, std::uint64_t,       \
                                      std::size_t);                                               \
  template RunResult<T> run_on_tape<T>(Tape<T>&, const NetworkGraph&, const ParameterSet<T>&,     \
                                       const ExecutionPlan&, const Tensor<T>&, const StateMap<T>&, \
                                       const RunOptions&);                                        \
  template RunResult<T> run<T>(const NetworkGraph&, const ParameterSet<T>&, const ExecutionPlan&, \
                               const Tensor<T>&, const StateMap<T>&, const RunOptions&);          \
  template GradResult<T> value_and_grad<T>(const NetworkGraph&, const ParameterSet<T>&,           \
                                           const ExecutionPlan&, const Tensor<T>&,                \
                                           const StateMap<T>&, const LossHead<T>&);               \
  template GradResult<T> run_with_checkpointing<T>(const NetworkGraph&, const ParameterSet<T>&,   \
                                                   const ExecutionPlan&, const Tensor<T>&,        \
                                                   const StateMap<T>&, const LossHead<T>&);

SPIKEGRAD_INSTANTIATE_EXECUTOR(float)
SPIKEGRAD_INSTANTIATE_EXECUTOR(double)

#undef SPIKEGRAD_INSTANTIATE_EXECUTOR

}  // namespace spikegrad
