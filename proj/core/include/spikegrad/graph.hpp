#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spikegrad/neurons.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

using NodeId = std::size_t;

/// Stateful LIF population. With smooth_sharpness set the layer runs the
/// smooth twin dynamics instead of emitting hard spikes.
struct LifLayer {
  Shape shape;
  LIFParams params{};
  std::optional<double> smooth_sharpness;

  friend bool operator==(const LifLayer&, const LifLayer&) = default;
};

/// y = x * W + b with W stored [in x out].
struct LinearLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  bool bias = true;

  friend bool operator==(const LinearLayer&, const LinearLayer&) = default;
};

struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = true;

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct FlattenLayer {
  friend bool operator==(const FlattenLayer&, const FlattenLayer&) = default;
};

using LayerKind = std::variant<LifLayer, LinearLayer, ConvLayer, FlattenLayer>;

struct LayerNode {
  NodeId id = 0;
  std::string name;
  LayerKind kind;

  bool stateful() const noexcept { return std::holds_alternative<LifLayer>(kind); }

  friend bool operator==(const LayerNode&, const LayerNode&) = default;
};

// Layer factories; ids and names are filled in by the graph builders when
// left at their defaults.
LayerNode lif(Shape shape, LIFParams params = {}, std::string name = {});
LayerNode lif(std::size_t n, LIFParams params = {}, std::string name = {});
LayerNode linear(std::size_t in, std::size_t out, bool bias = true, std::string name = {});
LayerNode conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride = 1, std::size_t padding = 0, bool bias = true,
               std::string name = {});
LayerNode flatten(std::string name = {});

std::string_view kind_name(const LayerKind& kind);

/// Connection between layers. delay 0 feeds the value of the same time step,
/// delay 1 the source's value from the previous step (zeros at t = 0).
/// Incoming values are summed; `project` inserts a learned linear map first.
struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  unsigned delay = 0;
  bool project = false;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Validated, immutable network topology. Build with graph_build(),
/// sequential() or sequential_recurrent().
class NetworkGraph {
 public:
  const std::vector<LayerNode>& nodes() const noexcept { return nodes_; }
  const LayerNode& node(NodeId id) const;
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<NodeId>& inputs() const noexcept { return inputs_; }
  const std::vector<NodeId>& outputs() const noexcept { return outputs_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Shape of the summed value a node consumes each step.
  const Shape& in_shape(NodeId id) const;
  const Shape& out_shape(NodeId id) const;
  /// Input shape as seen by an edge's source after projection (if any).
  Shape edge_value_shape(const Edge& e) const;

  /// Topological order of the delay-0 subgraph, ties broken by ascending id.
  const std::vector<NodeId>& order() const noexcept { return order_; }

  /// Indices into edges() ending at `id`, in edge-list order.
  const std::vector<std::size_t>& incoming(NodeId id) const;

  bool is_input(NodeId id) const;
  bool has_delay_edges() const;
  std::vector<NodeId> stateful_nodes() const;
  /// Sources of delay-1 edges, ascending.
  std::vector<NodeId> delay_sources() const;

  /// Non-fatal findings from validation, e.g. unreachable nodes.
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

  friend bool operator==(const NetworkGraph& a, const NetworkGraph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_ && a.inputs_ == b.inputs_ &&
           a.outputs_ == b.outputs_ && a.input_shape_ == b.input_shape_ && a.seed_ == b.seed_;
  }

 private:
  friend NetworkGraph graph_build(Shape, std::vector<LayerNode>, std::vector<Edge>,
                                  std::vector<NodeId>, std::vector<NodeId>, std::uint64_t);

  std::size_t index_of(NodeId id) const;

  std::vector<LayerNode> nodes_;
  std::vector<Edge> edges_;
  std::vector<NodeId> inputs_;
  std::vector<NodeId> outputs_;
  Shape input_shape_;
  std::uint64_t seed_ = 0;

  std::map<NodeId, std::size_t> index_;
  std::vector<Shape> in_shapes_;
  std::vector<Shape> out_shapes_;
  std::vector<std::vector<std::size_t>> incoming_;
  std::vector<NodeId> order_;
  std::vector<std::string> diagnostics_;
};

/// Validates and freezes a general graph. Throws GraphError for unknown edge
/// endpoints, delays other than 0/1, shape conflicts, duplicate ids or names,
/// and delay-0 cycles (GraphError::cycle() lists the offending ids).
/// Nodes unreachable from every input only produce a diagnostic.
NetworkGraph graph_build(Shape input_shape, std::vector<LayerNode> nodes, std::vector<Edge> edges,
                         std::vector<NodeId> inputs, std::vector<NodeId> outputs,
                         std::uint64_t seed = 0);

/// Chain of layers with ids 0..n-1; the first consumes the external input and
/// the last is the output.
NetworkGraph sequential(Shape input_shape, std::vector<LayerNode> layers, std::uint64_t seed = 0);

struct Feedback {
  std::size_t from = 0;  ///< layer index, from >= to
  std::size_t to = 0;
};

/// sequential() plus delay-1 feedback edges; a projection is added when the
/// source output and target input shapes differ.
NetworkGraph sequential_recurrent(Shape input_shape, std::vector<LayerNode> layers,
                                  std::vector<Feedback> feedback, std::uint64_t seed = 0);

/// Execution order of a validated graph (same as graph.order()).
std::vector<NodeId> topo_order(const NetworkGraph& graph);

/// Copy of `graph` with every LIF layer switched to smooth dynamics.
NetworkGraph smooth_twin(const NetworkGraph& graph, double sharpness);

/// n_in -> [linear -> LIF] per entry of `widths`.
NetworkGraph make_lif_mlp(std::size_t n_in, const std::vector<std::size_t>& widths,
                          const LIFParams& params = {}, std::uint64_t seed = 0);

/// [C x image x image] -> [conv(k, stride 1, same padding) -> LIF] per layer.
NetworkGraph make_lif_cnn(std::size_t in_channels, std::size_t image, std::size_t channels,
                          std::size_t layers, std::size_t kernel, const LIFParams& params = {},
                          std::uint64_t seed = 0);

}  // namespace spikegrad
