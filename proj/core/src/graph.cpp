#include "spikegrad/graph.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <set>

namespace spikegrad {

LayerNode lif(Shape shape, LIFParams params, std::string name) {
  return LayerNode{0, std::move(name), LifLayer{std::move(shape), params, std::nullopt}};
}

LayerNode lif(std::size_t n, LIFParams params, std::string name) {
  return lif(Shape{n}, params, std::move(name));
}

LayerNode linear(std::size_t in, std::size_t out, bool bias, std::string name) {
  return LayerNode{0, std::move(name), LinearLayer{in, out, bias}};
}

LayerNode conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding, bool bias, std::string name) {
  return LayerNode{0, std::move(name),
                   ConvLayer{in_channels, out_channels, kernel, stride, padding, bias}};
}

LayerNode flatten(std::string name) { return LayerNode{0, std::move(name), FlattenLayer{}}; }

std::string_view kind_name(const LayerKind& kind) {
  struct Visitor {
    std::string_view operator()(const LifLayer&) const { return "lif"; }
    std::string_view operator()(const LinearLayer&) const { return "linear"; }
    std::string_view operator()(const ConvLayer&) const { return "conv"; }
    std::string_view operator()(const FlattenLayer&) const { return "flatten"; }
  };
  return std::visit(Visitor{}, kind);
}

std::size_t NetworkGraph::index_of(NodeId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw GraphError("unknown node id " + std::to_string(id));
  return it->second;
}

const LayerNode& NetworkGraph::node(NodeId id) const { return nodes_[index_of(id)]; }
const Shape& NetworkGraph::in_shape(NodeId id) const { return in_shapes_[index_of(id)]; }
const Shape& NetworkGraph::out_shape(NodeId id) const { return out_shapes_[index_of(id)]; }

Shape NetworkGraph::edge_value_shape(const Edge& e) const {
  return e.project ? in_shape(e.dst) : out_shape(e.src);
}

const std::vector<std::size_t>& NetworkGraph::incoming(NodeId id) const {
  return incoming_[index_of(id)];
}

bool NetworkGraph::is_input(NodeId id) const {
  return std::find(inputs_.begin(), inputs_.end(), id) != inputs_.end();
}

bool NetworkGraph::has_delay_edges() const {
  return std::any_of(edges_.begin(), edges_.end(), [](const Edge& e) { return e.delay != 0; });
}

std::vector<NodeId> NetworkGraph::stateful_nodes() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_) {
    if (n.stateful()) out.push_back(n.id);
  }
  return out;
}

std::vector<NodeId> NetworkGraph::delay_sources() const {
  std::set<NodeId> sources;
  for (const auto& e : edges_) {
    if (e.delay != 0) sources.insert(e.src);
  }
  return {sources.begin(), sources.end()};
}

namespace {

std::string describe(const LayerNode& n) {
  return "'" + n.name + "' (" + std::string(kind_name(n.kind)) + ", id " + std::to_string(n.id) +
         ")";
}

void validate_layer(const LayerNode& n) {
  if (const auto* l = std::get_if<LifLayer>(&n.kind)) {
    if (l->shape.empty() || numel(l->shape) == 0) {
      throw GraphError("layer " + describe(n) + " needs a non-empty shape");
    }
    try {
      l->params.validate();
    } catch (const ValidationError& e) {
      throw GraphError("layer " + describe(n) + ": " + e.what());
    }
    if (l->smooth_sharpness && !(*l->smooth_sharpness > 0.0)) {
      throw GraphError("layer " + describe(n) + ": smooth sharpness must be positive");
    }
  } else if (const auto* fc = std::get_if<LinearLayer>(&n.kind)) {
    if (fc->in == 0 || fc->out == 0) {
      throw GraphError("layer " + describe(n) + " needs positive in/out sizes");
    }
  } else if (const auto* c = std::get_if<ConvLayer>(&n.kind)) {
    if (c->in_channels == 0 || c->out_channels == 0 || c->kernel == 0 || c->stride == 0) {
      throw GraphError("layer " + describe(n) + " needs positive channels, kernel and stride");
    }
  }
}

// Depth-first search restricted to delay-0 edges among `pending` nodes;
// returns the first cycle found, in traversal order.
std::vector<NodeId> find_cycle(const std::vector<LayerNode>& nodes, const std::vector<Edge>& edges,
                               const std::set<NodeId>& pending) {
  std::map<NodeId, std::vector<NodeId>> succ;
  for (const auto& e : edges) {
    if (e.delay == 0 && pending.contains(e.src) && pending.contains(e.dst)) {
      succ[e.src].push_back(e.dst);
    }
  }
  for (auto& [_, v] : succ) std::sort(v.begin(), v.end());

  std::map<NodeId, int> color;  // 0 white, 1 on stack, 2 done
  std::vector<NodeId> stack;
  std::vector<NodeId> cycle;
  std::function<bool(NodeId)> dfs = [&](NodeId v) {
    color[v] = 1;
    stack.push_back(v);
    for (NodeId w : succ[v]) {
      if (color[w] == 1) {
        const auto it = std::find(stack.begin(), stack.end(), w);
        cycle.assign(it, stack.end());
        return true;
      }
      if (color[w] == 0 && dfs(w)) return true;
    }
    stack.pop_back();
    color[v] = 2;
    return false;
  };
  for (const auto& n : nodes) {
    if (pending.contains(n.id) && color[n.id] == 0 && dfs(n.id)) break;
  }
  return cycle;
}

}  // namespace

NetworkGraph graph_build(Shape input_shape, std::vector<LayerNode> nodes, std::vector<Edge> edges,
                         std::vector<NodeId> inputs, std::vector<NodeId> outputs,
                         std::uint64_t seed) {
  if (nodes.empty()) throw GraphError("graph has no nodes");
  if (input_shape.empty() || numel(input_shape) == 0) {
    throw GraphError("graph input shape must be non-empty");
  }
  if (inputs.empty()) throw GraphError("graph has no input nodes");
  if (outputs.empty()) throw GraphError("graph has no output nodes");

  std::sort(nodes.begin(), nodes.end(),
            [](const LayerNode& a, const LayerNode& b) { return a.id < b.id; });
  NetworkGraph g;
  std::set<std::string> names;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto& n = nodes[i];
    if (!g.index_.emplace(n.id, i).second) {
      throw GraphError("duplicate node id " + std::to_string(n.id));
    }
    if (n.name.empty()) n.name = std::string(kind_name(n.kind)) + std::to_string(n.id);
    if (!names.insert(n.name).second) throw GraphError("duplicate layer name '" + n.name + "'");
    validate_layer(n);
  }
  const auto known = [&](NodeId id) { return g.index_.contains(id); };
  for (const auto& e : edges) {
    if (!known(e.src) || !known(e.dst)) {
      throw GraphError("edge " + std::to_string(e.src) + " -> " + std::to_string(e.dst) +
                       " references a missing node");
    }
    if (e.delay > 1) {
      throw GraphError("edge " + std::to_string(e.src) + " -> " + std::to_string(e.dst) +
                       " has delay " + std::to_string(e.delay) + "; only 0 or 1 is supported");
    }
  }
  for (auto* list : {&inputs, &outputs}) {
    std::set<NodeId> seen;
    for (NodeId id : *list) {
      if (!known(id)) throw GraphError("input/output list references missing node " + std::to_string(id));
      if (!seen.insert(id).second) throw GraphError("node " + std::to_string(id) + " listed twice");
    }
  }

  g.nodes_ = std::move(nodes);
  g.edges_ = std::move(edges);
  g.inputs_ = std::move(inputs);
  g.outputs_ = std::move(outputs);
  g.input_shape_ = std::move(input_shape);
  g.seed_ = seed;

  const std::size_t n = g.nodes_.size();
  g.incoming_.assign(n, {});
  for (std::size_t i = 0; i < g.edges_.size(); ++i) g.incoming_[g.index_.at(g.edges_[i].dst)].push_back(i);

  // Kahn's algorithm over delay-0 edges with a min-heap for id tie-breaking.
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& e : g.edges_) {
    if (e.delay == 0) ++indegree[g.index_.at(e.dst)];
  }
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (const auto& node : g.nodes_) {
    if (indegree[g.index_.at(node.id)] == 0) ready.push(node.id);
  }
  while (!ready.empty()) {
    const NodeId v = ready.top();
    ready.pop();
    g.order_.push_back(v);
    for (const auto& e : g.edges_) {
      if (e.delay == 0 && e.src == v && --indegree[g.index_.at(e.dst)] == 0) ready.push(e.dst);
    }
  }
  if (g.order_.size() != n) {
    std::set<NodeId> pending;
    for (const auto& node : g.nodes_) pending.insert(node.id);
    for (NodeId v : g.order_) pending.erase(v);
    auto cycle = find_cycle(g.nodes_, g.edges_, pending);
    std::string msg = "delay-0 cycle through nodes";
    for (std::size_t i = 0; i < cycle.size(); ++i) msg += (i ? " -> " : " ") + std::to_string(cycle[i]);
    if (!cycle.empty()) msg += " -> " + std::to_string(cycle.front());
    msg += "; every cycle needs at least one delay-1 edge";
    throw GraphError(msg, std::move(cycle));
  }

  // Shape inference in execution order.
  g.in_shapes_.assign(n, {});
  g.out_shapes_.assign(n, {});
  for (NodeId id : g.order_) {
    const std::size_t i = g.index_.at(id);
    const LayerNode& node = g.nodes_[i];

    std::optional<Shape> declared;
    if (const auto* l = std::get_if<LifLayer>(&node.kind)) declared = l->shape;
    if (const auto* fc = std::get_if<LinearLayer>(&node.kind)) declared = Shape{fc->in};

    std::vector<std::pair<std::string, Shape>> offered;
    if (g.is_input(id)) offered.emplace_back("the graph input", g.input_shape_);
    for (std::size_t ei : g.incoming_[i]) {
      const Edge& e = g.edges_[ei];
      if (e.delay != 0 || e.project) continue;
      offered.emplace_back("layer " + describe(g.node(e.src)), g.out_shapes_[g.index_.at(e.src)]);
    }

    Shape in;
    if (declared) {
      in = *declared;
    } else if (!offered.empty()) {
      in = offered.front().second;
    } else {
      throw GraphError("cannot infer the input shape of layer " + describe(node) +
                       ": it has no same-step input");
    }
    for (const auto& [who, shape] : offered) {
      if (shape != in) {
        throw GraphError("layer " + describe(node) + " expects input " + to_string(in) + " but " +
                         who + " produces " + to_string(shape));
      }
    }

    Shape out;
    if (const auto* l = std::get_if<LifLayer>(&node.kind)) {
      out = l->shape;
    } else if (const auto* fc = std::get_if<LinearLayer>(&node.kind)) {
      out = Shape{fc->out};
    } else if (const auto* c = std::get_if<ConvLayer>(&node.kind)) {
      if (in.size() != 3 || in[0] != c->in_channels) {
        throw GraphError("layer " + describe(node) + " expects [" + std::to_string(c->in_channels) +
                         " x H x W] input, got " + to_string(in));
      }
      if (c->kernel > in[1] + 2 * c->padding || c->kernel > in[2] + 2 * c->padding) {
        throw GraphError("layer " + describe(node) + ": kernel " + std::to_string(c->kernel) +
                         " larger than padded input " + to_string(in));
      }
      out = Shape{c->out_channels, (in[1] + 2 * c->padding - c->kernel) / c->stride + 1,
                  (in[2] + 2 * c->padding - c->kernel) / c->stride + 1};
    } else {
      out = Shape{numel(in)};
    }
    g.in_shapes_[i] = std::move(in);
    g.out_shapes_[i] = std::move(out);
  }

  for (const auto& e : g.edges_) {
    const LayerNode& src = g.node(e.src);
    const LayerNode& dst = g.node(e.dst);
    const Shape& produced = g.out_shape(e.src);
    const Shape& wanted = g.in_shape(e.dst);
    if (e.project) {
      if (wanted.size() != 1) {
        throw GraphError("cannot project " + to_string(produced) + " from " + describe(src) +
                         " onto the non-vector input " + to_string(wanted) + " of " +
                         describe(dst));
      }
    } else if (produced != wanted) {
      throw GraphError("edge from " + describe(src) + " produces " + to_string(produced) +
                       " but " + describe(dst) + " expects " + to_string(wanted));
    }
  }

  // Reachability over all edges, for diagnostics only.
  std::set<NodeId> reached(g.inputs_.begin(), g.inputs_.end());
  std::vector<NodeId> frontier(g.inputs_.begin(), g.inputs_.end());
  while (!frontier.empty()) {
    const NodeId v = frontier.back();
    frontier.pop_back();
    for (const auto& e : g.edges_) {
      if (e.src == v && reached.insert(e.dst).second) frontier.push_back(e.dst);
    }
  }
  for (const auto& node : g.nodes_) {
    if (!reached.contains(node.id)) {
      g.diagnostics_.push_back("warning: layer " + describe(node) +
                               " is not reachable from any input");
    }
  }
  return g;
}

NetworkGraph sequential(Shape input_shape, std::vector<LayerNode> layers, std::uint64_t seed) {
  if (layers.empty()) throw GraphError("sequential: no layers given");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].id = i;
    if (i > 0) edges.push_back(Edge{i - 1, i, 0, false});
  }
  const NodeId last = layers.size() - 1;
  return graph_build(std::move(input_shape), std::move(layers), std::move(edges), {0}, {last}, seed);
}

NetworkGraph sequential_recurrent(Shape input_shape, std::vector<LayerNode> layers,
                                  std::vector<Feedback> feedback, std::uint64_t seed) {
  const NetworkGraph chain = sequential(input_shape, layers, seed);
  std::vector<Edge> edges = chain.edges();
  for (const auto& fb : feedback) {
    if (fb.from >= chain.nodes().size() || fb.to >= chain.nodes().size()) {
      throw GraphError("feedback " + std::to_string(fb.from) + " -> " + std::to_string(fb.to) +
                       " references a missing layer");
    }
    if (fb.from < fb.to) {
      throw GraphError("feedback must point backwards (from >= to), got " +
                       std::to_string(fb.from) + " -> " + std::to_string(fb.to));
    }
    const bool project = chain.out_shape(fb.from) != chain.in_shape(fb.to);
    edges.push_back(Edge{fb.from, fb.to, 1, project});
  }
  return graph_build(std::move(input_shape), chain.nodes(), std::move(edges), chain.inputs(),
                     chain.outputs(), seed);
}

std::vector<NodeId> topo_order(const NetworkGraph& graph) { return graph.order(); }

NetworkGraph smooth_twin(const NetworkGraph& graph, double sharpness) {
  std::vector<LayerNode> nodes = graph.nodes();
  for (auto& n : nodes) {
    if (auto* l = std::get_if<LifLayer>(&n.kind)) l->smooth_sharpness = sharpness;
  }
  return graph_build(graph.input_shape(), std::move(nodes), graph.edges(), graph.inputs(),
                     graph.outputs(), graph.seed());
}

NetworkGraph make_lif_mlp(std::size_t n_in, const std::vector<std::size_t>& widths,
                          const LIFParams& params, std::uint64_t seed) {
  std::vector<LayerNode> layers;
  std::size_t prev = n_in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    layers.push_back(linear(prev, widths[i], true, "fc" + std::to_string(i + 1)));
    layers.push_back(lif(widths[i], params, "lif" + std::to_string(i + 1)));
    prev = widths[i];
  }
  return sequential(Shape{n_in}, std::move(layers), seed);
}

NetworkGraph make_lif_cnn(std::size_t in_channels, std::size_t image, std::size_t channels,
                          std::size_t layers, std::size_t kernel, const LIFParams& params,
                          std::uint64_t seed) {
  if (kernel % 2 == 0) throw GraphError("make_lif_cnn: kernel size must be odd for same padding");
  std::vector<LayerNode> out;
  std::size_t prev = in_channels;
  for (std::size_t i = 0; i < layers; ++i) {
    out.push_back(conv(prev, channels, kernel, 1, kernel / 2, true, "conv" + std::to_string(i + 1)));
    out.push_back(lif(Shape{channels, image, image}, params, "lif" + std::to_string(i + 1)));
    prev = channels;
  }
  return sequential(Shape{in_channels, image, image}, std::move(out), seed);
}

}  // namespace spikegrad
