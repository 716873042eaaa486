#include "spikegrad/graph_io.hpp"

#include <cmath>

#include "json_io.hpp"
#include "json_util.hpp"

namespace spikegrad {

namespace detail {
namespace {

std::string_view reset_name(ResetMode m) { return m == ResetMode::subtract ? "subtract" : "to_zero"; }

ResetMode parse_reset(const std::string& s) {
  if (s == "subtract") return ResetMode::subtract;
  if (s == "to_zero") return ResetMode::to_zero;
  throw ValidationError("unknown reset mode '" + s + "' (expected subtract or to_zero)");
}

Json node_to_json(const LayerNode& n) {
  Json j{{"id", n.id}, {"name", n.name}, {"kind", std::string(kind_name(n.kind))}};
  if (const auto* l = std::get_if<LifLayer>(&n.kind)) {
    j["shape"] = l->shape;
    j["alpha"] = l->params.alpha;
    j["beta"] = l->params.beta;
    j["thr"] = l->params.thr;
    j["surrogate"] = std::string(to_string(l->params.surrogate.kind));
    j["slope"] = l->params.surrogate.slope;
    j["reset"] = std::string(reset_name(l->params.reset));
    if (l->smooth_sharpness) j["smooth_sharpness"] = *l->smooth_sharpness;
  } else if (const auto* f = std::get_if<LinearLayer>(&n.kind)) {
    j["in"] = f->in;
    j["out"] = f->out;
    j["bias"] = f->bias;
  } else if (const auto* c = std::get_if<ConvLayer>(&n.kind)) {
    j["in_channels"] = c->in_channels;
    j["out_channels"] = c->out_channels;
    j["kernel"] = c->kernel;
    j["stride"] = c->stride;
    j["padding"] = c->padding;
    j["bias"] = c->bias;
  }
  return j;
}

LayerNode node_from_json(const Json& j) {
  require_object(j, "graph node");
  const std::string kind = get<std::string>(j, "kind", "graph node");
  const std::string where = "graph node of kind '" + kind + "'";
  LayerNode n;
  n.id = get_size(j, "id", where);
  n.name = get_or<std::string>(j, "name", "", where);
  if (kind == "lif") {
    check_keys(j, {"id", "name", "kind", "shape", "alpha", "beta", "thr", "surrogate", "slope",
                   "reset", "smooth_sharpness"},
               where);
    LifLayer l;
    l.shape = get<Shape>(j, "shape", where);
    l.params.alpha = get_or(j, "alpha", l.params.alpha, where);
    l.params.beta = get_or(j, "beta", l.params.beta, where);
    l.params.thr = get_or(j, "thr", l.params.thr, where);
    l.params.surrogate =
        make_surrogate(get_or<std::string>(j, "surrogate", "superspike", where),
                       get_or(j, "slope", 10.0, where));
    l.params.reset = parse_reset(get_or<std::string>(j, "reset", "subtract", where));
    if (j.contains("smooth_sharpness")) l.smooth_sharpness = get<double>(j, "smooth_sharpness", where);
    n.kind = l;
  } else if (kind == "linear") {
    check_keys(j, {"id", "name", "kind", "in", "out", "bias"}, where);
    n.kind = LinearLayer{get_size(j, "in", where), get_size(j, "out", where),
                         get_or(j, "bias", true, where)};
  } else if (kind == "conv") {
    check_keys(j, {"id", "name", "kind", "in_channels", "out_channels", "kernel", "stride",
                   "padding", "bias"},
               where);
    n.kind = ConvLayer{get_size(j, "in_channels", where), get_size(j, "out_channels", where),
                       get_size(j, "kernel", where),     get_size_or(j, "stride", 1, where),
                       get_size_or(j, "padding", 0, where), get_or(j, "bias", true, where)};
  } else if (kind == "flatten") {
    check_keys(j, {"id", "name", "kind"}, where);
    n.kind = FlattenLayer{};
  } else {
    throw ValidationError("unknown node kind '" + kind + "'");
  }
  return n;
}

}  // namespace

Json graph_to_value(const NetworkGraph& g) {
  Json nodes = Json::array();
  for (const auto& n : g.nodes()) nodes.push_back(node_to_json(n));
  Json edges = Json::array();
  for (const auto& e : g.edges()) {
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"delay", e.delay}, {"project", e.project}});
  }
  return Json{{"version", 1},        {"input_shape", g.input_shape()}, {"seed", g.seed()},
              {"nodes", nodes},      {"edges", edges},                 {"inputs", g.inputs()},
              {"outputs", g.outputs()}};
}

NetworkGraph graph_from_value(const Json& j) {
  check_keys(j, {"version", "input_shape", "seed", "nodes", "edges", "inputs", "outputs",
                 "parameters"},
             "graph");
  check_version(j, "graph");
  const Json& jn = j.at("nodes");
  if (!jn.is_array()) throw ValidationError("graph: \"nodes\" must be an array");
  std::vector<LayerNode> nodes;
  for (const auto& n : jn) nodes.push_back(node_from_json(n));

  std::vector<Edge> edges;
  if (j.contains("edges")) {
    if (!j["edges"].is_array()) throw ValidationError("graph: \"edges\" must be an array");
    for (const auto& e : j["edges"]) {
      check_keys(e, {"src", "dst", "delay", "project"}, "graph edge");
      const auto delay = get_size_or(e, "delay", 0, "graph edge");
      if (delay > 1) throw GraphError("edge delay must be 0 or 1, got " + std::to_string(delay));
      edges.push_back(Edge{get_size(e, "src", "graph edge"), get_size(e, "dst", "graph edge"),
                           static_cast<unsigned>(delay), get_or(e, "project", false, "graph edge")});
    }
  }
  return graph_build(get<Shape>(j, "input_shape", "graph"), std::move(nodes), std::move(edges),
                     get<std::vector<NodeId>>(j, "inputs", "graph"),
                     get<std::vector<NodeId>>(j, "outputs", "graph"),
                     get_or<std::uint64_t>(j, "seed", 0, "graph"));
}

template <typename T>
Json params_to_value(const ParameterSet<T>& params) {
  Json out = Json::object();
  for (const auto& [name, t] : params) {
    std::vector<double> data(t.data().begin(), t.data().end());
    out[name] = Json{{"shape", t.shape()}, {"data", data}};
  }
  return out;
}

template <typename T>
ParameterSet<T> params_from_value(const NetworkGraph& graph, const Json& j) {
  require_object(j, "parameters");
  ParameterSet<T> params = init_parameters<T>(graph);
  for (const auto& [name, value] : j.items()) {
    auto it = params.find(name);
    if (it == params.end()) throw ValidationError("parameters: unknown parameter '" + name + "'");
    check_keys(value, {"shape", "data"}, "parameter " + name);
    const auto shape = get<Shape>(value, "shape", "parameter " + name);
    const auto data = get<std::vector<double>>(value, "data", "parameter " + name);
    if (shape != it->second.shape()) {
      throw DimensionError("parameter " + name + " has shape " + to_string(shape) + ", expected " +
                           to_string(it->second.shape()));
    }
    std::vector<T> values;
    values.reserve(data.size());
    for (double v : data) {
      if (!std::isfinite(v)) throw ValidationError("parameter " + name + " contains non-finite values");
      values.push_back(static_cast<T>(v));
    }
    it->second = Tensor<T>(shape, std::move(values));
  }
  return params;
}

template Json params_to_value<float>(const ParameterSet<float>&);
template Json params_to_value<double>(const ParameterSet<double>&);
template ParameterSet<float> params_from_value<float>(const NetworkGraph&, const Json&);
template ParameterSet<double> params_from_value<double>(const NetworkGraph&, const Json&);

}  // namespace detail

NetworkGraph graph_from_json(std::string_view text) {
  return detail::graph_from_value(detail::parse_json(text, "graph"));
}

std::string graph_to_json(const NetworkGraph& graph) { return detail::graph_to_value(graph).dump(2); }

template <typename T>
Model<T> model_from_json(std::string_view text) {
  const auto j = detail::parse_json(text, "graph");
  NetworkGraph graph = detail::graph_from_value(j);
  ParameterSet<T> params = j.contains("parameters")
                               ? detail::params_from_value<T>(graph, j["parameters"])
                               : init_parameters<T>(graph);
  return Model<T>{std::move(graph), std::move(params)};
}

template <typename T>
std::string model_to_json(const Model<T>& model) {
  auto j = detail::graph_to_value(model.graph);
  j["parameters"] = detail::params_to_value(model.params);
  return j.dump(2);
}

NetworkGraph load_graph(const std::string& path) {
  return graph_from_json(detail::read_text_file(path));
}

template <typename T>
Model<T> load_model(const std::string& path) {
  return model_from_json<T>(detail::read_text_file(path));
}

template Model<float> model_from_json<float>(std::string_view);
template Model<double> model_from_json<double>(std::string_view);
template std::string model_to_json<float>(const Model<float>&);
template std::string model_to_json<double>(const Model<double>&);
template Model<float> load_model<float>(const std::string&);
template Model<double> load_model<double>(const std::string&);

}  // namespace spikegrad
