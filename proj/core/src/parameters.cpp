#include "spikegrad/parameters.hpp"

#include <cmath>
#include <random>

namespace spikegrad {

std::string weight_name(const LayerNode& node) { return node.name + ".weight"; }
std::string bias_name(const LayerNode& node) { return node.name + ".bias"; }

std::string projection_name(const NetworkGraph& graph, const Edge& edge) {
  return graph.node(edge.src).name + "->" + graph.node(edge.dst).name + ".weight";
}

std::vector<ParameterSpec> parameter_specs(const NetworkGraph& graph) {
  std::vector<ParameterSpec> specs;
  for (const auto& node : graph.nodes()) {
    if (const auto* fc = std::get_if<LinearLayer>(&node.kind)) {
      specs.push_back({weight_name(node), Shape{fc->in, fc->out}, fc->in});
      if (fc->bias) specs.push_back({bias_name(node), Shape{fc->out}, fc->in});
    } else if (const auto* c = std::get_if<ConvLayer>(&node.kind)) {
      const std::size_t fan_in = c->in_channels * c->kernel * c->kernel;
      specs.push_back(
          {weight_name(node), Shape{c->out_channels, c->in_channels, c->kernel, c->kernel}, fan_in});
      if (c->bias) specs.push_back({bias_name(node), Shape{c->out_channels}, fan_in});
    }
  }
  for (const auto& e : graph.edges()) {
    if (!e.project) continue;
    const std::size_t from = numel(graph.out_shape(e.src));
    specs.push_back({projection_name(graph, e), Shape{from, numel(graph.in_shape(e.dst))}, from});
  }
  return specs;
}

template <typename T>
ParameterSet<T> init_parameters(const NetworkGraph& graph) {
  ParameterSet<T> params;
  const auto specs = parameter_specs(graph);
  const std::uint64_t seed = graph.seed();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& spec = specs[i];
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> t(spec.shape);
    for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
    params.emplace(spec.name, std::move(t));
  }
  return params;
}

template <typename T>
void check_parameters(const NetworkGraph& graph, const ParameterSet<T>& params) {
  const auto specs = parameter_specs(graph);
  if (specs.size() != params.size()) {
    throw ValidationError("graph needs " + std::to_string(specs.size()) + " parameter tensors, got " +
                          std::to_string(params.size()));
  }
  for (const auto& spec : specs) {
    const auto it = params.find(spec.name);
    if (it == params.end()) throw ValidationError("missing parameter '" + spec.name + "'");
    if (it->second.shape() != spec.shape) {
      throw ValidationError("parameter '" + spec.name + "' has shape " +
                            to_string(it->second.shape()) + ", expected " + to_string(spec.shape));
    }
  }
}

template ParameterSet<float> init_parameters<float>(const NetworkGraph&);
template ParameterSet<double> init_parameters<double>(const NetworkGraph&);
template void check_parameters<float>(const NetworkGraph&, const ParameterSet<float>&);
template void check_parameters<double>(const NetworkGraph&, const ParameterSet<double>&);

}  // namespace spikegrad
