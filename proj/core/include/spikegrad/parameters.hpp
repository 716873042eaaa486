#pragma once

#include <map>
#include <string>
#include <vector>

#include "spikegrad/graph.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

/// Trainable tensors keyed by name: "<layer>.weight", "<layer>.bias" and
/// "<src>-><dst>.weight" for projected edges. Ordered, so iteration is
/// deterministic.
template <typename T>
using ParameterSet = std::map<std::string, Tensor<T>>;

struct ParameterSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 1;
};

/// Parameters a graph needs, in node-id order followed by edge order.
std::vector<ParameterSpec> parameter_specs(const NetworkGraph& graph);

std::string weight_name(const LayerNode& node);
std::string bias_name(const LayerNode& node);
std::string projection_name(const NetworkGraph& graph, const Edge& edge);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) draws, seeded from graph.seed()
/// and the parameter's position in parameter_specs().
template <typename T>
ParameterSet<T> init_parameters(const NetworkGraph& graph);

/// Throws ValidationError if names or shapes differ from parameter_specs().
template <typename T>
void check_parameters(const NetworkGraph& graph, const ParameterSet<T>& params);

/// A graph together with values for all of its parameters.
template <typename T>
struct Model {
  NetworkGraph graph;
  ParameterSet<T> params;
};

template <typename T>
Model<T> make_model(NetworkGraph graph) {
  ParameterSet<T> params = init_parameters<T>(graph);
  return Model<T>{std::move(graph), std::move(params)};
}

template <typename T>
std::size_t parameter_count(const ParameterSet<T>& params) {
  std::size_t total = 0;
  for (const auto& [_, t] : params) total += t.size();
  return total;
}

}  // namespace spikegrad
