#pragma once

#include <string>
#include <string_view>

#include "spikegrad/graph.hpp"
#include "spikegrad/parameters.hpp"

namespace spikegrad {

/// Versioned JSON document for graphs:
///   {"version": 1, "input_shape": [...], "seed": N,
///    "nodes": [{"id", "name", "kind": "lif"|"linear"|"conv"|"flatten", ...}],
///    "edges": [{"src", "dst", "delay", "project"}],
///    "inputs": [...], "outputs": [...],
///    "parameters": {"<name>": {"shape": [...], "data": [...]}}}   (optional)
/// Throws ValidationError (or GraphError) for malformed documents.
NetworkGraph graph_from_json(std::string_view text);
std::string graph_to_json(const NetworkGraph& graph);

/// Graph plus parameters; parameters missing from the document are
/// initialized from the graph seed.
template <typename T>
Model<T> model_from_json(std::string_view text);

template <typename T>
std::string model_to_json(const Model<T>& model);

NetworkGraph load_graph(const std::string& path);

template <typename T>
Model<T> load_model(const std::string& path);

}  // namespace spikegrad
