#pragma once

#include "json_util.hpp"
#include "spikegrad/graph.hpp"
#include "spikegrad/parameters.hpp"

namespace spikegrad::detail {

Json graph_to_value(const NetworkGraph& graph);
NetworkGraph graph_from_value(const Json& j);

template <typename T>
Json params_to_value(const ParameterSet<T>& params);

/// Starts from init_parameters(graph) and overwrites the listed entries.
template <typename T>
ParameterSet<T> params_from_value(const NetworkGraph& graph, const Json& j);

}  // namespace spikegrad::detail
