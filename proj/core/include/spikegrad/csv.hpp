#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "spikegrad/executor.hpp"
#include "spikegrad/train.hpp"

namespace spikegrad {

/// Six significant digits, "%.6g".
std::string format_number(double value);

/// `t,node_id,neuron_idx,spike`, one row per recorded value. Uses the hidden
/// traces when present, the outputs otherwise. Batched records number
/// neurons b*N + n.
template <typename T>
void write_trace_csv(std::ostream& out, const SpikeRecord<T>& record);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);
void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& metrics);

/// Dense input: one line per time step holding numel(input_shape)
/// comma-separated values. Blank lines and lines starting with '#' are
/// skipped, as is a first line starting with a letter (a header).
template <typename T>
Tensor<T> read_input_csv(std::istream& in, const Shape& input_shape);

}  // namespace spikegrad
