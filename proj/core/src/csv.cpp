#include "spikegrad/csv.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace spikegrad {

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

template <typename T>
void write_trace_csv(std::ostream& out, const SpikeRecord<T>& record) {
  const auto& source = record.hidden.empty() ? record.outputs : record.hidden;
  out << "t,node_id,neuron_idx,spike\n";
  std::size_t steps = 0;
  for (const auto& [_, t] : source) steps = std::max(steps, t.dim(0));
  for (std::size_t t = 0; t < steps; ++t) {
    for (const auto& [id, rec] : source) {
      if (t >= rec.dim(0)) continue;
      const std::size_t width = rec.size() / rec.dim(0);
      const auto row = rec.data().subspan(t * width, width);
      for (std::size_t n = 0; n < width; ++n) {
        out << t << ',' << id << ',' << n << ',' << format_number(static_cast<double>(row[n]))
            << '\n';
      }
    }
  }
}

void write_metrics_header(std::ostream& out) { out << "epoch,mean_loss,accuracy,wall_ms\n"; }

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
  out << m.epoch << ',' << format_number(m.mean_loss) << ',' << format_number(m.accuracy) << ','
      << format_number(m.wall_ms) << '\n';
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& metrics) {
  write_metrics_header(out);
  for (const auto& m : metrics) write_metrics_row(out, m);
}

template <typename T>
Tensor<T> read_input_csv(std::istream& in, const Shape& input_shape) {
  const std::size_t width = numel(input_shape);
  std::vector<T> values;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    if (first && std::isalpha(static_cast<unsigned char>(line[start]))) {
      first = false;
      continue;
    }
    first = false;
    std::stringstream ss(line);
    std::string cell;
    std::size_t count = 0;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || cell.find_first_not_of(" \t", used) != std::string::npos || !std::isfinite(v)) {
        throw ValidationError("input CSV line " + std::to_string(line_no) + ": bad value '" + cell + "'");
      }
      values.push_back(static_cast<T>(v));
      ++count;
    }
    if (count != width) {
      throw DimensionError("input CSV line " + std::to_string(line_no) + " has " +
                           std::to_string(count) + " values, expected " + std::to_string(width));
    }
    ++rows;
  }
  if (rows == 0) throw ValidationError("input CSV has no time steps");
  Shape shape{rows};
  shape.insert(shape.end(), input_shape.begin(), input_shape.end());
  return Tensor<T>(std::move(shape), std::move(values));
}

template void write_trace_csv<float>(std::ostream&, const SpikeRecord<float>&);
template void write_trace_csv<double>(std::ostream&, const SpikeRecord<double>&);
template Tensor<float> read_input_csv<float>(std::istream&, const Shape&);
template Tensor<double> read_input_csv<double>(std::istream&, const Shape&);

}  // namespace spikegrad
