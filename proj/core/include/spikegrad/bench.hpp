#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "spikegrad/executor.hpp"

namespace spikegrad {

enum class Phase { forward, forward_backward };

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view name);

enum class Arch { mlp, cnn };

std::string_view to_string(Arch a);
Arch parse_arch(std::string_view name);

/// Benchmark configuration. MLP: n_in -> depth x [linear -> LIF(width)].
/// CNN: [in_channels x image x image] -> depth x [conv(kernel, stride,
/// padding kernel/2) -> LIF].
struct BenchSpec {
  Arch arch = Arch::mlp;
  std::size_t n_in = 256;
  std::size_t width = 256;
  std::size_t depth = 2;
  std::size_t in_channels = 2;
  std::size_t channels = 8;
  std::size_t image = 16;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t steps = 100;
  std::size_t batch_size = 8;
  std::size_t repeats = 10;
  std::size_t warmup = 1;
  std::vector<Scheduler> schedulers{Scheduler::step_by_step, Scheduler::layer_by_layer};
  /// Applies to layer_by_layer; step_by_step rows always report unroll 1.
  std::vector<std::size_t> unrolls{1, 8};
  std::vector<Phase> phases{Phase::forward, Phase::forward_backward};
  double input_rate = 0.2;
  std::uint64_t seed = 0;
  std::optional<Precision> precision;

  /// Throws ValidationError for repeats < 3, zero sizes, empty lists or a
  /// rate outside [0, 1].
  void validate() const;
};

struct TimingRow {
  Scheduler scheduler = Scheduler::step_by_step;
  std::size_t unroll = 1;
  Phase phase = Phase::forward;
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;
};

struct BenchReport {
  std::vector<TimingRow> rows;
  Precision precision = Precision::f32;
  /// Largest output difference between any timed configuration and the
  /// first one, measured once before timing.
  double max_output_diff = 0.0;
  bool outputs_equivalent = true;
};

NetworkGraph bench_graph(const BenchSpec& spec);

/// Percentile by linear interpolation between closest ranks; q in [0, 1].
double percentile(std::vector<double> samples, double q);

/// Runs the spec at spec.precision (else SPIKEGRAD_PRECISION, else f32).
BenchReport bench(const BenchSpec& spec);

void write_bench_csv(std::ostream& out, const std::vector<TimingRow>& rows);

}  // namespace spikegrad
