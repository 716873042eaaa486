#include "spikegrad/bench.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>
#include <string>

#include "spikegrad/csv.hpp"
#include "spikegrad/data.hpp"
#include "spikegrad/random.hpp"

namespace spikegrad {

std::string_view to_string(Phase p) { return p == Phase::forward ? "forward" : "forward_backward"; }

Phase parse_phase(std::string_view name) {
  if (name == "forward") return Phase::forward;
  if (name == "forward_backward") return Phase::forward_backward;
  throw ValidationError("unknown phase '" + std::string(name) +
                        "' (expected forward or forward_backward)");
}

std::string_view to_string(Arch a) { return a == Arch::mlp ? "mlp" : "cnn"; }

Arch parse_arch(std::string_view name) {
  if (name == "mlp") return Arch::mlp;
  if (name == "cnn") return Arch::cnn;
  throw ValidationError("unknown arch '" + std::string(name) + "' (expected mlp or cnn)");
}

void BenchSpec::validate() const {
  if (repeats < 3) throw ValidationError("bench: repeats must be at least 3");
  if (steps == 0) throw ValidationError("bench: T must be at least 1");
  if (batch_size == 0) throw ValidationError("bench: batch_size must be at least 1");
  if (depth == 0) throw ValidationError("bench: depth must be at least 1");
  if (arch == Arch::mlp && (n_in == 0 || width == 0)) {
    throw ValidationError("bench: n_in and width must be positive");
  }
  if (arch == Arch::cnn &&
      (in_channels == 0 || channels == 0 || image == 0 || kernel == 0 || stride == 0)) {
    throw ValidationError("bench: cnn sizes must be positive");
  }
  if (schedulers.empty()) throw ValidationError("bench: no schedulers given");
  if (unrolls.empty()) throw ValidationError("bench: no unroll factors given");
  if (phases.empty()) throw ValidationError("bench: no phases given");
  if (std::find(unrolls.begin(), unrolls.end(), std::size_t{0}) != unrolls.end()) {
    throw ValidationError("bench: unroll factors must be positive");
  }
  if (!(input_rate >= 0.0 && input_rate <= 1.0)) {
    throw ValidationError("bench: input_rate must lie in [0, 1]");
  }
}

NetworkGraph bench_graph(const BenchSpec& spec) {
  spec.validate();
  if (spec.arch == Arch::mlp) {
    return make_lif_mlp(spec.n_in, std::vector<std::size_t>(spec.depth, spec.width), LIFParams{},
                        spec.seed);
  }
  std::vector<LayerNode> layers;
  std::size_t c = spec.in_channels;
  std::size_t h = spec.image;
  const std::size_t pad = spec.kernel / 2;
  for (std::size_t l = 0; l < spec.depth; ++l) {
    if (h + 2 * pad < spec.kernel) throw ValidationError("bench: image too small for the kernel");
    h = (h + 2 * pad - spec.kernel) / spec.stride + 1;
    layers.push_back(conv(c, spec.channels, spec.kernel, spec.stride, pad));
    layers.push_back(lif(Shape{spec.channels, h, h}));
    c = spec.channels;
  }
  return sequential({spec.in_channels, spec.image, spec.image}, std::move(layers), spec.seed);
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) throw ValidationError("percentile of an empty sample");
  std::sort(samples.begin(), samples.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, samples.size() - 1);
  return samples[lo] + (pos - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

namespace {

struct Cell {
  Scheduler scheduler;
  std::size_t unroll;
};

template <typename T>
BenchReport run_bench(const BenchSpec& spec, Precision precision) {
  const NetworkGraph graph = bench_graph(spec);
  const ParameterSet<T> params = init_parameters<T>(graph);

  const Shape& in = graph.input_shape();
  Tensor<T> input = gen_random_spikes<T>(spec.batch_size * numel(in), spec.steps, spec.input_rate,
                                         mix_seed(spec.seed, 1));
  Shape shape{spec.steps, spec.batch_size};
  shape.insert(shape.end(), in.begin(), in.end());
  input = input.reshaped(shape);
  const StateMap<T> states = init_states<T>(graph, StateInit::zeros(), spec.seed, spec.batch_size);
  const LossHead<T> head = [](Tape<T>& tape, const SpikeRecord<T>& r) {
    return tape.sum_all(r.outputs.rbegin()->second);
  };

  std::vector<Cell> cells;
  for (Scheduler s : spec.schedulers) {
    if (s == Scheduler::step_by_step) {
      cells.push_back({s, 1});
    } else {
      for (std::size_t u : spec.unrolls) cells.push_back({s, u});
    }
  }

  BenchReport report;
  report.precision = precision;

  // Verification runs once, outside every timed region.
  std::optional<SpikeRecord<T>> reference;
  for (const Cell& c : cells) {
    const ExecutionPlan plan{c.scheduler, c.unroll, std::nullopt};
    auto r = run(graph, params, plan, input, states);
    if (!reference) {
      reference = std::move(r.record);
      continue;
    }
    for (const auto& [id, t] : reference->outputs) {
      report.max_output_diff = std::max(
          report.max_output_diff, static_cast<double>(max_abs_difference(t, r.record.outputs.at(id))));
    }
  }
  report.outputs_equivalent = report.max_output_diff < 1e-6;

  using clock = std::chrono::steady_clock;
  const auto once = [&](const Cell& c, Phase phase) {
    const ExecutionPlan plan{c.scheduler, c.unroll, std::nullopt};
    if (phase == Phase::forward) {
      (void)run(graph, params, plan, input, states);
    } else {
      (void)value_and_grad(graph, params, plan, input, states, head);
    }
  };
  // Repeats interleave across configurations so slow drifts in machine load
  // hit every row alike.
  std::vector<std::vector<double>> ms(cells.size() * spec.phases.size());
  for (std::size_t r = 0; r < spec.warmup + spec.repeats; ++r) {
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      for (std::size_t pi = 0; pi < spec.phases.size(); ++pi) {
        const auto t0 = clock::now();
        once(cells[ci], spec.phases[pi]);
        const double elapsed = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        if (r >= spec.warmup) ms[ci * spec.phases.size() + pi].push_back(elapsed);
      }
    }
  }
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (std::size_t pi = 0; pi < spec.phases.size(); ++pi) {
      const auto& samples = ms[ci * spec.phases.size() + pi];
      report.rows.push_back({cells[ci].scheduler, cells[ci].unroll, spec.phases[pi],
                             percentile(samples, 0.5), percentile(samples, 0.1),
                             percentile(samples, 0.9)});
    }
  }
  return report;
}

}  // namespace

BenchReport bench(const BenchSpec& spec) {
  spec.validate();
  const Precision p = spec.precision.value_or(precision_from_env(Precision::f32));
  return p == Precision::f64 ? run_bench<double>(spec, p) : run_bench<float>(spec, p);
}

void write_bench_csv(std::ostream& out, const std::vector<TimingRow>& rows) {
  out << "scheduler,unroll,phase,median_ms,p10_ms,p90_ms\n";
  for (const auto& r : rows) {
    out << to_string(r.scheduler) << ',' << r.unroll << ',' << to_string(r.phase) << ','
        << format_number(r.median_ms) << ',' << format_number(r.p10_ms) << ','
        << format_number(r.p90_ms) << '\n';
  }
}

}  // namespace spikegrad
