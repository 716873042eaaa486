#include <benchmark/benchmark.h>

#include "spikegrad/spikegrad.hpp"

using namespace spikegrad;

namespace {

// The same [T*B x 256] * [256 x 256] product, as T small calls or one large one.
void BM_MatmulPerStep(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  const Tensor<float> x = gen_random_spikes<float>(8 * 256, steps, 0.2, 1).reshaped({steps * 8, 256});
  const Tensor<float> w = gen_random_spikes<float>(256, 256, 0.5, 2);
  Tape<float> tape(false);
  for (auto _ : state) {
    for (std::size_t t = 0; t < steps; ++t) benchmark::DoNotOptimize(tape.matmul(tape.select(x.reshaped({steps, 8, 256}), t), w));
  }
}
BENCHMARK(BM_MatmulPerStep)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_MatmulWholeSequence(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  const Tensor<float> x = gen_random_spikes<float>(8 * 256, steps, 0.2, 1).reshaped({steps * 8, 256});
  const Tensor<float> w = gen_random_spikes<float>(256, 256, 0.5, 2);
  Tape<float> tape(false);
  for (auto _ : state) benchmark::DoNotOptimize(tape.matmul(x, w));
}
BENCHMARK(BM_MatmulWholeSequence)->Arg(100)->Unit(benchmark::kMillisecond);

struct MlpCase {
  NetworkGraph graph = make_lif_mlp(256, {256, 256});
  ParameterSet<float> params = init_parameters<float>(graph);
  Tensor<float> input = gen_random_spikes<float>(8 * 256, 100, 0.2, 3).reshaped({100, 8, 256});
  StateMap<float> states = init_states<float>(graph, StateInit::zeros(), 0, 8);
  LossHead<float> head = [](Tape<float>& tape, const SpikeRecord<float>& r) {
    return tape.sum_all(r.outputs.rbegin()->second);
  };
};

const MlpCase& mlp() {
  static const MlpCase c;
  return c;
}

ExecutionPlan plan_of(const benchmark::State& state) {
  return state.range(0) == 0 ? ExecutionPlan{Scheduler::step_by_step}
                             : ExecutionPlan{Scheduler::layer_by_layer, static_cast<std::size_t>(state.range(0))};
}

// Arg 0 is step_by_step; n > 0 is layer_by_layer with unroll n.
void BM_MlpForward(benchmark::State& state) {
  const MlpCase& c = mlp();
  const ExecutionPlan plan = plan_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(run(c.graph, c.params, plan, c.input, c.states));
}
BENCHMARK(BM_MlpForward)->Arg(0)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_MlpForwardBackward(benchmark::State& state) {
  const MlpCase& c = mlp();
  const ExecutionPlan plan = plan_of(state);
  for (auto _ : state) {
    benchmark::DoNotOptimize(value_and_grad(c.graph, c.params, plan, c.input, c.states, c.head));
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(0)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_MlpCheckpointed(benchmark::State& state) {
  const MlpCase& c = mlp();
  const ExecutionPlan plan{Scheduler::step_by_step, 1, static_cast<std::size_t>(state.range(0))};
  for (auto _ : state) {
    benchmark::DoNotOptimize(value_and_grad(c.graph, c.params, plan, c.input, c.states, c.head));
  }
}
BENCHMARK(BM_MlpCheckpointed)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_ConvForward(benchmark::State& state) {
  BenchSpec spec;
  spec.arch = Arch::cnn;
  spec.steps = 50;
  const NetworkGraph g = bench_graph(spec);
  const auto params = init_parameters<float>(g);
  const Tensor<float> input =
      gen_random_spikes<float>(8 * 2 * 16 * 16, 50, 0.2, 4).reshaped({50, 8, 2, 16, 16});
  const auto states = init_states<float>(g, StateInit::zeros(), 0, 8);
  const ExecutionPlan plan = plan_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(run(g, params, plan, input, states));
}
BENCHMARK(BM_ConvForward)->Arg(0)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
