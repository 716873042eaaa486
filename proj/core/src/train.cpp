#include "spikegrad/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "spikegrad/random.hpp"

namespace spikegrad {

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("epochs must be at least 1");
  if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
  if (threads == 0) throw ValidationError("threads must be at least 1");
  if (stop_at_accuracy && !(*stop_at_accuracy >= 0.0 && *stop_at_accuracy <= 1.0)) {
    throw ValidationError("stop_at_accuracy must lie in [0, 1]");
  }
  optimizer.validate();
}

template <typename T>
TrainResult<T> train(const NetworkGraph& graph, ParameterSet<T> params, const Dataset<T>& data,
                     const TrainConfig& config,
                     const std::function<void(const EpochMetrics&)>& on_epoch) {
  config.validate();
  if (data.empty()) throw ValidationError("train: empty dataset");
  check_parameters(graph, params);

  TrainResult<T> result;
  OptimizerState<T> opt;
  std::mt19937_64 rng(mix_seed(config.seed, 0));
  std::vector<std::size_t> order(data.size());
  std::vector<Sample<T>> batch;
  std::size_t batch_counter = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    const std::size_t batches = (data.size() + config.batch_size - 1) / config.batch_size;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(data.size(), lo + config.batch_size);
      batch.clear();
      for (std::size_t k = lo; k < hi; ++k) batch.push_back(data[order[k]]);

      LossOptions lo_opts;
      lo_opts.state_init = config.state_init;
      lo_opts.state_seed = mix_seed(config.seed, ++batch_counter);
      lo_opts.threads = config.threads;
      auto r = loss_and_grad(graph, params, config.plan, std::span<const Sample<T>>(batch), lo_opts);
      if (!std::isfinite(static_cast<double>(r.loss))) {
        throw NumericalError("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(b + 1));
      }
      for (std::size_t k = 0; k < batch.size(); ++k) {
        if (predicted_class(r.counts[k]) == target_class(batch[k].target)) ++correct;
      }
      loss_sum += static_cast<double>(r.loss) * static_cast<double>(batch.size());
      auto up = optimizer_step(std::move(params), r.grads, std::move(opt), config.optimizer);
      params = std::move(up.params);
      opt = std::move(up.state);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.mean_loss = loss_sum / static_cast<double>(data.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.metrics.push_back(m);
    if (on_epoch) on_epoch(m);
    if (config.stop_at_accuracy && m.accuracy >= *config.stop_at_accuracy) break;
  }
  result.params = std::move(params);
  return result;
}

template <typename T>
double evaluate_accuracy(const NetworkGraph& graph, const ParameterSet<T>& params,
                         const Dataset<T>& data, const ExecutionPlan& plan, const StateInit& init,
                         std::uint64_t seed) {
  if (data.empty()) throw ValidationError("evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto states = init_states<T>(graph, init, mix_seed(seed, i));
    const auto r = run(graph, params, plan, data[i].input, states);
    if (predicted_class(spike_counts(r.record)) == target_class(data[i].target)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

template TrainResult<float> train<float>(const NetworkGraph&, ParameterSet<float>,
                                         const Dataset<float>&, const TrainConfig&,
                                         const std::function<void(const EpochMetrics&)>&);
template TrainResult<double> train<double>(const NetworkGraph&, ParameterSet<double>,
                                           const Dataset<double>&, const TrainConfig&,
                                           const std::function<void(const EpochMetrics&)>&);
template double evaluate_accuracy<float>(const NetworkGraph&, const ParameterSet<float>&,
                                         const Dataset<float>&, const ExecutionPlan&,
                                         const StateInit&, std::uint64_t);
template double evaluate_accuracy<double>(const NetworkGraph&, const ParameterSet<double>&,
                                          const Dataset<double>&, const ExecutionPlan&,
                                          const StateInit&, std::uint64_t);

}  // namespace spikegrad
