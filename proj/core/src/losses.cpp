#include "spikegrad/losses.hpp"

#include <exception>
#include <thread>

#include "spikegrad/random.hpp"

namespace spikegrad {

template <typename T>
const Tensor<T>& last_output(const SpikeRecord<T>& record) {
  if (record.outputs.empty()) throw ContractError("spike record has no output nodes");
  return record.outputs.rbegin()->second;
}

template <typename T>
Tensor<T> spike_counts(const SpikeRecord<T>& record) {
  const Tensor<T>& rec = last_output(record);
  if (rec.rank() != 2) {
    throw DimensionError("expected an unbatched [T x C] record, got " + to_string(rec.shape()));
  }
  return Tape<T>(false).sum_axis(rec.detached(), 0);
}

template <typename T>
std::size_t predicted_class(const Tensor<T>& counts) {
  if (counts.size() == 0) throw DimensionError("predicted_class: empty counts");
  const auto d = counts.data();
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

template <typename T>
std::size_t target_class(const Tensor<T>& target) {
  const auto d = target.data();
  std::size_t hot = d.size();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == T{1} && hot == d.size()) {
      hot = i;
    } else if (d[i] != T{0}) {
      hot = d.size();
      break;
    }
  }
  if (hot == d.size() || target.rank() != 1) throw ValidationError("target is not one-hot");
  return hot;
}

namespace {

template <typename T>
Tensor<T> taped_counts(Tape<T>& tape, const SpikeRecord<T>& record, const Tensor<T>& target) {
  const Tensor<T>& rec = last_output(record);
  if (rec.rank() != 2) {
    throw DimensionError("count loss expects an unbatched [T x C] record, got " +
                         to_string(rec.shape()));
  }
  if (rec.dim(1) != target.size() || target.rank() != 1) {
    throw DimensionError("output has " + std::to_string(rec.dim(1)) + " classes but target is " +
                         to_string(target.shape()));
  }
  return tape.sum_axis(rec, 0);
}

}  // namespace

template <typename T>
Tensor<T> spike_count_ce_loss(Tape<T>& tape, const SpikeRecord<T>& record,
                              const Tensor<T>& target) {
  return tape.softmax_cross_entropy(taped_counts(tape, record, target), target);
}

template <typename T>
LossHead<T> spike_count_ce_head(Tensor<T> target) {
  return [target = std::move(target)](Tape<T>& tape, const SpikeRecord<T>& record) {
    return spike_count_ce_loss(tape, record, target);
  };
}

template <typename T>
LossHead<T> count_squared_error_head(Tensor<T> target) {
  return [target = std::move(target)](Tape<T>& tape, const SpikeRecord<T>& record) {
    const Tensor<T> diff = tape.sub(taped_counts(tape, record, target), target);
    return tape.scale(tape.sum_all(tape.mul(diff, diff)), T{0.5});
  };
}

template <typename T>
HeadFactory<T> cross_entropy_heads() {
  return [](const Sample<T>& s) { return spike_count_ce_head(s.target); };
}

namespace {

/// Runs fn(i) for i in [0, n) on up to `threads` workers and rethrows the
/// exception of the lowest failing index.
template <typename F>
void for_each_sample(std::size_t n, std::size_t threads, F&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

template <typename T>
BatchResult<T> loss_and_grad(const NetworkGraph& graph, const ParameterSet<T>& params,
                             const ExecutionPlan& plan, std::span<const Sample<T>> batch,
                             const LossOptions& options, const HeadFactory<T>& heads) {
  if (batch.empty()) throw ValidationError("loss_and_grad: empty batch");
  const HeadFactory<T> make_head = heads ? heads : cross_entropy_heads<T>();

  std::vector<GradResult<T>> parts(batch.size());
  for_each_sample(batch.size(), options.threads, [&](std::size_t i) {
    const auto init = init_states<T>(graph, options.state_init, mix_seed(options.state_seed, i));
    parts[i] = value_and_grad(graph, params, plan, batch[i].input, init, make_head(batch[i]));
  });

  BatchResult<T> out;
  const T n = static_cast<T>(batch.size());
  T loss_sum{0};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    loss_sum += parts[i].loss;
    for (auto& [name, g] : parts[i].grads) {
      auto it = out.grads.find(name);
      if (it == out.grads.end()) {
        out.grads.emplace(name, g);
        continue;
      }
      auto dst = it->second.mutable_data();
      const auto src = g.data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    const Tensor<T>& rec = last_output(parts[i].record);
    out.counts.push_back(rec.rank() == 2 ? spike_counts(parts[i].record) : Tensor<T>{});
  }
  for (auto& [name, g] : out.grads) {
    for (T& v : g.mutable_data()) v /= n;
  }
  out.loss = loss_sum / n;
  return out;
}

template <typename T>
T batch_loss(const NetworkGraph& graph, const ParameterSet<T>& params, const ExecutionPlan& plan,
             std::span<const Sample<T>> batch, const LossOptions& options,
             const HeadFactory<T>& heads) {
  if (batch.empty()) throw ValidationError("batch_loss: empty batch");
  const HeadFactory<T> make_head = heads ? heads : cross_entropy_heads<T>();
  std::vector<T> losses(batch.size());
  for_each_sample(batch.size(), options.threads, [&](std::size_t i) {
    const auto init = init_states<T>(graph, options.state_init, mix_seed(options.state_seed, i));
    const RunResult<T> r = run(graph, params, plan, batch[i].input, init);
    Tape<T> tape(false);
    const Tensor<T> loss = make_head(batch[i])(tape, r.record);
    if (loss.size() != 1) throw ContractError("loss head must return a scalar");
    losses[i] = loss.item();
  });
  T sum{0};
  for (T l : losses) sum += l;
  return sum / static_cast<T>(batch.size());
}

#define SPIKEGRAD_INSTANTIATE_LOSSES(T)                                                          \
  template const Tensor<T>& last_output<T>(const SpikeRecord<T>&);                               \
  template Tensor<T> spike_counts<T>(const SpikeRecord<T>&);                                     \
  template std::size_t predicted_class<T>(const Tensor<T>&);                                     \
  template std::size_t target_class<T>(const Tensor<T>&);                                        \
  template Tensor<T> spike_count_ce_loss<T>(Tape<T>&, const SpikeRecord<T>&, const Tensor<T>&);  \
  template LossHead<T> spike_count_ce_head<T>(Tensor<T>);                                        \
  template LossHead<T> count_squared_error_head<T>(Tensor<T>);                                   \
  template HeadFactory<T> cross_entropy_heads<T>();                                              \
  template BatchResult<T> loss_and_grad<T>(const NetworkGraph&, const ParameterSet<T>&,          \
                                           const ExecutionPlan&, std::span<const Sample<T>>,     \
                                           const LossOptions&, const HeadFactory<T>&);           \
  template T batch_loss<T>(const NetworkGraph&, const ParameterSet<T>&, const ExecutionPlan&,    \
                           std::span<const Sample<T>>, const LossOptions&, const HeadFactory<T>&);

SPIKEGRAD_INSTANTIATE_LOSSES(float)
SPIKEGRAD_INSTANTIATE_LOSSES(double)

#undef SPIKEGRAD_INSTANTIATE_LOSSES

}  // namespace spikegrad
