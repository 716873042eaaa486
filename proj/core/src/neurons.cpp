#include "spikegrad/neurons.hpp"

#include <random>

#include "scan.hpp"

namespace spikegrad {

void LIFParams::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("LIF alpha must lie in (0, 1)");
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("LIF beta must lie in (0, 1)");
  if (!(thr > 0.0) || !std::isfinite(thr)) throw ValidationError("LIF threshold must be positive");
  if (!(surrogate.slope > 0.0)) throw ValidationError("surrogate slope must be positive");
}

namespace {

template <typename T>
void check_shapes(const NeuronState<T>& state, const Tensor<T>& input) {
  if (state.U.shape() != input.shape() || state.I.shape() != input.shape() ||
      state.S.shape() != input.shape()) {
    throw DimensionError("LIF step: input " + to_string(input.shape()) +
                         " does not match state " + to_string(state.U.shape()));
  }
}

template <typename T, typename Spike>
LifStepResult<T> step_with(Tape<T>& tape, const NeuronState<T>& state, const Tensor<T>& input,
                           const LIFParams& params, Spike&& spike) {
  check_shapes(state, input);
  const T alpha = static_cast<T>(params.alpha);
  const T beta = static_cast<T>(params.beta);
  const T thr = static_cast<T>(params.thr);

  Tensor<T> current = tape.add(tape.scale(state.I, beta), input);
  Tensor<T> u_pre = tape.add(tape.scale(state.U, alpha), current);
  Tensor<T> s = spike(u_pre);
  Tensor<T> u_next = params.reset == ResetMode::subtract
                         ? tape.sub(u_pre, tape.scale(s, thr))
                         : tape.mul(u_pre, tape.add_scalar(tape.scale(s, T{-1}), T{1}));
  return {NeuronState<T>{std::move(u_next), std::move(current), s}, s};
}

}  // namespace

template <typename T>
LifStepResult<T> lif_step(Tape<T>& tape, const NeuronState<T>& state, const Tensor<T>& input,
                          const LIFParams& params) {
  return step_with(tape, state, input, params, [&](const Tensor<T>& u) {
    return tape.threshold(u, static_cast<T>(params.thr), params.surrogate);
  });
}

template <typename T>
LifStepResult<T> lif_smooth_step(Tape<T>& tape, const NeuronState<T>& state,
                                 const Tensor<T>& input, const LIFParams& params,
                                 double sharpness) {
  if (!(sharpness > 0.0)) throw ValidationError("smooth LIF sharpness must be positive");
  return step_with(tape, state, input, params, [&](const Tensor<T>& u) {
    return tape.smooth_threshold(u, static_cast<T>(params.thr), static_cast<T>(sharpness));
  });
}

template <typename T>
Tensor<T> lif_scan(NeuronState<T>& state, const Tensor<T>& input, const LIFParams& params,
                   std::size_t unroll) {
  if (unroll == 0) throw ValidationError("unroll must be at least 1");
  const Shape& shape = state.U.shape();
  if (input.rank() != shape.size() + 1 || !std::equal(shape.begin(), shape.end(), input.shape().begin() + 1)) {
    throw DimensionError("LIF scan: input " + to_string(input.shape()) + " does not match state " +
                         to_string(shape));
  }
  check_shapes(state, Tensor<T>(shape));
  const T alpha = static_cast<T>(params.alpha);
  const T beta = static_cast<T>(params.beta);
  const T thr = static_cast<T>(params.thr);
  const bool subtract = params.reset == ResetMode::subtract;
  const std::size_t n = numel(shape);

  Tensor<T> spikes(input.shape());
  T* s_out = spikes.mutable_data().data();
  T* u = state.U.mutable_data().data();
  T* cur = state.I.mutable_data().data();
  const T* in = input.data().data();
  // Mirrors step_with: scale, add, scale, add, threshold, reset.
  auto body = [&](std::size_t t) {
    const T* x = in + t * n;
    T* s = s_out + t * n;
    for (std::size_t i = 0; i < n; ++i) {
      const T c = cur[i] * beta + x[i];
      const T pre = u[i] * alpha + c;
      const T spike = pre >= thr ? T{1} : T{0};
      cur[i] = c;
      u[i] = subtract ? pre - spike * thr : pre * (spike * T{-1} + T{1});
      s[i] = spike;
    }
  };
  detail::scan(input.dim(0), unroll, body);
  if (input.dim(0) > 0) {
    auto last = state.S.mutable_data();
    std::copy(s_out + (input.dim(0) - 1) * n, s_out + input.dim(0) * n, last.begin());
  }
  return spikes;
}

template <typename T>
NeuronState<T> init_state(const Shape& shape, const StateInit& init, std::uint64_t seed) {
  if (shape.empty() || numel(shape) == 0) {
    throw ValidationError("neuron state needs at least one neuron");
  }
  NeuronState<T> state{Tensor<T>(shape), Tensor<T>(shape), Tensor<T>(shape)};
  if (init.mode == StateInit::Mode::uniform) {
    if (!(init.lo < init.hi)) {
      throw ValidationError("uniform state init needs lo < hi");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(init.lo, init.hi);
    for (auto& v : state.U.mutable_data()) v = static_cast<T>(dist(rng));
    for (auto& v : state.I.mutable_data()) v = static_cast<T>(dist(rng));
  }
  return state;
}

#define SPIKEGRAD_INSTANTIATE_NEURONS(T)                                                     \
  template LifStepResult<T> lif_step<T>(Tape<T>&, const NeuronState<T>&, const Tensor<T>&,   \
                                        const LIFParams&);                                    \
  template LifStepResult<T> lif_smooth_step<T>(Tape<T>&, const NeuronState<T>&,              \
                                               const Tensor<T>&, const LIFParams&, double);  \
  template Tensor<T> lif_scan<T>(NeuronState<T>&, const Tensor<T>&, const LIFParams&,        \
                                 std::size_t);                                                 \
  template NeuronState<T> init_state<T>(const Shape&, const StateInit&, std::uint64_t);

SPIKEGRAD_INSTANTIATE_NEURONS(float)
SPIKEGRAD_INSTANTIATE_NEURONS(double)

#undef SPIKEGRAD_INSTANTIATE_NEURONS

}  // namespace spikegrad
