#pragma once

#include <cstdint>

#include "spikegrad/surrogate.hpp"
#include "spikegrad/tape.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

enum class ResetMode { subtract, to_zero };

/// Current-based LIF hyperparameters. The decays are fixed, not trained.
struct LIFParams {
  double alpha = 0.9;  ///< membrane decay
  double beta = 0.8;   ///< synaptic current decay
  double thr = 1.0;
  Surrogate surrogate{};
  ResetMode reset = ResetMode::subtract;

  /// Throws ValidationError unless 0 < alpha < 1, 0 < beta < 1 and thr > 0.
  void validate() const;

  friend bool operator==(const LIFParams&, const LIFParams&) = default;
};

/// Two internal states per neuron (membrane U, current I) plus the last
/// binary output S. All three share one shape.
template <typename T>
struct NeuronState {
  Tensor<T> U;
  Tensor<T> I;
  Tensor<T> S;
};

template <typename T>
struct LifStepResult {
  NeuronState<T> state;
  Tensor<T> spikes;
};

/// One synchronous update:
///   I' = beta*I + input
///   U_pre = alpha*U + I'
///   S' = threshold(U_pre, thr)
///   U' = U_pre - thr*S'   (subtract)   or   U_pre*(1 - S')   (to_zero)
/// Every operation goes through `tape`, including the reset.
template <typename T>
LifStepResult<T> lif_step(Tape<T>& tape, const NeuronState<T>& state, const Tensor<T>& input,
                          const LIFParams& params);

/// Same recurrence with the Heaviside replaced by smooth_step(U_pre - thr,
/// sharpness). Differentiable everywhere; used for finite-difference checks.
template <typename T>
LifStepResult<T> lif_smooth_step(Tape<T>& tape, const NeuronState<T>& state,
                                 const Tensor<T>& input, const LIFParams& params,
                                 double sharpness);

/// Forward-only LIF over a whole sequence. `input` is [T x state shape]; the
/// result holds the spikes of every step with the same layout and `state`
/// advances in place. Same arithmetic as T calls of lif_step, bit for bit,
/// without a tape. `unroll` steps run per loop trip.
template <typename T>
Tensor<T> lif_scan(NeuronState<T>& state, const Tensor<T>& input, const LIFParams& params,
                   std::size_t unroll = 1);

struct StateInit {
  enum class Mode { zeros, uniform };
  Mode mode = Mode::zeros;
  double lo = 0.0;
  double hi = 1.0;

  static StateInit zeros() { return {}; }
  static StateInit uniform(double lo, double hi) { return {Mode::uniform, lo, hi}; }
};

/// Fresh state of the given shape. Uniform mode draws U and I independently
/// from [lo, hi); S always starts at zero. Deterministic in `seed`.
template <typename T>
NeuronState<T> init_state(const Shape& shape, const StateInit& init, std::uint64_t seed);

}  // namespace spikegrad
