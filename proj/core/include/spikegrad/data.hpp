#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "spikegrad/losses.hpp"

namespace spikegrad {

/// [t x n] of independent Bernoulli(rate) bins. Throws ValidationError
/// unless 0 <= rate <= 1.
template <typename T>
Tensor<T> gen_random_spikes(std::size_t n, std::size_t t, double rate, std::uint64_t seed);

struct ToyRates {
  double high = 0.8;
  double low = 0.05;
};

/// Rate-coded classes: class c drives input channels
/// [c*g, (c+1)*g) with g = n_in / classes at the high rate, every other
/// channel fires at the low rate. Samples alternate classes 0, 1, ..., C-1.
/// Throws ValidationError for classes < 2 or classes > n_in.
template <typename T>
Dataset<T> gen_toy(std::size_t classes, std::size_t n_in, std::size_t t,
                   std::size_t samples_per_class, std::uint64_t seed, ToyRates rates = {});

/// Versioned JSON dataset: {"version": 1, "classes": C,
/// "samples": [{"label": k, "input": [[...T rows of numel(input_shape)...]]}]}.
template <typename T>
Dataset<T> dataset_from_json(std::string_view text, const Shape& input_shape);

template <typename T>
Dataset<T> load_dataset(const std::string& path, const Shape& input_shape);

}  // namespace spikegrad
