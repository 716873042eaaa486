#include "spikegrad/data.hpp"

#include <random>

#include "json_util.hpp"
#include "spikegrad/random.hpp"

namespace spikegrad {

template <typename T>
Tensor<T> gen_random_spikes(std::size_t n, std::size_t t, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("spike rate must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(rate);
  Tensor<T> out(Shape{t, n});
  for (T& v : out.mutable_data()) v = coin(rng) ? T{1} : T{0};
  return out;
}

template <typename T>
Dataset<T> gen_toy(std::size_t classes, std::size_t n_in, std::size_t t,
                   std::size_t samples_per_class, std::uint64_t seed, ToyRates rates) {
  if (classes < 2) throw ValidationError("gen_toy: need at least 2 classes");
  if (classes > n_in) {
    throw ValidationError("gen_toy: " + std::to_string(classes) + " classes need at least as many input channels, got " +
                          std::to_string(n_in));
  }
  if (t == 0) throw ValidationError("gen_toy: need at least one time step");
  if (!(rates.low >= 0.0 && rates.high <= 1.0 && rates.low < rates.high)) {
    throw ValidationError("gen_toy: rates must satisfy 0 <= low < high <= 1");
  }
  const std::size_t group = n_in / classes;
  Dataset<T> data;
  data.reserve(classes * samples_per_class);
  for (std::size_t k = 0; k < classes * samples_per_class; ++k) {
    const std::size_t c = k % classes;
    std::mt19937_64 rng(mix_seed(seed, k));
    std::bernoulli_distribution hot(rates.high), cold(rates.low);
    Tensor<T> input(Shape{t, n_in});
    auto d = input.mutable_data();
    for (std::size_t s = 0; s < t; ++s) {
      for (std::size_t i = 0; i < n_in; ++i) {
        const bool active = i >= c * group && i < (c + 1) * group;
        d[s * n_in + i] = (active ? hot(rng) : cold(rng)) ? T{1} : T{0};
      }
    }
    Tensor<T> target(Shape{classes});
    target.mutable_data()[c] = T{1};
    data.push_back({std::move(input), std::move(target)});
  }
  return data;
}

template <typename T>
Dataset<T> dataset_from_json(std::string_view text, const Shape& input_shape) {
  using detail::Json;
  const Json j = detail::parse_json(text, "dataset");
  detail::check_keys(j, {"version", "classes", "samples"}, "dataset");
  detail::check_version(j, "dataset");
  const std::size_t classes = detail::get_size(j, "classes", "dataset");
  if (classes < 2) throw ValidationError("dataset: need at least 2 classes");
  if (!j.contains("samples") || !j["samples"].is_array() || j["samples"].empty()) {
    throw ValidationError("dataset: \"samples\" must be a non-empty array");
  }
  const std::size_t width = numel(input_shape);
  Dataset<T> data;
  for (const auto& s : j["samples"]) {
    detail::check_keys(s, {"label", "input"}, "dataset sample");
    const std::size_t label = detail::get_size(s, "label", "dataset sample");
    if (label >= classes) throw ValidationError("dataset: label " + std::to_string(label) + " out of range");
    const auto rows = detail::get<std::vector<std::vector<double>>>(s, "input", "dataset sample");
    if (rows.empty()) throw ValidationError("dataset: sample without time steps");
    Shape shape{rows.size()};
    shape.insert(shape.end(), input_shape.begin(), input_shape.end());
    std::vector<T> values;
    values.reserve(rows.size() * width);
    for (const auto& r : rows) {
      if (r.size() != width) {
        throw DimensionError("dataset: row of " + std::to_string(r.size()) + " values, expected " +
                             std::to_string(width));
      }
      for (double v : r) values.push_back(static_cast<T>(v));
    }
    Tensor<T> target(Shape{classes});
    target.mutable_data()[label] = T{1};
    data.push_back({Tensor<T>(std::move(shape), std::move(values)), std::move(target)});
  }
  return data;
}

template <typename T>
Dataset<T> load_dataset(const std::string& path, const Shape& input_shape) {
  return dataset_from_json<T>(detail::read_text_file(path), input_shape);
}

#define SPIKEGRAD_INSTANTIATE_DATA(T)                                                            \
  template Tensor<T> gen_random_spikes<T>(std::size_t, std::size_t, double, std::uint64_t);      \
  template Dataset<T> gen_toy<T>(std::size_t, std::size_t, std::size_t, std::size_t,             \
                                 std::uint64_t, ToyRates);                                       \
  template Dataset<T> dataset_from_json<T>(std::string_view, const Shape&);                      \
  template Dataset<T> load_dataset<T>(const std::string&, const Shape&);

SPIKEGRAD_INSTANTIATE_DATA(float)
SPIKEGRAD_INSTANTIATE_DATA(double)

#undef SPIKEGRAD_INSTANTIATE_DATA

}  // namespace spikegrad
