#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spikegrad/buffer.hpp"
#include "spikegrad/errors.hpp"

namespace spikegrad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Floating-point precision of a run. f32 is the default; gradient checks use f64.
enum class Precision { f32, f64 };

Precision parse_precision(std::string_view name);
std::string_view to_string(Precision p);

/// Reads SPIKEGRAD_PRECISION (f32 | f64); returns `fallback` when unset.
Precision precision_from_env(Precision fallback = Precision::f32);

template <typename T>
class Tape;

/// Position of a tensor on a specific tape.
struct NodeHandle {
  std::uint64_t tape_id = 0;
  std::uint32_t index = 0;

  friend bool operator==(const NodeHandle&, const NodeHandle&) = default;
};

/// Dense row-major array of T with shape metadata.
///
/// Storage is shared between copies and detached on the first write through
/// mutable_data(), so passing tensors by value is cheap. A tensor produced by
/// a recording Tape carries a NodeHandle; everything else is a plain value.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  using value_type = T;

  /// Rank-0 tensor holding a single zero.
  Tensor() : Tensor(Shape{}) {}

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)),
        data_(std::make_shared<Buffer<T>>(spikegrad::numel(shape_), fill)) {}

  Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)) {
    check_size(data.size());
    data_ = std::make_shared<Buffer<T>>(data.begin(), data.end());
  }

  Tensor(Shape shape, std::initializer_list<T> data) : shape_(std::move(shape)) {
    check_size(data.size());
    data_ = std::make_shared<Buffer<T>>(data);
  }

  Tensor(Shape shape, Buffer<T>&& data) : shape_(std::move(shape)) {
    check_size(data.size());
    data_ = std::make_shared<Buffer<T>>(std::move(data));
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor(Shape{values.size()}, std::vector<T>(values));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> flat;
    flat.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(flat));
  }

  static Tensor identity(std::size_t n) {
    Tensor out(Shape{n, n});
    auto d = out.mutable_data();
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] = T{1};
    return out;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_->size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<const T> data() const noexcept { return {data_->data(), data_->size()}; }

  std::span<T> mutable_data() {
    if (data_.use_count() > 1) data_ = std::make_shared<Buffer<T>>(*data_);
    node_.reset();
    return {data_->data(), data_->size()};
  }

  T operator[](std::size_t i) const { return (*data_)[i]; }

  T item() const {
    if (size() != 1) {
      throw DimensionError("item() on tensor of shape " + to_string(shape_));
    }
    return (*data_)[0];
  }

  /// Same storage viewed with another shape; drops any tape handle.
  Tensor reshaped(Shape shape) const {
    if (spikegrad::numel(shape) != size()) {
      throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    Tensor out = *this;
    out.shape_ = std::move(shape);
    out.node_.reset();
    return out;
  }

  /// Plain value copy without the tape handle.
  Tensor detached() const {
    Tensor out = *this;
    out.node_.reset();
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_->begin(), data_->end());
    return Tensor<U>(shape_, std::move(out));
  }

  const std::optional<NodeHandle>& node() const noexcept { return node_; }
  bool on_tape() const noexcept { return node_.has_value(); }

  bool all_finite() const {
    return std::all_of(data_->begin(), data_->end(), [](T v) { return std::isfinite(v); });
  }

  /// Element-wise bitwise equality of values and shapes (tape handles ignored).
  bool same_values(const Tensor& other) const {
    return shape_ == other.shape_ && *data_ == *other.data_;
  }

 private:
  friend class Tape<T>;

  void check_size(std::size_t n) const {
    if (spikegrad::numel(shape_) != n) {
      throw DimensionError("tensor shape " + to_string(shape_) + " needs " +
                           std::to_string(spikegrad::numel(shape_)) + " elements, got " +
                           std::to_string(n));
    }
  }

  Shape shape_;
  std::shared_ptr<Buffer<T>> data_;
  std::optional<NodeHandle> node_;
};

template <typename T>
T max_abs_difference(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("cannot compare " + to_string(a.shape()) + " with " + to_string(b.shape()));
  }
  T worst{0};
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace spikegrad
