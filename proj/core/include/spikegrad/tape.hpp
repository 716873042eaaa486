#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "spikegrad/surrogate.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

/// Initial adjoint for one taped tensor, used by vector-Jacobian backward
/// passes. Seeds for the same node are summed in the order given.
template <typename T>
struct Seed {
  Tensor<T> node;
  Tensor<T> grad;
};

/// Result of a backward sweep: one gradient per leaf created with
/// requires_grad, keyed by tape index.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::uint64_t tape_id, std::map<std::uint32_t, Tensor<T>> grads)
      : tape_id_(tape_id), grads_(std::move(grads)) {}

  bool contains(const Tensor<T>& leaf) const {
    return leaf.node() && leaf.node()->tape_id == tape_id_ && grads_.contains(leaf.node()->index);
  }

  const Tensor<T>& at(const Tensor<T>& leaf) const {
    if (!contains(leaf)) throw ContractError("no gradient recorded for this tensor");
    return grads_.at(leaf.node()->index);
  }

  const std::map<std::uint32_t, Tensor<T>>& by_node() const noexcept { return grads_; }
  std::size_t size() const noexcept { return grads_.size(); }
  bool empty() const noexcept { return grads_.empty(); }

 private:
  std::uint64_t tape_id_ = 0;
  std::map<std::uint32_t, Tensor<T>> grads_;
};

/// Append-only record of primitive operations for reverse-mode AD.
///
/// Every primitive is a member function. An operation is recorded only when
/// the tape is recording and at least one operand requires a gradient;
/// otherwise the value is computed and returned untaped. Each node keeps just
/// the operands its backward rule reads.
///
/// Tensors from another tape are a ContractError. Not thread-safe; use one
/// tape per thread.
template <typename T>
class Tape {
 public:
  struct Stats {
    std::size_t nodes = 0;
    std::size_t saved_tensors = 0;
    std::size_t saved_elements = 0;
  };

  explicit Tape(bool recording = true);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  bool recording() const noexcept { return recording_; }
  std::uint64_t id() const noexcept { return id_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Stats& stats() const noexcept { return stats_; }
  void clear();

  /// True when `t` lives on this tape and depends on a gradient-requiring leaf.
  bool requires_grad(const Tensor<T>& t) const;

  /// Registers an input variable. Leaves with requires_grad receive an entry
  /// in every Gradients result, zero when unreachable from the seeds.
  Tensor<T> leaf(Tensor<T> value, bool requires_grad = true);

  Tensor<T> identity(const Tensor<T>& a);
  Tensor<T> reshape(const Tensor<T>& a, Shape shape);

  // Element-wise. Operands must share a shape, or one of them is rank-0.
  Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> scale(const Tensor<T>& a, T factor);
  Tensor<T> add_scalar(const Tensor<T>& a, T offset);

  Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis);
  Tensor<T> sum_all(const Tensor<T>& a);

  /// [m x k] * [k x n] -> [m x n]; a rank-1 lhs of length k is a row vector
  /// and yields a rank-1 result of length n.
  Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

  /// Adds bias[j] to every element whose index along `axis` is j.
  Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias, std::size_t axis);

  /// Cross-correlation of [C x H x W] (or a batch [B x C x H x W]) with a
  /// kernel [C_out x C x k x k].
  Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                   std::size_t padding);

  /// Heaviside spike: 1 where u >= thr, else 0. The backward pass multiplies
  /// the incoming gradient by surrogate(u - thr).
  Tensor<T> threshold(const Tensor<T>& u, T thr, const Surrogate& surrogate);

  /// smooth_step(u - thr, sharpness) with its exact derivative.
  Tensor<T> smooth_threshold(const Tensor<T>& u, T thr, T sharpness);

  /// -log softmax(logits)[c] for a one-hot target; target is not differentiated.
  Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& target);

  /// Slice `index` along axis 0.
  Tensor<T> select(const Tensor<T>& a, std::size_t index);

  /// Stacks equally shaped tensors along a new leading axis.
  Tensor<T> stack(std::span<const Tensor<T>> parts);

  /// Reverse sweep from a scalar output with d(seed)/d(seed) = 1.
  Gradients<T> backward(const Tensor<T>& seed) const;

  /// Reverse sweep from arbitrary adjoints. Grad slots start empty on every
  /// call, so repeated sweeps return identical results.
  Gradients<T> backward(std::span<const Seed<T>> seeds) const;

 private:
  enum class Op : std::uint8_t {
    leaf,
    identity,
    reshape,
    add,
    sub,
    mul,
    scale,
    add_scalar,
    sum_axis,
    sum_all,
    matmul,
    add_bias,
    conv2d,
    threshold,
    smooth_threshold,
    softmax_ce,
    select,
    stack,
  };

  static constexpr std::int64_t kConstant = -1;

  struct Node {
    Op op = Op::leaf;
    bool requires_grad = false;
    Shape shape;
    std::vector<std::int64_t> inputs;
    std::vector<Tensor<T>> saved;
    T scalar{0};
    std::array<std::size_t, 8> dims{};
    Surrogate surrogate{};
  };

  std::int64_t input_index(const Tensor<T>& t) const;
  Tensor<T> record(Tensor<T> value, Node node);
  Tensor<T> elementwise(Op op, const Tensor<T>& a, const Tensor<T>& b);

  bool recording_ = true;
  std::uint64_t id_ = 0;
  std::vector<Node> nodes_;
  Stats stats_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace spikegrad
