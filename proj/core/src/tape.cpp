#include "spikegrad/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <tuple>

#include "kernels.hpp"

namespace spikegrad {
namespace {

std::uint64_t next_tape_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                         to_string(b));
  }
}

}  // namespace

template <typename T>
Tape<T>::Tape(bool recording) : recording_(recording), id_(next_tape_id()) {}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
  stats_ = {};
  // Handles issued before clear() must not alias new nodes.
  id_ = next_tape_id();
}

template <typename T>
bool Tape<T>::requires_grad(const Tensor<T>& t) const {
  const std::int64_t idx = input_index(t);
  return idx != kConstant && nodes_[static_cast<std::size_t>(idx)].requires_grad;
}

template <typename T>
std::int64_t Tape<T>::input_index(const Tensor<T>& t) const {
  if (!t.node_) return kConstant;
  if (t.node_->tape_id != id_) {
    throw ContractError("tensor belongs to a different (or cleared) tape");
  }
  const std::uint32_t idx = t.node_->index;
  return nodes_[idx].requires_grad ? static_cast<std::int64_t>(idx) : kConstant;
}

template <typename T>
Tensor<T> Tape<T>::record(Tensor<T> value, Node node) {
  value.node_.reset();
  if (!recording_) return value;
  const bool any = std::any_of(node.inputs.begin(), node.inputs.end(),
                               [](std::int64_t i) { return i != kConstant; });
  if (!any) return value;
  node.requires_grad = true;
  node.shape = value.shape();
  for (const auto& s : node.saved) {
    ++stats_.saved_tensors;
    stats_.saved_elements += s.size();
  }
  nodes_.push_back(std::move(node));
  ++stats_.nodes;
  value.node_ = NodeHandle{id_, static_cast<std::uint32_t>(nodes_.size() - 1)};
  return value;
}

template <typename T>
Tensor<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  value.node_.reset();
  if (!recording_) return value;
  Node node;
  node.op = Op::leaf;
  node.requires_grad = requires_grad;
  node.shape = value.shape();
  nodes_.push_back(std::move(node));
  ++stats_.nodes;
  value.node_ = NodeHandle{id_, static_cast<std::uint32_t>(nodes_.size() - 1)};
  return value;
}

template <typename T>
Tensor<T> Tape<T>::identity(const Tensor<T>& a) {
  Node node;
  node.op = Op::identity;
  node.inputs = {input_index(a)};
  return record(a.detached(), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::reshape(const Tensor<T>& a, Shape shape) {
  Tensor<T> out = a.reshaped(std::move(shape));
  Node node;
  node.op = Op::reshape;
  node.inputs = {input_index(a)};
  return record(std::move(out), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::elementwise(Op op, const Tensor<T>& a, const Tensor<T>& b) {
  const bool a_scalar = a.rank() == 0;
  const bool b_scalar = b.rank() == 0;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw DimensionError("element-wise op: cannot broadcast " + to_string(a.shape()) + " with " +
                         to_string(b.shape()) + " (only identical shapes or a rank-0 scalar)");
  }
  const Shape& shape = (a_scalar && !b_scalar) ? b.shape() : a.shape();
  const std::size_t n = numel(shape);
  Tensor<T> out(shape);
  auto o = out.mutable_data();
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t as = a_scalar ? 0 : 1;
  const std::size_t bs = b_scalar ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) {
    const T x = av[i * as];
    const T y = bv[i * bs];
    switch (op) {
      case Op::add:
        o[i] = x + y;
        break;
      case Op::sub:
        o[i] = x - y;
        break;
      default:
        o[i] = x * y;
        break;
    }
  }

  Node node;
  node.op = op;
  node.inputs = {input_index(a), input_index(b)};
  if (op == Op::mul) {
    // d/da needs b and vice versa.
    node.saved = {node.inputs[1] != kConstant ? a.detached() : Tensor<T>(),
                  node.inputs[0] != kConstant ? b.detached() : Tensor<T>()};
  }
  node.dims[0] = a_scalar ? 1 : 0;
  node.dims[1] = b_scalar ? 1 : 0;
  return record(std::move(out), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(Op::add, a, b);
}

template <typename T>
Tensor<T> Tape<T>::sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(Op::sub, a, b);
}

template <typename T>
Tensor<T> Tape<T>::mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(Op::mul, a, b);
}

template <typename T>
Tensor<T> Tape<T>::scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto av = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * factor;
  Node node;
  node.op = Op::scale;
  node.inputs = {input_index(a)};
  node.scalar = factor;
  return record(std::move(out), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::add_scalar(const Tensor<T>& a, T offset) {
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto av = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + offset;
  Node node;
  node.op = Op::add_scalar;
  node.inputs = {input_index(a)};
  return record(std::move(out), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::sum_axis(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DimensionError("sum_axis: axis " + std::to_string(axis) + " out of range for " +
                         to_string(a.shape()));
  }
  const Shape& s = a.shape();
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t mid = s[axis];
  const std::size_t inner = numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end()));
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor<T> out(out_shape);
  auto o = out.mutable_data();
  const auto av = a.data();
  for (std::size_t i = 0; i < outer; ++i) {
    for (std::size_t m = 0; m < mid; ++m) {
      const T* src = av.data() + (i * mid + m) * inner;
      T* dst = o.data() + i * inner;
      for (std::size_t j = 0; j < inner; ++j) dst[j] += src[j];
    }
  }
  Node node;
  node.op = Op::sum_axis;
  node.inputs = {input_index(a)};
  node.dims = {outer, mid, inner};
  return record(std::move(out), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::sum_all(const Tensor<T>& a) {
  T acc{0};
  for (T v : a.data()) acc += v;
  Node node;
  node.op = Op::sum_all;
  node.inputs = {input_index(a)};
  node.dims[0] = a.size();
  return record(Tensor<T>::scalar(acc), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const bool row = a.rank() == 1;
  if ((a.rank() != 1 && a.rank() != 2) || b.rank() != 2) {
    throw DimensionError("matmul: expected [m x k] * [k x n], got " + to_string(a.shape()) +
                         " * " + to_string(b.shape()));
  }
  const std::size_t m = row ? 1 : a.dim(0);
  const std::size_t k = row ? a.dim(0) : a.dim(1);
  if (k != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ for " + to_string(a.shape()) + " * " +
                         to_string(b.shape()));
  }
  const std::size_t n = b.dim(1);
  Tensor<T> out(row ? Shape{n} : Shape{m, n});
  kernels::gemm(a.data().data(), b.data().data(), out.mutable_data().data(), m, k, n);

  Node node;
  node.op = Op::matmul;
  node.inputs = {input_index(a), input_index(b)};
  node.saved = {node.inputs[1] != kConstant ? a.detached() : Tensor<T>(),
                node.inputs[0] != kConstant ? b.detached() : Tensor<T>()};
  node.dims = {m, k, n};
  return record(std::move(out), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::add_bias(const Tensor<T>& x, const Tensor<T>& bias, std::size_t axis) {
  if (axis >= x.rank() || bias.rank() != 1 || bias.dim(0) != x.dim(axis)) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " does not match axis " +
                         std::to_string(axis) + " of " + to_string(x.shape()));
  }
  const Shape& s = x.shape();
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t mid = s[axis];
  const std::size_t inner = numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end()));
  Tensor<T> out(s);
  auto o = out.mutable_data();
  const auto xv = x.data();
  const auto bv = bias.data();
  for (std::size_t i = 0; i < outer; ++i) {
    for (std::size_t m = 0; m < mid; ++m) {
      const std::size_t base = (i * mid + m) * inner;
      for (std::size_t j = 0; j < inner; ++j) o[base + j] = xv[base + j] + bv[m];
    }
  }
  Node node;
  node.op = Op::add_bias;
  node.inputs = {input_index(x), input_index(bias)};
  node.dims = {outer, mid, inner};
  return record(std::move(out), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                          std::size_t padding) {
  const bool batched = input.rank() == 4;
  if ((input.rank() != 3 && !batched) || kernel.rank() != 4) {
    throw DimensionError("conv2d: expected input [C x H x W] or [B x C x H x W] and kernel "
                         "[C_out x C x k x k], got " +
                         to_string(input.shape()) + " and " + to_string(kernel.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t off = batched ? 1 : 0;
  kernels::ConvGeometry g;
  g.channels = input.dim(off);
  g.height = input.dim(off + 1);
  g.width = input.dim(off + 2);
  g.out_channels = kernel.dim(0);
  g.kernel = kernel.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (kernel.dim(1) != g.channels || kernel.dim(3) != g.kernel) {
    throw DimensionError("conv2d: kernel " + to_string(kernel.shape()) +
                         " incompatible with input " + to_string(input.shape()));
  }
  if (g.kernel == 0 || g.kernel > g.height + 2 * padding || g.kernel > g.width + 2 * padding) {
    throw DimensionError("conv2d: kernel " + to_string(kernel.shape()) +
                         " larger than padded input " + to_string(input.shape()));
  }
  g.out_height = (g.height + 2 * padding - g.kernel) / stride + 1;
  g.out_width = (g.width + 2 * padding - g.kernel) / stride + 1;
  const std::size_t batch = batched ? input.dim(0) : 1;

  Shape out_shape = batched ? Shape{batch, g.out_channels, g.out_height, g.out_width}
                            : Shape{g.out_channels, g.out_height, g.out_width};
  Tensor<T> out(out_shape);
  kernels::conv2d_forward(input.data().data(), kernel.data().data(), out.mutable_data().data(),
                          batch, g);

  Node node;
  node.op = Op::conv2d;
  node.inputs = {input_index(input), input_index(kernel)};
  node.saved = {node.inputs[1] != kConstant ? input.detached() : Tensor<T>(),
                node.inputs[0] != kConstant ? kernel.detached() : Tensor<T>()};
  node.dims = {g.channels, g.height, g.width, g.out_channels, g.kernel, stride, padding, batch};
  return record(std::move(out), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::threshold(const Tensor<T>& u, T thr, const Surrogate& surrogate) {
  Tensor<T> out(u.shape());
  Tensor<T> diff(u.shape());
  auto o = out.mutable_data();
  auto d = diff.mutable_data();
  const auto uv = u.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = uv[i] >= thr ? T{1} : T{0};
    d[i] = uv[i] - thr;
  }
  Node node;
  node.op = Op::threshold;
  node.inputs = {input_index(u)};
  node.surrogate = surrogate;
  if (node.inputs[0] != kConstant) node.saved = {std::move(diff)};
  return record(std::move(out), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::smooth_threshold(const Tensor<T>& u, T thr, T sharpness) {
  Tensor<T> out(u.shape());
  Tensor<T> diff(u.shape());
  auto o = out.mutable_data();
  auto d = diff.mutable_data();
  const auto uv = u.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    d[i] = uv[i] - thr;
    o[i] = static_cast<T>(smooth_step(static_cast<double>(d[i]), static_cast<double>(sharpness)));
  }
  Node node;
  node.op = Op::smooth_threshold;
  node.inputs = {input_index(u)};
  node.scalar = sharpness;
  if (node.inputs[0] != kConstant) node.saved = {std::move(diff)};
  return record(std::move(out), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& target) {
  if (logits.rank() != 1 || logits.shape() != target.shape()) {
    throw DimensionError("softmax_cross_entropy: logits " + to_string(logits.shape()) +
                         " and target " + to_string(target.shape()) + " must be equal rank-1");
  }
  const std::size_t classes = logits.size();
  if (classes < 2) throw ValidationError("softmax_cross_entropy needs at least two classes");
  std::size_t hot = classes;
  for (std::size_t i = 0; i < classes; ++i) {
    const T v = target[i];
    if (v == T{1} && hot == classes) {
      hot = i;
    } else if (v != T{0}) {
      throw ValidationError("softmax_cross_entropy: target is not one-hot");
    }
  }
  if (hot == classes) throw ValidationError("softmax_cross_entropy: target is not one-hot");

  const auto lv = logits.data();
  const T mx = *std::max_element(lv.begin(), lv.end());
  T total{0};
  for (T v : lv) total += std::exp(v - mx);
  const T loss = std::log(total) - (lv[hot] - mx);

  Tensor<T> residual(logits.shape());
  auto r = residual.mutable_data();
  for (std::size_t i = 0; i < classes; ++i) r[i] = std::exp(lv[i] - mx) / total - target[i];

  Node node;
  node.op = Op::softmax_ce;
  node.inputs = {input_index(logits)};
  node.saved = {std::move(residual)};
  return record(Tensor<T>::scalar(loss), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::select(const Tensor<T>& a, std::size_t index) {
  if (a.rank() == 0 || index >= a.dim(0)) {
    throw DimensionError("select: index " + std::to_string(index) + " out of range for " +
                         to_string(a.shape()));
  }
  Shape out_shape(a.shape().begin() + 1, a.shape().end());
  const std::size_t stride = numel(out_shape);
  const auto av = a.data();
  Buffer<T> slice(av.begin() + static_cast<std::ptrdiff_t>(index * stride),
                       av.begin() + static_cast<std::ptrdiff_t>((index + 1) * stride));
  Node node;
  node.op = Op::select;
  node.inputs = {input_index(a)};
  node.dims = {index, stride};
  return record(Tensor<T>(std::move(out_shape), std::move(slice)), std::move(node));
}

template <typename T>
Tensor<T> Tape<T>::stack(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw DimensionError("stack: no tensors given");
  const Shape& part_shape = parts.front().shape();
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), part_shape.begin(), part_shape.end());
  Buffer<T> flat;
  flat.reserve(numel(out_shape));
  Node node;
  node.op = Op::stack;
  node.inputs.reserve(parts.size());
  for (const auto& p : parts) {
    require_same_shape(p.shape(), part_shape, "stack");
    flat.insert(flat.end(), p.data().begin(), p.data().end());
    node.inputs.push_back(input_index(p));
  }
  node.dims[0] = numel(part_shape);
  return record(Tensor<T>(std::move(out_shape), std::move(flat)), std::move(node));
}

template <typename T>
Gradients<T> Tape<T>::backward(const Tensor<T>& seed) const {
  if (seed.size() != 1 || seed.rank() > 1) {
    throw ContractError("backward: seed must be a scalar, got shape " + to_string(seed.shape()));
  }
  const Seed<T> s{seed, Tensor<T>(seed.shape(), T{1})};
  return backward(std::span<const Seed<T>>(&s, 1));
}

template <typename T>
Gradients<T> Tape<T>::backward(std::span<const Seed<T>> seeds) const {
  const std::size_t n = nodes_.size();
  std::vector<Buffer<T>> grad(n);
  std::vector<bool> has(n, false);

  // First contribution is copied, later ones added in sweep order.
  const auto accumulate = [&](std::int64_t idx, const T* src, std::size_t len) {
    if (idx == kConstant) return;
    const auto i = static_cast<std::size_t>(idx);
    if (!has[i]) {
      grad[i].assign(src, src + len);
      has[i] = true;
    } else {
      T* dst = grad[i].data();
      for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
    }
  };
  const auto zeroed = [&](std::int64_t idx) -> T* {
    const auto i = static_cast<std::size_t>(idx);
    if (!has[i]) {
      grad[i].assign(numel(nodes_[i].shape), T{0});
      has[i] = true;
    }
    return grad[i].data();
  };

  for (const auto& s : seeds) {
    if (!s.node.node_ || s.node.node_->tape_id != id_) {
      throw ContractError("backward: seed tensor is not on this tape");
    }
    const std::uint32_t idx = s.node.node_->index;
    if (s.grad.size() != numel(nodes_[idx].shape)) {
      throw DimensionError("backward: seed gradient " + to_string(s.grad.shape()) +
                           " does not match node " + to_string(nodes_[idx].shape));
    }
    if (!nodes_[idx].requires_grad) continue;
    accumulate(idx, s.grad.data().data(), s.grad.size());
  }

  Buffer<T> tmp;
  for (std::size_t i = n; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!has[i] || node.op == Op::leaf) continue;
    const Buffer<T>& g = grad[i];
    const std::size_t len = g.size();
    const auto in0 = node.inputs.empty() ? kConstant : node.inputs[0];
    const auto in1 = node.inputs.size() > 1 ? node.inputs[1] : kConstant;

    switch (node.op) {
      case Op::leaf:
        break;
      case Op::identity:
      case Op::reshape:
      case Op::add_scalar:
        accumulate(in0, g.data(), len);
        break;
      case Op::add:
      case Op::sub: {
        const T sign = node.op == Op::sub ? T{-1} : T{1};
        if (in0 != kConstant) {
          if (node.dims[0] != 0) {
            T acc{0};
            for (T v : g) acc += v;
            accumulate(in0, &acc, 1);
          } else {
            accumulate(in0, g.data(), len);
          }
        }
        if (in1 != kConstant) {
          if (node.dims[1] != 0) {
            T acc{0};
            for (T v : g) acc += v;
            acc *= sign;
            accumulate(in1, &acc, 1);
          } else if (node.op == Op::sub) {
            tmp.resize(len);
            for (std::size_t j = 0; j < len; ++j) tmp[j] = -g[j];
            accumulate(in1, tmp.data(), len);
          } else {
            accumulate(in1, g.data(), len);
          }
        }
        break;
      }
      case Op::mul: {
        for (int side = 0; side < 2; ++side) {
          const auto idx = side == 0 ? in0 : in1;
          if (idx == kConstant) continue;
          const Tensor<T>& other = node.saved[side == 0 ? 1 : 0];
          const bool scalar_side = node.dims[side] != 0;
          const bool scalar_other = other.rank() == 0;
          if (scalar_side) {
            T acc{0};
            for (std::size_t j = 0; j < len; ++j) acc += g[j] * other[scalar_other ? 0 : j];
            accumulate(idx, &acc, 1);
          } else {
            tmp.resize(len);
            for (std::size_t j = 0; j < len; ++j) tmp[j] = g[j] * other[scalar_other ? 0 : j];
            accumulate(idx, tmp.data(), len);
          }
        }
        break;
      }
      case Op::scale:
        tmp.resize(len);
        for (std::size_t j = 0; j < len; ++j) tmp[j] = g[j] * node.scalar;
        accumulate(in0, tmp.data(), len);
        break;
      case Op::sum_axis: {
        if (in0 == kConstant) break;
        const auto [outer, mid, inner] = std::tuple{node.dims[0], node.dims[1], node.dims[2]};
        tmp.assign(outer * mid * inner, T{0});
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t m = 0; m < mid; ++m) {
            std::copy(g.begin() + static_cast<std::ptrdiff_t>(o * inner),
                      g.begin() + static_cast<std::ptrdiff_t>((o + 1) * inner),
                      tmp.begin() + static_cast<std::ptrdiff_t>((o * mid + m) * inner));
          }
        }
        accumulate(in0, tmp.data(), tmp.size());
        break;
      }
      case Op::sum_all:
        tmp.assign(node.dims[0], g[0]);
        accumulate(in0, tmp.data(), tmp.size());
        break;
      case Op::matmul: {
        const std::size_t m = node.dims[0], k = node.dims[1], nn = node.dims[2];
        if (in0 != kConstant) {
          tmp.assign(m * k, T{0});
          kernels::gemm_nt_acc(g.data(), node.saved[1].data().data(), tmp.data(), m, nn, k);
          accumulate(in0, tmp.data(), tmp.size());
        }
        if (in1 != kConstant) {
          tmp.assign(k * nn, T{0});
          kernels::gemm_tn_acc(node.saved[0].data().data(), g.data(), tmp.data(), m, k, nn);
          accumulate(in1, tmp.data(), tmp.size());
        }
        break;
      }
      case Op::add_bias: {
        accumulate(in0, g.data(), len);
        if (in1 != kConstant) {
          const std::size_t outer = node.dims[0], mid = node.dims[1], inner = node.dims[2];
          tmp.assign(mid, T{0});
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t m = 0; m < mid; ++m) {
              const T* src = g.data() + (o * mid + m) * inner;
              for (std::size_t j = 0; j < inner; ++j) tmp[m] += src[j];
            }
          }
          accumulate(in1, tmp.data(), mid);
        }
        break;
      }
      case Op::conv2d: {
        kernels::ConvGeometry geo;
        geo.channels = node.dims[0];
        geo.height = node.dims[1];
        geo.width = node.dims[2];
        geo.out_channels = node.dims[3];
        geo.kernel = node.dims[4];
        geo.stride = node.dims[5];
        geo.padding = node.dims[6];
        geo.out_height = (geo.height + 2 * geo.padding - geo.kernel) / geo.stride + 1;
        geo.out_width = (geo.width + 2 * geo.padding - geo.kernel) / geo.stride + 1;
        const std::size_t batch = node.dims[7];
        std::vector<T> gin;
        std::vector<T> gker;
        if (in0 != kConstant) gin.assign(batch * geo.in_size(), T{0});
        if (in1 != kConstant) gker.assign(geo.out_channels * geo.patch(), T{0});
        kernels::conv2d_backward(g.data(),
                                 in1 != kConstant ? node.saved[0].data().data() : nullptr,
                                 in0 != kConstant ? node.saved[1].data().data() : nullptr,
                                 in0 != kConstant ? gin.data() : nullptr,
                                 in1 != kConstant ? gker.data() : nullptr, batch, geo);
        if (in0 != kConstant) accumulate(in0, gin.data(), gin.size());
        if (in1 != kConstant) accumulate(in1, gker.data(), gker.size());
        break;
      }
      case Op::threshold: {
        const auto d = node.saved[0].data();
        tmp.resize(len);
        for (std::size_t j = 0; j < len; ++j) {
          tmp[j] = g[j] * static_cast<T>(node.surrogate(static_cast<double>(d[j])));
        }
        accumulate(in0, tmp.data(), len);
        break;
      }
      case Op::smooth_threshold: {
        const auto d = node.saved[0].data();
        tmp.resize(len);
        for (std::size_t j = 0; j < len; ++j) {
          tmp[j] = g[j] * static_cast<T>(smooth_step_derivative(static_cast<double>(d[j]),
                                                                static_cast<double>(node.scalar)));
        }
        accumulate(in0, tmp.data(), len);
        break;
      }
      case Op::softmax_ce: {
        const auto r = node.saved[0].data();
        tmp.resize(r.size());
        for (std::size_t j = 0; j < r.size(); ++j) tmp[j] = g[0] * r[j];
        accumulate(in0, tmp.data(), tmp.size());
        break;
      }
      case Op::select: {
        if (in0 == kConstant) break;
        T* dst = zeroed(in0) + node.dims[0] * node.dims[1];
        for (std::size_t j = 0; j < len; ++j) dst[j] += g[j];
        break;
      }
      case Op::stack: {
        const std::size_t part = node.dims[0];
        for (std::size_t p = 0; p < node.inputs.size(); ++p) {
          accumulate(node.inputs[p], g.data() + p * part, part);
        }
        break;
      }
    }
    // Interior adjoints are dead once propagated.
    Buffer<T>().swap(grad[i]);
  }

  std::map<std::uint32_t, Tensor<T>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Node& node = nodes_[i];
    if (node.op != Op::leaf || !node.requires_grad) continue;
    out.emplace(static_cast<std::uint32_t>(i),
                has[i] ? Tensor<T>(node.shape, std::move(grad[i])) : Tensor<T>(node.shape));
  }
  return Gradients<T>(id_, std::move(out));
}

template class Tape<float>;
template class Tape<double>;

}  // namespace spikegrad
