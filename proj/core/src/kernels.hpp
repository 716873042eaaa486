#pragma once

// Raw numeric kernels behind the tape primitives. No shape checking here;
// callers validate.

#include <cstddef>

namespace spikegrad::kernels {

/// c[m x n] = a[m x k] * b[k x n]. Every output element is accumulated over
/// p = 0..k-1 in ascending order regardless of m, so a row computed alone
/// equals the same row computed inside a larger batch bit for bit.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

/// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

/// c[k x n] += a[m x k]^T * b[m x n], summed over rows in ascending order.
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

struct ConvGeometry {
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t out_channels = 0, kernel = 0, stride = 1, padding = 0;
  std::size_t out_height = 0, out_width = 0;

  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t out_pixels() const { return out_height * out_width; }
  std::size_t in_size() const { return channels * height * width; }
  std::size_t out_size() const { return out_channels * out_pixels(); }
};

/// Unfolds one image into columns [C*k*k x out_pixels], written with row
/// stride `ld` starting at `cols` (so several images can share one matrix).
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols, std::size_t ld);

/// Adjoint of im2col: accumulates columns back into an image gradient.
template <typename T>
void col2im_acc(const T* cols, const ConvGeometry& g, std::size_t ld, T* image);

/// out[batch x C_out x pixels] = cross-correlation of each image with kernel.
template <typename T>
void conv2d_forward(const T* input, const T* kernel, T* out, std::size_t batch,
                    const ConvGeometry& g);

/// Accumulates input and/or kernel gradients; either output pointer may be null.
template <typename T>
void conv2d_backward(const T* grad_out, const T* input, const T* kernel, T* grad_input,
                     T* grad_kernel, std::size_t batch, const ConvGeometry& g);

}  // namespace spikegrad::kernels
