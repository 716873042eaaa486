#include "kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace spikegrad::kernels {

namespace {

// A kTileK x kTileN block of b stays cache resident while every row block of
// a sweeps it; each kRows x (2 vectors) block of c lives in registers across
// the k tile. Plain multiply then add, so results match the scalar loop.
constexpr std::size_t kTileK = 128;
constexpr std::size_t kTileN = 64;
constexpr std::size_t kRows = 4;

template <typename T>
struct Vec;
template <>
struct Vec<float> {
  typedef float type __attribute__((vector_size(16)));
};
template <>
struct Vec<double> {
  typedef double type __attribute__((vector_size(16)));
};

template <typename T>
constexpr std::size_t kLanes = 16 / sizeof(T);
template <typename T>
constexpr std::size_t kCols = 2 * kLanes<T>;

template <typename T>
typename Vec<T>::type load(const T* p) {
  typename Vec<T>::type v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
void store(T* p, typename Vec<T>::type v) {
  std::memcpy(p, &v, sizeof v);
}

template <typename T>
void edge(const T* a, const T* b, T* c, std::size_t rows, std::size_t k, std::size_t n,
          std::size_t p0, std::size_t p1, std::size_t j0, std::size_t j1) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* crow = c + r * n;
    const T* arow = a + r * k;
    for (std::size_t p = p0; p < p1; ++p) {
      const T v = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = j0; j < j1; ++j) crow[j] += v * brow[j];
    }
  }
}

// Row p of the packed strip starts at bp + (p - p0) * kCols.
template <typename T>
void micro_packed(const T* a, const T* bp, T* c, std::size_t k, std::size_t n, std::size_t p0,
                  std::size_t p1) {
  constexpr std::size_t L = kLanes<T>;
  typename Vec<T>::type acc[kRows][2];
  for (std::size_t r = 0; r < kRows; ++r) {
    acc[r][0] = load(c + r * n);
    acc[r][1] = load(c + r * n + L);
  }
  for (std::size_t p = p0; p < p1; ++p, bp += kCols<T>) {
    const auto b0 = load(bp);
    const auto b1 = load(bp + L);
    for (std::size_t r = 0; r < kRows; ++r) {
      const T v = a[r * k + p];
      acc[r][0] += v * b0;
      acc[r][1] += v * b1;
    }
  }
  for (std::size_t r = 0; r < kRows; ++r) {
    store(c + r * n, acc[r][0]);
    store(c + r * n + L, acc[r][1]);
  }
}

}  // namespace

template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c, c + m * n, T{0});
  // Rows of b sit a full row apart and collide in cache, so each tile is
  // copied into contiguous strips first; every row block of a reuses the copy.
  const bool blocks = m >= kRows;
  std::vector<T> packed(blocks ? std::min(k, kTileK) * std::min(n, kTileN) : 0);
  // Tiles advance p in ascending order, so each element sees the same sum order.
  for (std::size_t p0 = 0; p0 < k; p0 += kTileK) {
    const std::size_t p1 = std::min(k, p0 + kTileK);
    for (std::size_t j0 = 0; j0 < n; j0 += kTileN) {
      const std::size_t j1 = std::min(n, j0 + kTileN);
      const std::size_t jv = j0 + (j1 - j0) / kCols<T> * kCols<T>;
      // Strip s holds columns [j0 + s*kCols, +kCols) for rows p0..p1, row-major.
      T* dst = packed.data();
      for (std::size_t j = j0; blocks && j < jv; j += kCols<T>) {
        for (std::size_t p = p0; p < p1; ++p, dst += kCols<T>) {
          std::copy(b + p * n + j, b + p * n + j + kCols<T>, dst);
        }
      }
      const std::size_t strip = (p1 - p0) * kCols<T>;
      std::size_t i = 0;
      for (; i + kRows <= m; i += kRows) {
        for (std::size_t j = j0, s = 0; j < jv; j += kCols<T>, ++s) {
          micro_packed(a + i * k, packed.data() + s * strip, c + i * n + j, k, n, p0, p1);
        }
        edge(a + i * k, b, c + i * n, kRows, k, n, p0, p1, jv, j1);
      }
      edge(a + i * k, b, c + i * n, m - i, k, n, p0, p1, j0, j1);
    }
  }
}

template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T v = arow[p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
}

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols, std::size_t ld) {
  const std::size_t k = g.kernel;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols + ((c * k + ki) * k + kj) * ld;
        for (std::size_t oh = 0; oh < g.out_height; ++oh) {
          // Signed arithmetic: padding can push the tap outside the image.
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          T* out = row + oh * g.out_width;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(out, out + g.out_width, T{0});
            continue;
          }
          for (std::size_t ow = 0; ow < g.out_width; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width))
                          ? T{0}
                          : plane[static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const T* cols, const ConvGeometry& g, std::size_t ld, T* image) {
  const std::size_t k = g.kernel;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = cols + ((c * k + ki) * k + kj) * ld;
        for (std::size_t oh = 0; oh < g.out_height; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ow = 0; ow < g.out_width; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) continue;
            plane[static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw)] +=
                row[oh * g.out_width + ow];
          }
        }
      }
    }
  }
}

// Images per im2col chunk, sized so the column matrix stays cache resident.
template <typename T>
std::size_t chunk_images(const ConvGeometry& g, std::size_t batch) {
  constexpr std::size_t kColBytes = std::size_t{256} << 10;
  const std::size_t per_image = g.patch() * g.out_pixels() * sizeof(T);
  return std::clamp<std::size_t>(kColBytes / std::max<std::size_t>(per_image, 1), 1, batch);
}

template <typename T>
void conv2d_forward(const T* input, const T* kernel, T* out, std::size_t batch,
                    const ConvGeometry& g) {
  const std::size_t pix = g.out_pixels();
  if (batch == 1) {
    std::vector<T> cols(g.patch() * pix);
    im2col(input, g, cols.data(), pix);
    gemm(kernel, cols.data(), out, g.out_channels, g.patch(), pix);
    return;
  }
  const std::size_t chunk = chunk_images<T>(g, batch);
  std::vector<T> cols(g.patch() * chunk * pix);
  std::vector<T> mat(g.out_channels * chunk * pix);
  for (std::size_t b0 = 0; b0 < batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, batch - b0);
    const std::size_t ld = nb * pix;
    for (std::size_t b = 0; b < nb; ++b) {
      im2col(input + (b0 + b) * g.in_size(), g, cols.data() + b * pix, ld);
    }
    gemm(kernel, cols.data(), mat.data(), g.out_channels, g.patch(), ld);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        const T* src = mat.data() + co * ld + b * pix;
        std::copy(src, src + pix, out + (b0 + b) * g.out_size() + co * pix);
      }
    }
  }
}

template <typename T>
void conv2d_backward(const T* grad_out, const T* input, const T* kernel, T* grad_input,
                     T* grad_kernel, std::size_t batch, const ConvGeometry& g) {
  const std::size_t pix = g.out_pixels();
  const std::size_t ld = batch * pix;

  // grad_out laid out as [C_out x batch*pixels] to match the column matrix.
  std::vector<T> gmat(g.out_channels * ld);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const T* src = grad_out + b * g.out_size() + co * pix;
      std::copy(src, src + pix, gmat.data() + co * ld + b * pix);
    }
  }

  if (grad_kernel != nullptr) {
    std::vector<T> cols(g.patch() * ld);
    for (std::size_t b = 0; b < batch; ++b) im2col(input + b * g.in_size(), g, cols.data() + b * pix, ld);
    gemm_nt_acc(gmat.data(), cols.data(), grad_kernel, g.out_channels, ld, g.patch());
  }
  if (grad_input != nullptr) {
    // Every column gradient is independent, so chunking keeps results exact.
    const std::size_t chunk = chunk_images<T>(g, batch);
    std::vector<T> gsub(g.out_channels * chunk * pix);
    std::vector<T> gcols(g.patch() * chunk * pix);
    for (std::size_t b0 = 0; b0 < batch; b0 += chunk) {
      const std::size_t nb = std::min(chunk, batch - b0);
      const std::size_t cld = nb * pix;
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        const T* src = gmat.data() + co * ld + b0 * pix;
        std::copy(src, src + cld, gsub.data() + co * cld);
      }
      std::fill(gcols.begin(), gcols.begin() + static_cast<std::ptrdiff_t>(g.patch() * cld), T{0});
      gemm_tn_acc(kernel, gsub.data(), gcols.data(), g.out_channels, g.patch(), cld);
      for (std::size_t b = 0; b < nb; ++b) {
        col2im_acc(gcols.data() + b * pix, g, cld, grad_input + (b0 + b) * g.in_size());
      }
    }
  }
}

#define SPIKEGRAD_INSTANTIATE_KERNELS(T)                                                        \
  template void gemm<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t);        \
  template void gemm_nt_acc<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t); \
  template void gemm_tn_acc<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t); \
  template void im2col<T>(const T*, const ConvGeometry&, T*, std::size_t);                     \
  template void col2im_acc<T>(const T*, const ConvGeometry&, std::size_t, T*);                 \
  template void conv2d_forward<T>(const T*, const T*, T*, std::size_t, const ConvGeometry&);   \
  template void conv2d_backward<T>(const T*, const T*, const T*, T*, T*, std::size_t,          \
                                   const ConvGeometry&);

SPIKEGRAD_INSTANTIATE_KERNELS(float)
SPIKEGRAD_INSTANTIATE_KERNELS(double)

#undef SPIKEGRAD_INSTANTIATE_KERNELS

}  // namespace spikegrad::kernels
