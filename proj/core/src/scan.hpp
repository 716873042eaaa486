#pragma once

#include <cstddef>
#include <utility>

namespace spikegrad::detail {

template <std::size_t U, typename F>
void scan_unrolled(std::size_t steps, F& body) {
  std::size_t t = 0;
  for (; t + U <= steps; t += U) {
    [&]<std::size_t... J>(std::index_sequence<J...>) {
      (body(t + J), ...);
    }(std::make_index_sequence<U>{});
  }
  for (; t < steps; ++t) body(t);
}

/// Calls body(0) .. body(steps - 1) in order, `unroll` calls per loop trip.
template <typename F>
void scan(std::size_t steps, std::size_t unroll, F& body) {
  switch (unroll) {
    case 1: scan_unrolled<1>(steps, body); return;
    case 2: scan_unrolled<2>(steps, body); return;
    case 4: scan_unrolled<4>(steps, body); return;
    case 8: scan_unrolled<8>(steps, body); return;
    default: break;
  }
  std::size_t t = 0;
  for (; t + unroll <= steps; t += unroll) {
    for (std::size_t j = 0; j < unroll; ++j) body(t + j);
  }
  for (; t < steps; ++t) body(t);
}

}  // namespace spikegrad::detail
