#pragma once

#include <array>
#include <string>
#include <string_view>

namespace spikegrad {

enum class SurrogateKind { superspike, sigmoid_derivative, piecewise_linear, arctan };

/// Pseudo-derivative used in place of the Heaviside derivative when
/// back-propagating through a spike threshold. Evaluated at x = u - thr.
///
///   superspike          1 / (slope*|x| + 1)^2
///   sigmoid_derivative  slope * s(slope*x) * (1 - s(slope*x)),  s = logistic
///   piecewise_linear    max(0, 1 - slope*|x|)
///   arctan              (slope/2) / (1 + (pi/2 * slope * x)^2)
///
/// All four are finite, nonnegative, even in x and peak at x = 0.
struct Surrogate {
  SurrogateKind kind = SurrogateKind::superspike;
  double slope = 10.0;

  double operator()(double x) const noexcept;

  friend bool operator==(const Surrogate&, const Surrogate&) = default;
};

inline constexpr std::array<SurrogateKind, 4> kAllSurrogates = {
    SurrogateKind::superspike, SurrogateKind::sigmoid_derivative,
    SurrogateKind::piecewise_linear, SurrogateKind::arctan};

std::string_view to_string(SurrogateKind kind);

/// Looks a surrogate up by name; throws ValidationError for unknown names or a
/// non-positive slope.
Surrogate make_surrogate(std::string_view name, double slope = 10.0);

/// Heaviside replacement used by the smooth twin neurons:
/// 0.5 * erfc(-sharpness * x). Saturates to within 1e-40 of {0, 1} once
/// |x| > 10 / sharpness.
double smooth_step(double x, double sharpness) noexcept;
double smooth_step_derivative(double x, double sharpness) noexcept;

}  // namespace spikegrad
