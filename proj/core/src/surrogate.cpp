#include "spikegrad/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spikegrad/errors.hpp"

namespace spikegrad {

double Surrogate::operator()(double x) const noexcept {
  const double ax = std::abs(x);
  switch (kind) {
    case SurrogateKind::superspike: {
      const double d = slope * ax + 1.0;
      return 1.0 / (d * d);
    }
    case SurrogateKind::sigmoid_derivative: {
      // s(z)(1 - s(z)) written in terms of e^{-|z|} so large |z| cannot overflow.
      const double e = std::exp(-slope * ax);
      return slope * e / ((1.0 + e) * (1.0 + e));
    }
    case SurrogateKind::piecewise_linear:
      return std::max(0.0, 1.0 - slope * ax);
    case SurrogateKind::arctan: {
      const double z = 0.5 * std::numbers::pi * slope * x;
      return 0.5 * slope / (1.0 + z * z);
    }
  }
  return 0.0;
}

std::string_view to_string(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::superspike:
      return "superspike";
    case SurrogateKind::sigmoid_derivative:
      return "sigmoid_derivative";
    case SurrogateKind::piecewise_linear:
      return "piecewise_linear";
    case SurrogateKind::arctan:
      return "arctan";
  }
  return "unknown";
}

Surrogate make_surrogate(std::string_view name, double slope) {
  if (!(slope > 0.0) || !std::isfinite(slope)) {
    throw ValidationError("surrogate slope must be positive and finite");
  }
  for (SurrogateKind kind : kAllSurrogates) {
    if (to_string(kind) == name) return Surrogate{kind, slope};
  }
  throw ValidationError("unknown surrogate '" + std::string(name) +
                        "' (expected superspike, sigmoid_derivative, piecewise_linear or arctan)");
}

double smooth_step(double x, double sharpness) noexcept {
  return 0.5 * std::erfc(-sharpness * x);
}

double smooth_step_derivative(double x, double sharpness) noexcept {
  const double z = sharpness * x;
  return sharpness * std::exp(-z * z) / std::sqrt(std::numbers::pi);
}

}  // namespace spikegrad
