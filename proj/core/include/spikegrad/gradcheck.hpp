#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spikegrad/losses.hpp"

namespace spikegrad {

struct GradEntry {
  std::string name;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
};

/// Per-parameter comparison of an analytic and a numeric gradient. For a
/// tensor pair (a, f) the scale is max(|a|_inf, |f|_inf, scale_floor);
/// max_rel_error = max_i |a_i - f_i| / scale, mean_rel_error the mean.
struct GradReport {
  std::vector<GradEntry> entries;
  double threshold = 1e-4;

  double max_rel_error() const;
  double mean_rel_error() const;
  bool pass() const { return max_rel_error() < threshold; }
};

inline constexpr double kRelErrorScaleFloor = 1e-8;

/// Throws ContractError when the key sets or shapes differ.
GradReport compare_gradients(const ParameterSet<double>& analytic,
                             const ParameterSet<double>& numeric, double threshold = 1e-4);

/// Central differences (L(p+eps) - L(p-eps)) / (2 eps) of batch_loss for
/// every scalar parameter. The graph must use smooth LIF layers only
/// (see smooth_twin); throws ValidationError otherwise or when eps <= 0.
ParameterSet<double> fd_gradient(const NetworkGraph& smooth_graph,
                                 const ParameterSet<double>& params, const ExecutionPlan& plan,
                                 std::span<const Sample<double>> batch, double eps,
                                 const LossOptions& options = {},
                                 const HeadFactory<double>& heads = {});

struct GradcheckOptions {
  double eps = 1e-6;
  std::uint64_t seed = 0;
  std::size_t architectures = 6;
  double threshold = 1e-4;
  double sharpness = 2.0;
};

struct GradcheckCase {
  std::string description;
  GradReport report;
};

/// AD vs finite differences on random smooth networks (depth 1-3,
/// widths 2-8, T in {3, 10}; feed-forward, recurrent and convolutional),
/// plus the hard-threshold chain-rule oracle.
struct GradcheckSuite {
  std::vector<GradcheckCase> cases;
  double oracle_error = 0.0;
  double oracle_threshold = 1e-10;

  double max_rel_error() const;
  bool pass() const;
};

GradcheckSuite run_gradcheck_suite(const GradcheckOptions& options = {});

/// Largest absolute difference between taped BPTT and an explicitly
/// unrolled surrogate chain rule on a 1-neuron, 3-step LIF network.
double hard_threshold_oracle_error();

}  // namespace spikegrad
