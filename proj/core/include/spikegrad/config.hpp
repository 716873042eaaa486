#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spikegrad/bench.hpp"
#include "spikegrad/data.hpp"
#include "spikegrad/train.hpp"

namespace spikegrad {

/// Versioned JSON form of BenchSpec; every field except "version" is
/// optional and defaults to the BenchSpec defaults.
BenchSpec bench_spec_from_json(std::string_view text);
BenchSpec load_bench_spec(const std::string& path);

struct ToySpec {
  std::size_t classes = 3;
  std::size_t n_in = 12;
  std::size_t steps = 20;
  std::size_t samples_per_class = 100;
  std::uint64_t seed = 0;
};

/// Everything `train` needs besides the data source: the optimisation
/// settings, the network (an explicit graph file, or an LIF MLP with the
/// given hidden widths whose output width is the class count) and the
/// synthetic task.
struct TrainJob {
  TrainConfig config;
  ToySpec toy;
  std::vector<std::size_t> hidden{64};
  LIFParams lif{};
  std::uint64_t model_seed = 0;
  /// Resolved relative to the config file's directory.
  std::optional<std::string> graph_path;
  std::optional<Precision> precision;
};

/// Throws ValidationError for malformed documents or invalid values.
TrainJob train_job_from_json(std::string_view text, const std::string& base_dir = ".");
TrainJob load_train_job(const std::string& path);

}  // namespace spikegrad
