#include "spikegrad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "spikegrad/random.hpp"

namespace spikegrad {

double GradReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

double GradReport::mean_rel_error() const {
  if (entries.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : entries) sum += e.mean_rel_error;
  return sum / static_cast<double>(entries.size());
}

GradReport compare_gradients(const ParameterSet<double>& analytic,
                             const ParameterSet<double>& numeric, double threshold) {
  if (analytic.size() != numeric.size()) throw ContractError("compare_gradients: key sets differ");
  GradReport report;
  report.threshold = threshold;
  for (const auto& [name, a] : analytic) {
    auto it = numeric.find(name);
    if (it == numeric.end()) throw ContractError("compare_gradients: no numeric gradient for " + name);
    const Tensor<double>& f = it->second;
    if (a.shape() != f.shape()) throw ContractError("compare_gradients: shape mismatch for " + name);
    double scale = kRelErrorScaleFloor;
    for (std::size_t i = 0; i < a.size(); ++i) scale = std::max({scale, std::abs(a[i]), std::abs(f[i])});
    GradEntry e{name, 0.0, 0.0};
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double rel = std::abs(a[i] - f[i]) / scale;
      e.max_rel_error = std::max(e.max_rel_error, rel);
      e.mean_rel_error += rel;
    }
    if (a.size() > 0) e.mean_rel_error /= static_cast<double>(a.size());
    report.entries.push_back(std::move(e));
  }
  return report;
}

ParameterSet<double> fd_gradient(const NetworkGraph& smooth_graph,
                                 const ParameterSet<double>& params, const ExecutionPlan& plan,
                                 std::span<const Sample<double>> batch, double eps,
                                 const LossOptions& options, const HeadFactory<double>& heads) {
  if (!(eps > 0.0)) throw ValidationError("fd_gradient: eps must be positive");
  for (const auto& n : smooth_graph.nodes()) {
    const auto* l = std::get_if<LifLayer>(&n.kind);
    if (l != nullptr && !l->smooth_sharpness) {
      throw ValidationError("fd_gradient: layer " + n.name +
                            " uses a hard threshold; pass smooth_twin(graph, sharpness)");
    }
  }
  ParameterSet<double> grads;
  ParameterSet<double> probe = params;
  for (const auto& [name, p] : params) {
    Tensor<double> g(p.shape());
    auto gd = g.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      Tensor<double> shifted = p;
      shifted.mutable_data()[i] = p[i] + eps;
      probe[name] = shifted;
      const double up = batch_loss(smooth_graph, probe, plan, batch, options, heads);
      shifted.mutable_data()[i] = p[i] - eps;
      probe[name] = shifted;
      const double down = batch_loss(smooth_graph, probe, plan, batch, options, heads);
      gd[i] = (up - down) / (2.0 * eps);
    }
    probe[name] = p;
    grads.emplace(name, std::move(g));
  }
  return grads;
}

double GradcheckSuite::max_rel_error() const {
  double worst = 0.0;
  for (const auto& c : cases) worst = std::max(worst, c.report.max_rel_error());
  return worst;
}

bool GradcheckSuite::pass() const {
  return oracle_error < oracle_threshold &&
         std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.report.pass(); });
}

namespace {

struct RandomCase {
  NetworkGraph graph;
  std::size_t steps;
  std::string description;
};

RandomCase random_case(std::size_t index, std::mt19937_64& rng, double sharpness) {
  const auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  const std::size_t steps = pick(0, 1) == 0 ? 3 : 10;
  LIFParams p;
  p.reset = pick(0, 1) == 0 ? ResetMode::subtract : ResetMode::to_zero;
  const std::uint64_t seed = rng();
  std::ostringstream d;

  const std::size_t variant = index % 3;
  if (variant == 2) {
    const std::size_t c_in = pick(1, 2);
    const std::size_t c = pick(2, 3);
    const std::size_t classes = pick(2, 4);
    std::vector<LayerNode> layers{conv(c_in, c, 3, 1, 1), lif(Shape{c, 4, 4}, p), flatten(),
                                  linear(c * 16, classes), lif(classes, p)};
    d << "conv " << c_in << "x4x4 -> " << c << "ch -> " << classes << ", T=" << steps;
    return {smooth_twin(sequential({c_in, 4, 4}, std::move(layers), seed), sharpness), steps,
            d.str()};
  }

  const std::size_t depth = pick(1, 3);
  const std::size_t n_in = pick(2, 6);
  std::vector<LayerNode> layers;
  std::size_t prev = n_in;
  d << (variant == 1 ? "recurrent " : "mlp ") << n_in;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t w = pick(2, 8);
    layers.push_back(linear(prev, w));
    layers.push_back(lif(w, p));
    d << "-" << w;
    prev = w;
  }
  d << ", T=" << steps;
  if (variant == 1) {
    // Either a self-loop on one LIF layer or a projected loop to the first layer.
    const std::size_t last = layers.size() - 1;
    std::vector<Feedback> fb;
    if (pick(0, 1) == 0) {
      const std::size_t l = 2 * pick(0, depth - 1) + 1;
      fb.push_back({l, l});
      d << ", self feedback on layer " << l;
    } else {
      fb.push_back({last, 0});
      d << ", feedback " << last << "->0";
    }
    return {smooth_twin(sequential_recurrent({n_in}, std::move(layers), fb, seed), sharpness), steps,
            d.str()};
  }
  return {smooth_twin(sequential({n_in}, std::move(layers), seed), sharpness), steps, d.str()};
}

Tensor<double> bernoulli(const Shape& shape, double rate, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(rate);
  Tensor<double> t(shape);
  for (double& v : t.mutable_data()) v = coin(rng) ? 1.0 : 0.0;
  return t;
}

}  // namespace

GradcheckSuite run_gradcheck_suite(const GradcheckOptions& options) {
  if (!(options.eps > 0.0)) throw ValidationError("gradcheck: eps must be positive");
  if (!(options.sharpness > 0.0)) throw ValidationError("gradcheck: sharpness must be positive");
  GradcheckSuite suite;
  std::mt19937_64 rng(mix_seed(options.seed, 0x67726164));
  for (std::size_t i = 0; i < options.architectures; ++i) {
    RandomCase rc = random_case(i, rng, options.sharpness);
    ParameterSet<double> params = init_parameters<double>(rc.graph);
    // Larger weights keep the smooth units away from their flat tails.
    for (auto& [_, t] : params) {
      for (double& v : t.mutable_data()) v *= 2.0;
    }
    const NodeId out = rc.graph.outputs().back();
    const std::size_t classes = numel(rc.graph.out_shape(out));
    Dataset<double> batch;
    for (std::size_t s = 0; s < 2; ++s) {
      Shape shape{rc.steps};
      for (auto d : rc.graph.input_shape()) shape.push_back(d);
      Tensor<double> target(Shape{classes});
      target.mutable_data()[std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng)] = 1.0;
      batch.push_back({bernoulli(shape, 0.5, rng), std::move(target)});
    }
    LossOptions lo;
    lo.state_init = StateInit::uniform(0.0, 0.5);
    lo.state_seed = rng();
    const ExecutionPlan plan{};
    const auto ad = loss_and_grad(rc.graph, params, plan, std::span<const Sample<double>>(batch), lo);
    const auto fd = fd_gradient(rc.graph, params, plan, batch, options.eps, lo);
    suite.cases.push_back({rc.description, compare_gradients(ad.grads, fd, options.threshold)});
  }
  suite.oracle_error = hard_threshold_oracle_error();
  return suite;
}

double hard_threshold_oracle_error() {
  LIFParams p;  // alpha .9, beta .8, thr 1, superspike slope 10, subtract reset
  const NetworkGraph graph = sequential({1}, {linear(1, 1, true), lif(1, p)});
  ParameterSet<double> params{{"linear0.weight", Tensor<double>({1, 1}, {0.7})},
                              {"linear0.bias", Tensor<double>({1}, {0.1})}};
  const std::vector<double> x{1.0, 0.0, 1.0};
  const double y = 1.0;
  const Tensor<double> input({3, 1}, x);

  const auto res = value_and_grad(graph, params, ExecutionPlan{}, input,
                                  init_states<double>(graph, StateInit::zeros(), 0),
                                  count_squared_error_head(Tensor<double>({1}, {y})));

  // Forward, keeping every intermediate the chain rule needs.
  const double w = 0.7, b = 0.1, a = p.alpha, be = p.beta, thr = p.thr;
  double u = 0.0, i = 0.0, count = 0.0;
  std::vector<double> upre(3), s(3);
  for (std::size_t t = 0; t < 3; ++t) {
    i = be * i + w * x[t] + b;
    upre[t] = a * u + i;
    s[t] = upre[t] >= thr ? 1.0 : 0.0;
    u = upre[t] - thr * s[t];
    count += s[t];
  }
  const double e = count - y;
  double gu = 0.0, gi_next = 0.0, gw = 0.0, gb = 0.0;
  for (std::size_t t = 3; t-- > 0;) {
    const double gs = e - thr * gu;
    const double gupre = gs * p.surrogate(upre[t] - thr) + gu;
    const double gi = gupre + gi_next;
    gw += gi * x[t];
    gb += gi;
    gu = a * gupre;
    gi_next = be * gi;
  }
  return std::max(std::abs(res.grads.at("linear0.weight")[0] - gw),
                  std::abs(res.grads.at("linear0.bias")[0] - gb));
}

}  // namespace spikegrad
