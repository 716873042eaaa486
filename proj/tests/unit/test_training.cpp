#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spikegrad/data.hpp"
#include "spikegrad/gradcheck.hpp"
#include "spikegrad/optimizer.hpp"
#include "spikegrad/random.hpp"
#include "spikegrad/train.hpp"

using namespace spikegrad;
using spikegrad::testing::bitwise_equal;
using spikegrad::testing::numeric_gradient;
using spikegrad::testing::relative_error;

namespace {

using D = Tensor<double>;

SpikeRecord<double> record_of(D out) {
  SpikeRecord<double> r;
  r.outputs.emplace(3, std::move(out));
  return r;
}

D one_hot(std::size_t classes, std::size_t k) {
  D t({classes});
  t.mutable_data()[k] = 1.0;
  return t;
}

ParameterSet<double> scaled(ParameterSet<double> p, double gain) {
  for (auto& [_, t] : p) {
    for (double& v : t.mutable_data()) v *= gain;
  }
  return p;
}

ParameterSet<double> mean_of(const ParameterSet<double>& a, const ParameterSet<double>& b) {
  ParameterSet<double> out;
  for (const auto& [name, t] : a) {
    D m(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) m.mutable_data()[i] = 0.5 * (t[i] + b.at(name)[i]);
    out.emplace(name, m);
  }
  return out;
}

double max_diff(const ParameterSet<double>& a, const ParameterSet<double>& b) {
  double worst = 0;
  for (const auto& [name, t] : a) worst = std::max(worst, max_abs_difference(t, b.at(name)));
  return worst;
}

Dataset<double> small_toy(std::size_t per_class = 6) { return gen_toy<double>(3, 6, 8, per_class, 3); }

}  // namespace

TEST(SpikeCountLoss, SilentOutputIsLn2) {
  Tape<double> tape;
  const double l = spike_count_ce_loss(tape, record_of(D({7, 2})), one_hot(2, 1)).item();
  EXPECT_NEAR(l, std::log(2.0), 1e-12);
}

TEST(SpikeCountLoss, TenSpikesOnTheTarget) {
  D out({10, 2});
  for (std::size_t t = 0; t < 10; ++t) out.mutable_data()[t * 2] = 1.0;
  Tape<double> tape;
  EXPECT_NEAR(spike_count_ce_loss(tape, record_of(out), one_hot(2, 0)).item(),
              std::log1p(std::exp(-10.0)), 1e-15);
}

TEST(SpikeCountLoss, ClassMismatchIsDimensionError) {
  Tape<double> tape;
  EXPECT_THROW(spike_count_ce_loss(tape, record_of(D({4, 3})), one_hot(2, 0)), DimensionError);
}

TEST(SpikeCountLoss, GradientIsSoftmaxMinusTargetPerStep) {
  std::mt19937_64 rng(1);
  const D out = spikegrad::testing::uniform_tensor({4, 3}, rng, 0, 1);
  const D target = one_hot(3, 2);
  Tape<double> tape;
  const D leaf = tape.leaf(out);
  const D g = tape.backward(spike_count_ce_loss(tape, record_of(leaf), target)).at(leaf);
  const D fd = numeric_gradient(
      [&](const D& v) {
        Tape<double> off(false);
        return spike_count_ce_loss(off, record_of(v), target).item();
      },
      out);
  EXPECT_LT(relative_error(g, fd), 1e-8);
  // Every step shares the same adjoint: softmax(counts) - target.
  for (std::size_t t = 1; t < 4; ++t) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(g[t * 3 + c], g[c]);
  }
}

TEST(SpikeCounts, PredictionsAndTargets) {
  EXPECT_EQ(predicted_class(D::vector({1, 3, 3})), 1u);
  EXPECT_EQ(predicted_class(D::vector({0, 0, 0})), 0u);
  EXPECT_EQ(target_class(one_hot(4, 2)), 2u);
  D out({3, 2}, {1, 0, 1, 1, 0, 1});
  const D counts = spike_counts(record_of(out));
  EXPECT_EQ(counts[0], 2.0);
  EXPECT_EQ(counts[1], 2.0);
}

TEST(LossAndGrad, EmptyBatchIsValidationError) {
  const NetworkGraph g = make_lif_mlp(6, {3});
  EXPECT_THROW(loss_and_grad<double>(g, init_parameters<double>(g), ExecutionPlan{}, {}),
               ValidationError);
}

TEST(LossAndGrad, IdenticalSamplesGiveSingleSampleGradient) {
  const NetworkGraph g = make_lif_mlp(6, {8, 3}, {}, 2);
  const auto p = scaled(init_parameters<double>(g), 3.0);
  const auto data = small_toy();
  const Dataset<double> twice{data[0], data[0]};
  LossOptions opts;
  const auto one = loss_and_grad<double>(g, p, ExecutionPlan{}, std::span(data.data(), 1), opts);
  const auto two = loss_and_grad<double>(g, p, ExecutionPlan{}, twice, opts);
  EXPECT_NEAR(two.loss, one.loss, 1e-15);
  EXPECT_LT(max_diff(two.grads, one.grads), 1e-15);
}

TEST(LossAndGrad, BatchGradientIsMeanOfSampleGradients) {
  const NetworkGraph g = make_lif_mlp(6, {8, 3}, {}, 2);
  const auto p = scaled(init_parameters<double>(g), 3.0);
  const auto data = small_toy();
  LossOptions opts;
  opts.state_init = StateInit::uniform(0, 0.5);
  opts.state_seed = 4;
  const auto batch = loss_and_grad<double>(g, p, ExecutionPlan{}, std::span(data.data(), 2), opts);

  // Sample i of a batch starts from the states drawn with mix_seed(seed, i).
  const auto a = value_and_grad(g, p, ExecutionPlan{}, data[0].input,
                                init_states<double>(g, opts.state_init, mix_seed(opts.state_seed, 0)),
                                spike_count_ce_head<double>(data[0].target));
  const auto b = value_and_grad(g, p, ExecutionPlan{}, data[1].input,
                                init_states<double>(g, opts.state_init, mix_seed(opts.state_seed, 1)),
                                spike_count_ce_head<double>(data[1].target));
  EXPECT_NEAR(batch.loss, 0.5 * (a.loss + b.loss), 1e-12);
  EXPECT_LT(max_diff(batch.grads, mean_of(a.grads, b.grads)), 1e-6);
  ASSERT_EQ(batch.counts.size(), 2u);
}

TEST(LossAndGrad, ThreadCountDoesNotChangeBits) {
  const NetworkGraph g = make_lif_mlp(6, {8, 3}, {}, 5);
  const auto p = scaled(init_parameters<double>(g), 3.0);
  const auto data = small_toy();
  LossOptions one;
  LossOptions many;
  many.threads = 3;
  const auto a = loss_and_grad<double>(g, p, ExecutionPlan{}, data, one);
  const auto b = loss_and_grad<double>(g, p, ExecutionPlan{}, data, many);
  EXPECT_EQ(a.loss, b.loss);
  for (const auto& [name, t] : a.grads) EXPECT_TRUE(bitwise_equal(t, b.grads.at(name))) << name;
  EXPECT_EQ(batch_loss<double>(g, p, ExecutionPlan{}, data, many), a.loss);
}

TEST(LossAndGrad, SmoothTwinMatchesFiniteDifferences) {
  const NetworkGraph g = smooth_twin(
      sequential_recurrent({4}, {linear(4, 5), lif(5), linear(5, 3), lif(3)}, {{3, 1}}, 6), 2.0);
  const auto p = scaled(init_parameters<double>(g), 2.0);
  const auto data = gen_toy<double>(3, 4, 6, 1, 7);
  LossOptions opts;
  opts.state_init = StateInit::uniform(0, 0.5);
  const auto ad = loss_and_grad<double>(g, p, ExecutionPlan{}, data, opts);
  const auto fd = fd_gradient(g, p, ExecutionPlan{}, data, 1e-6, opts);
  const GradReport report = compare_gradients(ad.grads, fd);
  EXPECT_EQ(report.entries.size(), p.size());
  EXPECT_LT(report.max_rel_error(), 1e-4);
  EXPECT_TRUE(report.pass());
}

TEST(FdGradient, LinearModelQuadraticLoss) {
  const NetworkGraph g = sequential({3}, {linear(3, 2)}, 8);
  ParameterSet<double> p = init_parameters<double>(g);
  const D x({4, 3}, {0.5, -1, 2, 1, 0, 0.3, -0.2, 0.7, 1.1, 0, 0, 1});
  const D y = D::vector({0.4, -0.9});
  const Dataset<double> data{{x, y}};
  const HeadFactory<double> heads = [](const Sample<double>& s) {
    return count_squared_error_head<double>(s.target);
  };
  const auto fd = fd_gradient(g, p, ExecutionPlan{}, data, 1e-6, {}, heads);

  // counts = sum_t (x_t W + b); dL/dW = (sum_t x_t)^T r, dL/db = T r with r = counts - y.
  const D& W = p.at("linear0.weight");
  const D& b = p.at("linear0.bias");
  double xs[3] = {0, 0, 0};
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < 3; ++i) xs[i] += x[t * 3 + i];
  }
  double r[2];
  for (std::size_t j = 0; j < 2; ++j) {
    double c = 4 * b[j];
    for (std::size_t i = 0; i < 3; ++i) c += xs[i] * W[i * 2 + j];
    r[j] = c - y[j];
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(fd.at("linear0.weight")[i * 2 + j], xs[i] * r[j], 1e-8);
  }
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(fd.at("linear0.bias")[j], 4 * r[j], 1e-8);

  const auto ad = loss_and_grad<double>(g, p, ExecutionPlan{}, data, {}, heads);
  EXPECT_LT(compare_gradients(ad.grads, fd).max_rel_error(), 1e-8);
}

TEST(FdGradient, DeadNetworkHasZeroGradient) {
  // Zero input into a bias-free layer: the loss cannot depend on the weights.
  const NetworkGraph g = smooth_twin(sequential({3}, {linear(3, 2, false), lif(2)}), 2.0);
  const ParameterSet<double> p = scaled(init_parameters<double>(g), 0.0);
  const Dataset<double> data{{D({5, 3}), one_hot(2, 0)}};
  const auto fd = fd_gradient(g, p, ExecutionPlan{}, data, 1e-6);
  ASSERT_EQ(fd.size(), 1u);
  for (const auto& [name, t] : fd) {
    for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
  }
}

TEST(FdGradient, RejectsBadArguments) {
  const NetworkGraph hard = make_lif_mlp(3, {2});
  const auto p = init_parameters<double>(hard);
  const Dataset<double> data{{D({2, 3}), one_hot(2, 0)}};
  EXPECT_THROW(fd_gradient(hard, p, ExecutionPlan{}, data, 1e-6), ValidationError);
  const NetworkGraph soft = smooth_twin(hard, 2.0);
  EXPECT_THROW(fd_gradient(soft, p, ExecutionPlan{}, data, 0.0), ValidationError);
  EXPECT_THROW(fd_gradient(soft, p, ExecutionPlan{}, data, -1e-6), ValidationError);
}

TEST(CompareGradients, RelativeErrorDefinition) {
  const ParameterSet<double> a{{"w", D::vector({1.0, 2.0, -4.0})}};
  const ParameterSet<double> f{{"w", D::vector({1.0, 2.5, -4.0})}};
  const GradReport r = compare_gradients(a, f, 0.2);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_DOUBLE_EQ(r.entries[0].max_rel_error, 0.5 / 4.0);
  EXPECT_DOUBLE_EQ(r.entries[0].mean_rel_error, 0.5 / 4.0 / 3.0);
  EXPECT_TRUE(r.pass());
  EXPECT_FALSE(compare_gradients(a, f, 0.1).pass());
  const ParameterSet<double> zeros{{"w", D({3})}};
  EXPECT_EQ(compare_gradients(zeros, zeros).max_rel_error(), 0.0);
  EXPECT_THROW(compare_gradients(a, ParameterSet<double>{{"v", D({3})}}), ContractError);
  EXPECT_THROW(compare_gradients(a, ParameterSet<double>{{"w", D({2})}}), ContractError);
}

TEST(Gradcheck, HardThresholdOracle) { EXPECT_LT(hard_threshold_oracle_error(), 1e-10); }

TEST(Gradcheck, SuitePassesOnSixArchitectures) {
  const GradcheckSuite suite = run_gradcheck_suite();
  EXPECT_EQ(suite.cases.size(), 6u);
  EXPECT_LT(suite.max_rel_error(), 1e-4);
  EXPECT_TRUE(suite.pass());
  for (const auto& c : suite.cases) {
    EXPECT_FALSE(c.description.empty());
    for (const auto& e : c.report.entries) {
      EXPECT_GE(e.max_rel_error, 0.0);
      EXPECT_GE(e.max_rel_error, e.mean_rel_error);
    }
  }
}

TEST(Optimizer, SgdHandArithmetic) {
  OptimizerConfig c;
  c.kind = OptimizerKind::sgd;
  c.learning_rate = 0.1;
  const auto r = optimizer_step<double>({{"p", D::scalar(1.0)}}, {{"p", D::scalar(0.5)}}, {}, c);
  EXPECT_DOUBLE_EQ(r.params.at("p").item(), 0.95);
  EXPECT_EQ(r.state.step, 1u);
}

TEST(Optimizer, ZeroGradientLeavesParameters) {
  for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
    OptimizerConfig c;
    c.kind = kind;
    const ParameterSet<double> p{{"w", D::vector({0.3, -0.2})}};
    const auto r = optimizer_step<double>(p, {{"w", D({2})}}, {}, c);
    EXPECT_TRUE(bitwise_equal(r.params.at("w"), p.at("w")));
  }
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  OptimizerConfig c;
  c.learning_rate = 1e-3;
  const ParameterSet<double> p{{"w", D::vector({0.5, -1.0, 2.0})}};
  const auto r = optimizer_step<double>(p, {{"w", D({3}, 1.0)}}, {}, c);
  // m_hat = v_hat = 1 after bias correction.
  const double step = c.learning_rate * 1.0 / (1.0 + c.eps);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.params.at("w")[i], p.at("w")[i] - step, 1e-12);
  EXPECT_NEAR(r.state.m.at("w")[0], 0.1, 1e-15);
  EXPECT_NEAR(r.state.v.at("w")[0], 0.001, 1e-15);
}

TEST(Optimizer, AdamMatchesHandRecursionOverSteps) {
  OptimizerConfig c;
  c.learning_rate = 0.01;
  ParameterSet<double> p{{"w", D::scalar(1.0)}};
  OptimizerState<double> st;
  double w = 1.0, m = 0.0, v = 0.0;
  const double grads[4] = {0.5, -0.25, 1.5, 0.0};
  for (int k = 0; k < 4; ++k) {
    auto r = optimizer_step<double>(p, {{"w", D::scalar(grads[k])}}, std::move(st), c);
    p = std::move(r.params);
    st = std::move(r.state);
    m = c.beta1 * m + (1 - c.beta1) * grads[k];
    v = c.beta2 * v + (1 - c.beta2) * grads[k] * grads[k];
    const double mh = m / (1 - std::pow(c.beta1, k + 1));
    const double vh = v / (1 - std::pow(c.beta2, k + 1));
    w -= c.learning_rate * mh / (std::sqrt(vh) + c.eps);
    EXPECT_NEAR(p.at("w").item(), w, 1e-12) << "step " << k + 1;
  }
}

TEST(Optimizer, KeyOrShapeMismatchIsContractError) {
  const OptimizerConfig c;
  const ParameterSet<double> p{{"w", D({2})}};
  EXPECT_THROW(optimizer_step<double>(p, {{"v", D({2})}}, {}, c), ContractError);
  EXPECT_THROW(optimizer_step<double>(p, {{"w", D({3})}}, {}, c), ContractError);
  EXPECT_THROW(optimizer_step<double>(p, {}, {}, c), ContractError);
}

TEST(Optimizer, ConfigValidation) {
  OptimizerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.eps = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::sgd);
  EXPECT_THROW(parse_optimizer("rmsprop"), ValidationError);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.threads = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Train, ZeroLearningRateFreezesParameters) {
  const NetworkGraph g = make_lif_mlp(6, {8, 3}, {}, 9);
  const auto p = scaled(init_parameters<double>(g), 3.0);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 4;
  c.optimizer.learning_rate = 0.0;
  const auto r = train(g, p, small_toy(), c);
  for (const auto& [name, t] : p) EXPECT_TRUE(bitwise_equal(t, r.params.at(name))) << name;
  ASSERT_EQ(r.metrics.size(), 3u);
  // Same parameters and same per-batch state draws would still vary with the
  // shuffle, but zero initial states make every epoch see identical losses.
  EXPECT_EQ(r.metrics[0].mean_loss, r.metrics[2].mean_loss);
}

TEST(Train, DeterministicForFixedSeeds) {
  const NetworkGraph g = make_lif_mlp(6, {8, 3}, {}, 10);
  const auto p = scaled(init_parameters<double>(g), 3.0);
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 5;
  c.optimizer.learning_rate = 0.05;
  c.seed = 11;
  c.state_init = StateInit::uniform(0, 0.5);
  const auto data = small_toy();
  std::vector<EpochMetrics> seen;
  const auto a = train(g, p, data, c, [&](const EpochMetrics& m) { seen.push_back(m); });
  c.threads = 2;
  const auto b = train(g, p, data, c);
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  ASSERT_EQ(seen.size(), a.metrics.size());
  for (std::size_t e = 0; e < a.metrics.size(); ++e) {
    EXPECT_EQ(a.metrics[e].epoch, e + 1);
    EXPECT_EQ(a.metrics[e].mean_loss, b.metrics[e].mean_loss);
    EXPECT_EQ(a.metrics[e].accuracy, b.metrics[e].accuracy);
    EXPECT_EQ(seen[e].mean_loss, a.metrics[e].mean_loss);
  }
  for (const auto& [name, t] : a.params) EXPECT_TRUE(bitwise_equal(t, b.params.at(name))) << name;
  bool moved = false;
  for (const auto& [name, t] : p) moved = moved || !bitwise_equal(t, a.params.at(name));
  EXPECT_TRUE(moved);
}

TEST(Train, NonFiniteLossNamesEpochAndBatch) {
  const NetworkGraph g = smooth_twin(make_lif_mlp(6, {4, 3}, {}, 12), 2.0);
  auto p = init_parameters<double>(g);
  p.at("fc1.weight").mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  try {
    train(g, p, small_toy(), c);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 1"), std::string::npos) << msg;
  }
}

TEST(Train, StopsEarlyAtTargetAccuracy) {
  const NetworkGraph g = make_lif_mlp(6, {8, 3}, {}, 13);
  TrainConfig c;
  c.epochs = 50;
  c.batch_size = 6;
  c.optimizer.learning_rate = 0.02;
  c.stop_at_accuracy = 0.0;
  const auto r = train(g, scaled(init_parameters<double>(g), 3.0), small_toy(), c);
  EXPECT_EQ(r.metrics.size(), 1u);
}

TEST(Train, EmptyDatasetIsValidationError) {
  const NetworkGraph g = make_lif_mlp(6, {3});
  EXPECT_THROW(train(g, init_parameters<double>(g), Dataset<double>{}, TrainConfig{}),
               ValidationError);
}

TEST(EvaluateAccuracy, CountsArgmaxMatches) {
  // A single linear readout with identity weights and a low threshold
  // classifies the toy data by its active channel group.
  const NetworkGraph g = sequential({3}, {linear(3, 3), lif(3, LIFParams{0.5, 0.5, 0.5})});
  ParameterSet<double> p = init_parameters<double>(g);
  p["linear0.weight"] = D::identity(3);
  p["linear0.bias"] = D({3});
  const auto data = gen_toy<double>(3, 3, 30, 5, 14);
  EXPECT_GE(evaluate_accuracy(g, p, data, ExecutionPlan{}), 0.9);
  p["linear0.weight"] = D({3, 3});
  EXPECT_NEAR(evaluate_accuracy(g, p, data, ExecutionPlan{}), 1.0 / 3.0, 1e-12);
}
