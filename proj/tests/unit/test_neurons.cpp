#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spikegrad/neurons.hpp"

using namespace spikegrad;
using spikegrad::testing::bitwise_equal;
using spikegrad::testing::numeric_gradient;
using spikegrad::testing::relative_error;

namespace {

using D = Tensor<double>;

NeuronState<double> state_of(std::initializer_list<double> u, std::initializer_list<double> i) {
  const D U = D::vector(u);
  return {U, D::vector(i), D(U.shape())};
}

}  // namespace

TEST(Surrogate, PeakValuesAndNames) {
  for (SurrogateKind kind : kAllSurrogates) {
    const Surrogate s = make_surrogate(to_string(kind), 4.0);
    EXPECT_EQ(s.kind, kind);
  }
  EXPECT_DOUBLE_EQ((Surrogate{SurrogateKind::superspike, 10.0})(0.0), 1.0);
  EXPECT_DOUBLE_EQ((Surrogate{SurrogateKind::superspike, 10.0})(0.1), 0.25);
  EXPECT_DOUBLE_EQ((Surrogate{SurrogateKind::sigmoid_derivative, 4.0})(0.0), 1.0);
  EXPECT_DOUBLE_EQ((Surrogate{SurrogateKind::piecewise_linear, 2.0})(0.25), 0.5);
  EXPECT_DOUBLE_EQ((Surrogate{SurrogateKind::piecewise_linear, 2.0})(0.75), 0.0);
  EXPECT_DOUBLE_EQ((Surrogate{SurrogateKind::arctan, 2.0})(0.0), 1.0);
}

TEST(Surrogate, UnknownNameOrBadSlope) {
  EXPECT_THROW(make_surrogate("heaviside"), ValidationError);
  EXPECT_THROW(make_surrogate("superspike", 0.0), ValidationError);
  EXPECT_THROW(make_surrogate("superspike", -1.0), ValidationError);
}

TEST(Surrogate, NonnegativeSymmetricPeakedAtZero) {
  for (SurrogateKind kind : kAllSurrogates) {
    for (double slope : {0.5, 1.0, 10.0, 100.0}) {
      const Surrogate s{kind, slope};
      const double peak = s(0.0);
      for (double x = -20.0; x <= 20.0; x += 0.01) {
        const double v = s(x);
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, peak);
        EXPECT_DOUBLE_EQ(v, s(-x)) << to_string(kind) << " at " << x;
      }
      EXPECT_TRUE(std::isfinite(s(1e300)));
    }
  }
}

TEST(SmoothStep, ValuesAndDerivative) {
  EXPECT_DOUBLE_EQ(smooth_step(0.0, 3.0), 0.5);
  EXPECT_EQ(smooth_step(-100.0, 1.0), 0.0);
  EXPECT_EQ(smooth_step(100.0, 1.0), 1.0);
  for (double x : {-1.3, -0.2, 0.0, 0.4, 2.0}) {
    const double h = 1e-6;
    const double fd = (smooth_step(x + h, 2.0) - smooth_step(x - h, 2.0)) / (2 * h);
    EXPECT_NEAR(smooth_step_derivative(x, 2.0), fd, 1e-8);
  }
}

TEST(LifParams, Validation) {
  EXPECT_NO_THROW(LIFParams{}.validate());
  EXPECT_THROW((LIFParams{1.0, 0.8}).validate(), ValidationError);
  EXPECT_THROW((LIFParams{0.9, 0.0}).validate(), ValidationError);
  EXPECT_THROW((LIFParams{0.9, 0.8, -1.0}).validate(), ValidationError);
}

TEST(LifStep, ZeroFixedPoint) {
  Tape<double> tape;
  const auto r = lif_step(tape, state_of({0}, {0}), D::vector({0}), LIFParams{});
  EXPECT_EQ(r.state.U[0], 0.0);
  EXPECT_EQ(r.state.I[0], 0.0);
  EXPECT_EQ(r.spikes[0], 0.0);
}

TEST(LifStep, SpikeAndSubtractReset) {
  Tape<double> tape;
  const auto r = lif_step(tape, state_of({0}, {0}), D::vector({1.5}), LIFParams{0.9, 0.8, 1.0});
  EXPECT_DOUBLE_EQ(r.state.I[0], 1.5);
  EXPECT_EQ(r.spikes[0], 1.0);
  EXPECT_DOUBLE_EQ(r.state.U[0], 0.5);
  EXPECT_TRUE(r.state.S.same_values(r.spikes));
}

TEST(LifStep, ResetToZero) {
  Tape<double> tape;
  LIFParams p;
  p.reset = ResetMode::to_zero;
  const auto r = lif_step(tape, state_of({0}, {0}), D::vector({1.5}), p);
  EXPECT_EQ(r.spikes[0], 1.0);
  EXPECT_EQ(r.state.U[0], 0.0);
}

TEST(LifStep, DecayWithoutSpike) {
  Tape<double> tape;
  const auto r = lif_step(tape, state_of({0.5}, {0}), D::vector({0}), LIFParams{0.9, 0.8});
  EXPECT_DOUBLE_EQ(r.state.U[0], 0.45);
  EXPECT_EQ(r.spikes[0], 0.0);
}

TEST(LifStep, ShapeMismatch) {
  Tape<double> tape;
  EXPECT_THROW(lif_step(tape, state_of({0, 0}, {0, 0}), D::vector({1}), LIFParams{}),
               DimensionError);
}

template <typename T>
class ZeroInputDecay : public ::testing::Test {};
using Precisions = ::testing::Types<float, double>;
TYPED_TEST_SUITE(ZeroInputDecay, Precisions);

TYPED_TEST(ZeroInputDecay, GeometricAndResetIndependent) {
  using T = TypeParam;
  Tape<T> tape(false);
  LIFParams sub;
  LIFParams zero;
  zero.reset = ResetMode::to_zero;
  const Tensor<T> u0 = Tensor<T>::vector({T(0.5), T(0.99), T(-0.7), T(0)});
  NeuronState<T> a{u0, Tensor<T>({4}), Tensor<T>({4})};
  NeuronState<T> b = a;
  const T alpha = static_cast<T>(sub.alpha);
  std::vector<T> expected(u0.data().begin(), u0.data().end());
  for (int t = 1; t <= 50; ++t) {
    a = lif_step(tape, a, Tensor<T>({4}), sub).state;
    b = lif_step(tape, b, Tensor<T>({4}), zero).state;
    for (auto& e : expected) e *= alpha;
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(a.U[i], expected[i]) << "t=" << t;
      EXPECT_NEAR(static_cast<double>(a.U[i]),
                  std::pow(static_cast<double>(alpha), t) * static_cast<double>(u0[i]),
                  1e-5 * std::abs(static_cast<double>(u0[i])));
      EXPECT_EQ(a.S[i], T{0});
    }
    EXPECT_TRUE(bitwise_equal(a.U, b.U));
  }
}

template <typename T>
class LifScan : public ::testing::Test {};
TYPED_TEST_SUITE(LifScan, Precisions);

TYPED_TEST(LifScan, MatchesRepeatedStepsBitwise) {
  using T = TypeParam;
  constexpr std::size_t kSteps = 37;
  constexpr std::size_t kWidth = 6;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-0.4, 1.2);
  std::vector<T> flat(kSteps * kWidth);
  for (auto& v : flat) v = static_cast<T>(dist(rng));
  const Tensor<T> input({kSteps, kWidth}, flat);
  std::vector<T> u0(kWidth);
  for (auto& v : u0) v = static_cast<T>(dist(rng));

  for (ResetMode reset : {ResetMode::subtract, ResetMode::to_zero}) {
    LIFParams params;
    params.reset = reset;
    Tape<T> tape(false);
    NeuronState<T> ref{Tensor<T>({kWidth}, u0), Tensor<T>({kWidth}), Tensor<T>({kWidth})};
    std::vector<T> ref_spikes;
    for (std::size_t t = 0; t < kSteps; ++t) {
      const std::vector<T> x(flat.begin() + static_cast<std::ptrdiff_t>(t * kWidth),
                             flat.begin() + static_cast<std::ptrdiff_t>((t + 1) * kWidth));
      auto r = lif_step(tape, ref, Tensor<T>({kWidth}, x), params);
      ref = std::move(r.state);
      ref_spikes.insert(ref_spikes.end(), r.spikes.data().begin(), r.spikes.data().end());
    }
    for (std::size_t unroll : {1U, 2U, 3U, 4U, 8U}) {
      NeuronState<T> st{Tensor<T>({kWidth}, u0), Tensor<T>({kWidth}), Tensor<T>({kWidth})};
      const Tensor<T> spikes = lif_scan(st, input, params, unroll);
      EXPECT_TRUE(bitwise_equal(spikes, Tensor<T>({kSteps, kWidth}, ref_spikes))) << unroll;
      EXPECT_TRUE(bitwise_equal(st.U, ref.U)) << unroll;
      EXPECT_TRUE(bitwise_equal(st.I, ref.I)) << unroll;
      EXPECT_TRUE(bitwise_equal(st.S, ref.S)) << unroll;
    }
  }
}

TEST(LifScan, RejectsBadShapeAndUnroll) {
  NeuronState<double> st = state_of({0, 0}, {0, 0});
  EXPECT_THROW(lif_scan(st, D({5, 3}), LIFParams{}), DimensionError);
  EXPECT_THROW(lif_scan(st, D::vector({1, 2}), LIFParams{}), DimensionError);
  EXPECT_THROW(lif_scan(st, D({5, 2}), LIFParams{}, 0), ValidationError);
}

TEST(LifStep, SpikesAreBinary) {
  std::mt19937_64 rng(1);
  Tape<double> tape(false);
  NeuronState<double> s = state_of({0, 0, 0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0, 0, 0});
  for (int t = 0; t < 200; ++t) {
    const D x = spikegrad::testing::uniform_tensor({8}, rng, -3, 3);
    const auto r = lif_step(tape, s, x, LIFParams{});
    for (double v : r.spikes.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
    s = r.state;
  }
}

TEST(LifSmoothStep, ZeroInputZeroOutput) {
  Tape<double> tape;
  const auto r = lif_smooth_step(tape, state_of({0, 0}, {0, 0}), D({2}), LIFParams{}, 50.0);
  for (double v : r.spikes.data()) EXPECT_EQ(v, 0.0);
  for (double v : r.state.U.data()) EXPECT_EQ(v, 0.0);
}

TEST(LifSmoothStep, RejectsNonPositiveSharpness) {
  Tape<double> tape;
  EXPECT_THROW(lif_smooth_step(tape, state_of({0}, {0}), D({1}), LIFParams{}, 0.0),
               ValidationError);
}

// Whenever the hard trajectory keeps |U_pre - thr| > 10/sharpness the two
// dynamics agree to 1e-6.
TEST(LifSmoothStep, AgreesWithHardAwayFromThreshold) {
  const double sharpness = 200.0;
  const double margin = 10.0 / sharpness;
  const LIFParams p{};
  std::mt19937_64 rng(2);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const D xs = spikegrad::testing::uniform_tensor({30, 4}, rng, -0.2, 0.9);
    Tape<double> tape(false);
    NeuronState<double> hard = state_of({0, 0, 0, 0}, {0, 0, 0, 0});
    NeuronState<double> soft = hard;
    bool clear = true;
    double worst = 0.0;
    for (std::size_t t = 0; t < 30 && clear; ++t) {
      const D x = tape.select(xs, t);
      for (std::size_t i = 0; i < 4; ++i) {
        const double u_pre = p.alpha * hard.U[i] + p.beta * hard.I[i] + x[i];
        clear = clear && std::abs(u_pre - p.thr) > margin;
      }
      const auto h = lif_step(tape, hard, x, p);
      const auto s = lif_smooth_step(tape, soft, x, p, sharpness);
      worst = std::max({worst, max_abs_difference(h.spikes, s.spikes),
                        max_abs_difference(h.state.U, s.state.U)});
      hard = h.state;
      soft = s.state;
    }
    if (!clear) continue;
    ++compared;
    EXPECT_LT(worst, 1e-6) << "trial " << trial;
  }
  EXPECT_GE(compared, 10);
}

TEST(LifSmoothStep, FourNeuronsFiveStepsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  const D x = spikegrad::testing::uniform_tensor({5, 4}, rng, 0.0, 1.5);
  const LIFParams p{};
  const auto loss = [&](Tape<double>& tape, const D& input) {
    NeuronState<double> s = state_of({0.1, 0.2, 0.3, 0.4}, {0, 0, 0, 0});
    D total = D::scalar(0);
    for (std::size_t t = 0; t < 5; ++t) {
      const auto r = lif_smooth_step(tape, s, tape.select(input, t), p, 2.0);
      total = tape.add(total, tape.sum_all(tape.mul(r.spikes, r.state.U)));
      s = r.state;
    }
    return total;
  };
  Tape<double> tape;
  const D leaf = tape.leaf(x);
  const D g = tape.backward(loss(tape, leaf)).at(leaf);
  const D fd = numeric_gradient(
      [&](const D& v) {
        Tape<double> off(false);
        return loss(off, v).item();
      },
      x);
  EXPECT_LT(relative_error(g, fd), 1e-4);
}

namespace {

struct HandResult {
  double loss;
  std::array<double, 3> d_input;
  double d_u0;
  double d_i0;
};

// Loss = total spike count plus U_3, differentiated by writing out the
// recurrence and its adjoint by hand.
HandResult hand_unrolled(const std::array<double, 3>& x, double u0, double i0,
                         const LIFParams& p) {
  const double a = p.alpha;
  const double b = p.beta;
  const double thr = p.thr;
  std::array<double, 4> U{u0};
  std::array<double, 4> I{i0};
  std::array<double, 4> P{};
  std::array<double, 4> S{};
  for (int t = 1; t <= 3; ++t) {
    I[t] = b * I[t - 1] + x[t - 1];
    P[t] = a * U[t - 1] + I[t];
    S[t] = P[t] >= thr ? 1.0 : 0.0;
    U[t] = p.reset == ResetMode::subtract ? P[t] - thr * S[t] : P[t] * (1.0 - S[t]);
  }
  HandResult r{S[1] + S[2] + S[3] + U[3], {}, 0, 0};
  double gU = 1.0;
  double gI = 0.0;
  for (int t = 3; t >= 1; --t) {
    double gS = 1.0;
    double gP = 0.0;
    if (p.reset == ResetMode::subtract) {
      gS += -thr * gU;
      gP = gU;
    } else {
      gS += -P[t] * gU;
      gP = (1.0 - S[t]) * gU;
    }
    gP += gS * p.surrogate(P[t] - thr);
    const double gI_total = gI + gP;
    r.d_input[t - 1] = gI_total;
    gU = a * gP;
    gI = b * gI_total;
  }
  r.d_u0 = gU;
  r.d_i0 = gI;
  return r;
}

}  // namespace

class HandOracle : public ::testing::TestWithParam<ResetMode> {};

TEST_P(HandOracle, OneNeuronThreeSteps) {
  LIFParams p;
  p.reset = GetParam();
  p.surrogate = Surrogate{SurrogateKind::superspike, 5.0};
  const std::array<double, 3> x{1.2, 0.3, 0.9};
  const HandResult want = hand_unrolled(x, 0.2, 0.1, p);

  Tape<double> tape;
  const D input = tape.leaf(D({3, 1}, {x[0], x[1], x[2]}));
  NeuronState<double> s{tape.leaf(D::vector({0.2})), tape.leaf(D::vector({0.1})), D({1})};
  const D u0 = s.U;
  const D i0 = s.I;
  D loss = D::scalar(0);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto r = lif_step(tape, s, tape.select(input, t), p);
    loss = tape.add(loss, tape.sum_all(r.spikes));
    s = r.state;
  }
  loss = tape.add(loss, tape.sum_all(s.U));
  EXPECT_NEAR(loss.item(), want.loss, 1e-15);
  const auto g = tape.backward(loss);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(g.at(input)[t], want.d_input[t], 1e-12);
  EXPECT_NEAR(g.at(u0)[0], want.d_u0, 1e-12);
  EXPECT_NEAR(g.at(i0)[0], want.d_i0, 1e-12);
}

INSTANTIATE_TEST_SUITE_P(ResetModes, HandOracle,
                         ::testing::Values(ResetMode::subtract, ResetMode::to_zero));

TEST(InitState, Zeros) {
  const auto s = init_state<double>({3}, StateInit::zeros(), 7);
  for (const D* t : {&s.U, &s.I, &s.S}) {
    ASSERT_EQ(t->shape(), (Shape{3}));
    for (double v : t->data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(InitState, UniformMeanAndDeterminism) {
  const auto a = init_state<double>({1000}, StateInit::uniform(0, 1), 42);
  double mean = 0;
  for (double v : a.U.data()) mean += v / 1000.0;
  EXPECT_GE(mean, 0.45);
  EXPECT_LE(mean, 0.55);
  for (double v : a.S.data()) EXPECT_EQ(v, 0.0);
  const auto b = init_state<double>({1000}, StateInit::uniform(0, 1), 42);
  EXPECT_TRUE(bitwise_equal(a.U, b.U));
  EXPECT_TRUE(bitwise_equal(a.I, b.I));
  const auto c = init_state<double>({1000}, StateInit::uniform(0, 1), 43);
  EXPECT_FALSE(bitwise_equal(a.U, c.U));
}

TEST(InitState, BadArguments) {
  EXPECT_THROW(init_state<double>({3}, StateInit::uniform(1, 1), 0), ValidationError);
  EXPECT_THROW(init_state<double>({3}, StateInit::uniform(2, 1), 0), ValidationError);
  EXPECT_THROW(init_state<double>({0}, StateInit::zeros(), 0), ValidationError);
}
