#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_support.hpp"

using namespace simtrain;
using simtrain::testing::random_tensor;

namespace {

void expect_values(const Tensor& t, const std::vector<double>& want, double tol = 0.0) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "index " << i;
}

// Checks d(sum(w * f(x)))/dx against central differences with a random
// weighting w, so every output element matters.
double op_gradient_error(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, std::uint64_t seed = 1) {
  Rng rng(seed);
  const Tensor probe = f(x);
  const Tensor w = random_tensor(probe.shape(), rng);
  auto scalar = [&](const Tensor& in) { return sum(mul(f(in), w)); };
  Tape tape;
  const Tensor xt = tape.watch(x);
  const auto analytic = tape.backward(scalar(xt)).of(xt);
  const Tensor numeric = finite_difference_gradient([&](const Tensor& in) { return scalar(in).item(); }, x);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i]));
  return worst;
}

}  // namespace

TEST(Tensor, ConstructionChecksShapeAndFiniteness) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({2}, {1.0, std::nan("")}), std::invalid_argument);
  EXPECT_THROW(Tensor({1}, {INFINITY}), std::invalid_argument);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_FALSE(t.requires_grad());
}

TEST(Tensor, FactoriesAndReshape) {
  expect_values(Tensor::identity(2), {1, 0, 0, 1});
  expect_values(Tensor::matrix({{1, 2}, {3, 4}}), {1, 2, 3, 4});
  EXPECT_EQ(Tensor::matrix({{1, 2}, {3, 4}}).shape(), (Shape{2, 2}));
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), DimensionError);
  EXPECT_EQ(Tensor::zeros({3, 2}).numel(), 6u);
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_THROW(Tensor::vector({1, 2}).item(), DimensionError);
  EXPECT_EQ(Tensor::vector({1, 2, 3, 4}).reshaped({2, 2}).shape(), (Shape{2, 2}));
  EXPECT_THROW(Tensor::vector({1, 2, 3}).reshaped({2, 2}), DimensionError);
}

TEST(Tensor, RecordedTensorsAreReadOnly) {
  Tape tape;
  Tensor x = tape.watch(Tensor::vector({1, 2}));
  EXPECT_TRUE(x.requires_grad());
  EXPECT_THROW(x.mutable_values(), TapeError);
  Tensor d = x.detach();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_NO_THROW(d.mutable_values()[0] = 3.0);
}

TEST(Matmul, HandExamples) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  expect_values(matmul(Tensor::identity(2), m), {1, 2, 3, 4});
  expect_values(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})), {11});
}

TEST(Matmul, ShapeMismatchReportsBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientOfSumIsOnesTimesBTransposed) {
  Rng rng(3);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tape tape;
  const Tensor at = tape.watch(a);
  const auto g = tape.backward(sum(matmul(at, b))).of(at);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(g[i * 4 + k], b.at(k, 0) + b.at(k, 1), 1e-15);
  EXPECT_LT(op_gradient_error([&](const Tensor& x) { return matmul(x, b); }, a), 1e-8);
  EXPECT_LT(op_gradient_error([&](const Tensor& x) { return matmul(a, x); }, b), 1e-8);
}

TEST(Activation, PointValues) {
  EXPECT_DOUBLE_EQ(activation(Tensor::scalar(0), Activation::sigmoid).item(), 0.5);
  EXPECT_DOUBLE_EQ(activation(Tensor::scalar(0), Activation::tanh).item(), 0.0);
  EXPECT_DOUBLE_EQ(activation(Tensor::scalar(-1), Activation::relu).item(), 0.0);
  EXPECT_DOUBLE_EQ(activation(Tensor::scalar(2), Activation::relu).item(), 2.0);
  EXPECT_DOUBLE_EQ(activation(Tensor::scalar(-3), Activation::identity).item(), -3.0);
  EXPECT_EQ(parse_activation("tanh"), Activation::tanh);
  EXPECT_THROW(parse_activation("gelu"), std::invalid_argument);
}

TEST(Activation, SigmoidGradientAtOne) {
  Tape tape;
  const Tensor x = tape.watch(Tensor::scalar(1.0));
  const double g = tape.backward(activation(x, Activation::sigmoid)).of(x)[0];
  const double s = 1.0 / (1.0 + std::exp(-1.0));
  EXPECT_LT(relative_error(g, s * (1 - s)), 1e-12);
  const Tensor fd = finite_difference_gradient(
      [](const Tensor& t) { return activation(t, Activation::sigmoid).item(); }, Tensor::scalar(1.0));
  EXPECT_LT(relative_error(g, fd[0]), 1e-6);
}

TEST(Activation, AllKindsMatchFiniteDifferences) {
  Rng rng(5);
  // Keep relu away from its kink.
  Tensor x = random_tensor({3, 4}, rng, 2.0);
  for (auto& v : x.mutable_values())
    if (std::abs(v) < 0.05) v = 0.3;
  for (Activation a : {Activation::tanh, Activation::sigmoid, Activation::relu, Activation::identity}) {
    EXPECT_LT(op_gradient_error([a](const Tensor& t) { return activation(t, a); }, x), 1e-7) << to_string(a);
  }
}

TEST(ElementwiseOps, ValuesAndGradients) {
  Rng rng(7);
  const Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
  expect_values(add(Tensor::vector({1, 2}), Tensor::vector({3, 5})), {4, 7});
  expect_values(sub(Tensor::vector({1, 2}), Tensor::vector({3, 5})), {-2, -3});
  expect_values(mul(Tensor::vector({1, 2}), Tensor::vector({3, 5})), {3, 10});
  expect_values(affine(Tensor::vector({1, 2}), 2.0, 1.0), {3, 5});
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_LT(op_gradient_error([&](const Tensor& x) { return add(x, b); }, a), 1e-8);
  EXPECT_LT(op_gradient_error([&](const Tensor& x) { return sub(b, x); }, a), 1e-8);
  EXPECT_LT(op_gradient_error([&](const Tensor& x) { return mul(x, b); }, a), 1e-8);
  EXPECT_LT(op_gradient_error([&](const Tensor& x) { return affine(x, -1.5, 0.2); }, a), 1e-8);
}

TEST(Reductions, SumMeanMse) {
  EXPECT_DOUBLE_EQ(sum(Tensor::vector({1, 2, 3})).item(), 6.0);
  EXPECT_DOUBLE_EQ(mean(Tensor::vector({1, 2, 3})).item(), 2.0);
  EXPECT_DOUBLE_EQ(mse(Tensor::scalar(0.0), Tensor::scalar(2.0)).item(), 4.0);
  EXPECT_DOUBLE_EQ(mse(Tensor::vector({1, 2}), Tensor::vector({1, 2})).item(), 0.0);
  Rng rng(9);
  const Tensor a = random_tensor({3, 2}, rng), b = random_tensor({3, 2}, rng);
  EXPECT_LT(op_gradient_error([](const Tensor& x) { return mean(x); }, a), 1e-8);
  EXPECT_LT(op_gradient_error([&](const Tensor& x) { return mse(x, b); }, a), 1e-8);
}

TEST(Broadcast, AddBiasOverRowsAndTime) {
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
  expect_values(add_bias(x, Tensor::vector({10, 20})), {11, 22, 13, 24});
  const Tensor x3({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  expect_values(add_bias(x3, Tensor::vector({10, 20})), {11, 12, 13, 24, 25, 26});
  EXPECT_THROW(add_bias(x, Tensor::vector({1, 2, 3})), DimensionError);
  Rng rng(11);
  const Tensor bias = random_tensor({4}, rng), xx = random_tensor({2, 4, 3}, rng);
  EXPECT_LT(op_gradient_error([&](const Tensor& b) { return add_bias(xx, b); }, bias), 1e-8);
  EXPECT_LT(op_gradient_error([&](const Tensor& v) { return add_bias(v, bias); }, xx), 1e-8);
}

TEST(Layout, ConcatSliceStackTimeSlice) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}}), b = Tensor::matrix({{5}, {6}});
  const Tensor c = concat_cols({a, b});
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  expect_values(c, {1, 2, 5, 3, 4, 6});
  expect_values(slice_cols(c, 1, 3), {2, 5, 4, 6});
  EXPECT_THROW(slice_cols(c, 2, 4), DimensionError);
  EXPECT_THROW(concat_cols({a, Tensor::zeros({3, 1})}), DimensionError);

  const Tensor s = stack_time({a, Tensor::matrix({{7, 8}, {9, 10}})});  // [B=2 x C=2 x T=2]
  EXPECT_EQ(s.shape(), (Shape{2, 2, 2}));
  expect_values(s, {1, 7, 2, 8, 3, 9, 4, 10});
  expect_values(time_slice(s, 1), {7, 8, 9, 10});

  Rng rng(13);
  const Tensor x = random_tensor({2, 3}, rng), y = random_tensor({2, 2}, rng);
  EXPECT_LT(op_gradient_error([&](const Tensor& v) { return concat_cols({y, v, y}); }, x), 1e-8);
  EXPECT_LT(op_gradient_error([](const Tensor& v) { return slice_cols(v, 1, 3); }, x), 1e-8);
  EXPECT_LT(op_gradient_error([&](const Tensor& v) { return stack_time({v, x, v}); }, x), 1e-8);
  const Tensor x3 = random_tensor({2, 3, 4}, rng);
  EXPECT_LT(op_gradient_error([](const Tensor& v) { return time_slice(v, 2); }, x3), 1e-8);
}

TEST(CausalConv, WidthOneIdentityKernel) {
  const Tensor x = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  const Tensor k({2, 2, 1}, {1, 0, 0, 1});
  expect_values(causal_dilated_conv1d(x, k, 3), x.storage());
}

TEST(CausalConv, DirectConvolutionOracle) {
  const Tensor x = Tensor::matrix({{1, 2, 3, 4}});
  expect_values(causal_dilated_conv1d(x, Tensor({1, 1, 2}, {1, 1}), 1), {1, 3, 5, 7});
  // Independent loop: out[t] = sum_j k[j] * x[t - (W-1-j) d], zero before 0.
  Rng rng(17);
  const Tensor xr = random_tensor({2, 9}, rng), kr = random_tensor({3, 2, 3}, rng);
  const std::size_t d = 2;
  const Tensor out = causal_dilated_conv1d(xr, kr, d);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t t = 0; t < 9; ++t) {
      double want = 0.0;
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          const long src = static_cast<long>(t) - static_cast<long>((2 - j) * d);
          if (src >= 0) want += kr[(o * 2 + i) * 3 + j] * xr[i * 9 + static_cast<std::size_t>(src)];
        }
      EXPECT_NEAR(out[o * 9 + t], want, 1e-14);
    }
}

TEST(CausalConv, FutureInputsDoNotLeakBackwards) {
  Rng rng(19);
  const Tensor x = random_tensor({2, 10}, rng), k = random_tensor({2, 2, 3}, rng);
  const Tensor base = causal_dilated_conv1d(x, k, 2);
  for (std::size_t t = 0; t < 10; ++t) {
    Tensor xp = x.detach();
    xp.mutable_values()[t] += 1.0;       // channel 0
    xp.mutable_values()[10 + t] -= 2.0;  // channel 1
    const Tensor out = causal_dilated_conv1d(xp, k, 2);
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t s = 0; s < t; ++s) EXPECT_EQ(out[o * 10 + s], base[o * 10 + s]);
  }
}

TEST(CausalConv, ErrorsAndGradients) {
  EXPECT_THROW(causal_dilated_conv1d(Tensor::zeros({2, 5}), Tensor::zeros({1, 3, 2}), 1), DimensionError);
  EXPECT_THROW(causal_dilated_conv1d(Tensor::zeros({2, 5}), Tensor::zeros({1, 2, 2}), 0), std::invalid_argument);
  Rng rng(23);
  const Tensor x = random_tensor({2, 3, 7}, rng), k = random_tensor({4, 3, 2}, rng);
  EXPECT_LT(op_gradient_error([&](const Tensor& v) { return causal_dilated_conv1d(v, k, 2); }, x), 1e-8);
  EXPECT_LT(op_gradient_error([&](const Tensor& v) { return causal_dilated_conv1d(x, v, 2); }, k), 1e-8);
}

TEST(Dropout, IdentityCases) {
  Rng rng(1);
  const Tensor x = random_tensor({4, 4}, rng);
  EXPECT_EQ(dropout(x, 0.0, true, rng).storage(), x.storage());
  EXPECT_EQ(dropout(x, 0.5, false, rng).storage(), x.storage());
  EXPECT_THROW(dropout(x, 1.0, true, rng), std::invalid_argument);
  EXPECT_THROW(dropout(x, -0.1, true, rng), std::invalid_argument);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  Rng rng(2);
  const std::size_t n = 40000;
  std::vector<double> v(n);
  for (auto& e : v) e = rng.uniform(0.0, 2.0);
  const Tensor x({n}, v);
  Rng mask_rng(3);
  const Tensor y = dropout(x, 0.5, true, mask_rng);
  double mx = 0, my = 0, var = 0;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
    zeros += y[i] == 0.0;
    if (y[i] != 0.0) {
      EXPECT_DOUBLE_EQ(y[i], 2.0 * x[i]);
    }
  }
  mx /= n;
  my /= n;
  for (std::size_t i = 0; i < n; ++i) var += (y[i] - my) * (y[i] - my);
  const double se = std::sqrt(var / (n - 1) / n);
  EXPECT_LT(std::abs(my - mx), 3 * se);
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.5, 0.02);
}

TEST(Dropout, GradientUsesTheSameMask) {
  Rng rng(4);
  const Tensor x = random_tensor({3, 3}, rng);
  Tape tape;
  const Tensor xt = tape.watch(x);
  Rng m1(9);
  const Tensor y = dropout(xt, 0.3, true, m1);
  const auto g = tape.backward(sum(y)).of(xt);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(g[i], y[i] == 0.0 ? 0.0 : 1.0 / 0.7);
}

TEST(Backward, HandChainRule) {
  Tape tape;
  const Tensor w = tape.watch(Tensor::scalar(2.0));
  const Tensor x = Tensor::scalar(3.0);
  const Tensor wx = mul(w, x);
  EXPECT_DOUBLE_EQ(tape.backward(mul(wx, wx)).of(w)[0], 36.0);
}

TEST(Backward, SumOfWxGivesOnesTimesXTransposed) {
  Tape tape;
  const Tensor W = tape.watch(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  const Tensor x = Tensor::matrix({{0.5}, {-2.0}});
  const auto g = tape.backward(sum(matmul(W, x))).of(W);
  expect_values(Tensor::unchecked({3, 2}, g), {0.5, -2.0, 0.5, -2.0, 0.5, -2.0});
}

TEST(Backward, AccumulatesOverMultipleUses) {
  Tape tape;
  const Tensor w = tape.watch(Tensor::scalar(1.5));
  EXPECT_DOUBLE_EQ(tape.backward(add(w, w)).of(w)[0], 2.0);
  // One weight reused along a chain, as in an unrolled recurrence.
  Tensor h = Tensor::scalar(1.0);
  for (int k = 0; k < 4; ++k) h = mul(h, w);
  EXPECT_NEAR(tape.backward(h).of(w)[0], 4 * std::pow(1.5, 3), 1e-12);
}

TEST(Backward, UnreachedLeafGetsZeros) {
  Tape tape;
  const Tensor a = tape.watch(Tensor::vector({1, 2}));
  const Tensor b = tape.watch(Tensor::vector({3, 4}));
  const auto g = tape.backward(sum(a));
  EXPECT_EQ(g.of(b), (std::vector<double>{0, 0}));
  EXPECT_THROW(g.of(Tensor::scalar(1)), TapeError);
}

TEST(Backward, Errors) {
  Tape tape;
  const Tensor a = tape.watch(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(a), TapeError);                 // not scalar
  EXPECT_THROW(tape.backward(Tensor::scalar(1.0)), TapeError);  // not recorded
  Tape other;
  const Tensor b = other.watch(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(sum(b)), TapeError);  // other tape
  EXPECT_THROW(add(a, b), TapeError);              // mixed tapes
}

TEST(Backward, UntrackedInputsStayOffTheTape) {
  Tape tape;
  const Tensor y = matmul(Tensor::identity(2), Tensor::identity(2));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Backward, SmallNetworkMatchesFiniteDifferences) {
  Rng rng(31);
  ParamMap p{{"W1", random_tensor({3, 4}, rng)}, {"b1", random_tensor({4}, rng)}, {"W2", random_tensor({4, 1}, rng)}};
  const Tensor x = random_tensor({5, 3}, rng), y = random_tensor({5, 1}, rng);
  auto loss = [&](const ParamMap& q) {
    const Tensor h = activation(add_bias(matmul(x, q.at("W1")), q.at("b1")), Activation::tanh);
    return mse(matmul(h, q.at("W2")), y);
  };
  EXPECT_LT(simtrain::testing::max_param_gradient_error(p, loss), 1e-6);
}

TEST(FiniteDifference, Oracles) {
  const Tensor g = finite_difference_gradient([](const Tensor& t) { return sum(t).item(); }, Tensor::vector({1, -2, 3}));
  expect_values(g, {1, 1, 1}, 1e-9);
  const Tensor sq = finite_difference_gradient([](const Tensor& t) { return t[0] * t[0]; }, Tensor::scalar(3.0), 1e-5);
  EXPECT_NEAR(sq[0], 6.0, 1e-8);
  EXPECT_THROW(finite_difference_gradient([](const Tensor&) { return 0.0; }, Tensor::scalar(1), 0.0),
               std::invalid_argument);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-3);  // floored denominator
}

TEST(Rng, DeterministicAndSplittable) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng root(42);
  Rng s1 = root.split("train"), s2 = root.split("test"), s3 = root.split("train");
  EXPECT_EQ(root.counter(), 0u);
  EXPECT_EQ(s1.key(), s3.key());
  EXPECT_NE(s1.key(), s2.key());
  EXPECT_NE(root.split(0).key(), root.split(1).key());
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    seen.insert(s1.next_u64());
    seen.insert(s2.next_u64());
  }
  EXPECT_EQ(seen.size(), 2000u);
}

TEST(Rng, Distributions) {
  Rng r(1);
  double m = 0, v = 0;
  const int n = 20000;
  std::vector<double> xs(n);
  for (auto& x : xs) {
    x = r.normal();
    m += x;
  }
  m /= n;
  for (double x : xs) v += (x - m) * (x - m);
  v /= n;
  EXPECT_NEAR(m, 0.0, 0.05);
  EXPECT_NEAR(v, 1.0, 0.05);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform(-2, 3);
    EXPECT_GE(u, -2.0);
    EXPECT_LT(u, 3.0);
    EXPECT_LT(r.below(7), 7u);
  }
  std::vector<int> perm{0, 1, 2, 3, 4, 5, 6, 7};
  Rng s(5);
  s.shuffle(perm.begin(), perm.end());
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}
