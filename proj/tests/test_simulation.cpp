#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_support.hpp"

using namespace simtrain;
using simtrain::testing::random_dataset;
using simtrain::testing::random_trajectory;
using simtrain::testing::toy_spec;

namespace {

Series column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Series(n, 1, std::move(v));
}

Model zero_skip_model(ArchKind k, std::size_t nu = 1, std::size_t ny = 1) {
  Model m;
  m.spec = toy_spec(k, nu, ny);
  for (const auto& [n, sh] : parameter_shapes(m.spec)) m.params.emplace(n, Tensor::zeros(sh));
  m.normalization = NormalizationStats::identity(nu, ny);
  m.warmup_steps = m.spec.window_length;
  return m;
}

// y_{k+1} = a y_k + b u_k as a one-layer linear MLP with window 1.
Model linear_model(double a, double b) {
  Model m;
  m.spec.kind = ArchKind::mlp;
  m.spec.window_length = 1;
  m.spec.hidden_sizes = {1};
  m.spec.activation = Activation::identity;
  m.spec.skip_connection = false;
  m.params = {{"mlp.0.weight", Tensor({2, 1}, {a, b})},
              {"mlp.0.bias", Tensor::vector({0.0})},
              {"readout.weight", Tensor({1, 1}, {1.0})},
              {"readout.bias", Tensor::vector({0.0})}};
  m.normalization = NormalizationStats::identity(1, 1);
  m.warmup_steps = 1;
  return m;
}

Model random_model(ArchKind k, std::uint64_t seed, std::size_t nu = 1, std::size_t ny = 1) {
  Model m;
  m.spec = toy_spec(k, nu, ny);
  m.params = init_params(m.spec, Rng(seed));
  m.normalization = NormalizationStats::identity(nu, ny);
  m.warmup_steps = m.spec.window_length;
  return m;
}

}  // namespace

TEST(Nrmse, HandExamples) {
  const Series y = column({0.0, 2.0});
  EXPECT_EQ(nrmse(y, y), 0.0);
  EXPECT_DOUBLE_EQ(nrmse(y, column({1.0, 1.0})), 1.0);
  // (0-1)^2 + (2-0)^2 over n=2 with sigma 1
  EXPECT_DOUBLE_EQ(nrmse(y, column({1.0, 0.0})), std::sqrt(2.5));
}

TEST(Nrmse, MeanPredictorScoresOne) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(50);
    Series y(n, 1);
    double mean = 0.0;
    for (auto& v : y.values) mean += (v = rng.normal(3.0, 2.0));
    mean /= static_cast<double>(n);
    EXPECT_NEAR(nrmse(y, Series(n, 1, mean)), 1.0, 1e-12);
  }
}

TEST(Nrmse, SumsOverChannels) {
  Series y(3, 2, std::vector<double>{0, 1, 1, 2, 2, 3});
  Series yh(3, 2, std::vector<double>{1, 2, 1, 2, 1, 2});  // channel means
  EXPECT_NEAR(nrmse(y, yh), std::sqrt(2.0), 1e-12);
  const auto per = nrmse_per_channel(y, yh);
  ASSERT_EQ(per.size(), 2u);
  EXPECT_NEAR(per[0], 1.0, 1e-12);
  EXPECT_NEAR(per[1], 1.0, 1e-12);
}

TEST(Nrmse, AffineInvariance) {
  Rng rng(2);
  Series y(40, 3), yh(40, 3);
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    y.values[i] = rng.normal();
    yh.values[i] = y.values[i] + rng.normal(0.0, 0.3);
  }
  const double base = nrmse(y, yh);
  Series y2 = y, yh2 = yh;
  const double a[] = {-250.0, 1e-3, 7.5}, b[] = {4.0, -1e3, 0.25};
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      y2(r, c) = a[c] * y(r, c) + b[c];
      yh2(r, c) = a[c] * yh(r, c) + b[c];
    }
  EXPECT_NEAR(nrmse(y2, yh2), base, 1e-10);
}

TEST(Nrmse, Errors) {
  Series flat(5, 2, 1.0);
  flat(2, 0) = 3.0;  // channel 1 stays constant
  try {
    nrmse(flat, flat);
    FAIL();
  } catch (const DegenerateChannelError& e) {
    EXPECT_NE(std::string(e.what()).find("channel 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(nrmse(column({1, 2, 3}), column({1, 2})), DimensionError);
  EXPECT_THROW(nrmse(column({1}), column({1})), std::invalid_argument);
}

TEST(FreeRun, ZeroWeightSkipModelHoldsLastPrefixValue) {
  for (ArchKind k : kAllArchs) {
    const Model m = zero_skip_model(k);
    const Trajectory t = random_trajectory(30, 1, 1, Rng(3));
    const std::size_t p = m.prefix_length();
    const Series out = free_run(m, t.outputs.slice(0, p), t.inputs);
    ASSERT_EQ(out.rows, 30 - p);
    for (double v : out.values) EXPECT_EQ(v, t.outputs(p - 1, 0)) << to_string(k);
  }
}

TEST(FreeRun, ExactLinearModelTracksPlant) {
  const PlantSpec plant = plants::linear_first_order();
  const double a = std::exp(-plant.sampling_time);  // tau = 1
  const std::size_t n = 101;
  SignalConfig sc;
  sc.length = n;
  const Series u = generate_test_signal(plant.input_limits, sc, Rng(4));
  const Trajectory t = integrate_plant(plant, u, {0.3}, plant.sampling_time, n);
  const Model m = linear_model(a, 1.0 - a);
  const Series out = free_run(m, t.outputs.slice(0, 1), t.inputs);
  ASSERT_EQ(out.rows, 100u);
  // closed-form recursion of the zero-order-hold discretization
  double x = 0.3;
  for (std::size_t k = 0; k < 100; ++k) {
    x = a * x + (1.0 - a) * u(k, 0);
    EXPECT_NEAR(out(k, 0), x, 1e-12);
    EXPECT_NEAR(out(k, 0), t.outputs(k + 1, 0), 1e-8);
  }
}

TEST(FreeRun, OutputsAreCausalInInputs) {
  for (ArchKind k : kAllArchs) {
    const Model m = random_model(k, 5, 2, 1);
    const Trajectory t = random_trajectory(25, 2, 1, Rng(6));
    const std::size_t p = m.prefix_length();
    const Series prefix = t.outputs.slice(0, p);
    const Series base = free_run(m, prefix, t.inputs);
    for (std::size_t j = 0; j + 1 < base.rows; ++j) {
      Series u = t.inputs;
      for (std::size_t r = p + j; r < u.rows; ++r) u(r, 0) = u(r, 1) = 50.0;
      const Series changed = free_run(m, prefix, u);
      for (std::size_t i = 0; i <= j; ++i) EXPECT_EQ(changed(i, 0), base(i, 0)) << to_string(k) << " j=" << j;
      EXPECT_NE(changed(j + 1, 0), base(j + 1, 0)) << to_string(k);
    }
  }
}

TEST(FreeRun, ConsumesNoMeasuredOutputsAfterPrefix) {
  // Poison every measurement after the prefix; predictions must not change
  // and must stay finite.
  for (ArchKind k : kAllArchs) {
    const Model m = random_model(k, 7);
    Trajectory t = random_trajectory(40, 1, 1, Rng(8));
    const auto clean = simulate(m, t);
    for (std::size_t r = m.prefix_length(); r < t.size(); ++r) t.outputs(r, 0) = std::nan("");
    const Series poisoned = free_run(m, t.outputs.slice(0, m.prefix_length()), t.inputs);
    EXPECT_EQ(poisoned, clean.predicted) << to_string(k);
  }
}

TEST(FreeRun, PrefixErrors) {
  const Model m = random_model(ArchKind::mlp, 9);  // L = 3
  const Trajectory t = random_trajectory(20, 1, 1, Rng(10));
  EXPECT_THROW(free_run(m, t.outputs.slice(0, 2), t.inputs), std::invalid_argument);
  EXPECT_THROW(free_run(m, t.outputs.slice(0, 20), t.inputs), std::invalid_argument);
  EXPECT_THROW(simulate(m, t.slice(0, 4)), std::invalid_argument);
  const Model rnn = random_model(ArchKind::rnn, 9);
  EXPECT_NO_THROW(free_run(rnn, t.outputs.slice(0, 1), t.inputs));
  EXPECT_THROW(free_run(rnn, t.outputs.slice(0, 0), t.inputs), std::invalid_argument);
  const Trajectory wide = random_trajectory(20, 2, 1, Rng(11));
  EXPECT_THROW(free_run(rnn, wide.outputs.slice(0, 3), wide.inputs), std::invalid_argument);
}

TEST(FreeRun, DenormalizesPredictions) {
  // With a normalizer, the zero-weight skip model still holds the last value
  // in physical units.
  Model m = zero_skip_model(ArchKind::rnn);
  m.normalization = {{2.0}, {3.0}, {-5.0}, {0.25}};
  const Trajectory t = random_trajectory(12, 1, 1, Rng(12));
  const Series out = free_run(m, t.outputs.slice(0, 3), t.inputs);
  for (double v : out.values) EXPECT_NEAR(v, t.outputs(2, 0), 1e-12);
}

TEST(Evaluate, PerTrajectoryAveragesNrmse) {
  // Zero-weight skip model: prediction = y at the end of the prefix.
  // Trajectory A: horizon [0,2] after a prefix ending in 1 -> NRMSE 1.
  // Trajectory B: horizon [0,2] after a prefix ending in 0 -> sqrt(0 + 4)/1/sqrt(2).
  Model m = zero_skip_model(ArchKind::rnn);
  m.warmup_steps = 1;
  Dataset d = random_dataset(2, 3, 1, 1, 13, DatasetRole::test);
  d.trajectories[0].outputs = column({1.0, 0.0, 2.0});
  d.trajectories[1].outputs = column({0.0, 0.0, 2.0});
  const auto rep = evaluate_per_trajectory(m, d);
  ASSERT_EQ(rep.runs.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.runs[0].nrmse, 1.0);
  EXPECT_DOUBLE_EQ(rep.runs[1].nrmse, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(rep.nrmse, 0.5 * (1.0 + std::sqrt(2.0)));
  EXPECT_EQ(rep.runs[0].first_step, 1u);
  EXPECT_EQ(rep.runs[0].horizon(), 2u);
}

TEST(Evaluate, MeanOfTwoRuns) {
  // Averaging is plain arithmetic over the per-trajectory values.
  Model m = random_model(ArchKind::gru, 14);
  const Dataset d = random_dataset(2, 30, 1, 1, 15, DatasetRole::test);
  const auto rep = evaluate_per_trajectory(m, d);
  EXPECT_DOUBLE_EQ(rep.nrmse, 0.5 * (rep.runs[0].nrmse + rep.runs[1].nrmse));
  Dataset one = d;
  one.trajectories.resize(1);
  EXPECT_DOUBLE_EQ(evaluate_per_trajectory(m, one).nrmse, rep.runs[0].nrmse);
}

TEST(Evaluate, EvaluatorsAgreeOnSingleTrajectory) {
  for (ArchKind k : kAllArchs) {
    const Model m = random_model(k, 16, 2, 2);
    const Dataset d = random_dataset(1, 35, 2, 2, 17, DatasetRole::test);
    EXPECT_EQ(evaluate_concatenated(m, d).nrmse, evaluate_per_trajectory(m, d).nrmse) << to_string(k);
  }
}

TEST(Evaluate, ConcatenationIsOneContinuousRun) {
  const Model m = random_model(ArchKind::lstm, 18);
  const Dataset d = random_dataset(3, 20, 1, 1, 19, DatasetRole::test);
  const auto a = evaluate_concatenated(m, d), b = evaluate_concatenated(m, d);
  EXPECT_EQ(a.nrmse, b.nrmse);
  ASSERT_EQ(a.runs.size(), 1u);
  EXPECT_EQ(a.runs[0].horizon(), 60 - m.prefix_length());
  const Trajectory joined = concatenate(d);
  EXPECT_EQ(a.runs[0].predicted, free_run(m, joined.outputs.slice(0, m.prefix_length()), joined.inputs));

  // Reordering the dataset changes the joined sequence.
  Dataset swapped = d;
  std::swap(swapped.trajectories[0], swapped.trajectories[2]);
  EXPECT_NE(evaluate_concatenated(m, swapped).nrmse, a.nrmse);

  // Reset mode re-warms on each member and drops its prefix.
  const auto reset = evaluate_concatenated(m, d, true);
  EXPECT_EQ(reset.runs[0].horizon(), 3 * (20 - m.prefix_length()));
}

TEST(Evaluate, DegenerateTrajectoryIsNamed) {
  Model m = random_model(ArchKind::rnn, 20);
  Dataset d = random_dataset(2, 20, 1, 1, 21, DatasetRole::test);
  for (auto& v : d.trajectories[1].outputs.values) v = 1.0;
  try {
    evaluate_per_trajectory(m, d);
    FAIL();
  } catch (const DegenerateChannelError& e) {
    EXPECT_NE(std::string(e.what()).find("'r1'"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, SimulationCsvLayout) {
  const Model m = random_model(ArchKind::rnn, 22);
  Trajectory t = random_trajectory(8, 1, 1, Rng(23));
  t.sampling_time = 0.5;
  const auto r = simulate(m, t);
  std::ostringstream os;
  write_simulation_csv(os, r, {"u"}, {"y"});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,u,y_measured,y_predicted");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 4), "1.5,");  // first evaluated step is the prefix length 3
  std::size_t rows = 1;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, r.horizon());
}
