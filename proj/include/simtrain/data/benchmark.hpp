#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>

#include "simtrain/data/plant.hpp"
#include "simtrain/data/signal.hpp"
#include "simtrain/data/trajectory.hpp"
#include "simtrain/rng.hpp"

namespace simtrain {

/// Counts and lengths of a synthetic benchmark. The defaults are a desk-scale
/// version of a many-short-train / few-long-test layout.
struct BenchmarkSize {
  std::size_t n_train = 60;
  std::size_t train_len = 200;
  std::size_t n_test = 10;
  std::size_t test_len = 1000;
};

struct Benchmark {
  Dataset train;
  Dataset test;
};

namespace detail {

inline Dataset empty_dataset(const PlantSpec& plant, DatasetRole role) {
  Dataset d;
  d.role = role;
  d.input_names = plant.input_names;
  d.output_names = plant.output_names;
  d.input_units = plant.input_units;
  d.output_units = plant.output_units;
  return d;
}

inline Trajectory synthetic_trajectory(const PlantSpec& plant, std::size_t len, Rng rng, std::string id) {
  SignalConfig sig;
  sig.length = len;
  sig.sections = std::max<std::size_t>(2, len / 50);
  const Series u = generate_test_signal(plant.input_limits, sig, rng.split("signal"));
  Rng x0_rng = rng.split("x0");
  Trajectory t = integrate_plant(plant, u, sample_initial_state(plant, x0_rng), plant.sampling_time, len);
  Rng noise = rng.split("noise");
  for (std::size_t i = 0; i < t.outputs.rows; ++i)
    for (std::size_t c = 0; c < t.outputs.cols; ++c)
      if (plant.output_noise[c] > 0.0) t.outputs(i, c) += noise.normal(0.0, plant.output_noise[c]);
  t.id = std::move(id);
  return t;
}

}  // namespace detail

/// Independent input signals, initial states and noise per trajectory; the
/// train and test sets draw from disjoint streams ("train" / "test") of the
/// seed, so neither shares a subsequence with the other.
inline Benchmark make_synthetic_benchmark(const PlantSpec& plant, const BenchmarkSize& size, std::uint64_t seed) {
  if (size.test_len <= size.train_len) {
    throw std::invalid_argument("test trajectories must be longer than training trajectories");
  }
  plant.validate();
  const Rng root(seed);
  Benchmark b{detail::empty_dataset(plant, DatasetRole::train), detail::empty_dataset(plant, DatasetRole::test)};
  const Rng train_rng = root.split("train"), test_rng = root.split("test");
  char id[32];
  for (std::size_t i = 0; i < size.n_train; ++i) {
    std::snprintf(id, sizeof(id), "train_%04zu", i);
    b.train.trajectories.push_back(detail::synthetic_trajectory(plant, size.train_len, train_rng.split(i), id));
  }
  for (std::size_t i = 0; i < size.n_test; ++i) {
    std::snprintf(id, sizeof(id), "test_%04zu", i);
    b.test.trajectories.push_back(detail::synthetic_trajectory(plant, size.test_len, test_rng.split(i), id));
  }
  return b;
}

}  // namespace simtrain
