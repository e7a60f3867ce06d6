#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "simtrain/data/trajectory.hpp"
#include "simtrain/rng.hpp"

namespace simtrain {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

/// Continuous-time plant dx/dt = f(x, u), y = g(x, u).
struct PlantSpec {
  using Drift = std::function<void(std::span<const double> x, std::span<const double> u, std::span<double> dx)>;
  using OutputMap = std::function<void(std::span<const double> x, std::span<const double> u, std::span<double> y)>;

  std::string name;
  std::size_t state_dim = 1;
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  Drift drift;
  OutputMap output;
  std::vector<Interval> initial_state;  // uniform box for x0
  std::vector<Interval> input_limits;
  double integration_step = 1e-3;
  double sampling_time = 1e-2;
  double divergence_bound = 1e6;
  /// Std of additive Gaussian measurement noise on each output channel.
  std::vector<double> output_noise;
  std::vector<std::string> input_names, output_names, input_units, output_units;

  void validate() const {
    if (!drift || !output) throw std::invalid_argument("plant '" + name + "' lacks dynamics");
    if (!(integration_step > 0.0)) throw std::invalid_argument("integration step must be positive");
    if (integration_step > sampling_time * (1.0 + 1e-12)) {
      throw std::invalid_argument("integration step " + std::to_string(integration_step) +
                                  " exceeds sampling time " + std::to_string(sampling_time));
    }
    if (initial_state.size() != state_dim || input_limits.size() != input_dim || output_noise.size() != output_dim) {
      throw std::invalid_argument("plant '" + name + "' has inconsistent dimensions");
    }
  }
};

class PlantDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Classic fourth-order Runge-Kutta with the input held constant over each
/// sampling interval (zero-order hold). The interval is split into
/// ceil(Ts / integration_step) equal substeps. Output i is g(x(i Ts), u_i).
inline Trajectory integrate_plant(const PlantSpec& plant, const Series& inputs, std::vector<double> x0,
                                  double sampling_time, std::size_t n) {
  plant.validate();
  if (inputs.rows < n || inputs.cols != plant.input_dim) {
    throw std::invalid_argument("integrate_plant: input signal must be at least " + std::to_string(n) + " x " +
                                std::to_string(plant.input_dim));
  }
  if (x0.size() != plant.state_dim) throw std::invalid_argument("integrate_plant: x0 has wrong dimension");
  if (plant.integration_step > sampling_time * (1.0 + 1e-12)) {
    throw std::invalid_argument("integrate_plant: integration step exceeds sampling time");
  }
  const auto substeps = static_cast<std::size_t>(std::ceil(sampling_time / plant.integration_step - 1e-9));
  const double h = sampling_time / static_cast<double>(substeps);
  const std::size_t d = plant.state_dim;

  Trajectory out;
  out.sampling_time = sampling_time;
  out.inputs = inputs.slice(0, n);
  out.outputs = Series(n, plant.output_dim);

  std::vector<double> x = std::move(x0), k1(d), k2(d), k3(d), k4(d), tmp(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = inputs.row(i);
    plant.output(x, u, out.outputs.row(i));
    if (i + 1 == n) break;
    for (std::size_t s = 0; s < substeps; ++s) {
      plant.drift(x, u, k1);
      for (std::size_t j = 0; j < d; ++j) tmp[j] = x[j] + 0.5 * h * k1[j];
      plant.drift(tmp, u, k2);
      for (std::size_t j = 0; j < d; ++j) tmp[j] = x[j] + 0.5 * h * k2[j];
      plant.drift(tmp, u, k3);
      for (std::size_t j = 0; j < d; ++j) tmp[j] = x[j] + h * k3[j];
      plant.drift(tmp, u, k4);
      for (std::size_t j = 0; j < d; ++j) x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::isfinite(x[j]) || std::abs(x[j]) > plant.divergence_bound) {
        throw PlantDivergence("plant '" + plant.name + "' diverged at sample " + std::to_string(i + 1) +
                              " (state " + std::to_string(j) + ")");
      }
    }
  }
  return out;
}

inline std::vector<double> sample_initial_state(const PlantSpec& plant, Rng& rng) {
  std::vector<double> x0;
  for (const auto& iv : plant.initial_state) x0.push_back(rng.uniform(iv.lo, iv.hi));
  return x0;
}

namespace plants {

/// dx/dt = (-x + u) / tau, y = x. Exactly representable by a linear
/// one-step model.
inline PlantSpec linear_first_order(double tau = 1.0) {
  PlantSpec p;
  p.name = "linear1";
  p.drift = [tau](std::span<const double> x, std::span<const double> u, std::span<double> dx) {
    dx[0] = (-x[0] + u[0]) / tau;
  };
  p.output = [](std::span<const double> x, std::span<const double>, std::span<double> y) { y[0] = x[0]; };
  p.initial_state = {{-1.0, 1.0}};
  p.input_limits = {{-1.0, 1.0}};
  p.integration_step = 0.01;
  p.sampling_time = 0.2;
  p.output_noise = {0.0};
  p.input_names = {"u"};
  p.output_names = {"y"};
  p.input_units = {"1"};
  p.output_units = {"1"};
  return p;
}

/// Undamped oscillator x1' = x2, x2' = -x1 + u, observed through both states.
inline PlantSpec harmonic_oscillator() {
  PlantSpec p;
  p.name = "harmonic";
  p.state_dim = 2;
  p.output_dim = 2;
  p.drift = [](std::span<const double> x, std::span<const double> u, std::span<double> dx) {
    dx[0] = x[1];
    dx[1] = -x[0] + u[0];
  };
  p.output = [](std::span<const double> x, std::span<const double>, std::span<double> y) {
    y[0] = x[0];
    y[1] = x[1];
  };
  p.initial_state = {{-1.0, 1.0}, {-1.0, 1.0}};
  p.input_limits = {{-0.5, 0.5}};
  p.integration_step = 1e-3;
  p.sampling_time = 0.1;
  p.output_noise = {0.0, 0.0};
  p.input_names = {"u"};
  p.output_names = {"x1", "x2"};
  p.input_units = {"1"};
  p.output_units = {"1", "1"};
  return p;
}

/// Non-physical stand-in for a two-stage pneumatic valve. Two input
/// voltages drive a fill and a vent orifice on a normalized control pressure
/// p; the plunger position s relaxes (spring return) toward a saturating
/// function of p, so it only moves once the pressure crosses its opening
/// threshold. Time in seconds, sampled at 1 ms.
///   dp/dt = (k_f u1 sqrt(1 - p) - k_v u2 sqrt(p) - k_l p) / tau_p
///   ds/dt = (sig((p - p_open) / w) - s) / tau_s
inline PlantSpec valve_like() {
  constexpr double tau_p = 0.02, tau_s = 0.008, k_f = 1.5, k_v = 1.5, k_l = 0.1, p_open = 0.5, width = 0.08;
  PlantSpec p;
  p.name = "valve";
  p.state_dim = 2;
  p.input_dim = 2;
  p.output_dim = 2;
  p.drift = [](std::span<const double> x, std::span<const double> u, std::span<double> dx) {
    const double pr = x[0];
    const double fill = k_f * u[0] * std::sqrt(std::max(1.0 - pr, 0.0));
    const double vent = k_v * u[1] * std::sqrt(std::max(pr, 0.0));
    dx[0] = (fill - vent - k_l * pr) / tau_p;
    const double target = 1.0 / (1.0 + std::exp(-(pr - p_open) / width));
    dx[1] = (target - x[1]) / tau_s;
  };
  p.output = [](std::span<const double> x, std::span<const double>, std::span<double> y) {
    y[0] = x[0];
    y[1] = x[1];
  };
  p.initial_state = {{0.0, 1.0}, {0.0, 1.0}};
  p.input_limits = {{0.0, 1.0}, {0.0, 1.0}};
  p.integration_step = 2.5e-4;
  p.sampling_time = 1e-3;
  p.divergence_bound = 10.0;
  p.output_noise = {0.01, 0.01};
  p.input_names = {"u1", "u2"};
  p.output_names = {"p", "s"};
  p.input_units = {"V", "V"};
  p.output_units = {"1", "1"};
  return p;
}

}  // namespace plants

inline const std::map<std::string, std::function<PlantSpec()>>& plant_registry() {
  static const std::map<std::string, std::function<PlantSpec()>> registry = {
      {"linear1", [] { return plants::linear_first_order(); }},
      {"harmonic", [] { return plants::harmonic_oscillator(); }},
      {"valve", [] { return plants::valve_like(); }},
  };
  return registry;
}

inline PlantSpec make_plant(const std::string& name) {
  const auto& reg = plant_registry();
  auto it = reg.find(name);
  if (it == reg.end()) {
    std::string known;
    for (const auto& [k, _] : reg) known += (known.empty() ? "" : ", ") + k;
    throw std::invalid_argument("unknown plant '" + name + "' (registered: " + known + ")");
  }
  return it->second();
}

}  // namespace simtrain
