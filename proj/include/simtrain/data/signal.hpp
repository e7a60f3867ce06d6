#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "simtrain/data/plant.hpp"
#include "simtrain/data/trajectory.hpp"
#include "simtrain/rng.hpp"

namespace simtrain {

/// Test-signal shape. The horizon is cut into `sections` pieces of roughly
/// equal length; each piece is either a static hold or a dynamic pattern
/// (random steps, a ramp, or a chirp).
struct SignalConfig {
  std::size_t length = 200;
  std::size_t sections = 4;
  double static_probability = 0.4;
  std::size_t min_hold = 5;   // shortest step duration inside a dynamic section
  std::size_t max_hold = 30;
};

/// Per-channel input sequence respecting `limits`.
inline Series generate_test_signal(const std::vector<Interval>& limits, const SignalConfig& cfg, Rng rng) {
  const std::size_t n = cfg.length, channels = limits.size();
  Series out(n, channels);
  if (n == 0) return out;
  const std::size_t sections = std::max<std::size_t>(1, std::min(cfg.sections, n));

  // Section boundaries: equal split with +-25% jitter on interior cuts.
  std::vector<std::size_t> cuts{0};
  for (std::size_t s = 1; s < sections; ++s) {
    const double nominal = static_cast<double>(n) * static_cast<double>(s) / static_cast<double>(sections);
    const double jitter = 0.25 * static_cast<double>(n) / static_cast<double>(sections);
    auto c = static_cast<std::size_t>(std::clamp(nominal + rng.uniform(-jitter, jitter), 1.0, static_cast<double>(n - 1)));
    cuts.push_back(std::max(c, cuts.back() + 1));
  }
  cuts.push_back(n);

  for (std::size_t ch = 0; ch < channels; ++ch) {
    const auto [lo, hi] = limits[ch];
    const double span = hi - lo;
    Rng crng = rng.split(ch);
    double level = crng.uniform(lo, hi);
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      const std::size_t a = cuts[s], b = std::min(cuts[s + 1], n);
      if (a >= b) continue;
      if (crng.bernoulli(cfg.static_probability)) {
        level = crng.uniform(lo, hi);
        for (std::size_t i = a; i < b; ++i) out(i, ch) = level;
        continue;
      }
      switch (crng.below(3)) {
        case 0: {  // random steps
          std::size_t i = a;
          while (i < b) {
            level = crng.uniform(lo, hi);
            const std::size_t hold = cfg.min_hold + crng.below(cfg.max_hold - cfg.min_hold + 1);
            for (std::size_t j = 0; j < hold && i < b; ++j, ++i) out(i, ch) = level;
          }
          break;
        }
        case 1: {  // ramp from the current level to a random target
          const double target = crng.uniform(lo, hi);
          for (std::size_t i = a; i < b; ++i) {
            const double frac = static_cast<double>(i - a + 1) / static_cast<double>(b - a);
            out(i, ch) = level + (target - level) * frac;
          }
          level = target;
          break;
        }
        default: {  // chirp around a random centre
          const double centre = crng.uniform(lo + 0.25 * span, hi - 0.25 * span);
          const double amp = crng.uniform(0.25, 0.5) * span;
          const double f0 = crng.uniform(0.002, 0.02), f1 = crng.uniform(0.02, 0.1);  // cycles per sample
          const double len = static_cast<double>(b - a);
          for (std::size_t i = a; i < b; ++i) {
            const double t = static_cast<double>(i - a);
            const double phase = 2.0 * std::numbers::pi * (f0 * t + 0.5 * (f1 - f0) * t * t / len);
            out(i, ch) = centre + amp * std::sin(phase);
          }
          level = out(b - 1, ch);
          break;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) out(i, ch) = std::clamp(out(i, ch), lo, hi);
  }
  return out;
}

}  // namespace simtrain
