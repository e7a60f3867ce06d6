#pragma once

#include <cmath>
#include <stdexcept>

#include "simtrain/data/trajectory.hpp"

namespace simtrain {

namespace detail {

inline Series block_average(const Series& s, std::size_t k) {
  const std::size_t n = s.rows / k;
  Series out(n, s.cols);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < s.cols; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += s(j * k + i, c);
      out(j, c) = acc / static_cast<double>(k);
    }
  return out;
}

}  // namespace detail

/// Decimates to a coarser sampling time that is an integer multiple k of the
/// current one. A width-k moving average anti-aliases first, and every k-th
/// averaged sample is kept, so output j is the mean of samples [jk, jk + k).
/// A trailing partial block is dropped.
inline Trajectory resample(const Trajectory& traj, double new_sampling_time) {
  const double ratio = new_sampling_time / traj.sampling_time;
  const double k_real = std::round(ratio);
  if (!(k_real >= 1.0) || std::abs(ratio - k_real) > 1e-9 * ratio) {
    throw std::invalid_argument("resample: new sampling time must be an integer multiple of the current one (ratio " +
                                std::to_string(ratio) + ")");
  }
  const auto k = static_cast<std::size_t>(k_real);
  if (k == 1) return traj;
  Trajectory out;
  out.sampling_time = traj.sampling_time * static_cast<double>(k);
  out.inputs = detail::block_average(traj.inputs, k);
  out.outputs = detail::block_average(traj.outputs, k);
  out.id = traj.id;
  return out;
}

}  // namespace simtrain
