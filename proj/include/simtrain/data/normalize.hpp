#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "simtrain/data/trajectory.hpp"

namespace simtrain {

/// Per-channel z-score statistics, fitted on training data only.
struct NormalizationStats {
  std::vector<double> input_mean, input_std;
  std::vector<double> output_mean, output_std;

  bool operator==(const NormalizationStats&) const = default;

  static NormalizationStats identity(std::size_t input_dim, std::size_t output_dim) {
    return {std::vector<double>(input_dim, 0.0), std::vector<double>(input_dim, 1.0),
            std::vector<double>(output_dim, 0.0), std::vector<double>(output_dim, 1.0)};
  }

  Series apply_inputs(const Series& u) const { return transform(u, input_mean, input_std, false); }
  Series apply_outputs(const Series& y) const { return transform(y, output_mean, output_std, false); }
  Series invert_inputs(const Series& u) const { return transform(u, input_mean, input_std, true); }
  Series invert_outputs(const Series& y) const { return transform(y, output_mean, output_std, true); }

  Trajectory apply(const Trajectory& t) const {
    return Trajectory{t.sampling_time, apply_inputs(t.inputs), apply_outputs(t.outputs), t.id};
  }
  Trajectory invert(const Trajectory& t) const {
    return Trajectory{t.sampling_time, invert_inputs(t.inputs), invert_outputs(t.outputs), t.id};
  }
  Dataset apply(const Dataset& d) const {
    Dataset out = d;
    for (auto& t : out.trajectories) t = apply(t);
    return out;
  }

 private:
  static Series transform(const Series& s, const std::vector<double>& mean, const std::vector<double>& sd,
                          bool inverse) {
    if (s.cols != mean.size()) {
      throw std::invalid_argument("normalizer has " + std::to_string(mean.size()) + " channels, data has " +
                                  std::to_string(s.cols));
    }
    Series out = s;
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < s.cols; ++c)
        out(r, c) = inverse ? s(r, c) * sd[c] + mean[c] : (s(r, c) - mean[c]) / sd[c];
    return out;
  }
};

namespace detail {

inline void channel_moments(const Dataset& d, bool inputs, const std::vector<std::string>& names,
                            std::vector<double>& mean, std::vector<double>& sd) {
  const std::size_t m = names.size();
  mean.assign(m, 0.0);
  sd.assign(m, 0.0);
  std::size_t n = 0;
  for (const auto& t : d.trajectories) {
    const Series& s = inputs ? t.inputs : t.outputs;
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < m; ++c) mean[c] += s(r, c);
    n += s.rows;
  }
  if (n == 0) throw std::invalid_argument("cannot fit normalizer on an empty dataset");
  for (auto& v : mean) v /= static_cast<double>(n);
  for (const auto& t : d.trajectories) {
    const Series& s = inputs ? t.inputs : t.outputs;
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < m; ++c) sd[c] += (s(r, c) - mean[c]) * (s(r, c) - mean[c]);
  }
  for (std::size_t c = 0; c < m; ++c) {
    sd[c] = std::sqrt(sd[c] / static_cast<double>(n));
    if (!(sd[c] > 0.0)) {
      throw std::invalid_argument(std::string(inputs ? "input" : "output") + " channel '" + names[c] +
                                  "' has zero variance in the training data");
    }
  }
}

}  // namespace detail

/// Population mean and standard deviation per channel over every sample of
/// every training trajectory.
inline NormalizationStats fit_normalizer(const Dataset& train) {
  if (train.role != DatasetRole::train) throw std::invalid_argument("normalizer must be fitted on training data");
  NormalizationStats s;
  detail::channel_moments(train, true, train.input_names, s.input_mean, s.input_std);
  detail::channel_moments(train, false, train.output_names, s.output_mean, s.output_std);
  return s;
}

}  // namespace simtrain
