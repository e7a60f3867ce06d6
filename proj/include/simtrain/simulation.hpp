#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "simtrain/architectures.hpp"
#include "simtrain/data/csv.hpp"
#include "simtrain/data/trajectory.hpp"
#include "simtrain/model.hpp"

namespace simtrain {

/// A measured channel with zero spread over the evaluation horizon.
class DegenerateChannelError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Normalized RMSE over n samples and m channels:
///   sqrt( 1/n * sum_k sum_i ((y_i^k - yhat_i^k) / sigma_k)^2 )
/// where sigma_k is the population standard deviation of measured channel k
/// over the same horizon. Channels are summed, not averaged.
inline double nrmse(const Series& measured, const Series& predicted) {
  if (measured.rows != predicted.rows || measured.cols != predicted.cols) {
    throw DimensionError("nrmse: measured " + std::to_string(measured.rows) + "x" + std::to_string(measured.cols) +
                         " vs predicted " + std::to_string(predicted.rows) + "x" + std::to_string(predicted.cols));
  }
  const std::size_t n = measured.rows;
  if (n < 2) throw std::invalid_argument("nrmse needs at least 2 samples");
  double total = 0.0;
  for (std::size_t k = 0; k < measured.cols; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += measured(i, k);
    mean /= static_cast<double>(n);
    double var = 0.0, err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      var += (measured(i, k) - mean) * (measured(i, k) - mean);
      err += (measured(i, k) - predicted(i, k)) * (measured(i, k) - predicted(i, k));
    }
    if (!(var > 0.0)) throw DegenerateChannelError("nrmse: measured channel " + std::to_string(k) + " is constant");
    total += err / var;  // (err / n) / (var / n)
  }
  return std::sqrt(total);
}

/// Per-channel NRMSE (the same formula restricted to one channel).
inline std::vector<double> nrmse_per_channel(const Series& measured, const Series& predicted) {
  std::vector<double> out;
  for (std::size_t k = 0; k < measured.cols; ++k) {
    Series a(measured.rows, 1), b(predicted.rows, 1);
    for (std::size_t i = 0; i < measured.rows; ++i) {
      a(i, 0) = measured(i, k);
      b(i, 0) = predicted(i, k);
    }
    try {
      out.push_back(nrmse(a, b));
    } catch (const DegenerateChannelError&) {
      throw DegenerateChannelError("nrmse: measured channel " + std::to_string(k) + " is constant");
    }
  }
  return out;
}

namespace detail {

inline Tensor gather_row(const std::vector<const Series*>& series, std::size_t row) {
  const std::size_t cols = series.front()->cols;
  std::vector<double> v(series.size() * cols);
  for (std::size_t b = 0; b < series.size(); ++b)
    for (std::size_t c = 0; c < cols; ++c) v[b * cols + c] = (*series[b])(row, c);
  return Tensor::unchecked({series.size(), cols}, std::move(v));
}

}  // namespace detail

/// Free-running simulation of several equally long runs at once, in the
/// model's normalized space. Each run gets its measured output prefix
/// (P rows) and the full input sequence (n rows); returns the predictions
/// for steps P..n-1. After the prefix, every y fed to the model is its own
/// previous prediction; the function has no access to later measurements.
inline std::vector<Series> free_run_normalized(const ModelSpec& spec, const ParamMap& params,
                                               const std::vector<const Series*>& prefixes,
                                               const std::vector<const Series*>& inputs) {
  if (prefixes.empty() || prefixes.size() != inputs.size()) throw std::invalid_argument("free_run: batch mismatch");
  const std::size_t p = prefixes.front()->rows, n = inputs.front()->rows, batch = prefixes.size();
  for (std::size_t b = 0; b < batch; ++b) {
    if (prefixes[b]->rows != p || inputs[b]->rows != n) throw std::invalid_argument("free_run: ragged batch");
    if (prefixes[b]->cols != spec.output_dim || inputs[b]->cols != spec.input_dim) {
      throw DimensionError("free_run: data channels do not match the model");
    }
  }
  if (p < spec.min_history() || p < 1) {
    throw std::invalid_argument("free_run: prefix of " + std::to_string(p) + " samples is shorter than the " +
                                std::to_string(std::max<std::size_t>(1, spec.min_history())) + " the model needs");
  }
  if (n <= p) throw std::invalid_argument("free_run: no inputs beyond the prefix");

  OneStepPredictor pred(spec, params, batch);
  for (std::size_t k = 0; k + 1 < p; ++k) pred.observe(detail::gather_row(prefixes, k), detail::gather_row(inputs, k));
  Tensor y = pred.step(detail::gather_row(prefixes, p - 1), detail::gather_row(inputs, p - 1));

  std::vector<Series> out(batch, Series(n - p, spec.output_dim));
  for (std::size_t k = p;; ++k) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < spec.output_dim; ++c) out[b](k - p, c) = y[b * spec.output_dim + c];
    if (k + 1 == n) break;
    y = pred.step(y.detach(), detail::gather_row(inputs, k));
  }
  return out;
}

/// Free run in physical units: `prefix_outputs` are the measured y_0..y_{P-1}
/// and `inputs` the full u_0..u_{n-1}; returns yhat_P..yhat_{n-1}.
inline Series free_run(const Model& model, const Series& prefix_outputs, const Series& inputs) {
  const Series yp = model.normalization.apply_outputs(prefix_outputs);
  const Series un = model.normalization.apply_inputs(inputs);
  auto out = free_run_normalized(model.spec, model.params, {&yp}, {&un});
  return model.normalization.invert_outputs(out.front());
}

/// Predicted vs. measured series over one evaluation horizon.
struct SimulationResult {
  std::string id;
  double sampling_time = 1.0;
  std::size_t first_step = 0;  // index of the first evaluated sample
  Series inputs;
  Series measured;
  Series predicted;
  std::vector<double> channel_nrmse;
  double nrmse = 0.0;

  std::size_t horizon() const { return measured.rows; }
};

inline SimulationResult simulate(const Model& model, const Trajectory& traj) {
  const std::size_t p = model.prefix_length();
  if (traj.size() < p + 2) {
    throw std::invalid_argument("trajectory '" + traj.id + "' has " + std::to_string(traj.size()) +
                                " samples; needs the " + std::to_string(p) + "-step prefix plus at least 2");
  }
  SimulationResult r;
  r.id = traj.id;
  r.sampling_time = traj.sampling_time;
  r.first_step = p;
  r.predicted = free_run(model, traj.outputs.slice(0, p), traj.inputs);
  r.measured = traj.outputs.slice(p, traj.size());
  r.inputs = traj.inputs.slice(p, traj.size());
  try {
    r.channel_nrmse = nrmse_per_channel(r.measured, r.predicted);
    r.nrmse = nrmse(r.measured, r.predicted);
  } catch (const DegenerateChannelError& e) {
    throw DegenerateChannelError(std::string(e.what()) + " in trajectory '" + traj.id + "'");
  }
  return r;
}

struct EvalReport {
  std::string mode;
  double nrmse = 0.0;  // mean over trajectories, or the single concatenated value
  std::vector<SimulationResult> runs;
};

/// Each test trajectory is simulated on its own; the NRMSEs are averaged.
inline EvalReport evaluate_per_trajectory(const Model& model, const Dataset& test) {
  if (test.trajectories.empty()) throw std::invalid_argument("no test trajectories");
  EvalReport rep;
  rep.mode = "per-trajectory";
  double acc = 0.0;
  for (const auto& t : test.trajectories) {
    rep.runs.push_back(simulate(model, t));
    acc += rep.runs.back().nrmse;
  }
  rep.nrmse = acc / static_cast<double>(test.trajectories.size());
  return rep;
}

/// Joins the trajectories in dataset order into one sequence.
inline Trajectory concatenate(const Dataset& d) {
  if (d.trajectories.empty()) throw std::invalid_argument("nothing to concatenate");
  Trajectory out;
  out.sampling_time = d.trajectories.front().sampling_time;
  out.inputs = Series(0, d.input_dim());
  out.outputs = Series(0, d.output_dim());
  out.id = d.trajectories.size() == 1 ? d.trajectories.front().id : "concatenated";
  for (const auto& t : d.trajectories) {
    out.inputs.append(t.inputs);
    out.outputs.append(t.outputs);
  }
  return out;
}

/// One continuous free run over the joined test set. With `reset_per_trajectory`
/// the model is re-warmed on each member's own prefix instead (diagnostic).
inline EvalReport evaluate_concatenated(const Model& model, const Dataset& test, bool reset_per_trajectory = false) {
  EvalReport rep;
  rep.mode = "concatenated";
  if (!reset_per_trajectory) {
    rep.runs.push_back(simulate(model, concatenate(test)));
    rep.nrmse = rep.runs.back().nrmse;
    return rep;
  }
  SimulationResult joined;
  joined.id = "concatenated-reset";
  for (const auto& t : test.trajectories) {
    auto r = simulate(model, t);
    if (joined.measured.rows == 0) {
      joined = r;
      joined.id = "concatenated-reset";
    } else {
      joined.inputs.append(r.inputs);
      joined.measured.append(r.measured);
      joined.predicted.append(r.predicted);
    }
  }
  joined.channel_nrmse = nrmse_per_channel(joined.measured, joined.predicted);
  joined.nrmse = nrmse(joined.measured, joined.predicted);
  rep.nrmse = joined.nrmse;
  rep.runs.push_back(std::move(joined));
  return rep;
}

/// Plot data: `t,<u...>,<y>_measured...,<y>_predicted...`, t in seconds from
/// the start of the trajectory.
inline void write_simulation_csv(std::ostream& os, const SimulationResult& r, const std::vector<std::string>& input_names,
                                 const std::vector<std::string>& output_names) {
  os << 't';
  for (const auto& n : input_names) os << ',' << n;
  for (const auto& n : output_names) os << ',' << n << "_measured";
  for (const auto& n : output_names) os << ',' << n << "_predicted";
  os << '\n';
  for (std::size_t i = 0; i < r.horizon(); ++i) {
    os << format_double(static_cast<double>(r.first_step + i) * r.sampling_time);
    for (double v : r.inputs.row(i)) os << ',' << format_double(v);
    for (double v : r.measured.row(i)) os << ',' << format_double(v);
    for (double v : r.predicted.row(i)) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void write_simulation_csv(const std::filesystem::path& path, const SimulationResult& r,
                                 const std::vector<std::string>& input_names,
                                 const std::vector<std::string>& output_names) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  write_simulation_csv(os, r, input_names, output_names);
}

}  // namespace simtrain
