#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "simtrain/architectures.hpp"
#include "simtrain/data/trajectory.hpp"
#include "simtrain/rng.hpp"
#include "simtrain/training/config.hpp"

namespace simtrain {

/// Location of one contiguous training segment.
struct SegmentRef {
  std::size_t trajectory = 0;
  std::size_t start = 0;
  bool operator==(const SegmentRef&) const = default;
};

/// Aligned segments, time-major: y[k] and u[k] hold sample k of every
/// segment as [batch x dim]. The first `context` samples are measured
/// history; the remaining `horizon` samples are prediction targets.
struct SegmentBatch {
  std::size_t context = 0;
  std::size_t horizon = 0;
  std::vector<Tensor> y;
  std::vector<Tensor> u;
  std::vector<SegmentRef> refs;

  std::size_t length() const { return context + horizon; }
  std::size_t size() const { return refs.size(); }
};

/// Segment geometry implied by the strategy.
///   series-parallel: context = L (feedforward) or warmup (recurrent), one
///                    target, stride 1 -> every (window, target) pair
///   parallel:        context = warmup, `unroll_length` targets, stride as
///                    configured
struct SegmentPlan {
  std::size_t context = 0;
  std::size_t horizon = 0;
  std::size_t stride = 1;
};

inline SegmentPlan segment_plan(const ModelSpec& spec, const TrainingConfig& cfg) {
  if (cfg.strategy == Strategy::series_parallel) {
    return {spec.recurrent() ? cfg.warmup_steps : spec.window_length, 1, 1};
  }
  return {cfg.warmup_steps, cfg.unroll_length, cfg.stride()};
}

inline std::vector<SegmentRef> enumerate_segments(const Dataset& data, const SegmentPlan& plan) {
  const std::size_t len = plan.context + plan.horizon;
  std::vector<SegmentRef> refs;
  for (std::size_t t = 0; t < data.trajectories.size(); ++t) {
    const std::size_t n = data.trajectories[t].size();
    if (n < len) {
      throw std::invalid_argument("trajectory '" + data.trajectories[t].id + "' has " + std::to_string(n) +
                                  " samples, shorter than the " + std::to_string(len) + "-sample training segment");
    }
    for (std::size_t s = 0; s + len <= n; s += plan.stride) refs.push_back({t, s});
  }
  return refs;
}

inline SegmentBatch gather_batch(const Dataset& data, const SegmentPlan& plan, std::span<const SegmentRef> refs) {
  SegmentBatch b;
  b.context = plan.context;
  b.horizon = plan.horizon;
  b.refs.assign(refs.begin(), refs.end());
  const std::size_t B = refs.size(), ny = data.output_dim(), nu = data.input_dim();
  for (std::size_t k = 0; k < plan.context + plan.horizon; ++k) {
    std::vector<double> yv(B * ny), uv(B * nu);
    for (std::size_t i = 0; i < B; ++i) {
      const auto& tr = data.trajectories[refs[i].trajectory];
      const auto row = refs[i].start + k;
      std::copy_n(tr.outputs.row(row).data(), ny, yv.data() + i * ny);
      std::copy_n(tr.inputs.row(row).data(), nu, uv.data() + i * nu);
    }
    b.y.push_back(Tensor::unchecked({B, ny}, std::move(yv)));
    b.u.push_back(Tensor::unchecked({B, nu}, std::move(uv)));
  }
  return b;
}

/// Cuts a (normalized) dataset into training batches for the configured
/// strategy. With a shuffle rng, segments from all trajectories are mixed;
/// without one, the natural order is kept (validation).
inline std::vector<SegmentBatch> build_batches(const Dataset& data, const ModelSpec& spec, const TrainingConfig& cfg,
                                               Rng* shuffle) {
  const SegmentPlan plan = segment_plan(spec, cfg);
  auto refs = enumerate_segments(data, plan);
  if (shuffle) shuffle->shuffle(refs.begin(), refs.end());
  std::vector<SegmentBatch> out;
  for (std::size_t i = 0; i < refs.size(); i += cfg.batch_size) {
    const std::size_t n = std::min(cfg.batch_size, refs.size() - i);
    out.push_back(gather_batch(data, plan, std::span<const SegmentRef>(refs).subspan(i, n)));
  }
  return out;
}

/// Teacher-forced one-step loss: every model input is measured data, and the
/// loss is the MSE of yhat_{k+1} = N(measured history up to k) against the
/// measured y_{k+1}, over batch, targets and output channels.
inline Tensor series_parallel_loss(const ModelSpec& spec, const ParamMap& params, const SegmentBatch& batch,
                                   const ForwardMode& mode = {}) {
  if (batch.horizon < 1 || batch.context < std::max<std::size_t>(1, spec.min_history())) {
    throw std::invalid_argument("series_parallel_loss: batch context too short for the model");
  }
  std::vector<Tensor> samples;
  samples.reserve(batch.length());
  for (std::size_t k = 0; k < batch.length(); ++k) samples.push_back(concat_cols({batch.y[k], batch.u[k]}));

  Tensor total;
  HiddenState state = zero_state(spec, batch.size());
  for (std::size_t k = 0; k + 1 < batch.length(); ++k) {
    Tensor pred;
    if (spec.recurrent()) {
      auto r = recurrent_step(params, spec, samples[k], state, mode);
      state = std::move(r.state);
      if (k + 1 < batch.context) continue;
      pred = r.y;
    } else {
      if (k + 1 < batch.context) continue;
      std::vector<Tensor> window(samples.begin() + static_cast<std::ptrdiff_t>(k + 1 - spec.window_length),
                                 samples.begin() + static_cast<std::ptrdiff_t>(k + 1));
      pred = feedforward_forward(params, spec, window, mode);
    }
    const Tensor step = mse(pred, batch.y[k + 1]);
    total = total.numel() == 0 ? step : add(total, step);
  }
  return affine(total, 1.0 / static_cast<double>(batch.horizon));
}

/// Rollout loss: warm up on the measured context, then feed the model its own
/// predictions for `horizon` steps. The whole rollout shares one tape, so each
/// weight's gradient sums its contributions from every unrolled step.
inline Tensor parallel_rollout_loss(const ModelSpec& spec, const ParamMap& params, const SegmentBatch& batch,
                                    const ForwardMode& mode = {}) {
  if (batch.horizon < 1 || batch.context < std::max<std::size_t>(1, spec.min_history())) {
    throw std::invalid_argument("parallel_rollout_loss: segment shorter than warmup + unroll");
  }
  OneStepPredictor pred(spec, params, batch.size(), mode);
  for (std::size_t k = 0; k + 1 < batch.context; ++k) pred.observe(batch.y[k], batch.u[k]);
  Tensor y_hat = pred.step(batch.y[batch.context - 1], batch.u[batch.context - 1]);
  Tensor total = mse(y_hat, batch.y[batch.context]);
  for (std::size_t j = 1; j < batch.horizon; ++j) {
    const std::size_t k = batch.context + j - 1;
    y_hat = pred.step(y_hat, batch.u[k]);
    total = add(total, mse(y_hat, batch.y[k + 1]));
  }
  return affine(total, 1.0 / static_cast<double>(batch.horizon));
}

inline Tensor strategy_loss(Strategy s, const ModelSpec& spec, const ParamMap& params, const SegmentBatch& batch,
                            const ForwardMode& mode = {}) {
  return s == Strategy::parallel ? parallel_rollout_loss(spec, params, batch, mode)
                                 : series_parallel_loss(spec, params, batch, mode);
}

}  // namespace simtrain
