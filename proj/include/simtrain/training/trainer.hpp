#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "simtrain/data/normalize.hpp"
#include "simtrain/model.hpp"
#include "simtrain/simulation.hpp"
#include "simtrain/training/losses.hpp"
#include "simtrain/training/optimizer.hpp"

namespace simtrain {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_nrmse = 0.0;  // free-run NRMSE on the validation split, for reference
  std::size_t clipped_batches = 0;
  double seconds = 0.0;
};

struct TrainRecord {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::optional<std::size_t> early_stop_epoch;
  double best_val_loss = std::numeric_limits<double>::infinity();

  /// Delimited table: epoch,train_loss,val_loss,val_nrmse,clipped,seconds.
  /// `clipped` counts the batches whose gradient was rescaled.
  void write_csv(std::ostream& os, bool with_timing = true) const {
    os << "epoch,train_loss,val_loss,val_nrmse,clipped" << (with_timing ? ",seconds" : "") << '\n';
    for (const auto& e : epochs) {
      os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
         << format_double(e.val_nrmse) << ',' << e.clipped_batches;
      if (with_timing) os << ',' << format_double(e.seconds);
      os << '\n';
    }
  }
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, TrainRecord record)
      : std::runtime_error(what), record_(std::move(record)) {}
  const TrainRecord& record() const noexcept { return record_; }

 private:
  TrainRecord record_;
};

struct TrainResult {
  Model model;  // best-validation parameters
  TrainRecord record;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> validation_indices;
};

/// Trajectory-level split: the validation part gets round(fraction * N)
/// trajectories (at least 1, at most N - 1), picked by a seeded shuffle.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_validation(std::size_t n,
                                                                                            double fraction, Rng rng) {
  if (n < 2) throw std::invalid_argument("need at least 2 trajectories to split off a validation set");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx.begin(), idx.end());
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

/// Mean free-run NRMSE of normalized trajectories (measured against
/// normalized outputs; NRMSE is invariant to the per-channel affine map).
/// Trajectories of equal length are simulated as one batch.
inline double free_run_nrmse_normalized(const ModelSpec& spec, const ParamMap& params, const Dataset& data,
                                        std::size_t prefix) {
  std::map<std::size_t, std::vector<std::size_t>> by_len;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) by_len[data.trajectories[i].size()].push_back(i);
  double acc = 0.0;
  for (const auto& [len, members] : by_len) {
    std::vector<Series> prefixes;
    std::vector<const Series*> pp, ip;
    prefixes.reserve(members.size());
    for (auto i : members) prefixes.push_back(data.trajectories[i].outputs.slice(0, prefix));
    for (std::size_t j = 0; j < members.size(); ++j) {
      pp.push_back(&prefixes[j]);
      ip.push_back(&data.trajectories[members[j]].inputs);
    }
    const auto preds = free_run_normalized(spec, params, pp, ip);
    for (std::size_t j = 0; j < members.size(); ++j) {
      const auto& t = data.trajectories[members[j]];
      const double e = nrmse(t.outputs.slice(prefix, len), preds[j]);
      acc += std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
    }
  }
  return acc / static_cast<double>(data.trajectories.size());
}

namespace detail {

inline double mean_loss(const ModelSpec& spec, const ParamMap& params, const std::vector<SegmentBatch>& batches,
                        Strategy strategy) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& b : batches) {
    acc += strategy_loss(strategy, spec, params, b).item() * static_cast<double>(b.size());
    count += b.size();
  }
  return acc / static_cast<double>(count);
}

}  // namespace detail

/// Loss value and gradient of one batch; gradients keyed by parameter name.
inline std::pair<double, GradMap> loss_and_gradients(const ModelSpec& spec, const ParamMap& params,
                                                     const SegmentBatch& batch, Strategy strategy,
                                                     const ForwardMode& mode = {}) {
  Tape tape;
  ParamMap tracked;
  for (const auto& [name, t] : params) tracked.emplace(name, tape.watch(t));
  const Tensor loss = strategy_loss(strategy, spec, tracked, batch, mode);
  const Gradients g = tape.backward(loss);
  GradMap grads;
  for (const auto& [name, t] : tracked) grads.emplace(name, g.of(t));
  return {loss.item(), std::move(grads)};
}

/// Full training job: split, normalize (training split only), then epochs of
/// shuffled batches -> strategy loss -> backward -> clip -> AdamW. The
/// validation loss uses the same strategy loss and drives early stopping;
/// the parameters of the best validation epoch are returned.
inline TrainResult train(ModelSpec spec, const Dataset& dataset, const TrainingConfig& cfg,
                         std::optional<ParamMap> initial = std::nullopt) {
  spec.input_dim = dataset.input_dim();
  spec.output_dim = dataset.output_dim();
  spec.validate();
  cfg.validate(spec);
  dataset.validate();

  const Rng root(cfg.seed);
  auto [tr_idx, val_idx] = split_train_validation(dataset.trajectories.size(), cfg.validation_fraction, root.split("split"));
  Dataset train_raw = dataset.subset(tr_idx);
  train_raw.role = DatasetRole::train;
  const NormalizationStats norm = fit_normalizer(train_raw);
  const Dataset train_set = norm.apply(train_raw);
  const Dataset val_set = norm.apply(dataset.subset(val_idx));
  const auto val_batches = build_batches(val_set, spec, cfg, nullptr);

  ParamMap params = initial ? *initial : init_params(spec, root.split("init"));
  check_params(spec, params);
  OptimizerState opt;
  Rng dropout_rng = root.split("dropout");
  const ForwardMode train_mode{true, &dropout_rng};

  TrainResult result;
  result.train_indices = tr_idx;
  result.validation_indices = val_idx;
  result.model = Model{spec, params, norm, cfg.warmup_steps, std::string(to_string(cfg.strategy))};
  TrainRecord& rec = result.record;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle = root.split("epoch").split(epoch);
    const auto batches = build_batches(train_set, spec, cfg, &shuffle);
    EpochRecord er;
    er.epoch = epoch;
    double acc = 0.0;
    std::size_t seen = 0;
    try {
      for (const auto& b : batches) {
        auto [loss, grads] = loss_and_gradients(spec, params, b, cfg.strategy, train_mode);
        if (!std::isfinite(loss)) throw NonFiniteGradient("training loss became non-finite");
        if (clip_gradients(grads, cfg.clip_norm)) ++er.clipped_batches;
        adamw_step(params, grads, opt, cfg);
        acc += loss * static_cast<double>(b.size());
        seen += b.size();
      }
      er.train_loss = acc / static_cast<double>(seen);
      er.val_loss = detail::mean_loss(spec, params, val_batches, cfg.strategy);
      if (!std::isfinite(er.val_loss)) throw NonFiniteGradient("validation loss became non-finite");
    } catch (const NonFiniteGradient& e) {
      throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + ": " + e.what(), rec);
    }
    try {
      er.val_nrmse = free_run_nrmse_normalized(spec, params, val_set, result.model.prefix_length());
    } catch (const DegenerateChannelError&) {
      er.val_nrmse = std::numeric_limits<double>::quiet_NaN();
    }
    er.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.epochs.push_back(er);

    if (er.val_loss < rec.best_val_loss) {
      rec.best_val_loss = er.val_loss;
      rec.best_epoch = epoch;
      result.model.params = params;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      rec.early_stop_epoch = epoch;
      break;
    }
  }
  return result;
}

}  // namespace simtrain
