#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "simtrain/training/trainer.hpp"

namespace simtrain {

/// One hyperparameter and the values to try, as config-file strings.
struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

struct GridJobResult {
  std::size_t job = 0;
  std::vector<std::pair<std::string, std::string>> assignment;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double val_nrmse = std::numeric_limits<double>::infinity();
  double val_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  RunConfig config;
  std::optional<TrainResult> result;
};

struct GridSearchOptions {
  std::size_t budget = 0;  // epoch cap per job; 0 keeps each job's max_epochs
  std::size_t jobs = 1;    // worker threads
  bool keep_models = false;
};

/// Cartesian product of all axis values, first axis varying slowest.
inline std::vector<std::vector<std::pair<std::string, std::string>>> grid_assignments(const std::vector<GridAxis>& axes) {
  std::vector<std::vector<std::pair<std::string, std::string>>> out{{}};
  for (const auto& axis : axes) {
    if (axis.values.empty()) throw std::invalid_argument("grid axis '" + axis.key + "' has no values");
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& partial : out)
      for (const auto& v : axis.values) {
        auto a = partial;
        a.emplace_back(axis.key, v);
        next.push_back(std::move(a));
      }
    out = std::move(next);
  }
  return out;
}

/// Each seed is a pure function of (base seed, job index), so results do not
/// depend on scheduling.
inline std::uint64_t derive_job_seed(std::uint64_t base, std::size_t job) {
  return Rng(base).split("grid").split(job).next_u64();
}

/// Trains every grid point independently and ranks successful jobs by
/// validation free-run NRMSE (best first); failed jobs follow in job order.
/// A job failure (bad config, divergence) is recorded, never propagated.
inline std::vector<GridJobResult> grid_search(const RunConfig& base, const std::vector<GridAxis>& axes,
                                              const Dataset& data, const GridSearchOptions& opts = {}) {
  if (axes.empty()) throw std::invalid_argument("grid search needs at least one axis");
  const auto assignments = grid_assignments(axes);
  std::vector<GridJobResult> results(assignments.size());

  auto run_job = [&](std::size_t j) {
    GridJobResult& r = results[j];
    r.job = j;
    r.assignment = assignments[j];
    r.seed = derive_job_seed(base.training.seed, j);
    try {
      RunConfig cfg = base;
      for (const auto& [k, v] : r.assignment) set_config_value(cfg, k, v);
      cfg.training.seed = r.seed;
      if (opts.budget > 0) cfg.training.max_epochs = std::min(cfg.training.max_epochs, opts.budget);
      r.config = cfg;
      TrainResult tr = train(cfg.model, data, cfg.training);
      const Model& m = tr.model;
      const Dataset val = m.normalization.apply(data.subset(tr.validation_indices));
      r.val_nrmse = free_run_nrmse_normalized(m.spec, m.params, val, m.prefix_length());
      r.val_loss = tr.record.best_val_loss;
      r.best_epoch = tr.record.best_epoch;
      r.epochs_run = tr.record.epochs.size();
      r.ok = std::isfinite(r.val_nrmse);
      if (!r.ok) r.error = "non-finite validation NRMSE";
      if (opts.keep_models) r.result = std::move(tr);
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.jobs, assignments.size()));
  if (workers == 1) {
    for (std::size_t j = 0; j < assignments.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < assignments.size(); j = next++) run_job(j);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::stable_sort(results.begin(), results.end(), [](const GridJobResult& a, const GridJobResult& b) {
    if (a.ok != b.ok) return a.ok;
    if (a.ok && a.val_nrmse != b.val_nrmse) return a.val_nrmse < b.val_nrmse;
    return a.job < b.job;
  });
  return results;
}

/// rank,job,status,val_nrmse,val_loss,best_epoch,epochs,seed,<axis keys...>,error
inline void write_grid_table(std::ostream& os, const std::vector<GridJobResult>& ranked, const std::vector<GridAxis>& axes) {
  os << "rank,job,status,val_nrmse,val_loss,best_epoch,epochs,seed";
  for (const auto& a : axes) os << ',' << a.key;
  os << ",error\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    os << i + 1 << ',' << r.job << ',' << (r.ok ? "ok" : "failed") << ','
       << (r.ok ? format_double(r.val_nrmse) : "") << ',' << (r.ok ? format_double(r.val_loss) : "") << ','
       << r.best_epoch << ',' << r.epochs_run << ',' << r.seed;
    for (const auto& [_, v] : r.assignment) os << ",\"" << v << '"';
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << ",\"" << err << "\"\n";
  }
}

}  // namespace simtrain
