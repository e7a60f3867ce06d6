#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "simtrain/simulation.hpp"
#include "simtrain/training/trainer.hpp"

namespace simtrain {

/// Default hyperparameters per architecture for desk-scale benchmarks. Both
/// strategies share them; only `strategy` differs between the two runs of a
/// comparison, so epoch budgets match.
inline RunConfig default_run_config(ArchKind arch) {
  RunConfig c;
  auto& m = c.model;
  auto& t = c.training;
  m.kind = arch;
  m.skip_connection = true;
  m.activation = Activation::tanh;
  t.warmup_steps = 10;
  t.unroll_length = 50;
  t.segment_stride = 10;  // overlapping rollouts; stride == unroll starves the parallel run of batches
  t.batch_size = 16;
  t.learning_rate = 3e-3;
  t.weight_decay = 1e-4;
  t.clip_norm = 1.0;
  t.max_epochs = 60;
  t.patience = 15;
  t.validation_fraction = 0.2;
  switch (arch) {
    case ArchKind::mlp:
      m.window_length = 5;
      m.hidden_sizes = {32, 32};
      break;
    case ArchKind::rnn:
    case ArchKind::gru:
    case ArchKind::lstm:
      m.hidden_sizes = {16};
      break;
    case ArchKind::tcn:
      m.window_length = 8;
      m.hidden_sizes = {16, 16};
      m.tcn_kernel_width = 2;
      m.tcn_dilations = {1, 2};
      break;
  }
  return c;
}

struct CompareRun {
  ArchKind arch = ArchKind::rnn;
  Strategy strategy = Strategy::parallel;
  std::uint64_t seed = 0;
  double nrmse = 0.0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
};

struct CompareRow {
  ArchKind arch = ArchKind::rnn;
  double series_parallel = 0.0;  // median over seeds
  double parallel = 0.0;
  std::size_t parallel_wins = 0;  // seeds where parallel < series-parallel
  std::size_t seeds = 0;
  Strategy winner() const { return parallel < series_parallel ? Strategy::parallel : Strategy::series_parallel; }
};

struct CompareReport {
  std::string dataset;
  std::string mode;
  std::vector<CompareRun> runs;
  std::vector<CompareRow> rows;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct CompareOptions {
  std::vector<ArchKind> archs{ArchKind::rnn};
  std::vector<std::uint64_t> seeds{0};
  std::string dataset_name = "synthetic";
  bool concatenated = false;  // robot-style single sequence instead of per-trajectory average
  /// Applied to every run after the per-arch defaults (key, value) in order.
  std::vector<std::pair<std::string, std::string>> overrides;
  std::function<void(const CompareRun&)> on_run;
};

/// Trains each architecture under both strategies with identical
/// hyperparameters and seeds, then evaluates free-run NRMSE on the test set.
inline CompareReport compare_strategies(const Dataset& train_data, const Dataset& test_data, const CompareOptions& opts) {
  CompareReport rep;
  rep.dataset = opts.dataset_name;
  rep.mode = opts.concatenated ? "concatenated" : "per-trajectory";
  for (ArchKind arch : opts.archs) {
    CompareRow row;
    row.arch = arch;
    std::vector<double> sp, par;
    for (std::uint64_t seed : opts.seeds) {
      double pair[2] = {0.0, 0.0};
      for (Strategy s : {Strategy::series_parallel, Strategy::parallel}) {
        RunConfig cfg = default_run_config(arch);
        for (const auto& [k, v] : opts.overrides) set_config_value(cfg, k, v);
        cfg.model.kind = arch;
        cfg.training.strategy = s;
        cfg.training.seed = seed;
        TrainResult tr = train(cfg.model, train_data, cfg.training);
        const EvalReport ev = opts.concatenated ? evaluate_concatenated(tr.model, test_data)
                                                : evaluate_per_trajectory(tr.model, test_data);
        CompareRun run{arch, s, seed, ev.nrmse, tr.record.epochs.size(), tr.record.best_epoch};
        if (opts.on_run) opts.on_run(run);
        rep.runs.push_back(run);
        pair[s == Strategy::parallel] = ev.nrmse;
      }
      sp.push_back(pair[0]);
      par.push_back(pair[1]);
      if (pair[1] < pair[0]) ++row.parallel_wins;
    }
    row.series_parallel = median(sp);
    row.parallel = median(par);
    row.seeds = opts.seeds.size();
    rep.rows.push_back(row);
  }
  return rep;
}

/// Per-run rows: dataset,arch,strategy,seed,nrmse
inline void write_compare_runs(std::ostream& os, const CompareReport& rep) {
  os << "dataset,arch,strategy,seed,nrmse\n";
  for (const auto& r : rep.runs) {
    os << rep.dataset << ',' << to_string(r.arch) << ',' << to_string(r.strategy) << ',' << r.seed << ','
       << format_double(r.nrmse) << '\n';
  }
}

/// Strategy matrix, two rows per architecture:
/// dataset,arch,strategy,nrmse,parallel_wins,seeds,winner
/// (nrmse is the median over seeds).
inline void write_compare_table(std::ostream& os, const CompareReport& rep) {
  os << "dataset,arch,strategy,nrmse,parallel_wins,seeds,winner\n";
  for (const auto& r : rep.rows) {
    for (Strategy s : {Strategy::parallel, Strategy::series_parallel}) {
      os << rep.dataset << ',' << to_string(r.arch) << ',' << to_string(s) << ','
         << format_double(s == Strategy::parallel ? r.parallel : r.series_parallel) << ',' << r.parallel_wins << ','
         << r.seeds << ',' << to_string(r.winner()) << '\n';
    }
  }
}

}  // namespace simtrain
