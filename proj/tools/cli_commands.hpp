#pragma once

// Subcommands of the `simtrain` binary. Kept in a header so the test suite
// can drive them in-process.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "simtrain/simtrain.hpp"
#include "simtrain/reference.hpp"

namespace simtrain::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "SIMTRAIN_OUTPUT_ROOT";
inline constexpr const char* kRunManifestName = "run_manifest.json";

enum ExitCode : int { kOk = 0, kFailed = 1, kUsage = 2 };

/// Bad flags, configs or inputs detected before any training starts.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// --out if given, else $SIMTRAIN_OUTPUT_ROOT/<command>, else ./simtrain-runs/<command>.
inline fs::path resolve_output_dir(const std::string& flag, const std::string& command) {
  if (!flag.empty()) return flag;
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "simtrain-runs") / command;
}

struct RunManifest {
  std::string command;
  std::vector<std::string> args;  // everything after the program name
  json config = json::object();
  std::uint64_t seed = 0;
  json artifacts = json::object();
  std::string status = "ok";
  std::string started_at = utc_now();
  std::string finished_at;

  json to_json() const {
    return {{"tool", "simtrain"}, {"version", kVersion},   {"command", command},
            {"args", args},       {"config", config},      {"seed", seed},
            {"artifacts", artifacts}, {"status", status},  {"started_at", started_at},
            {"finished_at", finished_at}};
  }

  void write(const fs::path& dir) {
    finished_at = utc_now();
    fs::create_directories(dir);
    std::ofstream os(dir / kRunManifestName, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write run manifest in '" + dir.string() + "'");
    os << to_json().dump(2) << '\n';
  }
};

inline json config_snapshot(const RunConfig& c) {
  json j = json::object();
  for (const auto& [k, v] : to_key_values(c)) j[k] = v;
  return j;
}

inline std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  return os;
}

inline std::pair<std::string, std::string> split_assignment(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + kv + "'");
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

/// Grid and config values may be JSON numbers, bools, strings or lists.
inline std::string json_value_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_array()) {
    std::string s;
    for (const auto& e : v) s += (s.empty() ? "" : ",") + json_value_to_string(e);
    return s;
  }
  throw UsageError("unsupported value " + v.dump());
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

inline std::string dataset_label(const fs::path& dir) {
  try {
    const auto m = read_dataset_manifest(dir);
    if (m.contains("provenance") && m["provenance"].contains("name")) return m["provenance"]["name"].get<std::string>();
  } catch (const std::exception&) {
  }
  return fs::absolute(dir).lexically_normal().filename().string();
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string plant = "valve";
  std::uint64_t seed = 0;
  std::string out;
  BenchmarkSize size;
};

inline int cmd_generate(const GenerateArgs& a, RunManifest& man, std::ostream& out) {
  PlantSpec plant;
  try {
    plant = make_plant(a.plant);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = resolve_output_dir(a.out, "generate");
  const Benchmark b = make_synthetic_benchmark(plant, a.size, a.seed);
  const json provenance = {{"name", plant.name},
                           {"generator", "simtrain generate"},
                           {"plant", plant.name},
                           {"seed", a.seed},
                           {"n_train", a.size.n_train},
                           {"train_len", a.size.train_len},
                           {"n_test", a.size.n_test},
                           {"test_len", a.size.test_len}};
  write_dataset_dir(dir, {&b.train, &b.test}, provenance);
  man.seed = a.seed;
  man.config = provenance;
  man.artifacts = {{"dataset", dir.string()}, {"manifest", (dir / "manifest.json").string()}};
  man.write(dir);
  out << "wrote " << b.train.trajectories.size() << " train + " << b.test.trajectories.size()
      << " test trajectories to " << dir.string() << '\n';
  return kOk;
}

// ------------------------------------------------------------------ import

/// Schema file (JSON):
///   { "input_names": [...], "output_names": [...],
///     "input_units": [...], "output_units": [...],      (optional)
///     "segment_column": "run",                           (optional)
///     "sampling_time": 0.001,                            (optional)
///     "name": "valve" }                                  (optional)
struct ImportArgs {
  std::string schema;
  std::vector<std::string> train_files;
  std::vector<std::string> test_files;
  double resample_to = 0.0;
  std::string out;
};

inline int cmd_import(const ImportArgs& a, RunManifest& man, std::ostream& out) {
  std::ifstream is(a.schema);
  if (!is) throw UsageError("cannot open schema '" + a.schema + "'");
  json sj;
  try {
    sj = json::parse(is);
  } catch (const json::exception& e) {
    throw UsageError("malformed schema '" + a.schema + "': " + e.what());
  }
  CsvSchema schema;
  schema.input_names = sj.at("input_names").get<std::vector<std::string>>();
  schema.output_names = sj.at("output_names").get<std::vector<std::string>>();
  if (sj.contains("segment_column")) schema.segment_column = sj["segment_column"].get<std::string>();
  if (sj.contains("sampling_time")) schema.sampling_time = sj["sampling_time"].get<double>();
  if (a.train_files.empty() || a.test_files.empty()) throw UsageError("import needs --train and --test files");

  auto load_all = [&](const std::vector<std::string>& files, DatasetRole role) {
    Dataset d;
    d.role = role;
    d.input_names = schema.input_names;
    d.output_names = schema.output_names;
    d.input_units = sj.value("input_units", std::vector<std::string>(schema.input_names.size()));
    d.output_units = sj.value("output_units", std::vector<std::string>(schema.output_names.size()));
    for (const auto& f : files) {
      Dataset part = load_csv(f, schema, role);
      for (auto& t : part.trajectories) {
        d.trajectories.push_back(a.resample_to > 0.0 ? resample(t, a.resample_to) : std::move(t));
      }
    }
    d.validate();
    return d;
  };
  const Dataset train = load_all(a.train_files, DatasetRole::train);
  const Dataset test = load_all(a.test_files, DatasetRole::test);
  const fs::path dir = resolve_output_dir(a.out, "import");
  const json provenance = {{"name", sj.value("name", std::string("imported"))},
                           {"generator", "simtrain import"},
                           {"schema", sj},
                           {"train_files", a.train_files},
                           {"test_files", a.test_files},
                           {"resampled_to", a.resample_to}};
  write_dataset_dir(dir, {&train, &test}, provenance);
  man.config = provenance;
  man.artifacts = {{"dataset", dir.string()}, {"manifest", (dir / "manifest.json").string()}};
  man.write(dir);
  out << "imported " << train.trajectories.size() << " train + " << test.trajectories.size()
      << " test trajectories into " << dir.string() << '\n';
  return kOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string arch;
  std::string strategy;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> unroll, warmup, epochs, batch, patience;
  std::optional<double> lr;
  std::vector<std::string> set;  // key=value overrides
};

/// Precedence: per-architecture defaults < config file < flags.
inline RunConfig resolve_train_config(const TrainArgs& a) {
  std::optional<RunConfig> file_cfg;
  if (!a.config.empty()) {
    try {
      file_cfg = load_config(a.config);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  ArchKind arch = ArchKind::rnn;
  try {
    if (!a.arch.empty()) arch = parse_arch(a.arch);
    else if (file_cfg) arch = file_cfg->model.kind;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  RunConfig cfg = default_run_config(arch);
  try {
    if (!a.config.empty()) cfg = load_config(a.config, cfg);
    cfg.model.kind = arch;
    if (!a.strategy.empty()) cfg.training.strategy = parse_strategy(a.strategy);
    if (a.seed) cfg.training.seed = *a.seed;
    if (a.unroll) cfg.training.unroll_length = *a.unroll;
    if (a.warmup) cfg.training.warmup_steps = *a.warmup;
    if (a.epochs) cfg.training.max_epochs = *a.epochs;
    if (a.batch) cfg.training.batch_size = *a.batch;
    if (a.patience) cfg.training.patience = *a.patience;
    if (a.lr) cfg.training.learning_rate = *a.lr;
    for (const auto& kv : a.set) {
      const auto [k, v] = split_assignment(kv);
      set_config_value(cfg, k, v);
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

inline int cmd_train(const TrainArgs& a, RunManifest& man, std::ostream& out, std::ostream& err) {
  RunConfig cfg = resolve_train_config(a);
  const Dataset data = load_dataset_dir(a.data, DatasetRole::train);
  cfg.model.input_dim = data.input_dim();
  cfg.model.output_dim = data.output_dim();
  try {
    cfg.model.validate();
    cfg.training.validate(cfg.model);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = resolve_output_dir(a.out, "train");
  fs::create_directories(dir);
  {
    auto os = open_out(dir / "config.txt");
    write_config(os, cfg);
  }
  man.config = config_snapshot(cfg);
  man.seed = cfg.training.seed;
  man.artifacts = {{"config", (dir / "config.txt").string()}, {"record", (dir / "train_record.csv").string()}};

  try {
    TrainResult r = train(cfg.model, data, cfg.training);
    save_checkpoint(dir / "checkpoint.json", r.model);
    {
      auto os = open_out(dir / "train_record.csv");
      r.record.write_csv(os);
    }
    man.artifacts["checkpoint"] = (dir / "checkpoint.json").string();
    man.write(dir);
    const auto& best = r.record.epochs.at(r.record.best_epoch - 1);
    out << to_string(cfg.model.kind) << ' ' << to_string(cfg.training.strategy) << ": " << r.record.epochs.size()
        << " epochs, best epoch " << r.record.best_epoch << " val_loss " << format_double(best.val_loss)
        << " val_nrmse " << format_double(best.val_nrmse) << '\n';
    return kOk;
  } catch (const TrainingDiverged& e) {
    auto os = open_out(dir / "train_record.csv");
    e.record().write_csv(os);
    man.status = "diverged";
    man.write(dir);
    err << "error: " << e.what() << '\n';
    return kFailed;
  }
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string mode = "per-trajectory";
  std::string role = "test";
  std::string dataset_name;
  std::string out;
  bool reset_per_trajectory = false;
};

inline std::string safe_file_stem(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

inline int cmd_evaluate(const EvaluateArgs& a, RunManifest& man, std::ostream& out) {
  if (a.mode != "per-trajectory" && a.mode != "concatenated") {
    throw UsageError("--mode must be per-trajectory or concatenated, got '" + a.mode + "'");
  }
  DatasetRole role;
  try {
    role = parse_role(a.role);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Model model = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset_dir(a.data, role);
  if (data.input_dim() != model.spec.input_dim || data.output_dim() != model.spec.output_dim) {
    throw UsageError("checkpoint expects " + std::to_string(model.spec.input_dim) + " inputs and " +
                     std::to_string(model.spec.output_dim) + " outputs; dataset has " +
                     std::to_string(data.input_dim()) + " and " + std::to_string(data.output_dim()));
  }
  const EvalReport rep = a.mode == "concatenated" ? evaluate_concatenated(model, data, a.reset_per_trajectory)
                                                  : evaluate_per_trajectory(model, data);
  const fs::path dir = resolve_output_dir(a.out, "evaluate");
  const std::string name = a.dataset_name.empty() ? dataset_label(a.data) : a.dataset_name;
  const std::string strategy = model.strategy.empty() ? "unknown" : model.strategy;
  {
    auto os = open_out(dir / "report.csv");
    os << "dataset,arch,strategy,nrmse\n"
       << name << ',' << to_string(model.spec.kind) << ',' << strategy << ',' << format_double(rep.nrmse) << '\n';
  }
  {
    auto os = open_out(dir / "trajectories.csv");
    os << "id,first_step,horizon,nrmse";
    for (const auto& n : data.output_names) os << ",nrmse_" << n;
    os << '\n';
    for (const auto& r : rep.runs) {
      os << r.id << ',' << r.first_step << ',' << r.horizon() << ',' << format_double(r.nrmse);
      for (double v : r.channel_nrmse) os << ',' << format_double(v);
      os << '\n';
    }
  }
  json sims = json::array();
  for (const auto& r : rep.runs) {
    const fs::path p = dir / "simulations" / (safe_file_stem(r.id) + ".csv");
    fs::create_directories(p.parent_path());
    write_simulation_csv(p, r, data.input_names, data.output_names);
    sims.push_back(p.string());
  }
  man.config = {{"checkpoint", a.checkpoint}, {"data", a.data},       {"mode", a.mode},
                {"role", a.role},             {"dataset", name},      {"reset_per_trajectory", a.reset_per_trajectory}};
  man.artifacts = {{"report", (dir / "report.csv").string()},
                   {"trajectories", (dir / "trajectories.csv").string()},
                   {"simulations", sims}};
  man.write(dir);
  out << name << ' ' << to_string(model.spec.kind) << ' ' << strategy << ' ' << a.mode << " nrmse "
      << format_double(rep.nrmse) << '\n';
  return kOk;
}

// -------------------------------------------------------------- gridsearch

/// Grid file (JSON):
///   { "base": { "arch": "rnn", "max_epochs": 20, ... },
///     "axes": [ {"key": "learning_rate", "values": [0.001, 0.003]},
///               {"key": "hidden_sizes", "values": [[8], [16]]} ] }
/// "axes" may also be an object {key: [values]}, iterated in key order.
struct GridFile {
  RunConfig base;
  std::vector<GridAxis> axes;
};

inline GridFile parse_grid_file(const json& j) {
  GridFile g;
  ArchKind arch = ArchKind::rnn;
  const json base = j.value("base", json::object());
  try {
    if (base.contains("arch")) arch = parse_arch(json_value_to_string(base["arch"]));
    g.base = default_run_config(arch);
    for (const auto& [k, v] : base.items()) set_config_value(g.base, k, json_value_to_string(v));
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("grid base: ") + e.what());
  }
  if (!j.contains("axes")) throw UsageError("grid file has no 'axes'");
  auto add_axis = [&](const std::string& key, const json& values) {
    if (!values.is_array() || values.empty()) throw UsageError("grid axis '" + key + "' has no values");
    GridAxis ax{key, {}};
    for (const auto& v : values) {
      ax.values.push_back(json_value_to_string(v));
      RunConfig probe = g.base;
      try {
        set_config_value(probe, key, ax.values.back());
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("grid axis: ") + e.what());
      }
    }
    g.axes.push_back(std::move(ax));
  };
  const json& axes = j["axes"];
  if (axes.is_array()) {
    for (const auto& ax : axes) add_axis(ax.at("key").get<std::string>(), ax.at("values"));
  } else if (axes.is_object()) {
    for (const auto& [k, v] : axes.items()) add_axis(k, v);
  } else {
    throw UsageError("grid 'axes' must be an array or object");
  }
  if (g.axes.empty()) throw UsageError("grid is empty");
  return g;
}

struct GridArgs {
  std::string grid_file;
  std::string data;
  std::size_t jobs = 1;
  std::size_t budget = 0;
  std::string out;
  bool allow_partial = false;
  bool save_best = false;
};

inline int cmd_gridsearch(const GridArgs& a, RunManifest& man, std::ostream& out, std::ostream& err) {
  if (a.jobs < 1) throw UsageError("--jobs must be at least 1");
  std::ifstream is(a.grid_file);
  if (!is) throw UsageError("cannot open grid file '" + a.grid_file + "'");
  json gj;
  try {
    gj = json::parse(is);
  } catch (const json::exception& e) {
    throw UsageError("malformed grid file '" + a.grid_file + "': " + e.what());
  }
  const GridFile grid = parse_grid_file(gj);
  const Dataset data = load_dataset_dir(a.data, DatasetRole::train);
  GridSearchOptions opts;
  opts.jobs = a.jobs;
  opts.budget = a.budget;
  opts.keep_models = a.save_best;
  const auto ranked = grid_search(grid.base, grid.axes, data, opts);

  const fs::path dir = resolve_output_dir(a.out, "gridsearch");
  {
    auto os = open_out(dir / "grid_results.csv");
    write_grid_table(os, ranked, grid.axes);
  }
  std::vector<const GridJobResult*> by_job(ranked.size());
  for (const auto& r : ranked) by_job[r.job] = &r;
  json job_files = json::array();
  std::size_t failed = 0;
  for (const GridJobResult* r : by_job) {
    char name[32];
    std::snprintf(name, sizeof(name), "job_%04zu.json", r->job);
    json assignment = json::object();
    for (const auto& [k, v] : r->assignment) assignment[k] = v;
    json jm = {{"job", r->job},
               {"status", r->ok ? "ok" : "failed"},
               {"assignment", assignment},
               {"seed", r->seed},
               {"config", r->ok || !r->error.empty() ? config_snapshot(r->config) : json()},
               {"val_nrmse", r->ok ? json(r->val_nrmse) : json()},
               {"val_loss", r->ok ? json(r->val_loss) : json()},
               {"best_epoch", r->best_epoch},
               {"epochs", r->epochs_run},
               {"error", r->error}};
    auto os = open_out(dir / "jobs" / name);
    os << jm.dump(2) << '\n';
    job_files.push_back((dir / "jobs" / name).string());
    if (!r->ok) ++failed;
  }
  man.config = {{"base", config_snapshot(grid.base)}, {"grid", gj}, {"budget", a.budget}, {"jobs", a.jobs}};
  man.seed = grid.base.training.seed;
  man.artifacts = {{"results", (dir / "grid_results.csv").string()}, {"jobs", job_files}};
  if (a.save_best && !ranked.empty() && ranked.front().ok && ranked.front().result) {
    save_checkpoint(dir / "best_checkpoint.json", ranked.front().result->model);
    man.artifacts["best_checkpoint"] = (dir / "best_checkpoint.json").string();
  }
  if (failed > 0) man.status = a.allow_partial ? "partial" : "failed";
  man.write(dir);
  out << ranked.size() << " jobs, " << failed << " failed; results in " << (dir / "grid_results.csv").string()
      << '\n';
  if (failed > 0 && !a.allow_partial) {
    err << "error: " << failed << " grid job(s) failed (use --allow-partial to accept)\n";
    return kFailed;
  }
  return kOk;
}

// ----------------------------------------------------------------- compare

struct CompareArgs {
  std::string data;
  std::string archs = "rnn";
  std::uint64_t seed = 0;
  std::size_t repeats = 3;
  std::string seeds;  // explicit list overrides seed/repeats
  std::string mode = "per-trajectory";
  std::string dataset_name;
  std::vector<std::string> set;
  std::string out;
  bool quiet = false;
};

inline int cmd_compare(const CompareArgs& a, RunManifest& man, std::ostream& out, std::ostream& err) {
  if (a.mode != "per-trajectory" && a.mode != "concatenated") {
    throw UsageError("--mode must be per-trajectory or concatenated, got '" + a.mode + "'");
  }
  CompareOptions opts;
  opts.archs.clear();
  try {
    for (const auto& s : split_list(a.archs)) opts.archs.push_back(parse_arch(s));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (opts.archs.empty()) throw UsageError("--archs is empty");
  opts.seeds.clear();
  if (!a.seeds.empty()) {
    for (const auto& s : split_list(a.seeds)) {
      try {
        opts.seeds.push_back(detail::parse_u64(s));
      } catch (const std::exception&) {
        throw UsageError("bad seed '" + s + "'");
      }
    }
  } else {
    for (std::size_t i = 0; i < a.repeats; ++i) opts.seeds.push_back(a.seed + i);
  }
  if (opts.seeds.empty()) throw UsageError("no seeds");
  for (const auto& kv : a.set) opts.overrides.push_back(split_assignment(kv));
  // Validate overrides against every architecture before training anything.
  for (ArchKind arch : opts.archs) {
    RunConfig probe = default_run_config(arch);
    try {
      for (const auto& [k, v] : opts.overrides) set_config_value(probe, k, v);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  opts.concatenated = a.mode == "concatenated";
  opts.dataset_name = a.dataset_name.empty() ? dataset_label(a.data) : a.dataset_name;
  if (!a.quiet) {
    opts.on_run = [&err](const CompareRun& r) {
      err << to_string(r.arch) << ' ' << to_string(r.strategy) << " seed " << r.seed << ": nrmse "
          << format_double(r.nrmse) << " (" << r.epochs << " epochs, best " << r.best_epoch << ")\n";
    };
  }
  const Dataset train_data = load_dataset_dir(a.data, DatasetRole::train);
  const Dataset test_data = load_dataset_dir(a.data, DatasetRole::test);
  const CompareReport rep = compare_strategies(train_data, test_data, opts);

  const fs::path dir = resolve_output_dir(a.out, "compare");
  {
    auto os = open_out(dir / "comparison.csv");
    write_compare_table(os, rep);
  }
  {
    auto os = open_out(dir / "comparison_runs.csv");
    write_compare_runs(os, rep);
  }
  json per_arch = json::object();
  for (ArchKind arch : opts.archs) {
    RunConfig c = default_run_config(arch);
    for (const auto& [k, v] : opts.overrides) set_config_value(c, k, v);
    per_arch[std::string(to_string(arch))] = config_snapshot(c);
  }
  man.config = {{"data", a.data}, {"mode", a.mode}, {"seeds", opts.seeds}, {"per_arch", per_arch}};
  man.seed = opts.seeds.front();
  man.artifacts = {{"table", (dir / "comparison.csv").string()}, {"runs", (dir / "comparison_runs.csv").string()}};
  man.write(dir);
  write_compare_table(out, rep);
  return kOk;
}

// --------------------------------------------------------------- reference

inline int cmd_reference(const std::string& out_flag, RunManifest& man, std::ostream& out) {
  if (out_flag.empty()) {
    write_reference_report(out);
    return kOk;
  }
  const fs::path dir = out_flag;
  {
    auto os = open_out(dir / "reference_results.csv");
    write_reference_report(os);
  }
  man.artifacts = {{"report", (dir / "reference_results.csv").string()}};
  man.write(dir);
  out << "wrote " << (dir / "reference_results.csv").string() << '\n';
  return kOk;
}

// ------------------------------------------------------------------ driver

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

/// Re-executes the argument list recorded in a run manifest, optionally
/// redirecting its output directory.
inline int cmd_replay(const std::string& manifest, const std::string& out_flag, std::ostream& out, std::ostream& err) {
  std::ifstream is(manifest);
  if (!is) throw UsageError("cannot open manifest '" + manifest + "'");
  json m;
  try {
    m = json::parse(is);
  } catch (const json::exception& e) {
    throw UsageError("malformed manifest '" + manifest + "': " + e.what());
  }
  auto args = m.at("args").get<std::vector<std::string>>();
  if (args.empty() || args.front() == "replay") throw UsageError("manifest does not record a replayable command");
  if (!out_flag.empty()) {
    auto it = std::find(args.begin(), args.end(), "--out");
    if (it != args.end() && it + 1 != args.end()) *(it + 1) = out_flag;
    else {
      args.push_back("--out");
      args.push_back(out_flag);
    }
  }
  return run(args, out, err);
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train and evaluate neural simulators of sampled dynamical systems", "simtrain"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  RunManifest man;
  man.args = args;

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic benchmark dataset directory");
  g->add_option("--plant", gen.plant, "Built-in plant (valve, linear1, harmonic)")->capture_default_str();
  g->add_option("--seed", gen.seed, "Seed for signals, initial states and noise")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--n-train", gen.size.n_train, "Training trajectories")->capture_default_str();
  g->add_option("--train-len", gen.size.train_len, "Samples per training trajectory")->capture_default_str();
  g->add_option("--n-test", gen.size.n_test, "Test trajectories")->capture_default_str();
  g->add_option("--test-len", gen.size.test_len, "Samples per test trajectory")->capture_default_str();

  ImportArgs imp;
  auto* im = app.add_subcommand("import", "Convert CSV recordings into a dataset directory");
  im->add_option("--schema", imp.schema, "JSON schema file")->required();
  im->add_option("--train", imp.train_files, "Training CSV files")->required();
  im->add_option("--test", imp.test_files, "Test CSV files")->required();
  im->add_option("--resample", imp.resample_to, "Decimate to this sampling time (integer multiple)");
  im->add_option("--out", imp.out, "Output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one model");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--arch", tr.arch, "mlp, rnn, lstm, gru or tcn");
  t->add_option("--strategy", tr.strategy, "parallel or series-parallel");
  t->add_option("--config", tr.config, "key = value config file");
  t->add_option("--out", tr.out, "Output directory");
  t->add_option("--seed", tr.seed, "Training seed");
  t->add_option("--unroll", tr.unroll, "Rollout length for parallel training");
  t->add_option("--warmup", tr.warmup, "Measured prefix length");
  t->add_option("--epochs", tr.epochs, "Maximum epochs");
  t->add_option("--batch", tr.batch, "Batch size");
  t->add_option("--patience", tr.patience, "Early-stopping patience");
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--set", tr.set, "Extra key=value config overrides");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Free-run a checkpoint and report NRMSE");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--mode", ev.mode, "per-trajectory or concatenated")->capture_default_str();
  e->add_option("--role", ev.role, "Which part of the dataset to evaluate")->capture_default_str();
  e->add_option("--dataset-name", ev.dataset_name, "Name used in the report");
  e->add_flag("--reset-per-trajectory", ev.reset_per_trajectory, "Concatenated mode: re-warm on every member");
  e->add_option("--out", ev.out, "Output directory");

  GridArgs gr;
  auto* gs = app.add_subcommand("gridsearch", "Train every point of a hyperparameter grid");
  gs->add_option("--grid-file", gr.grid_file, "JSON grid file")->required();
  gs->add_option("--data", gr.data, "Dataset directory")->required();
  gs->add_option("--jobs", gr.jobs, "Concurrent jobs")->capture_default_str();
  gs->add_option("--budget", gr.budget, "Epoch cap per job (0 keeps max_epochs)")->capture_default_str();
  gs->add_flag("--allow-partial", gr.allow_partial, "Exit 0 even if some jobs failed");
  gs->add_flag("--save-best", gr.save_best, "Write the best job's checkpoint");
  gs->add_option("--out", gr.out, "Output directory");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Train each architecture under both strategies and compare");
  c->add_option("--data", cmp.data, "Dataset directory")->required();
  c->add_option("--archs", cmp.archs, "Comma-separated architectures")->capture_default_str();
  c->add_option("--seed", cmp.seed, "First seed")->capture_default_str();
  c->add_option("--repeats", cmp.repeats, "Number of consecutive seeds")->capture_default_str();
  c->add_option("--seeds", cmp.seeds, "Explicit comma-separated seeds");
  c->add_option("--mode", cmp.mode, "per-trajectory or concatenated")->capture_default_str();
  c->add_option("--dataset-name", cmp.dataset_name, "Name used in the report");
  c->add_option("--set", cmp.set, "key=value overrides applied to every run");
  c->add_flag("--quiet", cmp.quiet, "No per-run progress");
  c->add_option("--out", cmp.out, "Output directory");

  std::string ref_out;
  auto* r = app.add_subcommand("reference", "Print published reference NRMSE values");
  r->add_option("--out", ref_out, "Write the report into this directory instead of stdout");

  std::string replay_manifest, replay_out;
  auto* rp = app.add_subcommand("replay", "Re-run the command recorded in a run manifest");
  rp->add_option("manifest", replay_manifest, "run_manifest.json")->required();
  rp->add_option("--out", replay_out, "Output directory override");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << '\n';
    return kUsage;
  }

  try {
    if (*g) return man.command = "generate", cmd_generate(gen, man, out);
    if (*im) return man.command = "import", cmd_import(imp, man, out);
    if (*t) return man.command = "train", cmd_train(tr, man, out, err);
    if (*e) return man.command = "evaluate", cmd_evaluate(ev, man, out);
    if (*gs) return man.command = "gridsearch", cmd_gridsearch(gr, man, out, err);
    if (*c) return man.command = "compare", cmd_compare(cmp, man, out, err);
    if (*r) return man.command = "reference", cmd_reference(ref_out, man, out);
    if (*rp) return cmd_replay(replay_manifest, replay_out, out, err);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kFailed;
  }
  return kUsage;
}

}  // namespace simtrain::cli
