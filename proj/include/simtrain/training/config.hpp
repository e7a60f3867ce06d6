#pragma once

#include <cstdint>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "simtrain/data/csv.hpp"
#include "simtrain/model_spec.hpp"

namespace simtrain {

enum class Strategy { series_parallel, parallel };

inline std::string_view to_string(Strategy s) { return s == Strategy::parallel ? "parallel" : "series-parallel"; }

inline Strategy parse_strategy(std::string_view s) {
  if (s == "parallel") return Strategy::parallel;
  if (s == "series-parallel" || s == "series_parallel") return Strategy::series_parallel;
  throw std::invalid_argument("unknown strategy '" + std::string(s) + "' (valid: parallel, series-parallel)");
}

struct TrainingConfig {
  Strategy strategy = Strategy::parallel;
  std::size_t unroll_length = 50;  // rollout steps per segment (parallel)
  std::size_t warmup_steps = 10;   // measured samples before the first prediction
  std::size_t segment_stride = 0;  // 0 = unroll_length
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;  // decoupled (AdamW)
  double l2_penalty = 0.0;     // coupled, added to the gradient
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  std::size_t stride() const { return segment_stride == 0 ? unroll_length : segment_stride; }

  void validate(const ModelSpec& spec) const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("invalid training config: " + m); };
    if (unroll_length < 1) fail("unroll_length must be >= 1");
    if (warmup_steps < 1) fail("warmup_steps must be >= 1");
    if (!spec.recurrent() && warmup_steps < spec.window_length) {
      fail("warmup_steps (" + std::to_string(warmup_steps) + ") must be >= window_length (" +
           std::to_string(spec.window_length) + ") for feedforward models");
    }
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (weight_decay < 0.0 || l2_penalty < 0.0) fail("weight_decay and l2_penalty must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
    if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
    if (max_epochs < 1) fail("max_epochs must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) fail("validation_fraction must lie in (0, 1)");
  }

  bool operator==(const TrainingConfig&) const = default;
};

/// Model hyperparameters plus training settings; what a config file holds.
/// input_dim / output_dim are taken from the dataset at train time.
struct RunConfig {
  ModelSpec model;
  TrainingConfig training;
  bool operator==(const RunConfig&) const = default;
};

inline constexpr int kConfigSchemaVersion = 1;

namespace detail {

// from_chars rather than stoull, which silently wraps "-3".
inline std::uint64_t parse_u64(std::string_view v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return x;
}

inline std::size_t parse_count(std::string_view v) { return static_cast<std::size_t>(parse_u64(v)); }

inline std::vector<std::size_t> parse_size_list(std::string_view v) {
  std::vector<std::size_t> out;
  std::string tok;
  std::istringstream is{std::string(v)};
  while (std::getline(is, tok, ',')) {
    const auto first = tok.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    const auto last = tok.find_last_not_of(' ');
    out.push_back(parse_count(std::string_view(tok).substr(first, last - first + 1)));
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + std::string(v) + "'");
}

inline double parse_real(std::string_view v) {
  const auto d = parse_double(v);
  if (!d) throw std::invalid_argument("expected a number, got '" + std::string(v) + "'");
  return *d;
}


}  // namespace detail

/// Sets one key. Keys are the names written by to_key_values().
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  try {
    auto& m = c.model;
    auto& t = c.training;
    if (key == "arch") m.kind = parse_arch(value);
    else if (key == "window_length") m.window_length = detail::parse_count(value);
    else if (key == "hidden_sizes") m.hidden_sizes = detail::parse_size_list(value);
    else if (key == "activation") m.activation = parse_activation(value);
    else if (key == "skip_connection") m.skip_connection = detail::parse_bool(value);
    else if (key == "dropout") m.dropout = detail::parse_real(value);
    else if (key == "tcn_kernel_width") m.tcn_kernel_width = detail::parse_count(value);
    else if (key == "tcn_dilations") m.tcn_dilations = detail::parse_size_list(value);
    else if (key == "strategy") t.strategy = parse_strategy(value);
    else if (key == "unroll_length") t.unroll_length = detail::parse_count(value);
    else if (key == "warmup_steps") t.warmup_steps = detail::parse_count(value);
    else if (key == "segment_stride") t.segment_stride = detail::parse_count(value);
    else if (key == "batch_size") t.batch_size = detail::parse_count(value);
    else if (key == "learning_rate") t.learning_rate = detail::parse_real(value);
    else if (key == "weight_decay") t.weight_decay = detail::parse_real(value);
    else if (key == "l2_penalty") t.l2_penalty = detail::parse_real(value);
    else if (key == "beta1") t.beta1 = detail::parse_real(value);
    else if (key == "beta2") t.beta2 = detail::parse_real(value);
    else if (key == "adam_eps") t.adam_eps = detail::parse_real(value);
    else if (key == "clip_norm") t.clip_norm = detail::parse_real(value);
    else if (key == "max_epochs") t.max_epochs = detail::parse_count(value);
    else if (key == "patience") t.patience = detail::parse_count(value);
    else if (key == "validation_fraction") t.validation_fraction = detail::parse_real(value);
    else if (key == "seed") t.seed = detail::parse_u64(value);
    else throw std::invalid_argument("unknown key");
  } catch (const std::exception& e) {
    throw std::invalid_argument("config key '" + key + "' = '" + value + "': " + e.what());
  }
}

inline std::vector<std::pair<std::string, std::string>> to_key_values(const RunConfig& c) {
  const auto& m = c.model;
  const auto& t = c.training;
  return {
      {"arch", std::string(to_string(m.kind))},
      {"window_length", std::to_string(m.window_length)},
      {"hidden_sizes", detail::join_sizes(m.hidden_sizes)},
      {"activation", std::string(to_string(m.activation))},
      {"skip_connection", m.skip_connection ? "true" : "false"},
      {"dropout", format_double(m.dropout)},
      {"tcn_kernel_width", std::to_string(m.tcn_kernel_width)},
      {"tcn_dilations", detail::join_sizes(m.tcn_dilations)},
      {"strategy", std::string(to_string(t.strategy))},
      {"unroll_length", std::to_string(t.unroll_length)},
      {"warmup_steps", std::to_string(t.warmup_steps)},
      {"segment_stride", std::to_string(t.segment_stride)},
      {"batch_size", std::to_string(t.batch_size)},
      {"learning_rate", format_double(t.learning_rate)},
      {"weight_decay", format_double(t.weight_decay)},
      {"l2_penalty", format_double(t.l2_penalty)},
      {"beta1", format_double(t.beta1)},
      {"beta2", format_double(t.beta2)},
      {"adam_eps", format_double(t.adam_eps)},
      {"clip_norm", format_double(t.clip_norm)},
      {"max_epochs", std::to_string(t.max_epochs)},
      {"patience", std::to_string(t.patience)},
      {"validation_fraction", format_double(t.validation_fraction)},
      {"seed", std::to_string(t.seed)},
  };
}

/// Config file: `key = value` lines, `#` comments, and a mandatory
/// `schema_version = 1` line. Keys not present keep their current value.
inline void read_config(std::istream& is, RunConfig& c, const std::string& source = "<config>") {
  std::string line;
  std::size_t lineno = 0;
  bool versioned = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "schema_version") {
      if (value != std::to_string(kConfigSchemaVersion)) {
        throw std::invalid_argument(source + ": unsupported schema_version " + value);
      }
      versioned = true;
      continue;
    }
    try {
      set_config_value(c, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!versioned) throw std::invalid_argument(source + ": missing schema_version");
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path.string() + "'");
  read_config(is, base, path.string());
  return base;
}

inline void write_config(std::ostream& os, const RunConfig& c) {
  os << "schema_version = " << kConfigSchemaVersion << '\n';
  for (const auto& [k, v] : to_key_values(c)) os << k << " = " << v << '\n';
}

}  // namespace simtrain
