#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "simtrain/architectures.hpp"
#include "simtrain/data/normalize.hpp"
#include "simtrain/model_spec.hpp"

namespace simtrain {

/// Everything needed to run a trained simulator: architecture, weights, the
/// normalization it was trained under, and the measured-prefix length used
/// to warm it up.
struct Model {
  ModelSpec spec;
  ParamMap params;
  NormalizationStats normalization;
  std::size_t warmup_steps = 10;
  std::string strategy;  // label of the training strategy, empty if unknown

  /// Prefix length free runs start from; never less than the model needs.
  std::size_t prefix_length() const { return std::max(warmup_steps, spec.min_history()); }
};

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json spec_to_json(const ModelSpec& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"window_length", s.window_length},
          {"input_dim", s.input_dim},
          {"output_dim", s.output_dim},
          {"hidden_sizes", s.hidden_sizes},
          {"activation", std::string(to_string(s.activation))},
          {"skip_connection", s.skip_connection},
          {"dropout", s.dropout},
          {"tcn_kernel_width", s.tcn_kernel_width},
          {"tcn_dilations", s.tcn_dilations}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.kind = parse_arch(j.at("kind").get<std::string>());
  s.window_length = j.at("window_length").get<std::size_t>();
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
  s.activation = parse_activation(j.at("activation").get<std::string>());
  s.skip_connection = j.at("skip_connection").get<bool>();
  s.dropout = j.at("dropout").get<double>();
  s.tcn_kernel_width = j.at("tcn_kernel_width").get<std::size_t>();
  s.tcn_dilations = j.at("tcn_dilations").get<std::vector<std::size_t>>();
  s.validate();
  return s;
}

/// Versioned JSON container. Doubles are written in shortest round-trip
/// form, so save -> load reproduces every bit.
inline nlohmann::json checkpoint_to_json(const Model& m) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : m.params) params[name] = {{"shape", t.shape()}, {"values", t.storage()}};
  const auto& n = m.normalization;
  return {{"format", "simtrain-checkpoint"},
          {"version", kCheckpointVersion},
          {"spec", spec_to_json(m.spec)},
          {"warmup_steps", m.warmup_steps},
          {"strategy", m.strategy},
          {"normalization",
           {{"input_mean", n.input_mean},
            {"input_std", n.input_std},
            {"output_mean", n.output_mean},
            {"output_std", n.output_std}}},
          {"params", params}};
}

inline Model checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "simtrain-checkpoint") throw std::runtime_error("not a simtrain checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  }
  Model m;
  m.spec = spec_from_json(j.at("spec"));
  m.warmup_steps = j.at("warmup_steps").get<std::size_t>();
  m.strategy = j.value("strategy", "");
  const auto& n = j.at("normalization");
  m.normalization.input_mean = n.at("input_mean").get<std::vector<double>>();
  m.normalization.input_std = n.at("input_std").get<std::vector<double>>();
  m.normalization.output_mean = n.at("output_mean").get<std::vector<double>>();
  m.normalization.output_std = n.at("output_std").get<std::vector<double>>();
  for (const auto& [name, t] : j.at("params").items()) {
    m.params.emplace(name, Tensor(t.at("shape").get<Shape>(), t.at("values").get<std::vector<double>>()));
  }
  check_params(m.spec, m.params);
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  os << checkpoint_to_json(m).dump() << '\n';
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  try {
    return checkpoint_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace simtrain
