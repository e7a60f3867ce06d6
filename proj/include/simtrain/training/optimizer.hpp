#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "simtrain/model_spec.hpp"
#include "simtrain/training/config.hpp"

namespace simtrain {

using GradMap = std::map<std::string, std::vector<double>>;

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::size_t step = 0;
};

inline double global_norm(const GradMap& grads) {
  double sq = 0.0;
  for (const auto& [_, g] : grads)
    for (double x : g) sq += x * x;
  return std::sqrt(sq);
}

/// Rescales all gradients together when their global L2 norm exceeds
/// clip_norm. Returns whether clipping happened.
inline bool clip_gradients(GradMap& grads, double clip_norm) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
  const double norm = global_norm(grads);
  if (!(norm > clip_norm)) return false;
  const double scale = clip_norm / norm;
  for (auto& [_, g] : grads)
    for (double& x : g) x *= scale;
  return true;
}

/// One AdamW update with weight decay decoupled from the adaptive term:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   theta <- theta (1 - lr lambda) - lr mhat / (sqrt(vhat) + eps)
/// A coupled L2 penalty, when configured, is folded into g first. The step is
/// aborted before touching anything if a gradient is not finite.
inline void adamw_step(ParamMap& params, const GradMap& grads, OptimizerState& state, const TrainingConfig& cfg) {
  for (const auto& [name, g] : grads) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NonFiniteGradient("non-finite gradient in '" + name + "' at index " + std::to_string(i));
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw std::invalid_argument("no gradient for parameter '" + name + "'");
    const auto& g = git->second;
    auto& theta = p.mutable_values();
    if (g.size() != theta.size()) throw DimensionError("gradient size mismatch for '" + name + "'");
    auto& m = state.m[name];
    auto& v = state.v[name];
    m.resize(theta.size(), 0.0);
    v.resize(theta.size(), 0.0);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i] + cfg.l2_penalty * theta[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] = theta[i] * decay - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

}  // namespace simtrain
