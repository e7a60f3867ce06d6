#pragma once

#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "simtrain/model_spec.hpp"
#include "simtrain/ops.hpp"

namespace simtrain {

/// Dropout is the only train/inference difference in any forward pass.
struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;

  Tensor dropout(const Tensor& x, double p) const {
    if (!training || p == 0.0) return x;
    if (rng == nullptr) throw std::logic_error("training-mode dropout needs an rng");
    return simtrain::dropout(x, p, true, *rng);
  }
};

/// Per-layer recurrent state: h for RNN/GRU, (h, c) for LSTM. Each entry is
/// [batch x hidden].
struct HiddenState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
};

struct StepResult {
  HiddenState state;
  Tensor y;  // [batch x output_dim]
};

namespace detail {

inline const Tensor& param(const ParamMap& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw DimensionError("missing parameter '" + name + "'");
  return it->second;
}

inline std::string layer_name(std::string_view prefix, std::size_t l, std::string_view name) {
  return std::string(prefix) + "." + std::to_string(l) + "." + std::string(name);
}

inline void check_features(const ModelSpec& spec, const Tensor& x, std::string_view who) {
  if (x.rank() != 2 || x.dim(1) != spec.feature_dim()) {
    throw DimensionError(std::string(who) + ": expected [batch x " + std::to_string(spec.feature_dim()) +
                         "] samples, got " + to_string(x.shape()));
  }
}

/// Linear readout of the top hidden layer plus the optional residual on the
/// most recent y (first output_dim columns of the newest sample).
inline Tensor readout(const ParamMap& p, const ModelSpec& spec, const Tensor& top, const Tensor& newest_sample) {
  Tensor y = add_bias(matmul(top, param(p, "readout.weight")), param(p, "readout.bias"));
  if (spec.skip_connection) y = add(y, slice_cols(newest_sample, 0, spec.output_dim));
  return y;
}

inline void check_state(const ModelSpec& spec, const HiddenState& s, const Tensor& x) {
  if (s.h.size() != spec.hidden_sizes.size()) {
    throw DimensionError("hidden state has " + std::to_string(s.h.size()) + " layers, spec has " +
                         std::to_string(spec.hidden_sizes.size()));
  }
  for (std::size_t l = 0; l < s.h.size(); ++l) {
    const Shape want{x.dim(0), spec.hidden_sizes[l]};
    if (s.h[l].shape() != want || (spec.kind == ArchKind::lstm && s.c.at(l).shape() != want)) {
      throw DimensionError("hidden state layer " + std::to_string(l) + " has shape " + to_string(s.h[l].shape()) +
                           ", expected " + to_string(want));
    }
  }
}

}  // namespace detail

inline HiddenState zero_state(const ModelSpec& spec, std::size_t batch) {
  HiddenState s;
  if (!spec.recurrent()) return s;
  for (auto h : spec.hidden_sizes) {
    s.h.push_back(Tensor::zeros({batch, h}));
    if (spec.kind == ArchKind::lstm) s.c.push_back(Tensor::zeros({batch, h}));
  }
  return s;
}

/// Simple recurrent network, one step per layer:
///   h_t = act(h_{t-1} W_hh + x_{t-1} W_xh + b)
///   y_t = h_t W_out + b_out   (linear readout, optional residual on y_{t-1})
inline StepResult rnn_cell(const ParamMap& p, const ModelSpec& spec, const Tensor& x_prev, const HiddenState& prev,
                           const ForwardMode& mode = {}) {
  detail::check_features(spec, x_prev, "rnn_cell");
  detail::check_state(spec, prev, x_prev);
  StepResult r;
  Tensor in = x_prev;
  for (std::size_t l = 0; l < spec.hidden_sizes.size(); ++l) {
    const Tensor pre = add(matmul(prev.h[l], detail::param(p, detail::layer_name("rnn", l, "W_hh"))),
                           matmul(in, detail::param(p, detail::layer_name("rnn", l, "W_xh"))));
    Tensor h = activation(add_bias(pre, detail::param(p, detail::layer_name("rnn", l, "bias"))), spec.activation);
    r.state.h.push_back(h);
    in = mode.dropout(h, spec.dropout);
  }
  r.y = detail::readout(p, spec, in, x_prev);
  return r;
}

/// LSTM with input, forget and output gates (gate order i, f, g, o in the
/// packed weights). Gates and the candidate use sigmoid/tanh regardless of
/// spec.activation.
inline StepResult lstm_cell(const ParamMap& p, const ModelSpec& spec, const Tensor& x_prev, const HiddenState& prev,
                            const ForwardMode& mode = {}) {
  detail::check_features(spec, x_prev, "lstm_cell");
  detail::check_state(spec, prev, x_prev);
  StepResult r;
  Tensor in = x_prev;
  for (std::size_t l = 0; l < spec.hidden_sizes.size(); ++l) {
    const std::size_t hs = spec.hidden_sizes[l];
    const Tensor z = add_bias(add(matmul(in, detail::param(p, detail::layer_name("lstm", l, "W_x"))),
                                  matmul(prev.h[l], detail::param(p, detail::layer_name("lstm", l, "W_h")))),
                              detail::param(p, detail::layer_name("lstm", l, "bias")));
    const Tensor i = activation(slice_cols(z, 0, hs), Activation::sigmoid);
    const Tensor f = activation(slice_cols(z, hs, 2 * hs), Activation::sigmoid);
    const Tensor g = activation(slice_cols(z, 2 * hs, 3 * hs), Activation::tanh);
    const Tensor o = activation(slice_cols(z, 3 * hs, 4 * hs), Activation::sigmoid);
    Tensor c = add(mul(f, prev.c[l]), mul(i, g));
    Tensor h = mul(o, activation(c, Activation::tanh));
    r.state.c.push_back(c);
    r.state.h.push_back(h);
    in = mode.dropout(h, spec.dropout);
  }
  r.y = detail::readout(p, spec, in, x_prev);
  return r;
}

/// GRU in its original form (gate order z, r, n):
///   z = sig(x W_xz + h W_hz + b_z),  r = sig(x W_xr + h W_hr + b_r)
///   n = tanh(x W_xn + (r * h) W_hn + b_n)
///   h' = z * h + (1 - z) * n
inline StepResult gru_cell(const ParamMap& p, const ModelSpec& spec, const Tensor& x_prev, const HiddenState& prev,
                           const ForwardMode& mode = {}) {
  detail::check_features(spec, x_prev, "gru_cell");
  detail::check_state(spec, prev, x_prev);
  StepResult r;
  Tensor in = x_prev;
  for (std::size_t l = 0; l < spec.hidden_sizes.size(); ++l) {
    const std::size_t hs = spec.hidden_sizes[l];
    const Tensor& h_prev = prev.h[l];
    const Tensor a = add_bias(matmul(in, detail::param(p, detail::layer_name("gru", l, "W_x"))),
                              detail::param(p, detail::layer_name("gru", l, "bias")));
    const Tensor hzr = matmul(h_prev, detail::param(p, detail::layer_name("gru", l, "W_hzr")));
    const Tensor z = activation(add(slice_cols(a, 0, hs), slice_cols(hzr, 0, hs)), Activation::sigmoid);
    const Tensor rg = activation(add(slice_cols(a, hs, 2 * hs), slice_cols(hzr, hs, 2 * hs)), Activation::sigmoid);
    const Tensor n = activation(
        add(slice_cols(a, 2 * hs, 3 * hs), matmul(mul(rg, h_prev), detail::param(p, detail::layer_name("gru", l, "W_hn")))),
        Activation::tanh);
    Tensor h = add(mul(z, h_prev), mul(affine(z, -1.0, 1.0), n));
    r.state.h.push_back(h);
    in = mode.dropout(h, spec.dropout);
  }
  r.y = detail::readout(p, spec, in, x_prev);
  return r;
}

inline StepResult recurrent_step(const ParamMap& p, const ModelSpec& spec, const Tensor& x_prev,
                                 const HiddenState& prev, const ForwardMode& mode = {}) {
  switch (spec.kind) {
    case ArchKind::rnn: return rnn_cell(p, spec, x_prev, prev, mode);
    case ArchKind::lstm: return lstm_cell(p, spec, x_prev, prev, mode);
    case ArchKind::gru: return gru_cell(p, spec, x_prev, prev, mode);
    default: throw std::invalid_argument("recurrent_step on feedforward architecture " + std::string(to_string(spec.kind)));
  }
}

/// MLP over a flattened window. `window` holds L samples, oldest first, each
/// [batch x feature_dim]. Hidden layers use spec.activation, the last layer
/// is linear.
inline Tensor mlp_forward(const ParamMap& p, const ModelSpec& spec, const std::vector<Tensor>& window,
                          const ForwardMode& mode = {}) {
  if (window.size() != spec.window_length) {
    throw DimensionError("mlp_forward: window has " + std::to_string(window.size()) + " rows, expected L=" +
                         std::to_string(spec.window_length));
  }
  for (const auto& w : window) detail::check_features(spec, w, "mlp_forward");
  Tensor x = concat_cols(window);
  for (std::size_t l = 0; l < spec.hidden_sizes.size(); ++l) {
    x = activation(add_bias(matmul(x, detail::param(p, detail::layer_name("mlp", l, "weight"))),
                            detail::param(p, detail::layer_name("mlp", l, "bias"))),
                   spec.activation);
    x = mode.dropout(x, spec.dropout);
  }
  return detail::readout(p, spec, x, window.back());
}

/// Stacked causal dilated convolutions with per-layer residuals (1x1
/// convolution when channel counts differ); the readout sees the newest time
/// step only.
inline Tensor tcn_forward(const ParamMap& p, const ModelSpec& spec, const std::vector<Tensor>& window,
                          const ForwardMode& mode = {}) {
  if (window.size() != spec.window_length) {
    throw DimensionError("tcn_forward: window has " + std::to_string(window.size()) + " rows, expected L=" +
                         std::to_string(spec.window_length));
  }
  for (const auto& w : window) detail::check_features(spec, w, "tcn_forward");
  Tensor x = stack_time(window);  // [B x F x L]
  for (std::size_t l = 0; l < spec.hidden_sizes.size(); ++l) {
    Tensor z = causal_dilated_conv1d(x, detail::param(p, detail::layer_name("tcn", l, "kernel")), spec.tcn_dilations[l]);
    z = activation(add_bias(z, detail::param(p, detail::layer_name("tcn", l, "bias"))), spec.activation);
    z = mode.dropout(z, spec.dropout);
    const auto ds = p.find(detail::layer_name("tcn", l, "downsample"));
    x = add(z, ds == p.end() ? x : causal_dilated_conv1d(x, ds->second, 1));
  }
  return detail::readout(p, spec, time_slice(x, spec.window_length - 1), window.back());
}

/// Splits an unbatched [L x F] window into L samples of shape [1 x F].
inline std::vector<Tensor> window_rows(const Tensor& window) {
  if (window.rank() != 2) throw DimensionError("window must be [L x F], got " + to_string(window.shape()));
  if (window.requires_grad()) throw TapeError("window_rows expects an unrecorded window");
  std::vector<Tensor> rows;
  const std::size_t f = window.dim(1);
  for (std::size_t r = 0; r < window.dim(0); ++r) {
    rows.push_back(Tensor::unchecked({1, f}, std::vector<double>(window.storage().begin() + static_cast<std::ptrdiff_t>(r * f),
                                                                  window.storage().begin() + static_cast<std::ptrdiff_t>((r + 1) * f))));
  }
  return rows;
}

inline Tensor feedforward_forward(const ParamMap& p, const ModelSpec& spec, const std::vector<Tensor>& window,
                                  const ForwardMode& mode = {}) {
  return spec.kind == ArchKind::tcn ? tcn_forward(p, spec, window, mode) : mlp_forward(p, spec, window, mode);
}

/// Uniform one-step facade over all five architectures. Feed samples in time
/// order; each step(y_k, u_k) returns the prediction of y_{k+1}. Feedforward
/// models keep a sliding window of the last L samples, recurrent models keep
/// their hidden state.
class OneStepPredictor {
 public:
  OneStepPredictor(const ModelSpec& spec, const ParamMap& params, std::size_t batch, ForwardMode mode = {})
      : spec_(&spec), params_(&params), batch_(batch), mode_(mode), state_(zero_state(spec, batch)) {}

  /// Push a sample without producing a prediction (warm-up).
  void observe(const Tensor& y, const Tensor& u) {
    const Tensor x = sample(y, u);
    if (spec_->recurrent()) {
      state_ = recurrent_step(*params_, *spec_, x, state_, mode_).state;
    } else {
      push(x);
    }
    ++seen_;
  }

  /// Push (y_k, u_k) and predict y_{k+1}. `y` may be a measured output or the
  /// model's own previous prediction.
  Tensor step(const Tensor& y, const Tensor& u) {
    const Tensor x = sample(y, u);
    ++seen_;
    if (spec_->recurrent()) {
      auto r = recurrent_step(*params_, *spec_, x, state_, mode_);
      state_ = std::move(r.state);
      return r.y;
    }
    push(x);
    if (window_.size() < spec_->window_length) {
      throw std::logic_error("predictor window underfull: " + std::to_string(window_.size()) + " of " +
                             std::to_string(spec_->window_length) + " samples seen");
    }
    return feedforward_forward(*params_, *spec_, std::vector<Tensor>(window_.begin(), window_.end()), mode_);
  }

  void reset() {
    state_ = zero_state(*spec_, batch_);
    window_.clear();
    seen_ = 0;
  }

  std::size_t samples_seen() const noexcept { return seen_; }
  const HiddenState& state() const noexcept { return state_; }
  const std::deque<Tensor>& window() const noexcept { return window_; }

 private:
  Tensor sample(const Tensor& y, const Tensor& u) const {
    if (y.rank() != 2 || y.dim(0) != batch_ || y.dim(1) != spec_->output_dim) {
      throw DimensionError("predictor: y must be [" + std::to_string(batch_) + " x " + std::to_string(spec_->output_dim) +
                           "], got " + to_string(y.shape()));
    }
    if (u.rank() != 2 || u.dim(0) != batch_ || u.dim(1) != spec_->input_dim) {
      throw DimensionError("predictor: u must be [" + std::to_string(batch_) + " x " + std::to_string(spec_->input_dim) +
                           "], got " + to_string(u.shape()));
    }
    return concat_cols({y, u});
  }

  void push(const Tensor& x) {
    window_.push_back(x);
    if (window_.size() > spec_->window_length) window_.pop_front();
  }

  const ModelSpec* spec_;
  const ParamMap* params_;
  std::size_t batch_;
  ForwardMode mode_;
  HiddenState state_;
  std::deque<Tensor> window_;
  std::size_t seen_ = 0;
};

}  // namespace simtrain
