#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "simtrain/rng.hpp"
#include "simtrain/tensor.hpp"

namespace simtrain {

enum class Activation { tanh, sigmoid, relu, identity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "' (valid: tanh, sigmoid, relu, identity)");
}

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, std::string_view op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// a[m x k] * b[k x n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* av = a.storage().data();
  const double* bv = b.storage().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      if (s == 0.0) continue;
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return Tape::record(
      Tensor::unchecked({m, n}, std::move(out)), {&a, &b},
      [av_ = a.storage(), bv_ = b.storage(), m, k, n](std::span<const double> g,
                                                      std::span<std::vector<double>* const> in) {
        if (in[0]) {  // dA = G * B^T
          auto& ga = *in[0];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv_[p * n + j];
              ga[i * k + p] += s;
            }
        }
        if (in[1]) {  // dB = A^T * G
          auto& gb = *in[1];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double s = av_[i * k + p];
              if (s == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += s * g[i * n + j];
            }
        }
      });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tape::record(Tensor::unchecked(a.shape(), std::move(out)), {&a, &b},
                      [](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        for (auto* gi : in)
                          if (gi)
                            for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
                      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tape::record(Tensor::unchecked(a.shape(), std::move(out)), {&a, &b},
                      [](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        if (in[0])
                          for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
                        if (in[1])
                          for (std::size_t i = 0; i < g.size(); ++i) (*in[1])[i] -= g[i];
                      });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tape::record(Tensor::unchecked(a.shape(), std::move(out)), {&a, &b},
                      [av = a.storage(), bv = b.storage()](std::span<const double> g,
                                                           std::span<std::vector<double>* const> in) {
                        if (in[0])
                          for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * bv[i];
                        if (in[1])
                          for (std::size_t i = 0; i < g.size(); ++i) (*in[1])[i] += g[i] * av[i];
                      });
}

/// scale * x + shift, elementwise.
inline Tensor affine(const Tensor& x, double scale, double shift = 0.0) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x[i] + shift;
  return Tape::record(Tensor::unchecked(x.shape(), std::move(out)), {&x},
                      [scale](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += scale * g[i];
                      });
}

/// Adds a per-channel bias. `bias` is 1-D with length x.dim(1); it is
/// broadcast over dimension 0 and any trailing dimensions ([B x C] or
/// [B x C x T]).
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " does not match channels of " +
                         to_string(x.shape()));
  }
  const std::size_t outer = x.dim(0), channels = x.dim(1), inner = x.numel() / (outer * channels);
  std::vector<double> out(x.storage());
  for (std::size_t b = 0; b < outer; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < inner; ++t) out[(b * channels + c) * inner + t] += bias[c];
  return Tape::record(Tensor::unchecked(x.shape(), std::move(out)), {&x, &bias},
                      [outer, channels, inner](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        if (in[0])
                          for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
                        if (in[1])
                          for (std::size_t b = 0; b < outer; ++b)
                            for (std::size_t c = 0; c < channels; ++c)
                              for (std::size_t t = 0; t < inner; ++t)
                                (*in[1])[c] += g[(b * channels + c) * inner + t];
                      });
}

inline Tensor activation(const Tensor& x, Activation kind) {
  if (kind == Activation::identity) {
    return Tape::record(x.detach(), {&x}, [](std::span<const double> g, std::span<std::vector<double>* const> in) {
      for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
    });
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    switch (kind) {
      case Activation::tanh: out[i] = std::tanh(v); break;
      case Activation::sigmoid: out[i] = detail::sigmoid(v); break;
      case Activation::relu: out[i] = v > 0.0 ? v : 0.0; break;
      case Activation::identity: break;
    }
  }
  // Derivatives are expressed through the output (tanh, sigmoid) or the sign
  // of the input (relu).
  std::vector<double> saved = kind == Activation::relu ? x.storage() : out;
  return Tape::record(Tensor::unchecked(x.shape(), std::move(out)), {&x},
                      [kind, s = std::move(saved)](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        auto& gi = *in[0];
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          double d = 0.0;
                          switch (kind) {
                            case Activation::tanh: d = 1.0 - s[i] * s[i]; break;
                            case Activation::sigmoid: d = s[i] * (1.0 - s[i]); break;
                            case Activation::relu: d = s[i] > 0.0 ? 1.0 : 0.0; break;
                            case Activation::identity: d = 1.0; break;
                          }
                          gi[i] += g[i] * d;
                        }
                      });
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tape::record(Tensor::unchecked({1}, {s}), {&x},
                      [](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        for (auto& v : *in[0]) v += g[0];
                      });
}

inline Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return affine(sum(x), 1.0 / static_cast<double>(x.numel()));
}

/// Mean of squared differences over all elements.
inline Tensor mse(const Tensor& prediction, const Tensor& target) {
  const Tensor diff = sub(prediction, target);
  return mean(mul(diff, diff));
}

/// Concatenates [B x c_i] matrices along columns.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t rows = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: row mismatch " + to_string(parts.front().shape()) + " vs " +
                           to_string(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.dim(1);
      std::copy_n(p.storage().data() + r * w, w, out.data() + r * total + off);
      off += w;
    }
  }
  std::vector<const Tensor*> ins;
  for (const auto& p : parts) ins.push_back(&p);
  return Tape::record(Tensor::unchecked({rows, total}, std::move(out)), ins,
                      [rows, total, widths](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < widths.size(); ++k) {
                          const std::size_t w = widths[k];
                          if (in[k])
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < w; ++c) (*in[k])[r * w + c] += g[r * total + off + c];
                          off += w;
                        }
                      });
}

/// Columns [begin, end) of a [B x C] matrix.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                         to_string(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.storage().data() + r * cols + begin, w, out.data() + r * w);
  return Tape::record(Tensor::unchecked({rows, w}, std::move(out)), {&x},
                      [rows, cols, begin, w](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t c = 0; c < w; ++c) (*in[0])[r * cols + begin + c] += g[r * w + c];
                      });
}

/// Stacks T matrices [B x C] into [B x C x T] (time last).
inline Tensor stack_time(const std::vector<Tensor>& steps) {
  if (steps.empty()) throw DimensionError("stack_time of nothing");
  const auto& first = steps.front();
  detail::require_rank(first, 2, "stack_time");
  const std::size_t batch = first.dim(0), channels = first.dim(1), time = steps.size();
  std::vector<double> out(batch * channels * time);
  for (std::size_t t = 0; t < time; ++t) {
    detail::require_same_shape(first, steps[t], "stack_time");
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < channels; ++c) out[(b * channels + c) * time + t] = steps[t][b * channels + c];
  }
  std::vector<const Tensor*> ins;
  for (const auto& s : steps) ins.push_back(&s);
  return Tape::record(Tensor::unchecked({batch, channels, time}, std::move(out)), ins,
                      [batch, channels, time](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        for (std::size_t t = 0; t < time; ++t) {
                          if (!in[t]) continue;
                          for (std::size_t b = 0; b < batch; ++b)
                            for (std::size_t c = 0; c < channels; ++c)
                              (*in[t])[b * channels + c] += g[(b * channels + c) * time + t];
                        }
                      });
}

/// Time step `t` of a [B x C x T] tensor as [B x C].
inline Tensor time_slice(const Tensor& x, std::size_t t) {
  detail::require_rank(x, 3, "time_slice");
  const std::size_t batch = x.dim(0), channels = x.dim(1), time = x.dim(2);
  if (t >= time) throw DimensionError("time_slice: index " + std::to_string(t) + " out of " + to_string(x.shape()));
  std::vector<double> out(batch * channels);
  for (std::size_t i = 0; i < batch * channels; ++i) out[i] = x[i * time + t];
  return Tape::record(Tensor::unchecked({batch, channels}, std::move(out)), {&x},
                      [time, t](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i * time + t] += g[i];
                      });
}

/// Causal dilated 1-D convolution.
///   x:      [C_in x T] or [B x C_in x T]
///   kernel: [C_out x C_in x W]
/// out[o, t] = sum_{i, j} kernel[o, i, j] * x[i, t - (W - 1 - j) * dilation],
/// with x taken as zero before t = 0 (left padding of (W - 1) * dilation), so
/// out[., t] only depends on x[., <= t]. Tap j = W - 1 is the current step.
inline Tensor causal_dilated_conv1d(const Tensor& x, const Tensor& kernel, std::size_t dilation) {
  if (dilation < 1) throw std::invalid_argument("causal_dilated_conv1d: dilation must be >= 1");
  detail::require_rank(kernel, 3, "causal_dilated_conv1d kernel");
  const bool batched = x.rank() == 3;
  if (!batched) detail::require_rank(x, 2, "causal_dilated_conv1d input");
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t c_in = x.dim(batched ? 1 : 0), time = x.dim(batched ? 2 : 1);
  const std::size_t c_out = kernel.dim(0), width = kernel.dim(2);
  if (width < 1) throw std::invalid_argument("causal_dilated_conv1d: kernel width must be >= 1");
  if (kernel.dim(1) != c_in) {
    throw DimensionError("causal_dilated_conv1d: kernel " + to_string(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(1)) + " input channels, input " + to_string(x.shape()) + " has " +
                         std::to_string(c_in));
  }
  std::vector<double> out(batch * c_out * time, 0.0);
  const double* xv = x.storage().data();
  const double* kv = kernel.storage().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t i = 0; i < c_in; ++i)
        for (std::size_t j = 0; j < width; ++j) {
          const double w = kv[(o * c_in + i) * width + j];
          const std::size_t lag = (width - 1 - j) * dilation;
          for (std::size_t t = lag; t < time; ++t)
            out[(b * c_out + o) * time + t] += w * xv[(b * c_in + i) * time + t - lag];
        }
  Shape shape = batched ? Shape{batch, c_out, time} : Shape{c_out, time};
  return Tape::record(
      Tensor::unchecked(std::move(shape), std::move(out)), {&x, &kernel},
      [xs = x.storage(), ks = kernel.storage(), batch, c_in, c_out, time, width, dilation](
          std::span<const double> g, std::span<std::vector<double>* const> in) {
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < c_out; ++o)
            for (std::size_t i = 0; i < c_in; ++i)
              for (std::size_t j = 0; j < width; ++j) {
                const std::size_t kidx = (o * c_in + i) * width + j;
                const std::size_t lag = (width - 1 - j) * dilation;
                double gk = 0.0;
                for (std::size_t t = lag; t < time; ++t) {
                  const double go = g[(b * c_out + o) * time + t];
                  const std::size_t xidx = (b * c_in + i) * time + t - lag;
                  gk += go * xs[xidx];
                  if (in[0]) (*in[0])[xidx] += go * ks[kidx];
                }
                if (in[1]) (*in[1])[kidx] += gk;
              }
      });
}

/// Inverted dropout: in training mode each element is zeroed with
/// probability p and survivors are scaled by 1/(1-p); otherwise identity.
inline Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
    out[i] = x[i] * mask[i];
  }
  return Tape::record(Tensor::unchecked(x.shape(), std::move(out)), {&x},
                      [m = std::move(mask)](std::span<const double> g, std::span<std::vector<double>* const> in) {
                        for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * m[i];
                      });
}

}  // namespace simtrain
