#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace simtrain {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for misuse of the gradient tape (non-scalar loss, foreign tape...).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tape;

/// Dense row-major array of doubles. A tensor may be bound to a Tape, in
/// which case every operation it takes part in is recorded for backward().
/// Unbound tensors are plain values.
class Tensor {
 public:
  Tensor() = default;

  /// Builds a tensor from external data; rejects size mismatch and non-finite
  /// entries.
  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_numel(shape_) != values_.size()) {
      throw DimensionError("tensor shape " + to_string(shape_) + " needs " + std::to_string(shape_numel(shape_)) +
                           " values, got " + std::to_string(values_.size()));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        throw std::invalid_argument("non-finite tensor entry at flat index " + std::to_string(i));
      }
    }
  }

  static Tensor zeros(Shape shape) {
    const auto n = shape_numel(shape);
    return unchecked(std::move(shape), std::vector<double>(n, 0.0));
  }
  static Tensor full(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return unchecked(std::move(shape), std::vector<double>(n, value));
  }
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor vector(std::vector<double> values) {
    const auto n = values.size();
    return Tensor({n}, std::move(values));
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(v));
  }
  static Tensor identity(std::size_t n) {
    auto t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.values_[i * n + i] = 1.0;
    return t;
  }

  /// Internal constructor: no validation (op results may legitimately carry
  /// NaN so that divergence is detected downstream instead of thrown here).
  static Tensor unchecked(Shape shape, std::vector<double> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.values_ = std::move(values);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }

  /// Mutable access is only allowed on tensors that are not recorded on a
  /// tape; editing a recorded value would silently corrupt backward().
  std::vector<double>& mutable_values() {
    if (tape_ != nullptr) throw TapeError("cannot mutate a tensor recorded on a tape");
    return values_;
  }

  double item() const {
    if (values_.size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape_));
    return values_[0];
  }
  double operator[](std::size_t i) const { return values_[i]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * shape_.at(1) + j]; }

  bool requires_grad() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::optional<std::size_t> node() const noexcept {
    return tape_ ? std::optional<std::size_t>(node_) : std::nullopt;
  }

  /// Same values, no tape binding.
  Tensor detach() const { return unchecked(shape_, values_); }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    if (tape_) throw TapeError("reshape of a recorded tensor is not supported");
    return unchecked(std::move(shape), values_);
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  friend class Tape;

  Shape shape_{0};
  std::vector<double> values_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Gradient buffers produced by Tape::backward, indexed by tape node.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<std::vector<double>> by_node, std::vector<std::size_t> sizes)
      : by_node_(std::move(by_node)), sizes_(std::move(sizes)) {}

  /// dLoss/dt for a tensor recorded on the tape. Nodes the loss does not
  /// depend on get an all-zero gradient.
  std::vector<double> of(const Tensor& t) const {
    const auto n = t.node();
    if (!n) throw TapeError("gradient requested for a tensor that is not on the tape");
    if (*n >= by_node_.size()) throw TapeError("gradient requested for a node from another tape");
    if (by_node_[*n].empty()) return std::vector<double>(sizes_[*n], 0.0);
    return by_node_[*n];
  }

 private:
  std::vector<std::vector<double>> by_node_;
  std::vector<std::size_t> sizes_;
};

/// Append-only record of operations for one forward pass (define-by-run).
/// Tensors produced while recording hold a raw pointer to the tape, so the
/// tape must outlive them when they are used in further operations.
class Tape {
 public:
  /// Receives the output gradient and one pointer per op input into which the
  /// pullback accumulates; the pointer is null for inputs that are constant.
  using Pullback = std::function<void(std::span<const double>, std::span<std::vector<double>* const>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf whose gradient will be reported by backward().
  Tensor watch(const Tensor& t) {
    if (t.tape_ != nullptr && t.tape_ != this) throw TapeError("tensor already recorded on another tape");
    Tensor out = Tensor::unchecked(t.shape_, t.values_);
    out.tape_ = this;
    out.node_ = push(out.numel(), {}, nullptr);
    return out;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Every reachable node is visited once,
  /// in reverse recording order; gradients from multiple uses accumulate.
  Gradients backward(const Tensor& loss) const {
    if (loss.numel() != 1) throw TapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    if (loss.tape_ != this) throw TapeError("loss is not recorded on this tape");

    std::vector<std::vector<double>> grads(nodes_.size());
    std::vector<std::size_t> sizes(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) sizes[i] = nodes_[i].numel;
    grads[loss.node_].assign(1, 1.0);

    std::vector<std::vector<double>*> in_ptrs;
    for (std::size_t i = loss.node_ + 1; i-- > 0;) {
      const Node& node = nodes_[i];
      if (grads[i].empty() || !node.pullback) continue;
      in_ptrs.assign(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const auto in = node.inputs[k];
        if (in == kConstant) continue;
        if (grads[in].empty()) grads[in].assign(nodes_[in].numel, 0.0);
        in_ptrs[k] = &grads[in];
      }
      node.pullback(grads[i], in_ptrs);
    }
    return Gradients(std::move(grads), std::move(sizes));
  }

  /// Records an op result. Returns `result` bound to the tape when any input
  /// is recorded, otherwise returns it untouched.
  static Tensor record(Tensor result, std::initializer_list<const Tensor*> inputs, Pullback pullback) {
    return record(std::move(result), std::vector<const Tensor*>(inputs), std::move(pullback));
  }

  static Tensor record(Tensor result, const std::vector<const Tensor*>& inputs, Pullback pullback) {
    Tape* tape = nullptr;
    for (const Tensor* in : inputs) {
      if (in->tape_ == nullptr) continue;
      if (tape != nullptr && in->tape_ != tape) throw TapeError("operands are recorded on different tapes");
      tape = in->tape_;
    }
    if (tape == nullptr) return result;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Tensor* in : inputs) ids.push_back(in->tape_ ? in->node_ : kConstant);
    result.tape_ = tape;
    result.node_ = tape->push(result.numel(), std::move(ids), std::move(pullback));
    return result;
  }

 private:
  static constexpr std::size_t kConstant = static_cast<std::size_t>(-1);

  struct Node {
    std::size_t numel;
    std::vector<std::size_t> inputs;  // always earlier positions, or kConstant
    Pullback pullback;
  };

  std::size_t push(std::size_t numel, std::vector<std::size_t> inputs, Pullback pullback) {
    nodes_.push_back(Node{numel, std::move(inputs), std::move(pullback)});
    return nodes_.size() - 1;
  }

  std::vector<Node> nodes_;
};

}  // namespace simtrain
