#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace simtrain {

/// Row-major n x m block of samples (one row per time step).
struct Series {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Series() = default;
  Series(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  Series(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != rows * cols) throw std::invalid_argument("series value count does not match shape");
  }

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }

  /// Rows [begin, end).
  Series slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows) throw std::out_of_range("series slice out of range");
    return Series(end - begin, cols,
                  std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                                      values.begin() + static_cast<std::ptrdiff_t>(end * cols)));
  }

  void append(const Series& other) {
    if (rows == 0 && cols == 0) cols = other.cols;
    if (other.cols != cols) throw std::invalid_argument("series append: column count differs");
    values.insert(values.end(), other.values.begin(), other.values.end());
    rows += other.rows;
  }

  bool operator==(const Series&) const = default;
};

/// Uniformly sampled input/output record of one experiment.
struct Trajectory {
  double sampling_time = 1.0;
  Series inputs;   // n x input_dim
  Series outputs;  // n x output_dim
  std::string id;

  std::size_t size() const noexcept { return outputs.rows; }
  std::size_t input_dim() const noexcept { return inputs.cols; }
  std::size_t output_dim() const noexcept { return outputs.cols; }

  void validate() const {
    auto fail = [&](const std::string& m) { throw std::invalid_argument("trajectory '" + id + "': " + m); };
    if (!(sampling_time > 0.0) || !std::isfinite(sampling_time)) fail("sampling time must be positive");
    if (inputs.rows != outputs.rows) fail("inputs and outputs differ in length");
    if (outputs.rows < 2) fail("needs at least 2 samples");
    for (std::size_t i = 0; i < inputs.values.size(); ++i)
      if (!std::isfinite(inputs.values[i])) fail("non-finite input at row " + std::to_string(i / inputs.cols));
    for (std::size_t i = 0; i < outputs.values.size(); ++i)
      if (!std::isfinite(outputs.values[i])) fail("non-finite output at row " + std::to_string(i / outputs.cols));
  }

  Trajectory slice(std::size_t begin, std::size_t end) const {
    return Trajectory{sampling_time, inputs.slice(begin, end), outputs.slice(begin, end), id};
  }

  bool operator==(const Trajectory&) const = default;
};

enum class DatasetRole { train, test };

inline std::string_view to_string(DatasetRole r) { return r == DatasetRole::train ? "train" : "test"; }

inline DatasetRole parse_role(std::string_view s) {
  if (s == "train") return DatasetRole::train;
  if (s == "test") return DatasetRole::test;
  throw std::invalid_argument("unknown dataset role '" + std::string(s) + "' (valid: train, test)");
}

struct Dataset {
  std::vector<Trajectory> trajectories;
  DatasetRole role = DatasetRole::train;
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;
  std::vector<std::string> input_units;
  std::vector<std::string> output_units;

  std::size_t input_dim() const { return input_names.size(); }
  std::size_t output_dim() const { return output_names.size(); }
  double sampling_time() const { return trajectories.empty() ? 0.0 : trajectories.front().sampling_time; }

  void validate() const {
    for (const auto& t : trajectories) {
      t.validate();
      if (t.input_dim() != input_dim() || t.output_dim() != output_dim()) {
        throw std::invalid_argument("trajectory '" + t.id + "' has dimensions that differ from the dataset channels");
      }
      if (t.sampling_time != sampling_time()) {
        throw std::invalid_argument("trajectory '" + t.id + "' has a different sampling time");
      }
    }
  }

  /// Same channels and role, chosen trajectories only.
  Dataset subset(const std::vector<std::size_t>& indices) const {
    Dataset d = *this;
    d.trajectories.clear();
    for (auto i : indices) d.trajectories.push_back(trajectories.at(i));
    return d;
  }

  bool operator==(const Dataset&) const = default;
};

}  // namespace simtrain
