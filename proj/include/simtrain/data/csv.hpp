#pragma once

#include <charconv>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "simtrain/data/trajectory.hpp"

namespace simtrain {

/// Column layout of a trajectory CSV. Files always start with a `t` column,
/// then inputs, then outputs. An optional segment column (placed right after
/// `t`) splits one file into several trajectories.
struct CsvSchema {
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;
  std::optional<std::string> segment_column;
  /// When set, used instead of the sampling time inferred from `t`.
  std::optional<double> sampling_time;
};

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal string that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format double");
  return std::string(buf, end);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    // from_chars rejects "nan"/"inf" spellings only in some forms; handle them
    // explicitly so they reach the finiteness check with a location.
    if (s == "nan" || s == "NaN" || s == "NAN") return std::nan("");
    if (s == "inf" || s == "Inf") return HUGE_VAL;
    if (s == "-inf" || s == "-Inf") return -HUGE_VAL;
    return std::nullopt;
  }
  return v;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.remove_suffix(1);
    while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
  }
  return out;
}

}  // namespace detail

/// Writes `t,<u-names>,<y-names>` followed by one row per sample, with
/// t = i * Ts and every value in shortest round-trip form.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const std::vector<std::string>& input_names,
                                 const std::vector<std::string>& output_names) {
  if (input_names.size() != traj.input_dim() || output_names.size() != traj.output_dim()) {
    throw std::invalid_argument("channel names do not match trajectory dimensions");
  }
  os << 't';
  for (const auto& n : input_names) os << ',' << n;
  for (const auto& n : output_names) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < traj.size(); ++i) {
    os << format_double(static_cast<double>(i) * traj.sampling_time);
    for (double v : traj.inputs.row(i)) os << ',' << format_double(v);
    for (double v : traj.outputs.row(i)) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                                 const std::vector<std::string>& input_names,
                                 const std::vector<std::string>& output_names) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_trajectory_csv(os, traj, input_names, output_names);
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

/// Parses trajectory CSV text. `source` only labels error messages and ids.
/// Rows are reported 1-based counting data rows (the header is row 0, so
/// data row r is file line r + 1).
inline std::vector<Trajectory> parse_trajectory_csv(std::istream& is, const CsvSchema& schema,
                                                    const std::string& source = "<csv>") {
  auto where = [&](std::size_t row, std::string_view col) {
    return source + ": data row " + std::to_string(row) + " (line " + std::to_string(row + 1) + "), column '" +
           std::string(col) + "'";
  };
  std::string line;
  if (!std::getline(is, line)) throw CsvError(source + ": empty file");
  const auto header = detail::split_commas(line);

  std::vector<std::string> expected{"t"};
  if (schema.segment_column) expected.push_back(*schema.segment_column);
  expected.insert(expected.end(), schema.input_names.begin(), schema.input_names.end());
  expected.insert(expected.end(), schema.output_names.begin(), schema.output_names.end());
  for (std::size_t c = 0; c < expected.size(); ++c) {
    if (c >= header.size()) throw CsvError(source + ": missing column '" + expected[c] + "' in header");
    if (header[c] != expected[c]) {
      throw CsvError(source + ": header column " + std::to_string(c + 1) + " is '" + std::string(header[c]) +
                     "', expected '" + expected[c] + "'");
    }
  }
  if (header.size() != expected.size()) {
    throw CsvError(source + ": unexpected extra column '" + std::string(header[expected.size()]) + "'");
  }

  const std::size_t n_in = schema.input_names.size(), n_out = schema.output_names.size();
  const std::size_t first_value = schema.segment_column ? 2 : 1;

  struct Pending {
    std::string segment;
    std::vector<double> t, u, y;
  };
  std::vector<Pending> segments;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto fields = detail::split_commas(line);
    if (fields.size() != expected.size()) {
      throw CsvError(source + ": data row " + std::to_string(row) + " (line " + std::to_string(row + 1) + ") has " +
                     std::to_string(fields.size()) + " fields, expected " + std::to_string(expected.size()));
    }
    std::string seg = schema.segment_column ? std::string(fields[1]) : std::string();
    if (segments.empty() || segments.back().segment != seg) segments.push_back(Pending{seg, {}, {}, {}});
    auto& cur = segments.back();
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == 1 && schema.segment_column) continue;
      const auto v = parse_double(fields[c]);
      if (!v) throw CsvError(where(row, expected[c]) + ": cannot parse '" + std::string(fields[c]) + "'");
      if (!std::isfinite(*v)) throw CsvError(where(row, expected[c]) + ": non-finite value");
      if (c == 0) {
        cur.t.push_back(*v);
      } else if (c < first_value + n_in) {
        cur.u.push_back(*v);
      } else {
        cur.y.push_back(*v);
      }
    }
  }
  if (segments.empty()) throw CsvError(source + ": no data rows");

  std::vector<Trajectory> out;
  for (auto& s : segments) {
    const std::size_t n = s.t.size();
    if (n < 2) throw CsvError(source + ": trajectory '" + s.segment + "' has fewer than 2 samples");
    const double ts = schema.sampling_time.value_or(s.t[1] - s.t[0]);
    if (!(ts > 0.0)) throw CsvError(source + ": time column is not increasing");
    for (std::size_t i = 1; i < n; ++i) {
      const double expect = s.t[0] + static_cast<double>(i) * ts;
      if (std::abs(s.t[i] - expect) > 1e-6 * ts + 1e-12 * std::abs(expect)) {
        throw CsvError(source + ": non-uniform sampling at time " + format_double(s.t[i]) + " (sample " +
                       std::to_string(i) + " of trajectory '" + s.segment + "')");
      }
    }
    Trajectory t;
    t.sampling_time = ts;
    t.inputs = Series(n, n_in, std::move(s.u));
    t.outputs = Series(n, n_out, std::move(s.y));
    t.id = schema.segment_column ? source + ":" + s.segment : source;
    out.push_back(std::move(t));
  }
  return out;
}

/// One file, one trajectory per file or per segment value.
inline Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                        DatasetRole role = DatasetRole::train) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CsvError("cannot open '" + path.string() + "'");
  Dataset d;
  d.role = role;
  d.input_names = schema.input_names;
  d.output_names = schema.output_names;
  d.input_units.assign(d.input_names.size(), "");
  d.output_units.assign(d.output_names.size(), "");
  d.trajectories = parse_trajectory_csv(is, schema, path.stem().string());
  d.validate();
  return d;
}

/// Dataset directory layout: `manifest.json` plus member CSV files.
///
/// manifest.json:
///   { "schema_version": 1, "sampling_time": Ts,
///     "input_names": [...], "output_names": [...],
///     "input_units": [...], "output_units": [...],
///     "files": [ {"path": "train/traj_000.csv", "role": "train", "id": "train_000"}, ... ],
///     "provenance": { ... free-form ... } }
inline constexpr int kDatasetManifestVersion = 1;

inline void write_dataset_dir(const std::filesystem::path& dir, const std::vector<const Dataset*>& parts,
                              const nlohmann::json& provenance = nlohmann::json::object()) {
  namespace fs = std::filesystem;
  if (parts.empty()) throw std::invalid_argument("nothing to write");
  const Dataset& ref = *parts.front();
  fs::create_directories(dir);
  nlohmann::json files = nlohmann::json::array();
  for (const Dataset* d : parts) {
    d->validate();
    if (d->input_names != ref.input_names || d->output_names != ref.output_names) {
      throw std::invalid_argument("dataset parts disagree on channels");
    }
    const std::string role(to_string(d->role));
    fs::create_directories(dir / role);
    for (std::size_t i = 0; i < d->trajectories.size(); ++i) {
      const auto& t = d->trajectories[i];
      char name[64];
      std::snprintf(name, sizeof(name), "traj_%04zu.csv", i);
      const fs::path rel = fs::path(role) / name;
      write_trajectory_csv(dir / rel, t, d->input_names, d->output_names);
      files.push_back({{"path", rel.generic_string()}, {"role", role}, {"id", t.id}});
    }
  }
  nlohmann::json m = {{"schema_version", kDatasetManifestVersion},
                      {"sampling_time", ref.sampling_time()},
                      {"input_names", ref.input_names},
                      {"output_names", ref.output_names},
                      {"input_units", ref.input_units},
                      {"output_units", ref.output_units},
                      {"files", files},
                      {"provenance", provenance}};
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest in '" + dir.string() + "'");
  os << m.dump(2) << '\n';
}

inline nlohmann::json read_dataset_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json", std::ios::binary);
  if (!is) throw CsvError("no manifest.json in '" + dir.string() + "'");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw CsvError("malformed manifest in '" + dir.string() + "': " + e.what());
  }
  if (m.value("schema_version", 0) != kDatasetManifestVersion) {
    throw CsvError("unsupported dataset manifest version in '" + dir.string() + "'");
  }
  return m;
}

/// Loads every file of one role listed in the directory manifest.
inline Dataset load_dataset_dir(const std::filesystem::path& dir, DatasetRole role) {
  const auto m = read_dataset_manifest(dir);
  Dataset d;
  d.role = role;
  d.input_names = m.at("input_names").get<std::vector<std::string>>();
  d.output_names = m.at("output_names").get<std::vector<std::string>>();
  d.input_units = m.value("input_units", std::vector<std::string>(d.input_names.size()));
  d.output_units = m.value("output_units", std::vector<std::string>(d.output_names.size()));
  CsvSchema schema{d.input_names, d.output_names, std::nullopt, m.at("sampling_time").get<double>()};
  for (const auto& f : m.at("files")) {
    if (f.at("role").get<std::string>() != to_string(role)) continue;
    const auto path = dir / f.at("path").get<std::string>();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CsvError("manifest lists missing file '" + path.string() + "'");
    auto trajs = parse_trajectory_csv(is, schema, f.at("path").get<std::string>());
    for (auto& t : trajs) {
      t.id = f.value("id", t.id);
      d.trajectories.push_back(std::move(t));
    }
  }
  if (d.trajectories.empty()) {
    throw CsvError("dataset '" + dir.string() + "' has no " + std::string(to_string(role)) + " trajectories");
  }
  d.validate();
  return d;
}

}  // namespace simtrain
