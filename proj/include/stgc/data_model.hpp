#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stgc/error.hpp"

namespace stgc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Text helpers shared by every CSV reader/writer in the library.
// ---------------------------------------------------------------------------
namespace csv {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Splits one CSV record. Double-quoted fields may contain commas; "" escapes a quote.
inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open input file: " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open output file: " + path);
  return out;
}

// ISO-8601-ish: starts with a digit and carries a date or time separator.
inline bool looks_like_timestamp(std::string_view s) {
  s = trim(s);
  if (s.empty() || !(s.front() >= '0' && s.front() <= '9')) return false;
  if (parse_double(s)) return false;
  return s.find('-') != std::string_view::npos || s.find(':') != std::string_view::npos ||
         s.find('T') != std::string_view::npos;
}

}  // namespace csv

// ---------------------------------------------------------------------------
// TimeSeriesMatrix
// ---------------------------------------------------------------------------

/// N sensors x T timesteps of speed readings on a uniform sampling grid.
/// A reading of 0.0 at load time marks a missing observation; the validity mask
/// is fixed at construction and survives normalization.
class TimeSeriesMatrix {
 public:
  TimeSeriesMatrix(Matrix values, std::vector<std::string> sensor_ids, double sampling_interval_minutes,
                   std::optional<std::string> start_time = std::nullopt)
      : values_(std::move(values)),
        valid_(values_.array() > 0.0),
        sensor_ids_(std::move(sensor_ids)),
        interval_(sampling_interval_minutes),
        start_time_(std::move(start_time)) {
    validate();
  }

  TimeSeriesMatrix(Matrix values, Mask valid, std::vector<std::string> sensor_ids,
                   double sampling_interval_minutes, std::optional<std::string> start_time = std::nullopt)
      : values_(std::move(values)),
        valid_(std::move(valid)),
        sensor_ids_(std::move(sensor_ids)),
        interval_(sampling_interval_minutes),
        start_time_(std::move(start_time)) {
    validate();
  }

  std::size_t sensors() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t steps() const { return static_cast<std::size_t>(values_.cols()); }
  const Matrix& values() const { return values_; }
  const Mask& valid() const { return valid_; }
  const std::vector<std::string>& sensor_ids() const { return sensor_ids_; }
  double sampling_interval() const { return interval_; }
  const std::optional<std::string>& start_time() const { return start_time_; }

  Vector series(std::size_t sensor) const { return values_.row(static_cast<Eigen::Index>(sensor)).transpose(); }

  /// Columns [begin, end) as a new matrix with the same sensors and interval.
  TimeSeriesMatrix slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > steps()) throw InputError("invalid time slice");
    auto b = static_cast<Eigen::Index>(begin);
    auto w = static_cast<Eigen::Index>(end - begin);
    return TimeSeriesMatrix(values_.middleCols(b, w), valid_.middleCols(b, w), sensor_ids_, interval_);
  }

  TimeSeriesMatrix with_values(Matrix values) const {
    return TimeSeriesMatrix(std::move(values), valid_, sensor_ids_, interval_, start_time_);
  }

 private:
  void validate() const {
    if (values_.rows() < 2 || values_.cols() < 1)
      throw InputError("time series matrix needs at least 2 sensors and 1 timestep");
    if (static_cast<std::size_t>(values_.rows()) != sensor_ids_.size())
      throw InputError("sensor id count does not match matrix rows");
    if (valid_.rows() != values_.rows() || valid_.cols() != values_.cols())
      throw InputError("validity mask shape does not match values");
    if (!(interval_ > 0.0)) throw InputError("sampling interval must be positive");
    std::set<std::string> seen;
    for (const auto& id : sensor_ids_)
      if (!seen.insert(id).second) throw InputError("duplicate sensor id: " + id);
  }

  Matrix values_;
  Mask valid_;
  std::vector<std::string> sensor_ids_;
  double interval_;
  std::optional<std::string> start_time_;
};

/// Reads a speed CSV: header of sensor ids, one row per timestep. A leading
/// ISO-8601 timestamp column is detected from the first data row and ignored.
inline TimeSeriesMatrix parse_speed_csv(std::istream& in, const std::string& name,
                                        double sampling_interval_minutes) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(name, 1, "empty file, expected header of sensor ids");
  ++line_no;
  auto header = csv::split(line);

  std::vector<std::vector<double>> rows;
  bool has_timestamp = false;
  std::optional<std::string> start_time;
  std::size_t width = 0;
  std::size_t data_row = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    ++data_row;
    auto cells = csv::split(line);
    if (data_row == 1) {
      has_timestamp = csv::trim(header.front()).empty() || csv::looks_like_timestamp(cells.front());
      width = header.size() - (has_timestamp ? 1 : 0);
      if (width < 1) throw ParseError(name, 1, "header has no sensor columns");
      if (has_timestamp) start_time = cells.front();
    }
    if (cells.size() != header.size())
      throw ParseError(name, line_no,
                       "ragged row " + std::to_string(data_row) + ": expected " + std::to_string(header.size()) +
                           " cells, found " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(width);
    for (std::size_t c = has_timestamp ? 1 : 0; c < cells.size(); ++c) {
      auto v = csv::parse_double(cells[c]);
      if (!v)
        throw ParseError(name, line_no,
                         "non-numeric cell '" + cells[c] + "' in row " + std::to_string(data_row) + ", column " +
                             std::to_string(c + 1));
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw ParseError(name, line_no, "need at least 2 data rows");

  std::vector<std::string> ids(header.begin() + (has_timestamp ? 1 : 0), header.end());
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (id.empty()) throw ParseError(name, 1, "empty sensor id in header");
    if (!seen.insert(id).second) throw ParseError(name, 1, "duplicate sensor id '" + id + "'");
  }

  Matrix values(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t n = 0; n < width; ++n)
      values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t)) = rows[t][n];
  try {
    return TimeSeriesMatrix(std::move(values), std::move(ids), sampling_interval_minutes, start_time);
  } catch (const InputError& e) {
    throw InputError(name + ": " + e.what());
  }
}

inline TimeSeriesMatrix load_speed_matrix(const std::string& path, double sampling_interval_minutes) {
  auto in = csv::open_input(path);
  return parse_speed_csv(in, path, sampling_interval_minutes);
}

inline void write_speed_csv(const TimeSeriesMatrix& m, std::ostream& out) {
  const auto& ids = m.sensor_ids();
  for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? "," : "") << ids[i];
  out << '\n';
  for (Eigen::Index t = 0; t < m.values().cols(); ++t) {
    for (Eigen::Index n = 0; n < m.values().rows(); ++n)
      out << (n ? "," : "") << csv::format_double(m.values()(n, t));
    out << '\n';
  }
}

inline void write_speed_csv(const TimeSeriesMatrix& m, const std::string& path) {
  auto out = csv::open_output(path);
  write_speed_csv(m, out);
}

// ---------------------------------------------------------------------------
// DistanceTable
// ---------------------------------------------------------------------------

struct DistanceRecord {
  std::string from;
  std::string to;
  double cost = 0.0;

  friend bool operator==(const DistanceRecord&, const DistanceRecord&) = default;
};

/// Directed (from, to, cost) road records; one record per ordered pair, no self-records.
struct DistanceTable {
  std::vector<DistanceRecord> records;
};

/// Collapses duplicates to the minimum cost and drops self-records. Output is
/// sorted by (from, to).
inline DistanceTable make_distance_table(const std::vector<DistanceRecord>& raw) {
  std::map<std::pair<std::string, std::string>, double> best;
  for (const auto& r : raw) {
    if (!(r.cost >= 0.0) || !std::isfinite(r.cost))
      throw InputError("invalid cost " + csv::format_double(r.cost) + " for edge " + r.from + " -> " + r.to);
    if (r.from == r.to) continue;
    auto [it, inserted] = best.try_emplace({r.from, r.to}, r.cost);
    if (!inserted) it->second = std::min(it->second, r.cost);
  }
  DistanceTable table;
  table.records.reserve(best.size());
  for (const auto& [key, cost] : best) table.records.push_back({key.first, key.second, cost});
  return table;
}

inline DistanceTable parse_distance_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name, 1, "empty file, expected header from,to,cost");
  auto header = csv::split(line);
  if (header != std::vector<std::string>{"from", "to", "cost"})
    throw ParseError(name, 1, "unexpected columns '" + std::string(csv::trim(line)) + "', expected from,to,cost");

  std::vector<DistanceRecord> raw;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    auto cells = csv::split(line);
    if (cells.size() != 3) throw ParseError(name, line_no, "expected 3 cells, found " + std::to_string(cells.size()));
    auto cost = csv::parse_double(cells[2]);
    if (!cost) throw ParseError(name, line_no, "non-numeric cost '" + cells[2] + "'");
    if (*cost < 0.0 || !std::isfinite(*cost))
      throw ParseError(name, line_no, "cost must be finite and non-negative, got " + cells[2]);
    raw.push_back({cells[0], cells[1], *cost});
  }
  return make_distance_table(raw);
}

inline DistanceTable load_distance_table(const std::string& path) {
  auto in = csv::open_input(path);
  return parse_distance_csv(in, path);
}

inline void write_distance_csv(const DistanceTable& table, std::ostream& out) {
  out << "from,to,cost\n";
  for (const auto& r : table.records) out << r.from << ',' << r.to << ',' << csv::format_double(r.cost) << '\n';
}

inline void write_distance_csv(const DistanceTable& table, const std::string& path) {
  auto out = csv::open_output(path);
  write_distance_csv(table, out);
}

// ---------------------------------------------------------------------------
// Splitting and normalization
// ---------------------------------------------------------------------------

struct DatasetSplit {
  TimeSeriesMatrix train;
  TimeSeriesMatrix val;
  TimeSeriesMatrix test;
  std::array<double, 3> ratios;
};

/// Boundaries are floor(cumulative ratio * T). A split that would receive
/// fewer than one timestep is an error.
inline std::array<std::size_t, 3> split_lengths(std::size_t steps, const std::array<double, 3>& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw InputError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InputError("split ratios must sum to 1");
  // The slack absorbs representation error such as (0.7 + 0.1) * 10 = 7.999...
  auto boundary = [&](double cumulative) {
    auto b = static_cast<std::size_t>(std::floor(cumulative * static_cast<double>(steps) + 1e-9));
    return std::min(b, steps);
  };
  std::size_t b1 = boundary(ratios[0]);
  std::size_t b2 = boundary(ratios[0] + ratios[1]);
  std::array<std::size_t, 3> lengths{b1, b2 - b1, steps - b2};
  for (auto len : lengths)
    if (len == 0) throw InputError("degenerate split: a partition would receive 0 timesteps");
  return lengths;
}

inline DatasetSplit chronological_split(const TimeSeriesMatrix& m, const std::array<double, 3>& ratios) {
  auto len = split_lengths(m.steps(), ratios);
  return DatasetSplit{m.slice(0, len[0]), m.slice(len[0], len[0] + len[1]),
                      m.slice(len[0] + len[1], m.steps()), ratios};
}

enum class NormMode { per_sensor, global };

/// Z-score statistics. `mean` and `std` hold one entry per sensor; in global
/// mode all entries are equal.
struct NormStats {
  Vector mean;
  Vector std;
  NormMode mode = NormMode::per_sensor;
};

/// Statistics over valid entries of the given (training) matrix.
inline NormStats compute_norm_stats(const TimeSeriesMatrix& train, NormMode mode = NormMode::per_sensor) {
  const auto n = static_cast<Eigen::Index>(train.sensors());
  const auto& v = train.values();
  const auto& ok = train.valid();
  NormStats stats{Vector(n), Vector(n), mode};

  auto moments = [&](Eigen::Index r0, Eigen::Index r1) {
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index r = r0; r < r1; ++r)
      for (Eigen::Index t = 0; t < v.cols(); ++t)
        if (ok(r, t)) {
          sum += v(r, t);
          ++count;
        }
    if (count == 0) return std::pair{0.0, 0.0};
    double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (Eigen::Index r = r0; r < r1; ++r)
      for (Eigen::Index t = 0; t < v.cols(); ++t)
        if (ok(r, t)) ss += (v(r, t) - mean) * (v(r, t) - mean);
    return std::pair{mean, std::sqrt(ss / static_cast<double>(count))};
  };

  if (mode == NormMode::global) {
    auto [mu, sd] = moments(0, n);
    stats.mean.setConstant(mu);
    stats.std.setConstant(sd);
  } else {
    for (Eigen::Index r = 0; r < n; ++r) std::tie(stats.mean(r), stats.std(r)) = moments(r, r + 1);
  }
  return stats;
}

inline void check_norm_stats(const NormStats& stats, const TimeSeriesMatrix& m) {
  if (static_cast<std::size_t>(stats.mean.size()) != m.sensors() ||
      static_cast<std::size_t>(stats.std.size()) != m.sensors())
    throw InputError("normalization statistics do not match sensor count");
  for (Eigen::Index r = 0; r < stats.std.size(); ++r)
    if (!(stats.std(r) > 0.0))
      throw ComputeError("zero variance for sensor '" + m.sensor_ids()[static_cast<std::size_t>(r)] +
                         "'; exclude constant series before normalizing");
}

/// (x - mean) / std on valid entries; invalid entries become 0.
inline TimeSeriesMatrix zscore(const TimeSeriesMatrix& m, const NormStats& stats) {
  check_norm_stats(stats, m);
  Matrix out = ((m.values().colwise() - stats.mean).array().colwise() / stats.std.array()).matrix();
  out = m.valid().select(out, 0.0);
  return m.with_values(std::move(out));
}

/// Inverse of zscore; invalid entries return to the 0.0 sentinel.
inline TimeSeriesMatrix inverse_zscore(const TimeSeriesMatrix& m, const NormStats& stats) {
  check_norm_stats(stats, m);
  Matrix out = ((m.values().array().colwise() * stats.std.array()).matrix().colwise() + stats.mean);
  out = m.valid().select(out, 0.0);
  return m.with_values(std::move(out));
}

}  // namespace stgc
