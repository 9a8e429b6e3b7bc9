#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "stgc/data_model.hpp"
#include "stgc/error.hpp"
#include "stgc/parallel.hpp"

namespace stgc {

using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr int kUndefinedLag = -1;
inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct RoadEdge {
  std::size_t from;
  std::size_t to;
  double cost;
};

/// Directed road topology over the sensors of a TimeSeriesMatrix.
struct RoadGraph {
  std::vector<std::string> node_ids;
  std::vector<RoadEdge> edges;
  std::size_t dropped_records = 0;  // table records naming unknown sensors

  std::size_t size() const { return node_ids.size(); }
};

inline RoadGraph build_road_graph(const DistanceTable& table, const std::vector<std::string>& sensor_ids) {
  if (table.records.empty()) throw InputError("distance table has no edges");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < sensor_ids.size(); ++i) index.emplace(sensor_ids[i], i);

  RoadGraph g{sensor_ids, {}, 0};
  for (const auto& r : table.records) {
    auto a = index.find(r.from);
    auto b = index.find(r.to);
    if (a == index.end() || b == index.end()) {
      ++g.dropped_records;
      continue;
    }
    if (r.cost < 0.0) throw InputError("negative edge cost " + r.from + " -> " + r.to);
    if (a->second != b->second) g.edges.push_back({a->second, b->second, r.cost});
  }
  if (g.edges.empty()) throw InputError("no distance records match the sensor set");
  return g;
}

/// dist(i, j): minimum directed path cost; +inf when unreachable, 0 on the diagonal.
struct CostMatrix {
  Matrix dist;

  std::size_t size() const { return static_cast<std::size_t>(dist.rows()); }
};

/// Label-setting shortest paths from one source (binary heap, lazy deletion).
inline Vector single_source_costs(const std::vector<std::vector<std::pair<std::size_t, double>>>& adjacency,
                                  std::size_t source) {
  const std::size_t n = adjacency.size();
  Vector dist = Vector::Constant(static_cast<Eigen::Index>(n), kUnreachable);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist(static_cast<Eigen::Index>(source)) = 0.0;
  heap.emplace(0.0, source);
  std::vector<bool> settled(n, false);
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (settled[u]) continue;
    settled[u] = true;
    for (auto [v, w] : adjacency[u]) {
      double nd = d + w;
      auto& dv = dist(static_cast<Eigen::Index>(v));
      if (nd < dv) {
        dv = nd;
        heap.emplace(nd, v);
      }
    }
  }
  return dist;
}

inline CostMatrix all_pairs_shortest_costs(const RoadGraph& g, std::size_t workers = 1) {
  const std::size_t n = g.size();
  std::vector<std::vector<std::pair<std::size_t, double>>> adjacency(n);
  for (const auto& e : g.edges) {
    if (!(e.cost >= 0.0)) throw InputError("shortest paths require non-negative edge costs");
    adjacency[e.from].emplace_back(e.to, e.cost);
  }
  CostMatrix out{Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};
  parallel_for(n, workers, [&](std::size_t s) {
    out.dist.row(static_cast<Eigen::Index>(s)) = single_source_costs(adjacency, s).transpose();
  });
  return out;
}

/// Direct edge costs only (no path composition); used for the distance-kernel
/// baseline, which works from the recorded distances.
inline CostMatrix direct_costs(const RoadGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  CostMatrix out{Matrix::Constant(n, n, kUnreachable)};
  out.dist.diagonal().setZero();
  for (const auto& e : g.edges) {
    auto& d = out.dist(static_cast<Eigen::Index>(e.from), static_cast<Eigen::Index>(e.to));
    d = std::min(d, e.cost);
  }
  return out;
}

/// Mean of the valid (non-missing) readings of one sensor; nullopt when none are valid.
inline std::optional<double> average_velocity(const TimeSeriesMatrix& m, std::size_t node) {
  const auto r = static_cast<Eigen::Index>(node);
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index t = 0; t < m.values().cols(); ++t)
    if (m.valid()(r, t)) {
      sum += m.values()(r, t);
      ++count;
    }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

inline std::vector<std::optional<double>> average_velocities(const TimeSeriesMatrix& m) {
  std::vector<std::optional<double>> v(m.sensors());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = average_velocity(m, i);
  return v;
}

struct LagOptions {
  double unit_scale = 1.0;     // (cost / velocity) * unit_scale = hours of travel
  int s_max = 12;              // largest admissible lag in timesteps
  bool reverse_fallback = true;
};

/// Spatial-temporal lag per ordered (source, target) pair in whole timesteps.
struct LagMatrix {
  IntMatrix s;         // capped; kUndefinedLag when unreachable, velocity unknown, or above s_max
  IntMatrix uncapped;  // same rounding without the s_max cap
  Mask from_reverse;   // entry used the target->source cost because source->target is unreachable

  std::size_t size() const { return static_cast<std::size_t>(s.rows()); }
  int operator()(std::size_t i, std::size_t j) const {
    return s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
};

/// Travel time in (fractional) timesteps.
inline double travel_steps(double cost, double velocity, double sampling_interval_minutes, double unit_scale) {
  return unit_scale * cost / velocity * 60.0 / sampling_interval_minutes;
}

inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

inline LagMatrix spatial_temporal_lags(const CostMatrix& costs, const std::vector<std::optional<double>>& velocities,
                                       double sampling_interval_minutes, const LagOptions& opt = {}) {
  if (!(sampling_interval_minutes > 0.0)) throw InputError("sampling interval must be positive");
  if (!(opt.unit_scale > 0.0)) throw InputError("unit_scale must be positive");
  if (opt.s_max < 1) throw InputError("s_max must be at least 1");
  const auto n = costs.dist.rows();
  if (static_cast<std::size_t>(n) != velocities.size())
    throw InputError("velocity count does not match cost matrix size");

  LagMatrix lags{IntMatrix::Constant(n, n, kUndefinedLag), IntMatrix::Constant(n, n, kUndefinedLag),
                 Mask::Constant(n, n, false)};
  for (Eigen::Index i = 0; i < n; ++i) {
    lags.s(i, i) = 0;
    lags.uncapped(i, i) = 0;
    const auto& v = velocities[static_cast<std::size_t>(i)];
    if (!v || !(*v > 0.0)) continue;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      double d = costs.dist(i, j);
      bool reversed = false;
      if (!std::isfinite(d) && opt.reverse_fallback && std::isfinite(costs.dist(j, i))) {
        d = costs.dist(j, i);
        reversed = true;
      }
      if (!std::isfinite(d)) continue;
      double steps = travel_steps(d, *v, sampling_interval_minutes, opt.unit_scale);
      if (!std::isfinite(steps) || steps > static_cast<double>(std::numeric_limits<int>::max() / 2)) continue;
      int s = round_half_up(steps);
      lags.uncapped(i, j) = s;
      lags.from_reverse(i, j) = reversed;
      if (s <= opt.s_max) lags.s(i, j) = s;
    }
  }
  return lags;
}

struct LagStats {
  std::size_t defined_pairs = 0;       // off-diagonal pairs with a finite lag before capping
  std::size_t within_cap = 0;          // of those, lag <= s_max
  std::size_t reverse_fallback = 0;    // capped pairs that used the reverse cost
  int max_uncapped = kUndefinedLag;
  std::vector<std::size_t> histogram;  // histogram[s] for capped lags 0..s_max

  double fraction_at_most(const LagMatrix& lags, int bound) const {
    if (defined_pairs == 0) return 0.0;
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < lags.uncapped.rows(); ++i)
      for (Eigen::Index j = 0; j < lags.uncapped.cols(); ++j)
        if (i != j && lags.uncapped(i, j) >= 0 && lags.uncapped(i, j) <= bound) ++k;
    return static_cast<double>(k) / static_cast<double>(defined_pairs);
  }
};

inline LagStats lag_stats(const LagMatrix& lags, int s_max) {
  LagStats st;
  st.histogram.assign(static_cast<std::size_t>(s_max) + 1, 0);
  for (Eigen::Index i = 0; i < lags.s.rows(); ++i)
    for (Eigen::Index j = 0; j < lags.s.cols(); ++j) {
      if (i == j) continue;
      int u = lags.uncapped(i, j);
      if (u >= 0) {
        ++st.defined_pairs;
        st.max_uncapped = std::max(st.max_uncapped, u);
      }
      int s = lags.s(i, j);
      if (s >= 0) {
        ++st.within_cap;
        if (lags.from_reverse(i, j)) ++st.reverse_fallback;
        if (s <= s_max) ++st.histogram[static_cast<std::size_t>(s)];
      }
    }
  return st;
}

/// Rows are sources, columns are targets; -1 marks an undefined lag.
inline void write_lag_csv(const LagMatrix& lags, const std::vector<std::string>& ids, std::ostream& out) {
  out << "source";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < lags.s.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < lags.s.cols(); ++j) out << ',' << lags.s(i, j);
    out << '\n';
  }
}

inline void write_lag_csv(const LagMatrix& lags, const std::vector<std::string>& ids, const std::string& path) {
  auto out = csv::open_output(path);
  write_lag_csv(lags, ids, out);
}

/// Reads a lag CSV written by write_lag_csv. Only the capped matrix is
/// recoverable; `uncapped` mirrors it and `from_reverse` is all false.
inline std::pair<LagMatrix, std::vector<std::string>> read_lag_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name, 1, "empty lag file");
  auto header = csv::split(line);
  if (header.size() < 2 || header.front() != "source") throw ParseError(name, 1, "expected header 'source,<ids>'");
  std::vector<std::string> ids(header.begin() + 1, header.end());
  const auto n = static_cast<Eigen::Index>(ids.size());
  IntMatrix s(n, n);
  std::size_t line_no = 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw ParseError(name, line_no + 1, "missing lag row");
    ++line_no;
    auto cells = csv::split(line);
    if (static_cast<Eigen::Index>(cells.size()) != n + 1 || cells.front() != ids[static_cast<std::size_t>(i)])
      throw ParseError(name, line_no, "malformed lag row");
    for (Eigen::Index j = 0; j < n; ++j) {
      auto v = csv::parse_double(cells[static_cast<std::size_t>(j) + 1]);
      if (!v || *v != std::floor(*v) || *v < kUndefinedLag) throw ParseError(name, line_no, "invalid lag cell");
      s(i, j) = static_cast<int>(*v);
    }
  }
  return {LagMatrix{s, s, Mask::Constant(n, n, false)}, ids};
}

}  // namespace stgc
