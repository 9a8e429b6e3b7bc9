#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "stgc/alignment.hpp"
#include "stgc/data_model.hpp"
#include "stgc/error.hpp"
#include "stgc/granger.hpp"
#include "stgc/lag_engine.hpp"
#include "stgc/parallel.hpp"
#include "stgc/random.hpp"

namespace stgc {

using json = nlohmann::ordered_json;

struct CausalEdge {
  std::size_t cause = 0;
  std::size_t effect = 0;
  int lag = 0;
  double f_stat = 0.0;
  double p_value = 1.0;
  bool lag_from_reverse = false;

  friend bool operator==(const CausalEdge&, const CausalEdge&) = default;
};

/// Directed graph with edges cause -> effect. Edges are kept sorted by (cause, effect).
struct CausalGraph {
  std::vector<std::string> node_ids;
  std::vector<CausalEdge> edges;
  std::string kind = "stgc";

  std::size_t size() const { return node_ids.size(); }

  void canonicalize() {
    std::sort(edges.begin(), edges.end(), [](const CausalEdge& a, const CausalEdge& b) {
      return std::tie(a.cause, a.effect) < std::tie(b.cause, b.effect);
    });
  }

  std::vector<std::size_t> in_degrees() const {
    std::vector<std::size_t> deg(size(), 0);
    for (const auto& e : edges) ++deg[e.effect];
    return deg;
  }

  bool has_edge(std::size_t cause, std::size_t effect) const {
    return std::any_of(edges.begin(), edges.end(),
                       [&](const CausalEdge& e) { return e.cause == cause && e.effect == effect; });
  }
};

/// Dense weights in [0, 1]. Row index is the source (cause), column the target (effect).
struct AdjacencyMatrix {
  std::vector<std::string> node_ids;
  Matrix weights;
  bool symmetric = false;
  std::string kind;

  std::size_t size() const { return static_cast<std::size_t>(weights.rows()); }
};

// ---------------------------------------------------------------------------
// STGC graph
// ---------------------------------------------------------------------------

struct StgcOptions {
  GrangerConfig granger;
  std::optional<int> top_k;
  bool ignore_lags = false;  // ablation: test every lag-defined pair without shifting
  std::size_t workers = 1;
};

struct PairCounts {
  std::size_t tested = 0;
  std::size_t undefined_lag = 0;
  std::size_t too_short = 0;
  std::size_t degenerate = 0;
  std::size_t significant = 0;
};

struct StgcResult {
  CausalGraph graph;
  PairCounts counts;
};

/// Keeps, per effect node, the k incoming edges with the smallest p-values
/// (ties: smaller lag, then smaller cause index).
inline void keep_top_k(CausalGraph& g, int k) {
  if (k < 0) throw InputError("top_k must be >= 0");
  std::vector<std::vector<CausalEdge>> by_effect(g.size());
  for (const auto& e : g.edges) by_effect[e.effect].push_back(e);
  g.edges.clear();
  for (auto& incoming : by_effect) {
    std::sort(incoming.begin(), incoming.end(), [](const CausalEdge& a, const CausalEdge& b) {
      return std::tie(a.p_value, a.lag, a.cause) < std::tie(b.p_value, b.lag, b.cause);
    });
    if (incoming.size() > static_cast<std::size_t>(k)) incoming.resize(static_cast<std::size_t>(k));
    g.edges.insert(g.edges.end(), incoming.begin(), incoming.end());
  }
  g.canonicalize();
}

/// Tests every ordered pair (i, j), i != j, with a defined lag: the cause
/// series i is aligned against effect j by lag(i, j) and an edge i -> j is
/// kept when the Granger test is significant. `series` should be the
/// normalized training split.
inline StgcResult build_stgc_graph(const TimeSeriesMatrix& series, const LagMatrix& lags, const StgcOptions& opt) {
  opt.granger.validate();
  const std::size_t n = series.sensors();
  if (lags.size() != n) throw InputError("lag matrix size does not match the series");

  struct Outcome {
    enum Kind { undefined, too_short, degenerate, tested } kind = undefined;
    GrangerResult result;
    int lag = 0;
  };
  std::vector<Outcome> outcomes(n * n);
  std::vector<Vector> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = series.series(i);

  parallel_for(n * n, opt.workers, [&](std::size_t idx) {
    const std::size_t i = idx / n;
    const std::size_t j = idx % n;
    if (i == j) return;
    Outcome& out = outcomes[idx];
    int lag = lags(i, j);
    if (lag == kUndefinedLag) return;
    if (opt.ignore_lags) lag = 0;
    if (static_cast<std::size_t>(lag) >= series.steps() ||
        series.steps() - static_cast<std::size_t>(lag) < min_aligned_length(opt.granger.var_order)) {
      out.kind = Outcome::too_short;
      return;
    }
    auto pair = align_pair(rows[i], rows[j], lag);
    out.lag = lag;
    out.result = granger_test(*pair, opt.granger);
    out.kind = out.result.status == GrangerStatus::ok ? Outcome::tested : Outcome::degenerate;
  });

  StgcResult res;
  res.graph.node_ids = series.sensor_ids();
  for (std::size_t idx = 0; idx < outcomes.size(); ++idx) {
    const std::size_t i = idx / n;
    const std::size_t j = idx % n;
    if (i == j) continue;
    const auto& o = outcomes[idx];
    switch (o.kind) {
      case Outcome::undefined: ++res.counts.undefined_lag; break;
      case Outcome::too_short: ++res.counts.too_short; break;
      case Outcome::degenerate: ++res.counts.degenerate; break;
      case Outcome::tested:
        ++res.counts.tested;
        if (o.result.significant) {
          ++res.counts.significant;
          res.graph.edges.push_back({i, j, o.lag, o.result.f_stat, o.result.p_value,
                                     lags.from_reverse(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
        }
        break;
    }
  }
  if (res.counts.tested == 0) throw ComputeError("empty graph: no node pair could be aligned and tested");
  res.graph.canonicalize();
  if (opt.top_k) keep_top_k(res.graph, *opt.top_k);
  return res;
}

// ---------------------------------------------------------------------------
// Adjacency views and baselines
// ---------------------------------------------------------------------------

inline AdjacencyMatrix to_adjacency(const CausalGraph& g, bool add_self_loops = true) {
  const auto n = static_cast<Eigen::Index>(g.size());
  AdjacencyMatrix a{g.node_ids, Matrix::Zero(n, n), false, g.kind};
  for (const auto& e : g.edges) a.weights(static_cast<Eigen::Index>(e.cause), static_cast<Eigen::Index>(e.effect)) = 1.0;
  if (add_self_loops) a.weights.diagonal().setOnes();
  return a;
}

inline AdjacencyMatrix identity_graph(std::size_t n, std::vector<std::string> ids = {}) {
  if (n < 1) throw InputError("identity graph needs n >= 1");
  if (ids.empty())
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  const auto k = static_cast<Eigen::Index>(n);
  return AdjacencyMatrix{std::move(ids), Matrix::Identity(k, k), true, "identity"};
}

/// Gaussian kernel of travel cost, w = exp(-d^2 / sigma^2) with sigma the
/// standard deviation of all finite off-diagonal costs; weights below kappa
/// are zeroed and the diagonal is 1.
inline AdjacencyMatrix build_sd_graph(const CostMatrix& costs, double kappa, std::vector<std::string> ids = {}) {
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw InputError("kappa must lie in [0, 1]");
  const auto n = costs.dist.rows();
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && std::isfinite(costs.dist(i, j))) {
        sum += costs.dist(i, j);
        ++count;
      }
  if (count == 0) throw ComputeError("all pairwise distances are infinite; cannot build a distance graph");
  const double mean = sum / static_cast<double>(count);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && std::isfinite(costs.dist(i, j))) sum_sq += (costs.dist(i, j) - mean) * (costs.dist(i, j) - mean);
  const double sigma = std::sqrt(sum_sq / static_cast<double>(count));
  if (!(sigma > 0.0)) throw ComputeError("distance spread is zero; the Gaussian kernel width is undefined");

  if (ids.empty())
    for (Eigen::Index i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  AdjacencyMatrix a{std::move(ids), Matrix::Zero(n, n), false, "sd"};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        a.weights(i, j) = 1.0;
        continue;
      }
      const double d = costs.dist(i, j);
      if (!std::isfinite(d)) continue;
      const double w = std::exp(-(d * d) / (sigma * sigma));
      a.weights(i, j) = w < kappa ? 0.0 : w;
    }
  a.symmetric = a.weights == a.weights.transpose();
  return a;
}

/// Same in-degree per effect node as `reference`, with cause ids drawn
/// uniformly without replacement from the other nodes.
inline CausalGraph random_graph_matching(const CausalGraph& reference, std::uint64_t seed,
                                         const LagMatrix* lags = nullptr) {
  if (reference.edges.empty()) throw InputError("random graph needs a non-empty reference graph");
  const std::size_t n = reference.size();
  if (lags && lags->size() != n) throw InputError("lag matrix size does not match the reference graph");
  const auto deg = reference.in_degrees();
  std::mt19937_64 rng(seed);
  CausalGraph out{reference.node_ids, {}, "random"};
  std::vector<std::size_t> pool;
  for (std::size_t effect = 0; effect < n; ++effect) {
    if (deg[effect] > n - 1)
      throw InputError("in-degree " + std::to_string(deg[effect]) + " exceeds n - 1 at node " + reference.node_ids[effect]);
    pool.clear();
    for (std::size_t c = 0; c < n; ++c)
      if (c != effect) pool.push_back(c);
    // Partial Fisher-Yates.
    for (std::size_t k = 0; k < deg[effect]; ++k) {
      std::size_t pick = k + uniform_index(rng, pool.size() - k);
      std::swap(pool[k], pool[pick]);
      int lag = 0;
      if (lags) lag = std::max(0, (*lags)(pool[k], effect));
      out.edges.push_back({pool[k], effect, lag, 0.0, 1.0, false});
    }
  }
  out.canonicalize();
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline json graph_to_json(const CausalGraph& g, const json& config = json::object()) {
  json edges = json::array();
  for (const auto& e : g.edges) {
    json je{{"cause", g.node_ids[e.cause]}, {"effect", g.node_ids[e.effect]}, {"lag", e.lag},
            {"f", std::isfinite(e.f_stat) ? json(e.f_stat) : json("inf")}, {"p", e.p_value}};
    if (e.lag_from_reverse) je["lag_from_reverse"] = true;
    edges.push_back(std::move(je));
  }
  return json{{"kind", g.kind}, {"nodes", g.node_ids}, {"directed", true}, {"edges", std::move(edges)}, {"config", config}};
}

inline CausalGraph graph_from_json(const json& j) {
  try {
    CausalGraph g;
    g.node_ids = j.at("nodes").get<std::vector<std::string>>();
    g.kind = j.value("kind", std::string("stgc"));
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < g.node_ids.size(); ++i) index.emplace(g.node_ids[i], i);
    for (const auto& je : j.at("edges")) {
      auto c = index.find(je.at("cause").get<std::string>());
      auto e = index.find(je.at("effect").get<std::string>());
      if (c == index.end() || e == index.end()) throw InputError("edge references an unknown node");
      CausalEdge edge{c->second, e->second, je.value("lag", 0), 0.0, je.value("p", 1.0),
                      je.value("lag_from_reverse", false)};
      const auto& f = je.contains("f") ? je.at("f") : json(0.0);
      edge.f_stat = f.is_string() ? std::numeric_limits<double>::infinity() : f.get<double>();
      g.edges.push_back(edge);
    }
    g.canonicalize();
    return g;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed graph JSON: ") + e.what());
  }
}

inline json adjacency_to_json(const AdjacencyMatrix& a, const json& config = json::object()) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.weights.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(a.weights.cols()));
    for (Eigen::Index j = 0; j < a.weights.cols(); ++j) r[static_cast<std::size_t>(j)] = a.weights(i, j);
    rows.push_back(r);
  }
  return json{{"kind", a.kind}, {"nodes", a.node_ids}, {"directed", !a.symmetric}, {"weights", std::move(rows)},
              {"config", config}};
}

inline AdjacencyMatrix adjacency_from_json(const json& j) {
  try {
    AdjacencyMatrix a;
    a.node_ids = j.at("nodes").get<std::vector<std::string>>();
    a.kind = j.value("kind", std::string("custom"));
    a.symmetric = !j.value("directed", true);
    const auto n = static_cast<Eigen::Index>(a.node_ids.size());
    const auto& rows = j.at("weights");
    if (static_cast<Eigen::Index>(rows.size()) != n) throw InputError("adjacency weights must be n x n");
    a.weights.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = rows.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(r.size()) != n) throw InputError("adjacency weights must be n x n");
      for (Eigen::Index j2 = 0; j2 < n; ++j2) {
        double w = r.at(static_cast<std::size_t>(j2)).get<double>();
        if (!(w >= 0.0 && w <= 1.0)) throw InputError("adjacency weights must lie in [0, 1]");
        a.weights(i, j2) = w;
      }
    }
    return a;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed adjacency JSON: ") + e.what());
  }
}

/// Accepts either a causal-graph document ("edges") or a dense adjacency ("weights").
inline AdjacencyMatrix load_any_adjacency(const json& j, bool add_self_loops = true) {
  if (j.contains("weights")) return adjacency_from_json(j);
  if (j.contains("edges")) return to_adjacency(graph_from_json(j), add_self_loops);
  throw InputError("graph file has neither 'edges' nor 'weights'");
}

inline void write_adjacency_csv(const AdjacencyMatrix& a, std::ostream& out) {
  for (std::size_t i = 0; i < a.node_ids.size(); ++i) out << (i ? "," : "") << a.node_ids[i];
  out << '\n';
  for (Eigen::Index i = 0; i < a.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.weights.cols(); ++j) out << (j ? "," : "") << csv::format_double(a.weights(i, j));
    out << '\n';
  }
}

struct Coordinate {
  double lon = 0.0;
  double lat = 0.0;
};

/// Sensor coordinates CSV with header id,lon,lat (any column order).
inline std::map<std::string, Coordinate> parse_coordinates_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name, 1, "empty coordinates file");
  auto header = csv::split(line);
  auto col = [&](const std::string& key) {
    auto it = std::find(header.begin(), header.end(), key);
    if (it == header.end()) throw ParseError(name, 1, "missing column '" + key + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto ci = col("id"), cx = col("lon"), cy = col("lat");
  std::map<std::string, Coordinate> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    auto cells = csv::split(line);
    if (cells.size() != header.size()) throw ParseError(name, line_no, "ragged row");
    auto lon = csv::parse_double(cells[cx]);
    auto lat = csv::parse_double(cells[cy]);
    if (!lon || !lat) throw ParseError(name, line_no, "non-numeric coordinate");
    out[cells[ci]] = {*lon, *lat};
  }
  return out;
}

/// One LineString feature per edge whose endpoints both have coordinates.
inline json graph_to_geojson(const CausalGraph& g, const std::map<std::string, Coordinate>& coords) {
  json features = json::array();
  for (const auto& e : g.edges) {
    auto a = coords.find(g.node_ids[e.cause]);
    auto b = coords.find(g.node_ids[e.effect]);
    if (a == coords.end() || b == coords.end()) continue;
    features.push_back(json{
        {"type", "Feature"},
        {"geometry",
         {{"type", "LineString"},
          {"coordinates", json::array({json::array({a->second.lon, a->second.lat}),
                                       json::array({b->second.lon, b->second.lat})})}}},
        {"properties",
         {{"cause", g.node_ids[e.cause]}, {"effect", g.node_ids[e.effect]}, {"lag", e.lag}, {"p", e.p_value}}}});
  }
  return json{{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

}  // namespace stgc
