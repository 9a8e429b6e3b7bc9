#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "stgc/data_model.hpp"
#include "stgc/error.hpp"
#include "stgc/graph_builder.hpp"
#include "stgc/random.hpp"

namespace stgc {

struct PlantedEdge {
  std::size_t cause = 0;
  std::size_t effect = 0;
  int delay = 1;      // timesteps
  double beta = 0.5;  // coupling coefficient
};

struct TopologyEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  double cost = 0.0;
};

/// Synthetic road network with a planted causal DAG. Roots are stationary
/// AR(1) processes around base_speed; a driven node is
///   x_j(t) = base + sum_i beta_ij (x_i(t - d_ij) - base) + noise.
/// Each planted edge becomes a road link whose cost, travelled at base_speed,
/// takes exactly d_ij sampling intervals. `topology` adds further road links
/// that carry no causal influence.
struct Scenario {
  std::size_t n_nodes = 0;
  std::vector<PlantedEdge> planted;
  std::vector<TopologyEdge> topology;
  double noise_std = 0.5;
  double base_speed = 60.0;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  double root_ar = 0.8;    // AR(1) coefficient of root nodes
  double root_std = 5.0;   // stationary standard deviation of root nodes
  double sampling_interval = 5.0;

  /// Planted-graph topological order; throws if the planted set has a cycle.
  std::vector<std::size_t> topological_order() const {
    std::vector<std::size_t> indeg(n_nodes, 0);
    std::vector<std::vector<std::size_t>> out(n_nodes);
    for (const auto& e : planted) {
      ++indeg[e.effect];
      out[e.cause].push_back(e.effect);
    }
    std::vector<std::size_t> order;
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < n_nodes; ++i)
      if (indeg[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
      std::size_t u = ready.front();
      ready.erase(ready.begin());
      order.push_back(u);
      for (auto v : out[u])
        if (--indeg[v] == 0) ready.push_back(v);
    }
    if (order.size() != n_nodes) throw InputError("planted edges contain a cycle; the causal graph must be a DAG");
    return order;
  }

  void validate() const {
    if (n_nodes < 2) throw InputError("scenario needs at least 2 nodes");
    if (steps < 2) throw InputError("scenario needs at least 2 timesteps");
    if (!(noise_std >= 0.0) || !(root_std > 0.0) || !(base_speed > 0.0) || !(sampling_interval > 0.0))
      throw InputError("scenario scales must be positive (noise_std non-negative)");
    if (!(std::abs(root_ar) < 1.0)) throw InputError("root_ar must satisfy |root_ar| < 1");
    std::map<std::pair<std::size_t, std::size_t>, int> seen;
    for (const auto& e : planted) {
      if (e.cause >= n_nodes || e.effect >= n_nodes) throw InputError("planted edge references an unknown node");
      if (e.cause == e.effect) throw InputError("planted self-edge");
      if (e.delay < 1) throw InputError("planted delays must be >= 1");
      if (!(std::abs(e.beta) < 1.0)) throw InputError("planted coefficients must satisfy |beta| < 1 (stationarity)");
      if (!seen.emplace(std::pair{e.cause, e.effect}, e.delay).second) throw InputError("duplicate planted edge");
    }
    for (const auto& e : topology)
      if (e.from >= n_nodes || e.to >= n_nodes || !(e.cost >= 0.0))
        throw InputError("invalid topology edge");
    (void)topological_order();
  }

  std::string node_id(std::size_t i) const { return "s" + std::to_string(i); }
};

struct SyntheticData {
  TimeSeriesMatrix speeds;
  DistanceTable distances;
  CausalGraph truth;
};

/// Road cost that takes `delay` sampling intervals at base_speed.
inline double cost_for_delay(int delay, double base_speed, double sampling_interval) {
  return static_cast<double>(delay) * base_speed * sampling_interval / 60.0;
}

inline SyntheticData generate(const Scenario& sc) {
  sc.validate();
  const auto order = sc.topological_order();
  int max_delay = 0;
  for (const auto& e : sc.planted) max_delay = std::max(max_delay, e.delay);
  const std::size_t burn_in = 100 + sc.n_nodes * static_cast<std::size_t>(max_delay);
  const std::size_t total = burn_in + sc.steps;

  std::vector<std::vector<const PlantedEdge*>> parents(sc.n_nodes);
  for (const auto& e : sc.planted) parents[e.effect].push_back(&e);

  std::mt19937_64 rng(sc.seed);
  NormalSampler normal;
  Matrix dev = Matrix::Zero(static_cast<Eigen::Index>(sc.n_nodes), static_cast<Eigen::Index>(total));
  const double innovation = sc.root_std * std::sqrt(1.0 - sc.root_ar * sc.root_ar);
  for (std::size_t node : order) {
    const auto r = static_cast<Eigen::Index>(node);
    if (parents[node].empty()) {
      dev(r, 0) = sc.root_std * normal(rng);
      for (std::size_t t = 1; t < total; ++t)
        dev(r, static_cast<Eigen::Index>(t)) = sc.root_ar * dev(r, static_cast<Eigen::Index>(t - 1)) + innovation * normal(rng);
    } else {
      for (std::size_t t = 0; t < total; ++t) {
        double v = 0.0;
        for (const auto* e : parents[node])
          if (t >= static_cast<std::size_t>(e->delay))
            v += e->beta * dev(static_cast<Eigen::Index>(e->cause), static_cast<Eigen::Index>(t - static_cast<std::size_t>(e->delay)));
        dev(r, static_cast<Eigen::Index>(t)) = v + sc.noise_std * normal(rng);
      }
    }
  }

  std::vector<std::string> ids;
  for (std::size_t i = 0; i < sc.n_nodes; ++i) ids.push_back(sc.node_id(i));
  Matrix values = (dev.rightCols(static_cast<Eigen::Index>(sc.steps)).array() + sc.base_speed).matrix();

  std::vector<DistanceRecord> records;
  for (const auto& e : sc.planted)
    records.push_back({ids[e.cause], ids[e.effect], cost_for_delay(e.delay, sc.base_speed, sc.sampling_interval)});
  for (const auto& e : sc.topology) records.push_back({ids[e.from], ids[e.to], e.cost});

  CausalGraph truth{ids, {}, "truth"};
  for (const auto& e : sc.planted) truth.edges.push_back({e.cause, e.effect, e.delay, 0.0, 0.0, false});
  truth.canonicalize();

  return SyntheticData{TimeSeriesMatrix(std::move(values), ids, sc.sampling_interval), make_distance_table(records),
                       std::move(truth)};
}

struct RecoveryScore {
  double precision = 0.0;
  double recall = 0.0;
  double lag_accuracy = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

/// Directed edge matching by node id; lag accuracy is over true positives.
inline RecoveryScore score_recovery(const CausalGraph& detected, const CausalGraph& truth) {
  if (truth.edges.empty()) throw InputError("ground-truth graph has no edges");
  std::map<std::pair<std::string, std::string>, int> truth_lags;
  for (const auto& e : truth.edges) truth_lags[{truth.node_ids[e.cause], truth.node_ids[e.effect]}] = e.lag;
  RecoveryScore s;
  std::size_t lag_hits = 0;
  for (const auto& e : detected.edges) {
    auto it = truth_lags.find({detected.node_ids[e.cause], detected.node_ids[e.effect]});
    if (it == truth_lags.end()) {
      ++s.false_positives;
      continue;
    }
    ++s.true_positives;
    if (it->second == e.lag) ++lag_hits;
  }
  s.false_negatives = truth.edges.size() - s.true_positives;
  s.precision = detected.edges.empty() ? 0.0 : static_cast<double>(s.true_positives) / static_cast<double>(detected.edges.size());
  s.recall = static_cast<double>(s.true_positives) / static_cast<double>(truth.edges.size());
  s.lag_accuracy = s.true_positives ? static_cast<double>(lag_hits) / static_cast<double>(s.true_positives) : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Scenario builders
// ---------------------------------------------------------------------------

/// Chain 0 -> 1 -> ... with one delay per link.
inline Scenario chain_scenario(const std::vector<int>& delays, double beta, std::uint64_t seed) {
  Scenario sc;
  sc.n_nodes = delays.size() + 1;
  for (std::size_t i = 0; i < delays.size(); ++i) sc.planted.push_back({i, i + 1, delays[i], beta});
  sc.seed = seed;
  return sc;
}

struct RandomDagOptions {
  std::size_t n_nodes = 10;
  std::size_t roots = 3;
  std::size_t max_parents = 2;
  int min_delay = 7;
  int max_delay = 10;
  double min_beta = 0.6;
  double max_beta = 0.9;
};

/// Random DAG: nodes [0, roots) are roots, every later node draws 1..max_parents
/// parents among lower-numbered nodes.
inline Scenario random_dag_scenario(const RandomDagOptions& opt, std::uint64_t seed) {
  if (opt.roots < 1 || opt.roots >= opt.n_nodes) throw InputError("random DAG needs 1 <= roots < n_nodes");
  if (opt.min_delay < 1 || opt.max_delay < opt.min_delay) throw InputError("invalid delay range");
  Scenario sc;
  sc.n_nodes = opt.n_nodes;
  sc.seed = seed;
  std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ULL);
  for (std::size_t j = opt.roots; j < opt.n_nodes; ++j) {
    std::size_t k = 1 + uniform_index(rng, std::min(opt.max_parents, j));
    std::vector<std::size_t> pool(j);
    for (std::size_t i = 0; i < j; ++i) pool[i] = i;
    for (std::size_t p = 0; p < k; ++p) {
      std::size_t pick = p + uniform_index(rng, pool.size() - p);
      std::swap(pool[p], pool[pick]);
      int delay = opt.min_delay + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(opt.max_delay - opt.min_delay + 1)));
      double beta = opt.min_beta + (opt.max_beta - opt.min_beta) * uniform_unit(rng);
      sc.planted.push_back({pool[p], j, delay, beta / static_cast<double>(k)});
    }
  }
  return sc;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json scenario_to_json(const Scenario& sc) {
  json planted = json::array();
  for (const auto& e : sc.planted)
    planted.push_back(json{{"cause", e.cause}, {"effect", e.effect}, {"delay", e.delay}, {"beta", e.beta}});
  json topo = json::array();
  for (const auto& e : sc.topology) topo.push_back(json{{"from", e.from}, {"to", e.to}, {"cost", e.cost}});
  return json{{"n_nodes", sc.n_nodes},       {"planted_edges", planted}, {"topology", topo},
              {"noise_std", sc.noise_std},   {"base_speed", sc.base_speed}, {"T", sc.steps},
              {"seed", sc.seed},             {"root_ar", sc.root_ar},    {"root_std", sc.root_std},
              {"sampling_interval", sc.sampling_interval}};
}

inline Scenario scenario_from_json(const json& j) {
  try {
    Scenario sc;
    sc.n_nodes = j.at("n_nodes").get<std::size_t>();
    for (const auto& e : j.at("planted_edges"))
      sc.planted.push_back({e.at("cause").get<std::size_t>(), e.at("effect").get<std::size_t>(), e.at("delay").get<int>(),
                            e.at("beta").get<double>()});
    if (j.contains("topology"))
      for (const auto& e : j.at("topology"))
        sc.topology.push_back({e.at("from").get<std::size_t>(), e.at("to").get<std::size_t>(), e.at("cost").get<double>()});
    sc.noise_std = j.value("noise_std", sc.noise_std);
    sc.base_speed = j.value("base_speed", sc.base_speed);
    sc.steps = j.value("T", sc.steps);
    sc.seed = j.value("seed", sc.seed);
    sc.root_ar = j.value("root_ar", sc.root_ar);
    sc.root_std = j.value("root_std", sc.root_std);
    sc.sampling_interval = j.value("sampling_interval", sc.sampling_interval);
    sc.validate();
    return sc;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed scenario JSON: ") + e.what());
  }
}

}  // namespace stgc
