#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stgc/config.hpp"
#include "stgc/data_model.hpp"
#include "stgc/evaluation.hpp"
#include "stgc/graph_builder.hpp"
#include "stgc/lag_engine.hpp"
#include "stgc/predictor.hpp"

namespace stgc {

/// Everything produced on the way to the STGC graph.
struct GraphBuild {
  DatasetSplit split;
  NormStats stats;
  RoadGraph road;
  CostMatrix costs;
  std::vector<std::optional<double>> velocities;
  LagMatrix lags;
  LagStats lag_summary;
  StgcResult stgc;
};

/// data -> shortest-path costs -> lags (training-split velocities) ->
/// aligned pairwise Granger tests on the normalized training split.
inline GraphBuild build_graph(const RunConfig& cfg, const TimeSeriesMatrix& speeds, const DistanceTable& distances,
                              bool ignore_lags = false) {
  cfg.validate();
  auto split = chronological_split(speeds, cfg.split);
  auto stats = compute_norm_stats(split.train, cfg.norm);
  auto road = build_road_graph(distances, speeds.sensor_ids());
  auto costs = all_pairs_shortest_costs(road, cfg.worker_count());
  auto velocities = average_velocities(split.train);
  auto lags = spatial_temporal_lags(costs, velocities, speeds.sampling_interval(), cfg.lag);
  auto summary = lag_stats(lags, cfg.lag.s_max);
  StgcOptions opt{cfg.granger, cfg.top_k, ignore_lags, cfg.worker_count()};
  auto stgc = build_stgc_graph(zscore(split.train, stats), lags, opt);
  return GraphBuild{std::move(split), std::move(stats), std::move(road), std::move(costs), std::move(velocities),
                    std::move(lags), std::move(summary), std::move(stgc)};
}

inline json graph_summary_json(const GraphBuild& b, const RunConfig& cfg) {
  const auto n = b.stgc.graph.size();
  const double possible = static_cast<double>(n * (n - 1));
  json hist = json::object();
  for (std::size_t s = 0; s < b.lag_summary.histogram.size(); ++s) hist[std::to_string(s)] = b.lag_summary.histogram[s];
  json edge_lags = json::object();
  std::map<int, std::size_t> counts;
  for (const auto& e : b.stgc.graph.edges) ++counts[e.lag];
  for (auto [lag, c] : counts) edge_lags[std::to_string(lag)] = c;
  return json{
      {"tool_version", kToolVersion},
      {"nodes", n},
      {"edges", b.stgc.graph.edges.size()},
      {"density", possible > 0 ? static_cast<double>(b.stgc.graph.edges.size()) / possible : 0.0},
      {"pairs",
       {{"tested", b.stgc.counts.tested},
        {"significant", b.stgc.counts.significant},
        {"undefined_lag", b.stgc.counts.undefined_lag},
        {"too_short", b.stgc.counts.too_short},
        {"degenerate", b.stgc.counts.degenerate}}},
      {"road", {{"edges", b.road.edges.size()}, {"dropped_records", b.road.dropped_records}}},
      {"lags",
       {{"defined_pairs", b.lag_summary.defined_pairs},
        {"within_s_max", b.lag_summary.within_cap},
        {"reverse_fallback", b.lag_summary.reverse_fallback},
        {"max_uncapped", b.lag_summary.max_uncapped},
        {"fraction_le_6", b.lag_summary.fraction_at_most(b.lags, 6)},
        {"fraction_le_9", b.lag_summary.fraction_at_most(b.lags, 9)},
        {"histogram", hist}}},
      {"edge_lag_histogram", edge_lags},
      {"config", config_to_json(cfg)},
  };
}

/// Reorders an adjacency to the given node order (matched by id).
inline AdjacencyMatrix reorder_adjacency(const AdjacencyMatrix& a, const std::vector<std::string>& ids) {
  if (a.node_ids == ids) return a;
  if (a.node_ids.size() != ids.size()) throw InputError("graph node count does not match the speed data");
  std::map<std::string, Eigen::Index> where;
  for (std::size_t i = 0; i < a.node_ids.size(); ++i) where[a.node_ids[i]] = static_cast<Eigen::Index>(i);
  std::vector<Eigen::Index> perm;
  for (const auto& id : ids) {
    auto it = where.find(id);
    if (it == where.end()) throw InputError("graph has no node '" + id + "'");
    perm.push_back(it->second);
  }
  AdjacencyMatrix out{ids, Matrix(a.weights.rows(), a.weights.cols()), a.symmetric, a.kind};
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < perm.size(); ++j)
      out.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a.weights(perm[i], perm[j]);
  return out;
}

struct TrainEval {
  TrainResult training;
  PredictionBatch predictions;
  MetricsReport report;
  std::vector<NodeMetrics> per_node;
};

inline TrainEval train_and_evaluate(const RunConfig& cfg, const TimeSeriesMatrix& speeds, const AdjacencyMatrix& adjacency,
                                    const std::string& label, std::ostream* progress = nullptr) {
  cfg.validate();
  const auto adj = reorder_adjacency(adjacency, speeds.sensor_ids());
  const auto prop = normalize_propagation(adj);
  const auto split = chronological_split(speeds, cfg.split);
  auto training = train(prop, split, cfg.train, cfg.lag.s_max, progress);
  auto predictions = predict_test(training.params, prop, split.test, training.stats, cfg.train.window, cfg.train.horizons);
  auto report = evaluate_predictions(predictions, speeds.sampling_interval(), label);
  report.config = config_to_json(cfg);
  auto per_node = evaluate_per_node(predictions, speeds.sensor_ids());
  return TrainEval{std::move(training), std::move(predictions), std::move(report), std::move(per_node)};
}

}  // namespace stgc
