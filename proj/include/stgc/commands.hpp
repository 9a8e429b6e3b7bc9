#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stgc/config.hpp"
#include "stgc/error.hpp"
#include "stgc/evaluation.hpp"
#include "stgc/graph_builder.hpp"
#include "stgc/pipeline.hpp"
#include "stgc/synthetic.hpp"

namespace stgc::cli {

/// Flags that override the JSON config.
struct Overrides {
  std::string config;
  std::optional<std::string> speeds, distances, coordinates;
  std::optional<double> interval;
  std::optional<int> var_order;
  std::optional<double> alpha;
  std::optional<int> top_k;
  std::optional<double> unit_scale;
  std::optional<int> s_max;
  std::optional<double> kappa;
  std::optional<std::string> sd_source;
  std::optional<int> window, hidden, epochs, batch_size, patience, stride;
  std::optional<std::vector<int>> horizons;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out_dir = ".";

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_run_config(config);
    if (speeds) c.paths.speeds = *speeds;
    if (distances) c.paths.distances = *distances;
    if (coordinates) c.paths.coordinates = *coordinates;
    if (interval) c.sampling_interval = *interval;
    if (var_order) c.granger.var_order = *var_order;
    if (alpha) c.granger.alpha = *alpha;
    if (top_k) c.top_k = *top_k;
    if (unit_scale) c.lag.unit_scale = *unit_scale;
    if (s_max) c.lag.s_max = *s_max;
    if (kappa) c.sd.kappa = *kappa;
    if (sd_source) c.sd.source = *sd_source;
    if (window) c.train.window = *window;
    if (hidden) c.train.hidden = *hidden;
    if (epochs) c.train.max_epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (patience) c.train.patience = *patience;
    if (stride) c.train.sample_stride = *stride;
    if (horizons) c.train.horizons = *horizons;
    if (lr) c.train.learning_rate = *lr;
    if (seed) c.train.seed = *seed;
    if (workers) c.workers = *workers;
    c.train.norm = c.norm;
    c.validate();
    return c;
  }

  std::filesystem::path out(const std::string& name) const {
    std::filesystem::create_directories(out_dir);
    return std::filesystem::path(out_dir) / name;
  }
};

inline void add_config_flags(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "JSON run configuration");
  app->add_option("--speeds", o.speeds, "speed CSV");
  app->add_option("--distances", o.distances, "distance CSV (from,to,cost)");
  app->add_option("--interval", o.interval, "sampling interval in minutes");
  app->add_option("--workers", o.workers, "worker threads (0 = all cores)");
  app->add_option("-o,--out-dir", o.out_dir, "output directory");
}

inline void add_granger_flags(CLI::App* app, Overrides& o) {
  app->add_option("--coordinates", o.coordinates, "sensor coordinates CSV (id,lon,lat)");
  app->add_option("--var-order", o.var_order, "lag order m of the Granger regressions");
  app->add_option("--alpha", o.alpha, "significance level");
  app->add_option("--top-k", o.top_k, "keep at most k causes per effect");
  app->add_option("--unit-scale", o.unit_scale, "multiplier from cost units to speed distance units");
  app->add_option("--s-max", o.s_max, "largest usable lag in timesteps");
}

inline void add_train_flags(CLI::App* app, Overrides& o) {
  app->add_option("--s-max", o.s_max, "largest usable lag in timesteps");
  app->add_option("--window", o.window, "input window length");
  app->add_option("--horizons", o.horizons, "forecast horizons in timesteps")->delimiter(',');
  app->add_option("--hidden", o.hidden, "hidden units per node");
  app->add_option("--epochs", o.epochs, "maximum epochs");
  app->add_option("--batch-size", o.batch_size, "minibatch size");
  app->add_option("--patience", o.patience, "early-stopping patience");
  app->add_option("--stride", o.stride, "step between training windows");
  app->add_option("--lr", o.lr, "Adam learning rate");
  app->add_option("--seed", o.seed, "initialization and shuffling seed");
}

inline json with_version(json config) {
  return json{{"tool_version", kToolVersion}, {"run", std::move(config)}};
}

inline TimeSeriesMatrix load_speeds(const RunConfig& c) {
  if (c.paths.speeds.empty()) throw InputError("no speed file given (--speeds or paths.speeds)");
  return load_speed_matrix(c.paths.speeds, c.sampling_interval);
}

inline DistanceTable load_distances(const RunConfig& c) {
  if (c.paths.distances.empty()) throw InputError("no distance file given (--distances or paths.distances)");
  return load_distance_table(c.paths.distances);
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  auto out = csv::open_output(p.string());
  out << s;
}

// ---------------------------------------------------------------------------

inline void cmd_build_graph(const Overrides& o, bool no_align) {
  const auto cfg = o.resolve();
  const auto speeds = load_speeds(cfg);
  const auto dist = load_distances(cfg);
  std::cerr << "build-graph: " << speeds.sensors() << " sensors, " << speeds.steps() << " steps\n";
  const auto b = build_graph(cfg, speeds, dist, no_align);
  const auto meta = with_version(config_to_json(cfg));

  write_json_file(graph_to_json(b.stgc.graph, meta), o.out("graph.json").string());
  write_lag_csv(b.lags, speeds.sensor_ids(), o.out("lags.csv").string());
  {
    auto out = csv::open_output(o.out("adjacency.csv").string());
    write_adjacency_csv(to_adjacency(b.stgc.graph), out);
  }
  auto summary = graph_summary_json(b, cfg);
  write_json_file(summary, o.out("summary.json").string());
  write_json_file(config_to_json(cfg), o.out("run_config.json").string());
  if (!cfg.paths.coordinates.empty()) {
    auto in = csv::open_input(cfg.paths.coordinates);
    write_json_file(graph_to_geojson(b.stgc.graph, parse_coordinates_csv(in, cfg.paths.coordinates)),
                    o.out("graph.geojson").string());
  }
  std::cerr << "nodes " << summary["nodes"] << " edges " << summary["edges"] << " density " << summary["density"] << '\n'
            << "defined lags " << b.lag_summary.defined_pairs << ", fraction <= 6: " << summary["lags"]["fraction_le_6"]
            << ", fraction <= 9: " << summary["lags"]["fraction_le_9"] << ", max defined lag " << b.lag_summary.max_uncapped
            << '\n';
  if (b.lag_summary.reverse_fallback)
    std::cerr << "warning: " << b.lag_summary.reverse_fallback << " lags use the reverse-direction cost\n";
}

struct BaselineArgs {
  std::string kind;
  std::string reference;
  std::string lags;
  std::size_t seeds = 10;
  std::uint64_t first_seed = 0;
};

inline void cmd_baseline(const Overrides& o, const BaselineArgs& a) {
  const auto cfg = o.resolve();
  const auto meta = with_version(config_to_json(cfg));
  if (a.kind == "identity") {
    std::vector<std::string> ids;
    if (!a.reference.empty()) ids = graph_from_json(read_json_file(a.reference)).node_ids;
    else ids = load_speeds(cfg).sensor_ids();
    write_json_file(adjacency_to_json(identity_graph(ids.size(), ids), meta), o.out("identity_graph.json").string());
  } else if (a.kind == "sd") {
    const auto speeds = load_speeds(cfg);
    const auto road = build_road_graph(load_distances(cfg), speeds.sensor_ids());
    const auto costs = cfg.sd.source == "direct" ? direct_costs(road) : all_pairs_shortest_costs(road, cfg.worker_count());
    const auto adj = build_sd_graph(costs, cfg.sd.kappa, speeds.sensor_ids());
    write_json_file(adjacency_to_json(adj, meta), o.out("sd_graph.json").string());
    auto out = csv::open_output(o.out("sd_graph.csv").string());
    write_adjacency_csv(adj, out);
  } else if (a.kind == "random") {
    if (a.reference.empty()) throw InputError("random baseline needs --reference <graph.json>");
    const auto ref = graph_from_json(read_json_file(a.reference));
    std::optional<LagMatrix> lags;
    if (!a.lags.empty()) {
      auto in = csv::open_input(a.lags);
      auto [m, ids] = read_lag_csv(in, a.lags);
      if (ids != ref.node_ids) throw InputError(a.lags + ": node order differs from the reference graph");
      lags = std::move(m);
    }
    for (std::size_t k = 0; k < a.seeds; ++k) {
      const auto seed = a.first_seed + k;
      auto g = random_graph_matching(ref, seed, lags ? &*lags : nullptr);
      auto doc = graph_to_json(g, meta);
      doc["seed"] = seed;
      write_json_file(doc, o.out("random_seed" + std::to_string(seed) + ".json").string());
    }
  } else {
    throw InputError("unknown baseline kind '" + a.kind + "' (sd|identity|random)");
  }
}

struct TrainEvalArgs {
  std::string graph;
  std::string label;
  bool self_loops = true;
};

inline void cmd_train_eval(const Overrides& o, const TrainEvalArgs& a) {
  const auto cfg = o.resolve();
  const auto speeds = load_speeds(cfg);
  const auto doc = read_json_file(a.graph);
  const auto adj = load_any_adjacency(doc, a.self_loops);
  const std::string label = a.label.empty() ? doc.value("kind", std::string("graph")) : a.label;
  const std::string stem = std::filesystem::path(a.graph).stem().string();
  std::cerr << "train-eval: graph '" << label << "' on " << speeds.sensors() << " sensors\n";
  auto res = train_and_evaluate(cfg, speeds, adj, label, &std::cerr);
  json report = report_to_json(res.report);
  report["config"] = with_version(config_to_json(cfg));
  report["graph_file"] = std::filesystem::path(a.graph).filename().string();
  report["best_epoch"] = res.training.best_epoch;
  write_json_file(report, o.out(stem + "_report.json").string());
  {
    auto out = csv::open_output(o.out(stem + "_nodes.csv").string());
    write_node_metrics_csv(res.per_node, speeds.sampling_interval(), out);
  }
  {
    auto out = csv::open_output(o.out(stem + "_train_log.csv").string());
    write_train_log_csv(res.training.log, out);
  }
  write_json_file(params_to_json(res.training.params), o.out(stem + "_model.json").string());
  for (const auto& h : res.report.horizons)
    std::cerr << h.horizon_minutes << " min: MAE " << h.metrics.mae << " RMSE " << h.metrics.rmse << '\n';
}

inline void cmd_compare(const std::vector<std::string>& files, const std::string& out_dir) {
  std::vector<MetricsReport> reports;
  for (const auto& f : files) reports.push_back(report_from_json(read_json_file(f)));
  const auto table = compare(reports);
  const auto text = render_comparison_text(table);
  std::filesystem::create_directories(out_dir);
  write_text(std::filesystem::path(out_dir) / "comparison.txt", text);
  auto out = csv::open_output((std::filesystem::path(out_dir) / "comparison.csv").string());
  write_comparison_csv(table, out);
  std::cout << text;
}

inline void cmd_synth(const std::string& scenario_path, std::optional<std::uint64_t> seed, const std::string& out_dir) {
  auto sc = scenario_from_json(read_json_file(scenario_path));
  if (seed) sc.seed = *seed;
  const auto data = generate(sc);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  write_speed_csv(data.speeds, (dir / "speeds.csv").string());
  write_distance_csv(data.distances, (dir / "distances.csv").string());
  json meta{{"tool_version", kToolVersion}, {"scenario", scenario_to_json(sc)}};
  write_json_file(graph_to_json(data.truth, meta), (dir / "truth.json").string());
  std::cerr << "synth: " << sc.n_nodes << " nodes, " << sc.steps << " steps, " << sc.planted.size() << " planted edges\n";
}

inline void cmd_score(const std::string& detected, const std::string& truth, const std::string& out_dir) {
  const auto s = score_recovery(graph_from_json(read_json_file(detected)), graph_from_json(read_json_file(truth)));
  json j{{"tool_version", kToolVersion},
         {"precision", s.precision},
         {"recall", s.recall},
         {"lag_accuracy", s.lag_accuracy},
         {"true_positives", s.true_positives},
         {"false_positives", s.false_positives},
         {"false_negatives", s.false_negatives}};
  std::filesystem::create_directories(out_dir);
  write_json_file(j, (std::filesystem::path(out_dir) / "score.json").string());
  std::cout << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

/// Exit codes: 0 success, 1 computation error, 2 input or config error.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"Spatial-temporal Granger causality graphs for road sensor networks"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Overrides o;
  bool no_align = false;
  BaselineArgs base;
  TrainEvalArgs te;
  std::vector<std::string> report_files;
  std::string scenario, detected, truth;
  std::optional<std::uint64_t> synth_seed;

  auto* build = app.add_subcommand("build-graph", "test every sensor pair and write the STGC graph");
  add_config_flags(build, o);
  add_granger_flags(build, o);
  build->add_flag("--no-align", no_align, "force s = 0 for every pair (ablation)");

  auto* baseline = app.add_subcommand("baseline", "write an sd, identity or random comparison graph");
  add_config_flags(baseline, o);
  baseline->add_option("kind", base.kind, "sd | identity | random")->required()->check(CLI::IsMember({"sd", "identity", "random"}));
  baseline->add_option("--reference", base.reference, "graph whose in-degrees the random graph copies");
  baseline->add_option("--lags", base.lags, "lag CSV giving random edges their lag");
  baseline->add_option("--seeds", base.seeds, "number of random graphs");
  baseline->add_option("--first-seed", base.first_seed, "seed of the first random graph");
  baseline->add_option("--kappa", o.kappa, "sd threshold in [0, 1]");
  baseline->add_option("--sd-source", o.sd_source, "direct | shortest");

  auto* trainc = app.add_subcommand("train-eval", "train the graph-GRU on a graph and report test errors");
  add_config_flags(trainc, o);
  add_train_flags(trainc, o);
  trainc->add_option("-g,--graph", te.graph, "graph or adjacency JSON")->required();
  trainc->add_option("--label", te.label, "report label (default: graph kind); outputs are named after the graph file");
  trainc->add_flag("!--no-self-loops", te.self_loops, "do not add self loops to causal graphs");

  auto* comparec = app.add_subcommand("compare", "tabulate metric reports");
  comparec->add_option("reports", report_files, "report JSON files")->required();
  comparec->add_option("-o,--out-dir", o.out_dir, "output directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with planted causes");
  synth->add_option("scenario", scenario, "scenario JSON")->required();
  synth->add_option("--seed", synth_seed, "override the scenario seed");
  synth->add_option("-o,--out-dir", o.out_dir, "output directory");

  auto* score = app.add_subcommand("score", "precision, recall and lag accuracy against a truth graph");
  score->add_option("detected", detected, "detected graph JSON")->required();
  score->add_option("truth", truth, "ground-truth graph JSON")->required();
  score->add_option("-o,--out-dir", o.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*build) cmd_build_graph(o, no_align);
    else if (*baseline) cmd_baseline(o, base);
    else if (*trainc) cmd_train_eval(o, te);
    else if (*comparec) cmd_compare(report_files, o.out_dir);
    else if (*synth) cmd_synth(scenario, synth_seed, o.out_dir);
    else if (*score) cmd_score(detected, truth, o.out_dir);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ComputeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace stgc::cli
