#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "stgc/data_model.hpp"
#include "stgc/error.hpp"
#include "stgc/granger.hpp"
#include "stgc/lag_engine.hpp"
#include "stgc/predictor.hpp"

namespace stgc {

inline constexpr const char* kToolVersion = "0.1.0";

/// Every knob of a run. All fields have defaults; a JSON config overrides
/// them and command-line flags override the JSON.
struct RunConfig {
  struct Paths {
    std::string speeds;
    std::string distances;
    std::string coordinates;  // optional
  } paths;
  double sampling_interval = 5.0;  // minutes
  std::array<double, 3> split{0.7, 0.1, 0.2};
  NormMode norm = NormMode::per_sensor;
  GrangerConfig granger;
  std::optional<int> top_k;
  LagOptions lag;
  struct Sd {
    double kappa = 0.1;
    std::string source = "direct";  // "direct" recorded costs, or "shortest" path costs
  } sd;
  TrainConfig train;
  std::size_t workers = 0;  // 0 = available parallelism

  std::size_t worker_count() const { return workers ? workers : default_workers(); }

  void validate() const {
    if (!(sampling_interval > 0.0)) throw InputError("sampling_interval must be positive");
    granger.validate();
    if (top_k && *top_k < 0) throw InputError("top_k must be >= 0");
    if (!(lag.unit_scale > 0.0)) throw InputError("lag.unit_scale must be positive");
    if (lag.s_max < 1) throw InputError("lag.s_max must be >= 1");
    if (!(sd.kappa >= 0.0 && sd.kappa <= 1.0)) throw InputError("sd.kappa must lie in [0, 1]");
    if (sd.source != "direct" && sd.source != "shortest") throw InputError("sd.source must be 'direct' or 'shortest'");
    train.validate(lag.s_max);
    (void)split_lengths(100000, split);
  }
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw InputError("config section '" + where + "' must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw InputError("unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
}

}  // namespace detail

inline json config_to_json(const RunConfig& c) {
  return json{
      {"paths", {{"speeds", c.paths.speeds}, {"distances", c.paths.distances}, {"coordinates", c.paths.coordinates}}},
      {"sampling_interval", c.sampling_interval},
      {"split", c.split},
      {"norm", c.norm == NormMode::per_sensor ? "per_sensor" : "global"},
      {"granger", {{"var_order", c.granger.var_order}, {"alpha", c.granger.alpha}, {"top_k", c.top_k ? json(*c.top_k) : json(nullptr)}}},
      {"lag", {{"unit_scale", c.lag.unit_scale}, {"s_max", c.lag.s_max}, {"reverse_fallback", c.lag.reverse_fallback}}},
      {"sd", {{"kappa", c.sd.kappa}, {"source", c.sd.source}}},
      {"train",
       {{"window", c.train.window},
        {"horizons", c.train.horizons},
        {"hidden_dim", c.train.hidden},
        {"lr", c.train.learning_rate},
        {"epochs", c.train.max_epochs},
        {"batch_size", c.train.batch_size},
        {"patience", c.train.patience},
        {"seed", c.train.seed},
        {"sample_stride", c.train.sample_stride}}},
      {"workers", c.workers},
  };
}

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    detail::reject_unknown_keys(j, {"paths", "sampling_interval", "split", "norm", "granger", "lag", "sd", "train", "workers"}, "");
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      detail::reject_unknown_keys(p, {"speeds", "distances", "coordinates"}, "paths");
      c.paths.speeds = p.value("speeds", c.paths.speeds);
      c.paths.distances = p.value("distances", c.paths.distances);
      c.paths.coordinates = p.value("coordinates", c.paths.coordinates);
    }
    c.sampling_interval = j.value("sampling_interval", c.sampling_interval);
    if (j.contains("split")) c.split = j.at("split").get<std::array<double, 3>>();
    if (j.contains("norm")) {
      auto n = j.at("norm").get<std::string>();
      if (n == "per_sensor") c.norm = NormMode::per_sensor;
      else if (n == "global") c.norm = NormMode::global;
      else throw InputError("norm must be 'per_sensor' or 'global'");
    }
    if (j.contains("granger")) {
      const auto& g = j.at("granger");
      detail::reject_unknown_keys(g, {"var_order", "alpha", "top_k"}, "granger");
      c.granger.var_order = g.value("var_order", c.granger.var_order);
      c.granger.alpha = g.value("alpha", c.granger.alpha);
      if (g.contains("top_k") && !g.at("top_k").is_null()) c.top_k = g.at("top_k").get<int>();
    }
    if (j.contains("lag")) {
      const auto& l = j.at("lag");
      detail::reject_unknown_keys(l, {"unit_scale", "s_max", "reverse_fallback"}, "lag");
      c.lag.unit_scale = l.value("unit_scale", c.lag.unit_scale);
      c.lag.s_max = l.value("s_max", c.lag.s_max);
      c.lag.reverse_fallback = l.value("reverse_fallback", c.lag.reverse_fallback);
    }
    if (j.contains("sd")) {
      const auto& s = j.at("sd");
      detail::reject_unknown_keys(s, {"kappa", "source"}, "sd");
      c.sd.kappa = s.value("kappa", c.sd.kappa);
      c.sd.source = s.value("source", c.sd.source);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::reject_unknown_keys(
          t, {"window", "horizons", "hidden_dim", "lr", "epochs", "batch_size", "patience", "seed", "sample_stride"}, "train");
      c.train.window = t.value("window", c.train.window);
      if (t.contains("horizons")) c.train.horizons = t.at("horizons").get<std::vector<int>>();
      c.train.hidden = t.value("hidden_dim", c.train.hidden);
      c.train.learning_rate = t.value("lr", c.train.learning_rate);
      c.train.max_epochs = t.value("epochs", c.train.max_epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.patience = t.value("patience", c.train.patience);
      c.train.seed = t.value("seed", c.train.seed);
      c.train.sample_stride = t.value("sample_stride", c.train.sample_stride);
    }
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid config: ") + e.what());
  }
  c.train.norm = c.norm;
  return c;
}

inline json read_json_file(const std::string& path) {
  auto in = csv::open_input(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path + ": invalid JSON: " + e.what());
  }
}

inline void write_json_file(const json& j, const std::string& path) {
  auto out = csv::open_output(path);
  out << j.dump(2) << '\n';
}

/// Relative paths inside a config file resolve against the file's directory.
inline RunConfig load_run_config(const std::string& path) {
  RunConfig c = config_from_json(read_json_file(path));
  const auto base = std::filesystem::path(path).parent_path();
  for (std::string* p : {&c.paths.speeds, &c.paths.distances, &c.paths.coordinates})
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  return c;
}

}  // namespace stgc
