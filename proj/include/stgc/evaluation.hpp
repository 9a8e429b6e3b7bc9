#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stgc/data_model.hpp"
#include "stgc/error.hpp"
#include "stgc/predictor.hpp"

namespace stgc {

struct Metrics {
  double mae = 0.0;
  double mape = 0.0;  // fraction, over valid entries with non-zero truth
  double rmse = 0.0;
  std::size_t n_evaluated = 0;
  std::size_t n_mape = 0;
};

/// MAE, MAPE and RMSE over the entries flagged in `valid`. MAPE further skips
/// entries whose truth is exactly zero.
inline Metrics compute_metrics(const Matrix& truth, const Matrix& predicted, const Mask& valid) {
  if (truth.rows() != predicted.rows() || truth.cols() != predicted.cols() || valid.rows() != truth.rows() ||
      valid.cols() != truth.cols())
    throw InputError("metric inputs must have equal shapes");
  Metrics m;
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  for (Eigen::Index j = 0; j < truth.cols(); ++j)
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
      if (!valid(i, j)) continue;
      const double e = truth(i, j) - predicted(i, j);
      abs_sum += std::abs(e);
      sq_sum += e * e;
      ++m.n_evaluated;
      if (truth(i, j) != 0.0) {
        pct_sum += std::abs(e / truth(i, j));
        ++m.n_mape;
      }
    }
  if (m.n_evaluated == 0) throw ComputeError("no valid points to evaluate");
  const auto n = static_cast<double>(m.n_evaluated);
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  m.mape = m.n_mape ? pct_sum / static_cast<double>(m.n_mape) : std::numeric_limits<double>::quiet_NaN();
  return m;
}

inline Metrics compute_metrics(const Matrix& truth, const Matrix& predicted) {
  return compute_metrics(truth, predicted, Mask::Constant(truth.rows(), truth.cols(), true));
}

struct HorizonMetrics {
  int horizon_steps = 0;
  double horizon_minutes = 0.0;
  Metrics metrics;
};

struct MetricsReport {
  std::string graph_label;
  std::vector<HorizonMetrics> horizons;
  json config = json::object();
};

struct NodeMetrics {
  std::string node_id;
  int horizon_steps = 0;
  Metrics metrics;
};

inline MetricsReport evaluate_predictions(const PredictionBatch& batch, double sampling_interval_minutes,
                                          std::string label) {
  MetricsReport r{std::move(label), {}, json::object()};
  for (std::size_t h = 0; h < batch.horizons.size(); ++h)
    r.horizons.push_back({batch.horizons[h], batch.horizons[h] * sampling_interval_minutes,
                          compute_metrics(batch.truth[h], batch.predicted[h], batch.valid[h])});
  return r;
}

/// Per-node metrics; nodes with no valid target at a horizon are skipped.
inline std::vector<NodeMetrics> evaluate_per_node(const PredictionBatch& batch, const std::vector<std::string>& ids) {
  std::vector<NodeMetrics> out;
  for (std::size_t n = 0; n < ids.size(); ++n)
    for (std::size_t h = 0; h < batch.horizons.size(); ++h) {
      const auto c = static_cast<Eigen::Index>(n);
      if (batch.valid[h].col(c).count() == 0) continue;
      out.push_back({ids[n], batch.horizons[h],
                     compute_metrics(batch.truth[h].col(c), batch.predicted[h].col(c), batch.valid[h].col(c))});
    }
  return out;
}

namespace detail {
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}
}  // namespace detail

inline json report_to_json(const MetricsReport& r) {
  json hs = json::array();
  for (const auto& h : r.horizons)
    hs.push_back(json{{"horizon_steps", h.horizon_steps}, {"horizon_minutes", h.horizon_minutes},
                      {"mae", detail::number_or_null(h.metrics.mae)}, {"mape", detail::number_or_null(h.metrics.mape)},
                      {"rmse", detail::number_or_null(h.metrics.rmse)}, {"n_evaluated", h.metrics.n_evaluated},
                      {"n_mape", h.metrics.n_mape}});
  return json{{"graph_label", r.graph_label}, {"horizons", std::move(hs)}, {"config", r.config}};
}

inline MetricsReport report_from_json(const json& j) {
  try {
    MetricsReport r;
    r.graph_label = j.at("graph_label").get<std::string>();
    r.config = j.value("config", json::object());
    for (const auto& h : j.at("horizons")) {
      HorizonMetrics hm;
      hm.horizon_steps = h.at("horizon_steps").get<int>();
      hm.horizon_minutes = h.at("horizon_minutes").get<double>();
      hm.metrics.mae = detail::number_or_nan(h.at("mae"));
      hm.metrics.mape = detail::number_or_nan(h.at("mape"));
      hm.metrics.rmse = detail::number_or_nan(h.at("rmse"));
      hm.metrics.n_evaluated = h.value("n_evaluated", std::size_t{0});
      hm.metrics.n_mape = h.value("n_mape", std::size_t{0});
      r.horizons.push_back(hm);
    }
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed metrics report: ") + e.what());
  }
}

inline void write_node_metrics_csv(const std::vector<NodeMetrics>& rows, double interval, std::ostream& out) {
  out << "id,horizon_minutes,mae,mape,rmse\n";
  for (const auto& r : rows)
    out << r.node_id << ',' << csv::format_double(r.horizon_steps * interval) << ',' << csv::format_double(r.metrics.mae)
        << ',' << csv::format_double(r.metrics.mape) << ',' << csv::format_double(r.metrics.rmse) << '\n';
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

enum MetricKind : std::size_t { kMae, kMape, kRmse, kMetricCount };

struct ComparisonRow {
  std::string graph_label;
  std::size_t runs = 1;  // reports averaged into this row
  double horizon_minutes = 0.0;
  std::array<double, kMetricCount> values{};
  std::array<bool, kMetricCount> best{};
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;

  const ComparisonRow* find(const std::string& label, double minutes) const {
    for (const auto& r : rows)
      if (r.graph_label == label && r.horizon_minutes == minutes) return &r;
    return nullptr;
  }
};

/// One row per (label, horizon). Reports sharing a label (e.g. one per random
/// seed) are averaged first. A cell is marked best only when it is the strict
/// minimum of its (horizon, metric) column.
inline ComparisonTable compare(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw InputError("nothing to compare");
  std::vector<double> minutes;
  for (const auto& h : reports.front().horizons) minutes.push_back(h.horizon_minutes);
  for (const auto& r : reports) {
    std::vector<double> m;
    for (const auto& h : r.horizons) m.push_back(h.horizon_minutes);
    if (m != minutes) throw InputError("report '" + r.graph_label + "' has a different horizon set");
  }

  std::vector<std::string> labels;
  std::map<std::string, std::vector<const MetricsReport*>> groups;
  for (const auto& r : reports) {
    if (!groups.count(r.graph_label)) labels.push_back(r.graph_label);
    groups[r.graph_label].push_back(&r);
  }

  ComparisonTable table;
  for (const auto& label : labels) {
    const auto& group = groups[label];
    for (std::size_t h = 0; h < minutes.size(); ++h) {
      ComparisonRow row{label, group.size(), minutes[h], {}, {}};
      for (const auto* r : group) {
        const auto& m = r->horizons[h].metrics;
        row.values[kMae] += m.mae;
        row.values[kMape] += m.mape;
        row.values[kRmse] += m.rmse;
      }
      for (auto& v : row.values) v /= static_cast<double>(group.size());
      table.rows.push_back(row);
    }
  }
  for (double mins : minutes)
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      ComparisonRow* best = nullptr;
      bool tie = false;
      for (auto& row : table.rows) {
        if (row.horizon_minutes != mins || std::isnan(row.values[k])) continue;
        if (!best || row.values[k] < best->values[k]) {
          best = &row;
          tie = false;
        } else if (row.values[k] == best->values[k]) {
          tie = true;
        }
      }
      if (best && !tie) best->best[k] = true;
    }
  return table;
}

inline std::string render_comparison_text(const ComparisonTable& t) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "graph" << std::right << std::setw(10) << "horizon" << std::setw(12) << "MAE"
     << std::setw(12) << "MAPE(%)" << std::setw(12) << "RMSE" << '\n';
  auto cell = [&](double v, bool best, double scale) {
    std::ostringstream c;
    c << std::fixed << std::setprecision(3) << v * scale << (best ? "*" : " ");
    os << std::setw(12) << c.str();
  };
  for (const auto& r : t.rows) {
    std::string label = r.graph_label + (r.runs > 1 ? " (x" + std::to_string(r.runs) + ")" : "");
    std::ostringstream h;
    h << r.horizon_minutes << " min";
    os << std::left << std::setw(20) << label << std::right << std::setw(10) << h.str();
    cell(r.values[kMae], r.best[kMae], 1.0);
    cell(r.values[kMape], r.best[kMape], 100.0);
    cell(r.values[kRmse], r.best[kRmse], 1.0);
    os << '\n';
  }
  os << "* strict best in column for that horizon\n";
  return os.str();
}

inline void write_comparison_csv(const ComparisonTable& t, std::ostream& out) {
  out << "graph,runs,horizon_minutes,mae,mape,rmse,best_mae,best_mape,best_rmse\n";
  for (const auto& r : t.rows)
    out << r.graph_label << ',' << r.runs << ',' << csv::format_double(r.horizon_minutes) << ','
        << csv::format_double(r.values[kMae]) << ',' << csv::format_double(r.values[kMape]) << ','
        << csv::format_double(r.values[kRmse]) << ',' << r.best[kMae] << ',' << r.best[kMape] << ',' << r.best[kRmse]
        << '\n';
}

}  // namespace stgc
