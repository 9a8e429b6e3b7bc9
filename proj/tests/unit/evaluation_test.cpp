#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "stgc/evaluation.hpp"

using namespace stgc;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

MetricsReport report(const std::string& label, std::vector<double> maes, std::vector<double> minutes = {15, 30}) {
  MetricsReport r{label, {}, json::object()};
  for (std::size_t i = 0; i < maes.size(); ++i)
    r.horizons.push_back({static_cast<int>(minutes[i] / 5), minutes[i], Metrics{maes[i], maes[i] / 50, maes[i] * 1.2, 10, 10}});
  return r;
}

}  // namespace

TEST(Metrics, HandComputed) {
  auto m = compute_metrics(row({2, 4}), row({1, 6}));
  EXPECT_NEAR(m.mae, 1.5, 1e-12);
  EXPECT_NEAR(m.mape, 0.5, 1e-12);
  EXPECT_NEAR(m.rmse, std::sqrt(2.5), 1e-12);
  auto same = compute_metrics(row({3, 7}), row({3, 7}));
  EXPECT_EQ(same.mae, 0.0);
  EXPECT_EQ(same.mape, 0.0);
  EXPECT_EQ(same.rmse, 0.0);
}

TEST(Metrics, ZeroTruthSkippedForMape) {
  auto m = compute_metrics(row({0, 5}), row({1, 5}));
  EXPECT_EQ(m.mape, 0.0);
  EXPECT_EQ(m.n_mape, 1u);
  EXPECT_NEAR(m.mae, 0.5, 1e-12);
  auto all_zero = compute_metrics(row({0, 0}), row({1, 2}));
  EXPECT_TRUE(std::isnan(all_zero.mape));
}

TEST(Metrics, MaskAndErrors) {
  Mask mask(1, 3);
  mask << true, false, true;
  auto m = compute_metrics(row({2, 100, 4}), row({1, 0, 6}), mask);
  EXPECT_NEAR(m.mae, 1.5, 1e-12);
  EXPECT_EQ(m.n_evaluated, 2u);
  EXPECT_THROW(compute_metrics(row({1}), row({1}), Mask::Constant(1, 1, false)), ComputeError);
  EXPECT_THROW(compute_metrics(row({1, 2}), row({1})), InputError);
}

TEST(Metrics, Properties) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(1.0, 70.0);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix y(3, 8), p(3, 8);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      y.data()[i] = u(rng);
      p.data()[i] = u(rng);
    }
    auto m = compute_metrics(y, p);
    ASSERT_GE(m.rmse, m.mae);
    ASSERT_GE(m.mae, 0.0);
    const double c = 3.7;
    auto scaled = compute_metrics(c * y, c * p);
    EXPECT_NEAR(scaled.mape, m.mape, 1e-12);
    EXPECT_NEAR(scaled.mae, c * m.mae, 1e-10);
    EXPECT_NEAR(scaled.rmse, c * m.rmse, 1e-10);
    Matrix yr = y.reshaped(8, 3), pr = p.reshaped(8, 3);
    auto permuted = compute_metrics(yr.colwise().reverse(), pr.colwise().reverse());
    EXPECT_NEAR(permuted.mae, m.mae, 1e-12);
    EXPECT_NEAR(permuted.rmse, m.rmse, 1e-12);
  }
}

TEST(Compare, BestMarkersAndAveraging) {
  auto t = compare({report("stgc", {1.0, 2.0}), report("identity", {1.5, 1.9}), report("random", {2.0, 3.0}),
                    report("random", {1.0, 1.0})});
  ASSERT_EQ(t.rows.size(), 6u);
  auto* random15 = t.find("random", 15);
  ASSERT_NE(random15, nullptr);
  EXPECT_EQ(random15->runs, 2u);
  EXPECT_DOUBLE_EQ(random15->values[kMae], 1.5);
  EXPECT_TRUE(t.find("stgc", 15)->best[kMae]);
  EXPECT_TRUE(t.find("identity", 30)->best[kMae]);
  EXPECT_FALSE(t.find("random", 30)->best[kMae]);
}

TEST(Compare, TiesAndSingleReport) {
  auto tie = compare({report("a", {1.0, 2.0}), report("b", {1.0, 2.0})});
  for (const auto& r : tie.rows)
    for (bool b : r.best) EXPECT_FALSE(b);
  auto single = compare({report("only", {1.0, 2.0})});
  for (const auto& r : single.rows)
    for (bool b : r.best) EXPECT_TRUE(b);
  EXPECT_THROW(compare({report("a", {1.0, 2.0}), report("b", {1.0, 2.0}, {15, 45})}), InputError);
  EXPECT_THROW(compare({}), InputError);
}

TEST(Report, JsonRoundTripAndOutputs) {
  auto r = report("stgc", {1.25, 2.5});
  r.horizons[1].metrics.mape = std::numeric_limits<double>::quiet_NaN();
  auto j = report_to_json(r);
  EXPECT_TRUE(j["horizons"][1]["mape"].is_null());
  auto back = report_from_json(json::parse(j.dump()));
  EXPECT_EQ(back.graph_label, "stgc");
  EXPECT_EQ(back.horizons[0].metrics.mae, 1.25);
  EXPECT_TRUE(std::isnan(back.horizons[1].metrics.mape));

  auto table = compare({r});
  std::ostringstream csv_out;
  write_comparison_csv(table, csv_out);
  EXPECT_EQ(csv_out.str().substr(0, csv_out.str().find('\n')), "graph,runs,horizon_minutes,mae,mape,rmse,best_mae,best_mape,best_rmse");
  EXPECT_NE(render_comparison_text(table).find("stgc"), std::string::npos);
}

TEST(Evaluate, PerHorizonAndPerNode) {
  PredictionBatch b;
  b.horizons = {3, 12};
  for (int h = 0; h < 2; ++h) {
    Matrix truth(2, 2), pred(2, 2);
    truth << 10, 20, 30, 40;
    pred << 11, 20, 30, 44;
    b.truth.push_back(truth);
    b.predicted.push_back(pred);
    b.valid.push_back(Mask::Constant(2, 2, true));
  }
  b.valid[1].col(1).setConstant(false);
  auto rep = evaluate_predictions(b, 5.0, "g");
  EXPECT_EQ(rep.horizons[1].horizon_minutes, 60.0);
  EXPECT_NEAR(rep.horizons[0].metrics.mae, 5.0 / 4, 1e-12);
  auto nodes = evaluate_per_node(b, {"a", "b"});
  EXPECT_EQ(nodes.size(), 3u);  // node b has no valid target at horizon 12
}
