#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "stgc/lag_engine.hpp"

using namespace stgc;

namespace {

struct RandomRoad {
  RoadGraph graph;
  std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
};

RandomRoad random_road(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
  std::uniform_int_distribution<std::size_t> node(0, n - 1);
  std::uniform_int_distribution<int> cost(0, 20);
  std::vector<DistanceRecord> records;
  RandomRoad r;
  for (std::size_t k = 0; k < m; ++k) {
    auto a = node(rng), b = node(rng);
    double c = cost(rng) * 0.25;
    records.push_back({ids[a], ids[b], c});
    r.edges.emplace_back(a, b, c);
  }
  records.push_back({ids[0], ids[n - 1], 100.0});
  r.edges.emplace_back(0, n - 1, 100.0);
  r.graph = build_road_graph(make_distance_table(records), ids);
  return r;
}

CostMatrix costs_of(const Matrix& d) { return CostMatrix{d}; }

}  // namespace

TEST(RoadGraph, Construction) {
  DistanceTable t{{{"A", "B", 1.0}}};
  auto g = build_road_graph(t, {"A", "B", "C"});
  EXPECT_EQ(g.size(), 3u);
  EXPECT_EQ(g.edges.size(), 1u);
  auto dropped = build_road_graph(DistanceTable{{{"A", "B", 1.0}, {"A", "X", 1.0}}}, {"A", "B"});
  EXPECT_EQ(dropped.dropped_records, 1u);
  EXPECT_THROW(build_road_graph(DistanceTable{}, {"A", "B"}), InputError);
}

TEST(ShortestPaths, Chain) {
  auto g = build_road_graph(DistanceTable{{{"A", "B", 2.0}, {"B", "C", 3.0}}}, {"A", "B", "C"});
  auto c = all_pairs_shortest_costs(g);
  EXPECT_EQ(c.dist(0, 2), 5.0);
  EXPECT_TRUE(std::isinf(c.dist(2, 0)));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(c.dist(i, i), 0.0);
}

TEST(ShortestPaths, MatchesFloydWarshall) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + trial % 19;
    std::size_t m = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
    auto r = random_road(rng, n, m);
    auto got = all_pairs_shortest_costs(r.graph, 1 + trial % 3);
    auto want = oracle::floyd_warshall(n, r.edges);
    ASSERT_EQ(got.dist, want) << "trial " << trial;
  }
}

TEST(ShortestPaths, TriangleInequalityAndMonotonicity) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    auto r = random_road(rng, 12, 40);
    auto d = all_pairs_shortest_costs(r.graph).dist;
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j)
        for (int k = 0; k < 12; ++k)
          if (std::isfinite(d(i, j)) && std::isfinite(d(j, k))) ASSERT_LE(d(i, k), d(i, j) + d(j, k) + 1e-12);
    auto bumped = r.graph;
    auto e = std::uniform_int_distribution<std::size_t>(0, bumped.edges.size() - 1)(rng);
    bumped.edges[e].cost += 3.0;
    auto d2 = all_pairs_shortest_costs(bumped).dist;
    for (Eigen::Index i = 0; i < d.size(); ++i) ASSERT_GE(d2.data()[i], d.data()[i]);
  }
}

TEST(Velocity, MeanOfValid) {
  Matrix v(2, 3);
  v << 60, 0, 30, 50, 50, 50;
  TimeSeriesMatrix m(v, {"a", "b"}, 5.0);
  EXPECT_DOUBLE_EQ(*average_velocity(m, 0), 45.0);
  EXPECT_DOUBLE_EQ(*average_velocity(m, 1), 50.0);
  Matrix z(2, 2);
  z << 0, 0, 1, 1;
  EXPECT_FALSE(average_velocity(TimeSeriesMatrix(z, {"a", "b"}, 5.0), 0).has_value());
}

TEST(Lags, UnitArithmetic) {
  Matrix d(2, 2);
  d << 0, 5, 5, 0;
  auto lags = spatial_temporal_lags(costs_of(d), {60.0, 60.0}, 5.0);
  EXPECT_EQ(lags(0, 1), 1);
  EXPECT_EQ(lags(0, 0), 0);
}

TEST(Lags, RoundHalfUpCapAndSentinels) {
  const double inf = std::numeric_limits<double>::infinity();
  Matrix d(4, 4);
  // Speed 1 and a 60-minute interval: cost c is c steps.
  d << 0, 2.5, 13, inf,
       inf, 0, 12.49, inf,
       1, inf, 0, inf,
       inf, inf, inf, 0;
  auto lags = spatial_temporal_lags(costs_of(d), {1.0, 1.0, 1.0, std::nullopt}, 60.0);
  EXPECT_EQ(lags(0, 1), 3);               // 2.5 rounds up
  EXPECT_EQ(lags(0, 2), kUndefinedLag);   // 13 > s_max
  EXPECT_EQ(lags.uncapped(0, 2), 13);
  EXPECT_EQ(lags(1, 2), 12);
  EXPECT_EQ(lags(1, 0), 3);               // reverse fallback uses dist(0,1)
  EXPECT_TRUE(lags.from_reverse(1, 0));
  EXPECT_EQ(lags(0, 3), kUndefinedLag);   // unreachable both ways
  EXPECT_EQ(lags(3, 0), kUndefinedLag);   // unknown velocity
  EXPECT_EQ(lags(3, 3), 0);

  LagOptions strict;
  strict.reverse_fallback = false;
  EXPECT_EQ(spatial_temporal_lags(costs_of(d), {1.0, 1.0, 1.0, 1.0}, 60.0, strict)(1, 0), kUndefinedLag);
  EXPECT_THROW(spatial_temporal_lags(costs_of(d), {60.0, 60.0, 60.0, 60.0}, 0.0), InputError);
}

TEST(Lags, ScalingProperties) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix d = Matrix::Zero(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        if (i != j) d(i, j) = u(rng);
    std::vector<std::optional<double>> v{40.0, 50.0, 60.0, 30.0, 45.0};
    auto base = spatial_temporal_lags(costs_of(d), v, 5.0);
    auto faster = v;
    faster[2] = 120.0;
    auto fast = spatial_temporal_lags(costs_of(d), faster, 5.0);
    for (int j = 0; j < 5; ++j)
      if (base(2, j) >= 0) EXPECT_LE(fast(2, j), base(2, j));
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        ASSERT_GE(base.s(i, j), kUndefinedLag);
        ASSERT_LE(base.s(i, j), 12);
      }
  }
  // Halving the interval doubles the unrounded travel steps exactly.
  EXPECT_EQ(travel_steps(7.5, 30.0, 2.5, 1.0), 2.0 * travel_steps(7.5, 30.0, 5.0, 1.0));
  EXPECT_EQ(travel_steps(7.5, 30.0, 5.0, 1.0), 3.0);
}

TEST(Lags, StatsAndCsvRoundTrip) {
  Matrix d(3, 3);
  d << 0, 5, 80, 5, 0, 10, 80, 10, 0;
  auto lags = spatial_temporal_lags(costs_of(d), {60.0, 60.0, 60.0}, 5.0);
  auto st = lag_stats(lags, 12);
  EXPECT_EQ(st.defined_pairs, 6u);
  EXPECT_EQ(st.within_cap, 4u);
  EXPECT_EQ(st.max_uncapped, 16);
  EXPECT_DOUBLE_EQ(st.fraction_at_most(lags, 6), 4.0 / 6.0);
  std::ostringstream out;
  write_lag_csv(lags, {"a", "b", "c"}, out);
  std::istringstream in(out.str());
  auto [back, ids] = read_lag_csv(in, "lags.csv");
  EXPECT_EQ(ids, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(back.s, lags.s);
}
