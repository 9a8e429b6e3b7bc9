#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "stgc/predictor.hpp"

using namespace stgc;

namespace {

AdjacencyMatrix adjacency(const Matrix& w) {
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < w.rows(); ++i) ids.push_back("n" + std::to_string(i));
  return AdjacencyMatrix{ids, w, w == w.transpose(), "test"};
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

/// Noiseless linear network: node 0 is a sinusoid mix, others follow it with delays.
TimeSeriesMatrix linear_system(Eigen::Index n, Eigen::Index t) {
  Matrix v(n, t);
  for (Eigen::Index k = 0; k < t; ++k) {
    v(0, k) = 50 + 5 * std::sin(0.21 * k) + 3 * std::sin(0.05 * k + 1);
    for (Eigen::Index i = 1; i < n; ++i) v(i, k) = k >= i ? 0.6 * (v(i - 1, k - i) - 50) + 50 : 50;
  }
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
  return TimeSeriesMatrix(v, ids, 5.0);
}

}  // namespace

TEST(Propagation, Normalization) {
  EXPECT_EQ(normalize_propagation(adjacency(Matrix::Identity(3, 3))).p, Matrix::Identity(3, 3));
  Matrix w(3, 3);
  w << 1, 1, 0, 1, 1, 0, 0, 0, 1;
  auto p = normalize_propagation(adjacency(w)).p;
  EXPECT_EQ(p.row(0), (Eigen::RowVector3d(0.5, 0.5, 0.0)));
  EXPECT_LT((p.rowwise().sum() - Vector::Ones(3)).cwiseAbs().maxCoeff(), 1e-12);
  // Edge 0 -> 2 means node 2 listens to node 0.
  Matrix d = Matrix::Identity(3, 3);
  d(0, 2) = 1;
  auto pd = normalize_propagation(adjacency(d)).p;
  EXPECT_EQ(pd(2, 0), 0.5);
  EXPECT_EQ(pd(0, 2), 0.0);
  Matrix z = Matrix::Identity(3, 3);
  z(1, 1) = 0;
  EXPECT_THROW(normalize_propagation(adjacency(z)), InputError);
}

TEST(Forward, ZeroWeightsGiveReadoutBias) {
  auto m = ModelParams::zeros(4, 3);
  m.t[ModelParams::bo] << 1.5, -2.0, 0.25;
  std::mt19937_64 rng(1);
  auto y = forward(m, normalize_propagation(adjacency(Matrix::Identity(5, 5))), random_matrix(rng, 6, 5));
  for (Eigen::Index j = 0; j < 5; ++j) EXPECT_EQ(y.col(j), Vector(m.t[ModelParams::bo].row(0).transpose()));
  EXPECT_THROW(forward(m, normalize_propagation(adjacency(Matrix::Identity(5, 5))), Matrix::Zero(6, 4)), InputError);
}

TEST(Forward, IdentityPropagationIsLocal) {
  std::mt19937_64 rng(2);
  auto m = ModelParams::initialize(5, 2, 3);
  auto prop = normalize_propagation(adjacency(Matrix::Identity(4, 4)));
  Matrix x = random_matrix(rng, 7, 4);
  auto base = forward(m, prop, x);
  for (Eigen::Index j = 0; j < 4; ++j) {
    Matrix bumped = x;
    bumped.col(j).array() += 0.37;
    auto y = forward(m, prop, bumped);
    for (Eigen::Index i = 0; i < 4; ++i) {
      if (i == j) EXPECT_NE(y.col(i), base.col(i));
      else EXPECT_EQ(y.col(i), base.col(i));
    }
  }
}

TEST(Forward, SingleEdgeCarriesInfluence) {
  std::mt19937_64 rng(4);
  auto m = ModelParams::initialize(5, 2, 5);
  Matrix w = Matrix::Identity(3, 3);
  w(2, 0) = 1;  // 2 -> 0
  auto prop = normalize_propagation(adjacency(w));
  Matrix x = random_matrix(rng, 6, 3);
  auto base = forward(m, prop, x);
  Matrix bumped = x;
  bumped.col(2).array() += 0.5;
  auto y = forward(m, prop, bumped);
  EXPECT_GT((y.col(0) - base.col(0)).norm(), 1e-6);
  EXPECT_EQ(y.col(1), base.col(1));
}

TEST(Gradients, MatchFiniteDifferences) {
  auto probe = oracle::gradient_probe();
  auto check = oracle::gradient_check(probe.params, probe.prop, probe.batch);
  EXPECT_EQ(check.checked, probe.params.parameter_count());
  EXPECT_LT(check.max_rel_error, 1e-4);
}

TEST(Gradients, ZeroAtPerfectFitAndQuadraticLoss) {
  auto probe = oracle::gradient_probe(3);
  auto targets = probe.batch;
  for (auto& s : targets) s.target = forward(probe.params, probe.prop, s.input);
  auto lg = loss_and_gradients(probe.params, probe.prop, targets);
  EXPECT_EQ(lg.loss, 0.0);
  for (const auto& g : lg.grad.t) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);

  const double base = loss_and_gradients(probe.params, probe.prop, probe.batch).loss;
  auto doubled = probe.batch;
  for (auto& s : doubled) {
    Matrix pred = forward(probe.params, probe.prop, s.input);
    s.target = pred + 2.0 * (s.target - pred);
  }
  EXPECT_NEAR(loss_and_gradients(probe.params, probe.prop, doubled).loss, 4.0 * base, 1e-12 * base);
  EXPECT_THROW(loss_and_gradients(probe.params, probe.prop, std::vector<Sample>{}), InputError);
}

TEST(Forward, PermutationEquivariance) {
  std::mt19937_64 rng(6);
  auto m = ModelParams::initialize(4, 3, 8);
  Matrix w = Matrix::Identity(5, 5);
  w(0, 1) = w(1, 2) = w(3, 2) = w(4, 0) = 1;
  Matrix x = random_matrix(rng, 6, 5);
  std::vector<int> perm{3, 0, 4, 1, 2};
  Eigen::PermutationMatrix<Eigen::Dynamic> pm(5);
  for (int i = 0; i < 5; ++i) pm.indices()(i) = perm[static_cast<std::size_t>(i)];
  Matrix wp = pm * w * pm.transpose();
  Matrix xp = x * pm.transpose();
  auto y = forward(m, normalize_propagation(adjacency(w)), x);
  auto yp = forward(m, normalize_propagation(adjacency(wp)), xp);
  EXPECT_LT((yp - y * pm.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Train, DeterministicAndLearns) {
  auto data = linear_system(4, 900);
  auto split = chronological_split(data, {0.7, 0.1, 0.2});
  Matrix w = Matrix::Identity(4, 4);
  for (int i = 0; i + 1 < 4; ++i) w(i, i + 1) = 1;
  auto prop = normalize_propagation(adjacency(w));
  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.max_epochs = 10;
  cfg.patience = 10;
  cfg.learning_rate = 5e-3;
  cfg.seed = 3;
  auto a = train(prop, split, cfg);
  auto b = train(prop, split, cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_mse, b.log[i].train_mse);
    EXPECT_EQ(a.log[i].val_mse, b.log[i].val_mse);
  }
  ASSERT_EQ(a.log.size(), 10u);
  for (std::size_t i = 1; i < a.log.size(); ++i) EXPECT_LT(a.log[i].val_mse, a.log[i - 1].val_mse) << "epoch " << i + 1;
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  auto data = linear_system(3, 400);
  auto split = chronological_split(data, {0.7, 0.1, 0.2});
  auto prop = normalize_propagation(adjacency(Matrix::Identity(3, 3)));
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.max_epochs = 3;
  cfg.learning_rate = 0.0;
  cfg.seed = 11;
  auto res = train(prop, split, cfg);
  auto init = ModelParams::initialize(4, 4, 11);
  for (std::size_t s = 0; s < ModelParams::kSlots; ++s) EXPECT_EQ(res.params.t[s], init.t[s]);
  cfg.horizons = {3, 13};
  EXPECT_THROW(train(prop, split, cfg), InputError);
}

TEST(Predict, LengthContract) {
  auto m = ModelParams::initialize(3, 1, 1);
  auto prop = normalize_propagation(adjacency(Matrix::Identity(2, 2)));
  auto data = linear_system(2, 24);
  NormStats st{Vector::Constant(2, 50.0), Vector::Constant(2, 5.0), NormMode::per_sensor};
  EXPECT_THROW(predict_test(m, prop, data.slice(0, 23), st, 12, {12}), InputError);
  auto batch = predict_test(m, prop, data, st, 12, {12});
  EXPECT_EQ(batch.instants(), 1u);
  EXPECT_EQ(batch.truth[0](0, 1), data.values()(1, 23));
}

TEST(Predict, ConstantSeriesReproduced) {
  Matrix v(3, 300);
  v.row(0).setConstant(42.0);
  v.row(1).setConstant(55.5);
  v.row(2).setConstant(61.0);
  TimeSeriesMatrix data(v, {"a", "b", "c"}, 5.0);
  auto split = chronological_split(data, {0.7, 0.1, 0.2});
  auto prop = normalize_propagation(adjacency(Matrix::Identity(3, 3)));
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.max_epochs = 2;
  auto res = train(prop, split, cfg);
  auto batch = predict_test(res.params, prop, split.test, res.stats, cfg.window, cfg.horizons);
  for (std::size_t h = 0; h < batch.horizons.size(); ++h)
    EXPECT_LT((batch.predicted[h] - batch.truth[h]).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Params, JsonRoundTrip) {
  auto m = ModelParams::initialize(3, 2, 9);
  auto back = params_from_json(json::parse(params_to_json(m).dump()));
  for (std::size_t s = 0; s < ModelParams::kSlots; ++s) EXPECT_EQ(back.t[s], m.t[s]);
  EXPECT_THROW(params_from_json(json{{"format", "other"}, {"version", 1}}), InputError);
}

TEST(Samples, WindowsAndTargets) {
  auto data = linear_system(2, 30);
  auto s = make_samples(data, 5, {1, 3}, 2);
  ASSERT_EQ(s.size(), 12u);  // t = 0, 2, ..., 22
  EXPECT_EQ(s[1].input(0, 1), data.values()(1, 2));
  EXPECT_EQ(s[1].target(1, 0), data.values()(0, 2 + 4 + 3));
}
