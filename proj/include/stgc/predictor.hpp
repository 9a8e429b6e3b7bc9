#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "stgc/data_model.hpp"
#include "stgc/error.hpp"
#include "stgc/graph_builder.hpp"
#include "stgc/random.hpp"

namespace stgc {

// ---------------------------------------------------------------------------
// Propagation
// ---------------------------------------------------------------------------

/// Row-stochastic propagation: row i averages the features of the nodes that
/// send messages to i (its causes, plus itself when self-loops are present).
struct PropagationMatrix {
  Matrix p;

  std::size_t size() const { return static_cast<std::size_t>(p.rows()); }
};

/// Each target row is the adjacency column of incoming weights divided by its
/// sum, so messages flow source -> target as the adjacency is oriented.
inline PropagationMatrix normalize_propagation(const AdjacencyMatrix& adj) {
  const Matrix incoming = adj.weights.transpose();
  const Vector sums = incoming.rowwise().sum();
  for (Eigen::Index i = 0; i < sums.size(); ++i)
    if (!(sums(i) > 0.0))
      throw InputError("node " + (static_cast<std::size_t>(i) < adj.node_ids.size() ? adj.node_ids[static_cast<std::size_t>(i)] : std::to_string(i)) +
                       " has no incoming weight; include self-loops in the adjacency");
  return PropagationMatrix{sums.cwiseInverse().asDiagonal() * incoming};
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Weights shared by all nodes. Gate weights map the propagated [x | h]
/// (width 1 + H) to H; the readout maps the final hidden state to one output
/// per horizon.
struct ModelParams {
  enum Slot : std::size_t { Wz, bz, Wr, br, Wc, bc, Wo, bo, kSlots };
  static constexpr std::array<const char*, kSlots> kNames{"Wz", "bz", "Wr", "br", "Wc", "bc", "Wo", "bo"};

  int hidden = 0;
  int outputs = 0;
  std::array<Matrix, kSlots> t;

  static ModelParams zeros(int hidden, int outputs) {
    if (hidden < 1 || outputs < 1) throw InputError("model needs hidden >= 1 and at least one output");
    ModelParams m;
    m.hidden = hidden;
    m.outputs = outputs;
    for (auto s : {Wz, Wr, Wc}) m.t[s] = Matrix::Zero(hidden + 1, hidden);
    for (auto s : {bz, br, bc}) m.t[s] = Matrix::Zero(1, hidden);
    m.t[Wo] = Matrix::Zero(hidden, outputs);
    m.t[bo] = Matrix::Zero(1, outputs);
    return m;
  }

  /// Glorot-uniform weights, zero biases.
  static ModelParams initialize(int hidden, int outputs, std::uint64_t seed) {
    ModelParams m = zeros(hidden, outputs);
    std::mt19937_64 rng(seed);
    for (auto s : {Wz, Wr, Wc, Wo}) {
      auto& w = m.t[s];
      const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = a * (2.0 * uniform_unit(rng) - 1.0);
    }
    return m;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& m : t) n += static_cast<std::size_t>(m.size());
    return n;
  }

  bool all_finite() const {
    return std::all_of(t.begin(), t.end(), [](const Matrix& m) { return m.allFinite(); });
  }
};

inline json params_to_json(const ModelParams& m) {
  json tensors = json::object();
  for (std::size_t s = 0; s < ModelParams::kSlots; ++s) {
    const auto& w = m.t[s];
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) data.push_back(w(i, j));
    tensors[ModelParams::kNames[s]] = json{{"shape", {w.rows(), w.cols()}}, {"data", std::move(data)}};
  }
  return json{{"format", "stgc-graph-gru"}, {"version", 1}, {"hidden", m.hidden}, {"outputs", m.outputs},
              {"tensors", std::move(tensors)}};
}

inline ModelParams params_from_json(const json& j) {
  try {
    if (j.at("format") != "stgc-graph-gru" || j.at("version") != 1) throw InputError("unsupported checkpoint format");
    ModelParams m = ModelParams::zeros(j.at("hidden").get<int>(), j.at("outputs").get<int>());
    for (std::size_t s = 0; s < ModelParams::kSlots; ++s) {
      const auto& jt = j.at("tensors").at(ModelParams::kNames[s]);
      auto shape = jt.at("shape").get<std::array<Eigen::Index, 2>>();
      auto data = jt.at("data").get<std::vector<double>>();
      auto& w = m.t[s];
      if (shape[0] != w.rows() || shape[1] != w.cols() || static_cast<Eigen::Index>(data.size()) != w.size())
        throw InputError(std::string("checkpoint tensor shape mismatch: ") + ModelParams::kNames[s]);
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(i, c) = data[static_cast<std::size_t>(i * w.cols() + c)];
    }
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

inline Matrix concat_input(const Vector& x, const Matrix& h) {
  Matrix s(h.rows(), h.cols() + 1);
  s.col(0) = x;
  s.rightCols(h.cols()) = h;
  return s;
}

struct StepCache {
  Matrix h_prev, g, z, r, g2, c;
};

}  // namespace detail

/// Input window is [window x N]; the result is [outputs x N].
/// `trace`, when given, receives the per-step activations for backprop.
inline Matrix forward(const ModelParams& m, const PropagationMatrix& prop, const Matrix& window,
                      std::vector<detail::StepCache>* trace = nullptr, Matrix* final_hidden = nullptr) {
  using S = ModelParams::Slot;
  const auto n = prop.p.rows();
  if (prop.p.cols() != n || window.cols() != n) throw InputError("window/propagation node count mismatch");
  if (window.rows() < 1) throw InputError("empty input window");
  Matrix h = Matrix::Zero(n, m.hidden);
  if (trace) trace->resize(static_cast<std::size_t>(window.rows()));
  for (Eigen::Index step = 0; step < window.rows(); ++step) {
    const Vector x = window.row(step).transpose();
    Matrix g = prop.p * detail::concat_input(x, h);
    Matrix z = detail::sigmoid((g * m.t[S::Wz]).rowwise() + m.t[S::bz].row(0));
    Matrix r = detail::sigmoid((g * m.t[S::Wr]).rowwise() + m.t[S::br].row(0));
    Matrix g2 = prop.p * detail::concat_input(x, r.cwiseProduct(h));
    Matrix c = ((g2 * m.t[S::Wc]).rowwise() + m.t[S::bc].row(0)).array().tanh().matrix();
    Matrix h_next = z.cwiseProduct(h) + (Matrix::Ones(n, m.hidden) - z).cwiseProduct(c);
    if (trace) (*trace)[static_cast<std::size_t>(step)] = {std::move(h), std::move(g), std::move(z), std::move(r), std::move(g2), std::move(c)};
    h = std::move(h_next);
  }
  Matrix y = (h * m.t[S::Wo]).rowwise() + m.t[S::bo].row(0);
  if (final_hidden) *final_hidden = h;
  return y.transpose();
}

/// One supervised example: input window [W x N], targets and validity [K x N].
struct Sample {
  Matrix input;
  Matrix target;
  Mask valid;
};

struct LossAndGrad {
  double loss = 0.0;
  std::size_t count = 0;
  ModelParams grad;
};

/// Accumulates d(sum of squared errors)/d(params) for one sample into `grad`
/// (scaled by `scale`) and returns the sample's sum of squared errors.
inline double accumulate_gradient(const ModelParams& m, const PropagationMatrix& prop, const Sample& s, double scale,
                                  ModelParams& grad, std::size_t& count) {
  using S = ModelParams::Slot;
  std::vector<detail::StepCache> trace;
  Matrix h_last;
  const Matrix pred = forward(m, prop, s.input, &trace, &h_last);
  if (pred.rows() != s.target.rows() || pred.cols() != s.target.cols())
    throw InputError("target shape does not match model outputs");

  const Matrix err = s.valid.select(pred - s.target, 0.0);
  const double sse = err.squaredNorm();
  count += static_cast<std::size_t>(s.valid.count());

  const Matrix dy = (2.0 * scale) * err.transpose();  // N x K
  grad.t[S::Wo].noalias() += h_last.transpose() * dy;
  grad.t[S::bo] += dy.colwise().sum();
  Matrix dh = dy * m.t[S::Wo].transpose();

  const auto n = prop.p.rows();
  const Matrix pt = prop.p.transpose();
  for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
    const auto& c = *it;
    const Matrix one = Matrix::Ones(n, m.hidden);
    Matrix dz = dh.cwiseProduct(c.h_prev - c.c);
    Matrix dc = dh.cwiseProduct(one - c.z);
    Matrix dh_prev = dh.cwiseProduct(c.z);

    Matrix dc_pre = dc.cwiseProduct(one - c.c.cwiseProduct(c.c));
    grad.t[S::Wc].noalias() += c.g2.transpose() * dc_pre;
    grad.t[S::bc] += dc_pre.colwise().sum();
    Matrix ds2 = pt * (dc_pre * m.t[S::Wc].transpose());
    Matrix drh = ds2.rightCols(m.hidden);
    Matrix dr = drh.cwiseProduct(c.h_prev);
    dh_prev += drh.cwiseProduct(c.r);

    Matrix dz_pre = dz.cwiseProduct(c.z.cwiseProduct(one - c.z));
    Matrix dr_pre = dr.cwiseProduct(c.r.cwiseProduct(one - c.r));
    grad.t[S::Wz].noalias() += c.g.transpose() * dz_pre;
    grad.t[S::bz] += dz_pre.colwise().sum();
    grad.t[S::Wr].noalias() += c.g.transpose() * dr_pre;
    grad.t[S::br] += dr_pre.colwise().sum();
    Matrix ds = pt * (dz_pre * m.t[S::Wz].transpose() + dr_pre * m.t[S::Wr].transpose());
    dh_prev += ds.rightCols(m.hidden);
    dh = std::move(dh_prev);
  }
  return sse;
}

/// Mean squared error over valid targets of a batch, and its gradient.
inline LossAndGrad loss_and_gradients(const ModelParams& m, const PropagationMatrix& prop,
                                      const std::vector<const Sample*>& batch) {
  if (batch.empty()) throw InputError("empty batch");
  std::size_t count = 0;
  for (const Sample* s : batch) count += static_cast<std::size_t>(s->valid.count());
  LossAndGrad out{0.0, 0, ModelParams::zeros(m.hidden, m.outputs)};
  if (count == 0) return out;
  const double scale = 1.0 / static_cast<double>(count);
  double sse = 0.0;
  for (const Sample* s : batch) sse += accumulate_gradient(m, prop, *s, scale, out.grad, out.count);
  out.loss = sse / static_cast<double>(count);
  return out;
}

inline LossAndGrad loss_and_gradients(const ModelParams& m, const PropagationMatrix& prop,
                                      const std::vector<Sample>& batch) {
  std::vector<const Sample*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  return loss_and_gradients(m, prop, ptrs);
}

inline double mean_squared_error(const ModelParams& m, const PropagationMatrix& prop, const std::vector<Sample>& samples) {
  double sse = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    const Matrix err = s.valid.select(forward(m, prop, s.input) - s.target, 0.0);
    sse += err.squaredNorm();
    count += static_cast<std::size_t>(s.valid.count());
  }
  return count ? sse / static_cast<double>(count) : 0.0;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int window = 12;
  std::vector<int> horizons{3, 6, 9, 12};
  int hidden = 32;
  double learning_rate = 1e-3;
  int max_epochs = 50;
  int batch_size = 32;
  int patience = 10;
  std::uint64_t seed = 0;
  int sample_stride = 1;  // step between consecutive training windows
  NormMode norm = NormMode::per_sensor;

  int max_horizon() const { return *std::max_element(horizons.begin(), horizons.end()); }

  void validate(int s_max) const {
    if (window < 1) throw InputError("window must be >= 1");
    if (horizons.empty()) throw InputError("at least one horizon is required");
    for (int h : horizons)
      if (h < 1 || h > s_max)
        throw InputError("horizon " + std::to_string(h) + " outside [1, " + std::to_string(s_max) + "]");
    if (hidden < 1 || batch_size < 1 || max_epochs < 0 || patience < 1 || sample_stride < 1)
      throw InputError("invalid training configuration");
    if (!(learning_rate >= 0.0)) throw InputError("learning rate must be non-negative");
  }
};

/// Windows of a normalized matrix: input columns [t, t+W), targets at t+W-1+h.
inline std::vector<Sample> make_samples(const TimeSeriesMatrix& z, int window, const std::vector<int>& horizons,
                                        int stride = 1) {
  const auto steps = static_cast<long long>(z.steps());
  const long long hmax = *std::max_element(horizons.begin(), horizons.end());
  std::vector<Sample> out;
  const auto n = static_cast<Eigen::Index>(z.sensors());
  const auto k = static_cast<Eigen::Index>(horizons.size());
  for (long long t = 0; t + window - 1 + hmax <= steps - 1; t += stride) {
    Sample s{z.values().middleCols(t, window).transpose(), Matrix(k, n), Mask(k, n)};
    for (Eigen::Index h = 0; h < k; ++h) {
      const auto col = t + window - 1 + horizons[static_cast<std::size_t>(h)];
      s.target.row(h) = z.values().col(col).transpose();
      s.valid.row(h) = z.valid().col(col).transpose();
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  ModelParams params;
  NormStats stats;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

namespace detail {

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ModelParams m1, m2;
  long long step = 0;

  Adam(const ModelParams& like, double lr_)
      : lr(lr_), m1(ModelParams::zeros(like.hidden, like.outputs)), m2(ModelParams::zeros(like.hidden, like.outputs)) {}

  void apply(ModelParams& p, const ModelParams& g) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t s = 0; s < ModelParams::kSlots; ++s) {
      m1.t[s] = beta1 * m1.t[s] + (1.0 - beta1) * g.t[s];
      m2.t[s] = beta2 * m2.t[s] + (1.0 - beta2) * g.t[s].cwiseProduct(g.t[s]);
      p.t[s].array() -= lr * (m1.t[s].array() / c1) / ((m2.t[s].array() / c2).sqrt() + eps);
    }
  }
};

}  // namespace detail

/// Adam on the mean squared error of z-scored targets; keeps the parameters
/// with the lowest validation error and stops after `patience` epochs
/// without improvement.
inline TrainResult train(const PropagationMatrix& prop, const DatasetSplit& split, const TrainConfig& cfg,
                         int s_max = 12, std::ostream* progress = nullptr) {
  cfg.validate(s_max);
  if (prop.size() != split.train.sensors()) throw InputError("propagation matrix does not match sensor count");
  TrainResult res{ModelParams::initialize(cfg.hidden, static_cast<int>(cfg.horizons.size()), cfg.seed),
                  compute_norm_stats(split.train, cfg.norm), {}, 0};
  // A sensor that never varies in training is only centred; its normalized
  // targets are all zero and the readout bias reproduces the constant.
  for (Eigen::Index r = 0; r < res.stats.std.size(); ++r)
    if (!(res.stats.std(r) > 0.0)) res.stats.std(r) = 1.0;
  const auto train_samples = make_samples(zscore(split.train, res.stats), cfg.window, cfg.horizons, cfg.sample_stride);
  const auto val_samples = make_samples(zscore(split.val, res.stats), cfg.window, cfg.horizons);
  if (train_samples.empty()) throw InputError("training split is shorter than window + max horizon");
  if (val_samples.empty()) throw InputError("validation split is shorter than window + max horizon");

  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);

  ModelParams params = res.params;
  detail::Adam adam(params, cfg.learning_rate);
  double best = mean_squared_error(params, prop, val_samples);
  int since_best = 0;
  std::vector<const Sample*> batch;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double sse = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      for (std::size_t k = b; k < std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size)); ++k)
        batch.push_back(&train_samples[order[k]]);
      auto lg = loss_and_gradients(params, prop, batch);
      if (!std::isfinite(lg.loss))
        throw ComputeError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
      sse += lg.loss * static_cast<double>(lg.count);
      count += lg.count;
      adam.apply(params, lg.grad);
    }
    const double val = mean_squared_error(params, prop, val_samples);
    const double train_mse = count ? sse / static_cast<double>(count) : 0.0;
    if (!std::isfinite(val) || !params.all_finite())
      throw ComputeError("training diverged at epoch " + std::to_string(epoch) + " (non-finite validation loss)");
    res.log.push_back({epoch, train_mse, val});
    if (progress) *progress << "epoch " << epoch << " train_mse " << train_mse << " val_mse " << val << '\n';
    if (val < best) {
      best = val;
      res.params = params;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return res;
}

inline void write_train_log_csv(const std::vector<EpochLog>& log, std::ostream& out) {
  out << "epoch,train_mse,val_mse\n";
  for (const auto& e : log)
    out << e.epoch << ',' << csv::format_double(e.train_mse) << ',' << csv::format_double(e.val_mse) << '\n';
}

// ---------------------------------------------------------------------------
// Test-split prediction
// ---------------------------------------------------------------------------

/// Per horizon: [instants x N] predictions and ground truth in original units.
struct PredictionBatch {
  std::vector<int> horizons;
  std::vector<Matrix> predicted;
  std::vector<Matrix> truth;
  std::vector<Mask> valid;

  std::size_t instants() const { return predicted.empty() ? 0 : static_cast<std::size_t>(predicted.front().rows()); }
};

/// Slides the input window one step at a time over the test split; every
/// evaluation instant has all of its horizon targets inside the split.
inline PredictionBatch predict_test(const ModelParams& m, const PropagationMatrix& prop, const TimeSeriesMatrix& test,
                                    const NormStats& stats, int window, const std::vector<int>& horizons) {
  if (horizons.empty() || static_cast<int>(horizons.size()) != m.outputs)
    throw InputError("horizon list does not match model outputs");
  const int hmax = *std::max_element(horizons.begin(), horizons.end());
  if (static_cast<long long>(test.steps()) < static_cast<long long>(window) + hmax)
    throw InputError("test split (" + std::to_string(test.steps()) + " steps) is shorter than window + max horizon (" +
                     std::to_string(window + hmax) + ")");
  const auto z = zscore(test, stats);
  const auto samples = make_samples(z, window, horizons);
  const auto n = static_cast<Eigen::Index>(test.sensors());
  const auto count = static_cast<Eigen::Index>(samples.size());

  PredictionBatch out;
  out.horizons = horizons;
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    out.predicted.emplace_back(count, n);
    out.truth.emplace_back(count, n);
    out.valid.emplace_back(count, n);
  }
  for (Eigen::Index i = 0; i < count; ++i) {
    const Matrix pred = forward(m, prop, samples[static_cast<std::size_t>(i)].input);
    const long long t = i;
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      const auto col = static_cast<Eigen::Index>(t + window - 1 + horizons[h]);
      const auto hr = static_cast<Eigen::Index>(h);
      out.predicted[h].row(i) = (pred.row(hr).array() * stats.std.transpose().array() + stats.mean.transpose().array()).matrix();
      out.truth[h].row(i) = test.values().col(col).transpose();
      out.valid[h].row(i) = test.valid().col(col).transpose();
    }
  }
  return out;
}

}  // namespace stgc
