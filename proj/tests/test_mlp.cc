#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finegrain/error.h"
#include "finegrain/mlp.h"

using namespace finegrain;

namespace {

MlpConfig small_config(std::size_t in, std::vector<std::size_t> hidden, std::size_t heads, std::uint64_t seed = 1) {
  MlpConfig c;
  c.input_dim = in;
  c.hidden_dims = std::move(hidden);
  c.n_heads = heads;
  c.seed = seed;
  return c;
}

// Independent forward pass with explicit loops.
std::vector<double> reference_forward(const MlpModel& m, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (const AffineLayer& layer : m.trunk) {
    std::vector<double> z(static_cast<std::size_t>(layer.weights.rows()));
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      double s = layer.bias(i);
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) s += layer.weights(i, j) * a[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = s > 0 ? s : 0;
    }
    a = z;
  }
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.heads.weights.rows(); ++i) {
    double s = m.heads.bias(i);
    for (Eigen::Index j = 0; j < m.heads.weights.cols(); ++j) s += m.heads.weights(i, j) * a[static_cast<std::size_t>(j)];
    out.push_back(1.0 / (1.0 + std::exp(-s)));
  }
  return out;
}

double reference_loss(const MlpModel& m, const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> p = reference_forward(m, x);
  double loss = 0;
  for (std::size_t h = 0; h < p.size(); ++h) loss -= (y[h] * std::log(p[h]) + (1 - y[h]) * std::log(1 - p[h])) / p.size();
  return loss;
}

}  // namespace

TEST(MlpForward, ZeroParametersGiveOneHalf) {
  MlpModel m = mlp_init(small_config(4, {5, 3}, 3));
  std::vector<double> zeros(flatten_parameters(m).size(), 0.0);
  assign_parameters(m, zeros);
  for (double p : mlp_forward(m, std::vector<double>{1, -2, 3, 4})) EXPECT_EQ(p, 0.5);
}

TEST(MlpForward, IdentityLikeNetAtZero) {
  MlpModel m = mlp_init(small_config(1, {1}, 1));
  assign_parameters(m, std::vector<double>{1, 0, 1, 0});
  EXPECT_EQ(mlp_forward(m, std::vector<double>{0.0})[0], 0.5);
  EXPECT_NEAR(mlp_forward(m, std::vector<double>{2.0})[0], 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_EQ(mlp_forward(m, std::vector<double>{-2.0})[0], 0.5);
}

TEST(MlpForward, MatchesReferenceImplementation) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 20; ++t) {
    MlpModel m = mlp_init(small_config(7, {16, 9}, 3, static_cast<std::uint64_t>(t)));
    std::vector<double> x(7);
    for (double& v : x) v = n(rng);
    std::vector<double> got = mlp_forward(m, x);
    std::vector<double> want = reference_forward(m, x);
    for (std::size_t h = 0; h < 3; ++h) EXPECT_NEAR(got[h], want[h], 1e-12);
    Eigen::MatrixXd batch(7, 1);
    for (int i = 0; i < 7; ++i) batch(i, 0) = x[static_cast<std::size_t>(i)];
    Eigen::MatrixXd bout = mlp_forward_batch(m, batch);
    for (Eigen::Index h = 0; h < 3; ++h) EXPECT_NEAR(bout(h, 0), want[static_cast<std::size_t>(h)], 1e-12);
    std::vector<double> y = {1, 0, 1};
    EXPECT_NEAR(mlp_loss(m, x, y), reference_loss(m, x, y), 1e-12);
  }
}

TEST(MlpForward, DimensionAndFinitenessChecks) {
  MlpModel m = mlp_init(small_config(3, {4}, 1));
  EXPECT_THROW(mlp_forward(m, std::vector<double>{1, 2}), Error);
  EXPECT_THROW(mlp_forward(m, std::vector<double>{1, 2, NAN}), Error);
  EXPECT_THROW(mlp_loss(m, std::vector<double>{1, 2, 3}, std::vector<double>{1, 0}), Error);
}

TEST(MlpInit, BoundsAndZeroBiases) {
  MlpModel m = mlp_init(small_config(10, {20, 30}, 4, 9));
  EXPECT_LE(m.trunk[0].weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 10));
  EXPECT_LE(m.trunk[1].weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 20));
  EXPECT_LE(m.heads.weights.cwiseAbs().maxCoeff(), std::sqrt(3.0 / 30));
  EXPECT_EQ(m.trunk[0].bias.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(m.heads.bias.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(m.parameter_count(), 10u * 20 + 20 + 20 * 30 + 30 + 30 * 4 + 4);
  EXPECT_EQ(flatten_parameters(mlp_init(small_config(10, {20, 30}, 4, 9))), flatten_parameters(m));
  EXPECT_NE(flatten_parameters(mlp_init(small_config(10, {20, 30}, 4, 10))), flatten_parameters(m));
}

TEST(MlpConfig, Validation) {
  MlpConfig c = small_config(0, {4}, 1);
  EXPECT_THROW(mlp_init(c), Error);
  c = small_config(2, {0}, 1);
  EXPECT_THROW(mlp_init(c), Error);
  c = small_config(2, {4}, 2);
  c.head_weights = {1.0};
  EXPECT_THROW(mlp_init(c), Error);
  c.head_weights = {1.0, -1.0};
  EXPECT_THROW(mlp_init(c), Error);
  c = small_config(2, {4}, 1);
  c.learning_rate = 0;
  EXPECT_THROW(mlp_init(c), Error);
  c = small_config(2, {4}, 1);
  EXPECT_THROW(assign_parameters(*std::make_unique<MlpModel>(mlp_init(c)), std::vector<double>{1.0}), Error);
}

TEST(MlpGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  MlpConfig c = small_config(5, {6, 4}, 3, 2);
  c.head_weights = {0.2, 0.5, 0.3};
  MlpModel m = mlp_init(c);
  std::vector<double> x = {u(rng), u(rng), u(rng), u(rng), u(rng)};
  std::vector<double> y = {1, 0, 1};
  std::vector<double> g = flatten_gradient(mlp_gradient(m, x, y));
  std::vector<double> p = flatten_parameters(m);
  const double h = 1e-5;
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<double> q = p;
    q[i] += h;
    assign_parameters(m, q);
    double up = mlp_loss(m, x, y);
    q[i] -= 2 * h;
    assign_parameters(m, q);
    double down = mlp_loss(m, x, y);
    double fd = (up - down) / (2 * h);
    EXPECT_LE(std::abs(fd - g[i]), 1e-4 * std::max({std::abs(fd), std::abs(g[i]), 1e-8})) << "parameter " << i;
  }
}

TEST(MlpGradient, SymmetricLabelsCancelAtZeroWeights) {
  MlpModel m = mlp_init(small_config(3, {4, 4}, 2));
  assign_parameters(m, std::vector<double>(flatten_parameters(m).size(), 0.0));
  std::vector<double> x = {0.3, -0.2, 0.9};
  std::vector<double> g1 = flatten_gradient(mlp_gradient(m, x, std::vector<double>{1, 1}));
  std::vector<double> g0 = flatten_gradient(mlp_gradient(m, x, std::vector<double>{0, 0}));
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(0.5 * (g1[i] + g0[i]), 0.0, 1e-15) << i;
}

TEST(MlpTrain, SeparableToySetReachesFullTrainingAccuracy) {
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> y;
  for (int i = 0; i < 10; ++i) {
    double t = i * 0.37;
    bool positive = i % 2 == 0;
    x.push_back({std::cos(t) + (positive ? 1.5 : -1.5), std::sin(t)});
    y.push_back({positive ? 1.0 : 0.0});
  }
  MlpConfig c = small_config(2, {256, 256}, 1, 3);
  c.learning_rate = 1e-2;
  c.epochs = 100;
  MlpTrainTrace trace;
  MlpModel m = mlp_train(c, x, y, &trace);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(mlp_forward(m, x[i])[0] > 0.5, y[i][0] > 0.5) << i;
  ASSERT_EQ(trace.epoch_losses.size(), 100u);
  EXPECT_LT(trace.epoch_losses.back(), trace.epoch_losses.front());
}

TEST(MlpTrain, DuplicatedDataWithFullBatchesGivesTheSameLoss) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> y;
  for (int i = 0; i < 16; ++i) {
    x.push_back({n(rng), n(rng), n(rng)});
    y.push_back({x.back()[0] > 0 ? 1.0 : 0.0, x.back()[1] > 0 ? 1.0 : 0.0});
  }
  MlpConfig c = small_config(3, {8, 8}, 2, 7);
  c.learning_rate = 1e-2;
  c.epochs = 50;
  c.batch_size = 16;
  MlpTrainTrace once;
  mlp_train(c, x, y, &once);
  std::vector<std::vector<double>> x2 = x;
  std::vector<std::vector<double>> y2 = y;
  x2.insert(x2.end(), x.begin(), x.end());
  y2.insert(y2.end(), y.begin(), y.end());
  c.batch_size = 32;
  MlpTrainTrace twice;
  mlp_train(c, x2, y2, &twice);
  EXPECT_NEAR(once.epoch_losses.back(), twice.epoch_losses.back(), 1e-6);
}

TEST(MlpTrain, AllZeroLabelsDriveEveryHeadLow) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 1);
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> y;
  for (int i = 0; i < 40; ++i) {
    x.push_back({n(rng), n(rng), n(rng), n(rng)});
    y.push_back({0, 0, 0});
  }
  MlpConfig c = small_config(4, {32, 32}, 3, 8);
  c.learning_rate = 1e-2;
  MlpModel m = mlp_train(c, x, y);
  for (const auto& xi : x) {
    for (double p : mlp_forward(m, xi)) EXPECT_LT(p, 0.1);
  }
}

TEST(MlpTrain, DeterministicForAFixedSeed) {
  std::vector<std::vector<double>> x = {{0, 1}, {1, 0}, {1, 1}, {0, 0}, {0.5, 0.2}};
  std::vector<std::vector<double>> y = {{1}, {0}, {1}, {0}, {1}};
  MlpConfig c = small_config(2, {8}, 1, 4);
  c.batch_size = 2;
  c.epochs = 5;
  EXPECT_EQ(flatten_parameters(mlp_train(c, x, y)), flatten_parameters(mlp_train(c, x, y)));
  c.optimizer = Optimizer::kSgd;
  EXPECT_EQ(flatten_parameters(mlp_train(c, x, y)), flatten_parameters(mlp_train(c, x, y)));
}

TEST(MlpTrain, RejectsBadTrainingData) {
  MlpConfig c = small_config(2, {4}, 1);
  EXPECT_THROW(mlp_train(c, {}, {}), Error);
  EXPECT_THROW(mlp_train(c, {{1, 2}}, {{1}, {0}}), Error);
  EXPECT_THROW(mlp_train(c, {{1, 2, 3}}, {{1}}), Error);
  EXPECT_THROW(mlp_train(c, {{1, 2}}, {{0.5}}), Error);
  EXPECT_THROW(mlp_train(c, {{1, NAN}}, {{1}}), Error);
}
