#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finegrain/aggregator.h"
#include "finegrain/error.h"

using namespace finegrain;

namespace {

// 0.5 |w|^2 + C sum_i omega_i logloss_i, omega_i = n / (2 n_{y_i}).
double oracle_objective(const std::vector<double>& w, double b, const std::vector<std::vector<double>>& x,
                        const std::vector<bool>& y, double c = 1.0) {
  double n1 = 0;
  for (bool v : y) n1 += v;
  double n0 = static_cast<double>(y.size()) - n1;
  double obj = 0;
  for (double wi : w) obj += 0.5 * wi * wi;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[i][j];
    double omega = static_cast<double>(y.size()) / (2.0 * (y[i] ? n1 : n0));
    double margin = y[i] ? z : -z;
    obj += c * omega * std::log1p(std::exp(-margin));
  }
  return obj;
}

struct Problem {
  std::vector<std::vector<double>> x;
  std::vector<bool> y;
};

Problem noisy_problem(std::uint64_t seed, std::size_t n, std::size_t d) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Problem p;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d);
    for (double& v : row) v = u(rng);
    double s = row[0] - 0.5 * (d > 1 ? row[1] : 0.0);
    p.x.push_back(row);
    p.y.push_back(s + 0.3 * (u(rng) - 0.5) > 0.2);
  }
  return p;
}

}  // namespace

TEST(BalancedClassWeights, SpecifiedFormula) {
  auto [w0, w1] = balanced_class_weights({false, false, false, true});
  EXPECT_DOUBLE_EQ(w0, 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(w1, 2.0);
  auto [e0, e1] = balanced_class_weights({true, false});
  EXPECT_DOUBLE_EQ(e0, 1.0);
  EXPECT_DOUBLE_EQ(e1, 1.0);
  EXPECT_THROW(balanced_class_weights({true, true}), Error);
  EXPECT_THROW(balanced_class_weights({}), Error);
}

TEST(AggregatorObjective, MatchesOracle) {
  Problem p = noisy_problem(1, 50, 3);
  LinearAggregator agg;
  agg.weights = Eigen::Vector3d(0.3, -1.2, 2.0);
  agg.bias = -0.4;
  auto [w0, w1] = balanced_class_weights(p.y);
  agg.negative_class_weight = w0;
  agg.positive_class_weight = w1;
  EXPECT_NEAR(aggregator_objective(agg, p.x, p.y), oracle_objective({0.3, -1.2, 2.0}, -0.4, p.x, p.y), 1e-10);
  EXPECT_NEAR(aggregator_objective(agg, p.x, p.y, 2.5), oracle_objective({0.3, -1.2, 2.0}, -0.4, p.x, p.y, 2.5), 1e-10);
}

TEST(AggregatorObjective, GradientMatchesFiniteDifferences) {
  Problem p = noisy_problem(2, 40, 2);
  LinearAggregator agg;
  agg.weights = Eigen::Vector2d(0.7, -0.3);
  agg.bias = 0.2;
  auto [w0, w1] = balanced_class_weights(p.y);
  agg.negative_class_weight = w0;
  agg.positive_class_weight = w1;
  Eigen::VectorXd g = aggregator_objective_gradient(agg, p.x, p.y);
  ASSERT_EQ(g.size(), 3);
  const double h = 1e-6;
  std::vector<double> params = {0.7, -0.3, 0.2};
  for (int i = 0; i < 3; ++i) {
    std::vector<double> up = params;
    std::vector<double> down = params;
    up[static_cast<std::size_t>(i)] += h;
    down[static_cast<std::size_t>(i)] -= h;
    double fd = (oracle_objective({up[0], up[1]}, up[2], p.x, p.y) - oracle_objective({down[0], down[1]}, down[2], p.x, p.y)) /
                (2 * h);
    EXPECT_NEAR(g(i), fd, 1e-6);
  }
}

TEST(AggregatorTrain, ConvergesToTheOracleOptimum) {
  Problem p = noisy_problem(3, 200, 3);
  AggregatorFit fit = aggregator_train(p.x, p.y);
  EXPECT_TRUE(fit.converged);
  EXPECT_LE(fit.gradient_norm, 1e-8);
  std::vector<double> w(fit.aggregator.weights.data(), fit.aggregator.weights.data() + 3);
  double best = oracle_objective(w, fit.aggregator.bias, p.x, p.y);
  EXPECT_NEAR(fit.objective, best, 1e-9);

  // Slow gradient descent from zero on the oracle objective reaches the same point.
  std::vector<double> gw(3, 0.0);
  double gb = 0.0;
  const double h = 1e-7;
  for (int it = 0; it < 20000; ++it) {
    std::vector<double> grad(4);
    for (int k = 0; k < 4; ++k) {
      std::vector<double> up = gw;
      std::vector<double> down = gw;
      double bu = gb;
      double bd = gb;
      if (k < 3) {
        up[static_cast<std::size_t>(k)] += h;
        down[static_cast<std::size_t>(k)] -= h;
      } else {
        bu += h;
        bd -= h;
      }
      grad[static_cast<std::size_t>(k)] = (oracle_objective(up, bu, p.x, p.y) - oracle_objective(down, bd, p.x, p.y)) / (2 * h);
    }
    for (int k = 0; k < 3; ++k) gw[static_cast<std::size_t>(k)] -= 0.01 * grad[static_cast<std::size_t>(k)];
    gb -= 0.01 * grad[3];
  }
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(gw[static_cast<std::size_t>(k)], w[static_cast<std::size_t>(k)], 1e-3);
  EXPECT_NEAR(gb, fit.aggregator.bias, 1e-3);
  EXPECT_GE(oracle_objective(gw, gb, p.x, p.y), best - 1e-12);
}

TEST(AggregatorTrain, PerfectlyPredictiveAttribute) {
  std::vector<std::vector<double>> x;
  std::vector<bool> y;
  for (int i = 0; i < 30; ++i) {
    bool label = i % 3 == 0;
    x.push_back({label ? 0.9 : 0.1});
    y.push_back(label);
  }
  AggregatorFit fit = aggregator_train(x, y);
  EXPECT_GT(fit.aggregator.weights(0), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(fit.aggregator.score(x[i]) > 0.5, y[i]);
  EXPECT_DOUBLE_EQ(fit.aggregator.negative_class_weight, 30.0 / 40.0);
  EXPECT_DOUBLE_EQ(fit.aggregator.positive_class_weight, 30.0 / 20.0);
}

TEST(AggregatorTrain, ScoreIsLogisticOfLogit) {
  LinearAggregator agg;
  agg.weights = Eigen::Vector2d(1.0, -2.0);
  agg.bias = 0.5;
  std::vector<double> x = {0.3, 0.1};
  EXPECT_DOUBLE_EQ(agg.logit(x), 0.6);
  EXPECT_NEAR(agg.score(x), 1.0 / (1.0 + std::exp(-0.6)), 1e-15);
  EXPECT_THROW(agg.logit(std::vector<double>{1.0}), Error);
  LinearAggregator zero;
  zero.weights = Eigen::VectorXd::Zero(3);
  EXPECT_EQ(zero.score(std::vector<double>{5, 6, 7}), 0.5);
}

TEST(AggregatorTrain, ErrorPaths) {
  EXPECT_THROW(aggregator_train({{1.0}, {0.0}}, {true, true}), Error);
  EXPECT_THROW(aggregator_train({{1.0}}, {true, false}), Error);
  EXPECT_THROW(aggregator_train({{1.0}, {1.0, 2.0}}, {true, false}), Error);
  EXPECT_THROW(aggregator_train({}, {}), Error);
  EXPECT_THROW(aggregator_train({{NAN}, {0.0}}, {true, false}), Error);
}
