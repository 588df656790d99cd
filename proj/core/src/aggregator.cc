#include "finegrain/aggregator.h"

#include <cmath>

#include "finegrain/error.h"

namespace finegrain {
namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

struct Problem {
  Eigen::MatrixXd x;        // n x d
  Eigen::VectorXd y;        // 0/1
  Eigen::VectorXd omega;    // per-example class weight
  double c = 1.0;
};

Problem make_problem(const std::vector<std::vector<double>>& inputs, const std::vector<bool>& labels,
                     double negative_weight, double positive_weight, double c) {
  if (inputs.size() != labels.size()) throw Error(ErrorKind::kDimensionMismatch, "inputs and labels differ in length");
  if (inputs.empty()) throw Error(ErrorKind::kMissing, "aggregator needs training data");
  const auto n = static_cast<Eigen::Index>(inputs.size());
  const auto d = static_cast<Eigen::Index>(inputs[0].size());
  Problem p;
  p.x.resize(n, d);
  p.y.resize(n);
  p.omega.resize(n);
  p.c = c;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = inputs[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != d) throw Error(ErrorKind::kDimensionMismatch, "ragged aggregator inputs");
    for (Eigen::Index j = 0; j < d; ++j) p.x(i, j) = row[static_cast<std::size_t>(j)];
    bool label = labels[static_cast<std::size_t>(i)];
    p.y(i) = label ? 1.0 : 0.0;
    p.omega(i) = label ? positive_weight : negative_weight;
  }
  if (!p.x.allFinite()) throw Error(ErrorKind::kNumerical, "non-finite aggregator input");
  return p;
}

double objective(const Problem& p, const Eigen::VectorXd& w, double b) {
  Eigen::VectorXd z = p.x * w;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    double zi = z(i) + b;
    loss += p.omega(i) * (softplus(zi) - p.y(i) * zi);
  }
  return 0.5 * w.squaredNorm() + p.c * loss;
}

Eigen::VectorXd gradient(const Problem& p, const Eigen::VectorXd& w, double b) {
  const Eigen::Index d = w.size();
  Eigen::VectorXd residual(p.x.rows());
  Eigen::VectorXd z = p.x * w;
  for (Eigen::Index i = 0; i < z.size(); ++i) residual(i) = p.c * p.omega(i) * (sigmoid(z(i) + b) - p.y(i));
  Eigen::VectorXd g(d + 1);
  g.head(d) = w + p.x.transpose() * residual;
  g(d) = residual.sum();
  return g;
}

}  // namespace

double LinearAggregator::logit(std::span<const double> input) const {
  if (static_cast<Eigen::Index>(input.size()) != weights.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "aggregator input has length " + std::to_string(input.size()) +
                                                   ", expected " + std::to_string(weights.size()));
  }
  double z = bias;
  for (std::size_t j = 0; j < input.size(); ++j) z += weights(static_cast<Eigen::Index>(j)) * input[j];
  return z;
}

double LinearAggregator::score(std::span<const double> input) const { return sigmoid(logit(input)); }

std::pair<double, double> balanced_class_weights(const std::vector<bool>& labels) {
  std::size_t positives = 0;
  for (bool l : labels) positives += l;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorKind::kDegenerate, "aggregator labels contain a single class");
  }
  const auto n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(negatives)), n / (2.0 * static_cast<double>(positives))};
}

double aggregator_objective(const LinearAggregator& aggregator, const std::vector<std::vector<double>>& inputs,
                            const std::vector<bool>& labels, double inverse_regularization) {
  Problem p = make_problem(inputs, labels, aggregator.negative_class_weight, aggregator.positive_class_weight,
                           inverse_regularization);
  return objective(p, aggregator.weights, aggregator.bias);
}

Eigen::VectorXd aggregator_objective_gradient(const LinearAggregator& aggregator,
                                              const std::vector<std::vector<double>>& inputs,
                                              const std::vector<bool>& labels, double inverse_regularization) {
  Problem p = make_problem(inputs, labels, aggregator.negative_class_weight, aggregator.positive_class_weight,
                           inverse_regularization);
  return gradient(p, aggregator.weights, aggregator.bias);
}

AggregatorFit aggregator_train(const std::vector<std::vector<double>>& inputs, const std::vector<bool>& labels,
                               const AggregatorOptions& options) {
  auto [negative_weight, positive_weight] = balanced_class_weights(labels);
  Problem p = make_problem(inputs, labels, negative_weight, positive_weight, options.inverse_regularization);
  const Eigen::Index d = p.x.cols();
  const Eigen::Index n = p.x.rows();

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  double f = objective(p, w, b);
  Eigen::VectorXd g = gradient(p, w, b);

  AggregatorFit fit;
  int iter = 0;
  for (; iter < options.max_iterations && g.norm() > options.gradient_tolerance; ++iter) {
    // Hessian of the objective over (w, b).
    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(d + 1, d + 1);
    hessian.topLeftCorner(d, d).diagonal().setOnes();
    Eigen::MatrixXd xa(n, d + 1);
    xa.leftCols(d) = p.x;
    xa.col(d).setOnes();
    Eigen::VectorXd z = p.x * w;
    Eigen::VectorXd curvature(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = sigmoid(z(i) + b);
      curvature(i) = p.c * p.omega(i) * s * (1.0 - s);
    }
    hessian.noalias() += xa.transpose() * curvature.asDiagonal() * xa;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    Eigen::VectorXd step = ldlt.solve(-g);
    double slope = g.dot(step);
    if (ldlt.info() != Eigen::Success || !step.allFinite() || !(slope < 0.0)) {
      step = -g;  // fall back to steepest descent
      slope = -g.squaredNorm();
    }

    // Backtracking line search on the Armijo condition.
    double t = 1.0;
    Eigen::VectorXd w_next;
    double b_next = 0.0;
    double f_next = 0.0;
    while (true) {
      w_next = w + t * step.head(d);
      b_next = b + t * step(d);
      f_next = objective(p, w_next, b_next);
      if (f_next <= f + 1e-4 * t * slope || t < 1e-12) break;
      t *= 0.5;
    }
    if (t < 1e-12 && f_next > f) break;  // no further progress representable
    w = std::move(w_next);
    b = b_next;
    f = f_next;
    g = gradient(p, w, b);
  }

  fit.aggregator.weights = w;
  fit.aggregator.bias = b;
  fit.aggregator.negative_class_weight = negative_weight;
  fit.aggregator.positive_class_weight = positive_weight;
  fit.iterations = iter;
  fit.gradient_norm = g.norm();
  fit.objective = f;
  fit.converged = fit.gradient_norm <= options.gradient_tolerance;
  return fit;
}

}  // namespace finegrain
