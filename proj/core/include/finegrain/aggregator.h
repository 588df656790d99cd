#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace finegrain {

// Stage-2 logistic aggregator over attribute probabilities.
struct LinearAggregator {
  Eigen::VectorXd weights;
  double bias = 0.0;
  // (weight of class 0, weight of class 1) used during fitting.
  double negative_class_weight = 1.0;
  double positive_class_weight = 1.0;

  double logit(std::span<const double> input) const;
  double score(std::span<const double> input) const;
};

struct AggregatorOptions {
  double inverse_regularization = 1.0;  // C
  double gradient_tolerance = 1e-8;
  int max_iterations = 10000;
};

struct AggregatorFit {
  LinearAggregator aggregator;
  int iterations = 0;
  double gradient_norm = 0.0;
  double objective = 0.0;
  bool converged = false;
};

// Balanced class weights n / (2 n_c), returned as (class 0, class 1).
std::pair<double, double> balanced_class_weights(const std::vector<bool>& labels);

// Objective 0.5 |w|^2 + C sum_i omega_i logloss_i with the bias unpenalized.
double aggregator_objective(const LinearAggregator& aggregator, const std::vector<std::vector<double>>& inputs,
                            const std::vector<bool>& labels, double inverse_regularization = 1.0);

// Gradient of aggregator_objective with respect to (w, b); b is the last entry.
Eigen::VectorXd aggregator_objective_gradient(const LinearAggregator& aggregator,
                                              const std::vector<std::vector<double>>& inputs,
                                              const std::vector<bool>& labels,
                                              double inverse_regularization = 1.0);

// Class-balanced L2 logistic regression solved by damped Newton iterations.
// Hitting the iteration cap is reported through `converged`, not thrown.
AggregatorFit aggregator_train(const std::vector<std::vector<double>>& inputs, const std::vector<bool>& labels,
                               const AggregatorOptions& options = {});

}  // namespace finegrain
