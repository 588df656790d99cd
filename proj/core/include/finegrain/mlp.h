#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace finegrain {

enum class Optimizer { kAdam, kSgd };

struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims = {256, 256};
  std::size_t n_heads = 1;
  double learning_rate = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::kAdam;
  // Per-head loss weights; empty means 1/n_heads each.
  std::vector<double> head_weights;

  void validate() const;
};

// One affine map, weights stored out x in.
struct AffineLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

// ReLU trunk shared by all heads, then one sigmoid output per head.
struct MlpModel {
  MlpConfig config;
  std::vector<AffineLayer> trunk;
  AffineLayer heads;

  std::size_t parameter_count() const;
};

// Same shapes as the model's parameters.
struct MlpGradient {
  std::vector<AffineLayer> trunk;
  AffineLayer heads;
};

// He-uniform trunk weights, LeCun-uniform head weights, zero biases.
MlpModel mlp_init(const MlpConfig& config);

std::vector<double> mlp_forward(const MlpModel& model, std::span<const double> input);

// Column-per-example batch forward; returns n_heads x batch probabilities.
Eigen::MatrixXd mlp_forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs);

// Per-example loss: head-weighted binary cross-entropy. Labels may be any
// values in [0, 1].
double mlp_loss(const MlpModel& model, std::span<const double> input, std::span<const double> label);

MlpGradient mlp_gradient(const MlpModel& model, std::span<const double> input,
                         std::span<const double> label);

// Flattened parameter access in a fixed order (trunk layers, then heads;
// weights column-major, then bias). Used by optimizers and gradient checks.
std::vector<double> flatten_parameters(const MlpModel& model);
void assign_parameters(MlpModel& model, std::span<const double> values);
std::vector<double> flatten_gradient(const MlpGradient& gradient);

struct MlpTrainTrace {
  std::vector<double> epoch_losses;  // mean training loss seen during each epoch
};

// Mini-batch training from mlp_init(config). Batches come from a seeded
// shuffle each epoch; the last batch of an epoch may be short.
MlpModel mlp_train(const MlpConfig& config, const std::vector<std::vector<double>>& inputs,
                   const std::vector<std::vector<double>>& labels, MlpTrainTrace* trace = nullptr);

}  // namespace finegrain
