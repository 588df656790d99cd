#include "finegrain/mlp.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "finegrain/error.h"
#include "finegrain/random.h"

namespace finegrain {
namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

Eigen::VectorXd head_weight_vector(const MlpConfig& config) {
  if (config.head_weights.empty()) {
    return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(config.n_heads),
                                     1.0 / static_cast<double>(config.n_heads));
  }
  return Eigen::Map<const Eigen::VectorXd>(config.head_weights.data(),
                                           static_cast<Eigen::Index>(config.head_weights.size()));
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // pre-activations per trunk layer
  std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[l+1] = relu(pre[l])
  Eigen::MatrixXd logits;
};

void forward(const MlpModel& model, const Eigen::MatrixXd& inputs, ForwardCache& cache) {
  cache.pre.resize(model.trunk.size());
  cache.post.resize(model.trunk.size() + 1);
  cache.post[0] = inputs;
  for (std::size_t l = 0; l < model.trunk.size(); ++l) {
    const AffineLayer& layer = model.trunk[l];
    cache.pre[l].noalias() = layer.weights * cache.post[l];
    cache.pre[l].colwise() += layer.bias;
    cache.post[l + 1] = cache.pre[l].cwiseMax(0.0);
  }
  cache.logits.noalias() = model.heads.weights * cache.post.back();
  cache.logits.colwise() += model.heads.bias;
}

// Mean over the batch columns of the per-example loss.
double batch_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& labels,
                  const Eigen::VectorXd& head_weights) {
  double total = 0.0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    for (Eigen::Index h = 0; h < logits.rows(); ++h) {
      double z = logits(h, c);
      total += head_weights(h) * (softplus(z) - labels(h, c) * z);
    }
  }
  return total / static_cast<double>(logits.cols());
}

// Gradient of the batch-mean loss.
void backward(const MlpModel& model, const ForwardCache& cache, const Eigen::MatrixXd& labels,
              const Eigen::VectorXd& head_weights, MlpGradient& grad) {
  const double inv_batch = 1.0 / static_cast<double>(labels.cols());
  Eigen::MatrixXd delta = cache.logits.unaryExpr([](double z) { return sigmoid(z); }) - labels;
  delta = (head_weights * inv_batch).asDiagonal() * delta;

  grad.heads.weights.noalias() = delta * cache.post.back().transpose();
  grad.heads.bias = delta.rowwise().sum();
  grad.trunk.resize(model.trunk.size());

  Eigen::MatrixXd upstream = model.heads.weights.transpose() * delta;
  for (std::size_t l = model.trunk.size(); l-- > 0;) {
    Eigen::MatrixXd dz = upstream.cwiseProduct(
        cache.pre[l].unaryExpr([](double z) { return z > 0.0 ? 1.0 : 0.0; }));
    grad.trunk[l].weights.noalias() = dz * cache.post[l].transpose();
    grad.trunk[l].bias = dz.rowwise().sum();
    if (l > 0) upstream.noalias() = model.trunk[l].weights.transpose() * dz;
  }
}

Eigen::MatrixXd to_matrix(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_input(const MlpModel& model, std::span<const double> input) {
  if (input.size() != model.config.input_dim) {
    throw Error(ErrorKind::kDimensionMismatch, "input has length " + std::to_string(input.size()) +
                                                   ", model expects " + std::to_string(model.config.input_dim));
  }
  for (double x : input) {
    if (!std::isfinite(x)) throw Error(ErrorKind::kNumerical, "non-finite model input");
  }
}

void check_label(const MlpModel& model, std::span<const double> label) {
  if (label.size() != model.config.n_heads) {
    throw Error(ErrorKind::kDimensionMismatch, "label has length " + std::to_string(label.size()) +
                                                   ", model has " + std::to_string(model.config.n_heads) + " heads");
  }
}

template <typename Fn>
void for_each_block(const std::vector<AffineLayer>& trunk, const AffineLayer& heads, Fn&& fn) {
  for (const AffineLayer& l : trunk) {
    fn(l.weights.data(), l.weights.size());
    fn(l.bias.data(), l.bias.size());
  }
  fn(heads.weights.data(), heads.weights.size());
  fn(heads.bias.data(), heads.bias.size());
}

}  // namespace

void MlpConfig::validate() const {
  if (input_dim == 0 || n_heads == 0 || epochs == 0 || batch_size == 0) {
    throw Error(ErrorKind::kInvalidArgument, "MLP dimensions, epochs and batch size must be positive");
  }
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw Error(ErrorKind::kInvalidArgument, "hidden layer widths must be positive");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::kInvalidArgument, "learning rate must be positive");
  }
  if (!head_weights.empty() && head_weights.size() != n_heads) {
    throw Error(ErrorKind::kInvalidArgument, "head_weights length must equal n_heads");
  }
  for (double w : head_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::kInvalidArgument, "head weights must be nonnegative");
  }
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for_each_block(trunk, heads, [&](const double*, Eigen::Index size) { n += static_cast<std::size_t>(size); });
  return n;
}

MlpModel mlp_init(const MlpConfig& config) {
  config.validate();
  MlpModel model;
  model.config = config;
  Rng rng(derive_seed(config.seed, "mlp.init"));
  auto uniform_fill = [&](Eigen::MatrixXd& m, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    }
  };
  std::size_t fan_in = config.input_dim;
  for (std::size_t width : config.hidden_dims) {
    AffineLayer layer;
    layer.weights.resize(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(fan_in));
    uniform_fill(layer.weights, std::sqrt(6.0 / static_cast<double>(fan_in)));
    layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width));
    model.trunk.push_back(std::move(layer));
    fan_in = width;
  }
  model.heads.weights.resize(static_cast<Eigen::Index>(config.n_heads), static_cast<Eigen::Index>(fan_in));
  uniform_fill(model.heads.weights, std::sqrt(3.0 / static_cast<double>(fan_in)));
  model.heads.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.n_heads));
  return model;
}

Eigen::MatrixXd mlp_forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.rows()) != model.config.input_dim) {
    throw Error(ErrorKind::kDimensionMismatch, "batch rows must equal the model input dimension");
  }
  if (!inputs.allFinite()) throw Error(ErrorKind::kNumerical, "non-finite model input");
  ForwardCache cache;
  forward(model, inputs, cache);
  return cache.logits.unaryExpr([](double z) { return sigmoid(z); });
}

std::vector<double> mlp_forward(const MlpModel& model, std::span<const double> input) {
  check_input(model, input);
  ForwardCache cache;
  forward(model, to_matrix(input), cache);
  std::vector<double> out(static_cast<std::size_t>(cache.logits.rows()));
  for (Eigen::Index h = 0; h < cache.logits.rows(); ++h) out[static_cast<std::size_t>(h)] = sigmoid(cache.logits(h, 0));
  return out;
}

double mlp_loss(const MlpModel& model, std::span<const double> input, std::span<const double> label) {
  check_input(model, input);
  check_label(model, label);
  ForwardCache cache;
  forward(model, to_matrix(input), cache);
  return batch_loss(cache.logits, to_matrix(label), head_weight_vector(model.config));
}

MlpGradient mlp_gradient(const MlpModel& model, std::span<const double> input,
                         std::span<const double> label) {
  check_input(model, input);
  check_label(model, label);
  ForwardCache cache;
  forward(model, to_matrix(input), cache);
  MlpGradient grad;
  backward(model, cache, to_matrix(label), head_weight_vector(model.config), grad);
  return grad;
}

std::vector<double> flatten_parameters(const MlpModel& model) {
  std::vector<double> out;
  out.reserve(model.parameter_count());
  for_each_block(model.trunk, model.heads,
                 [&](const double* data, Eigen::Index size) { out.insert(out.end(), data, data + size); });
  return out;
}

void assign_parameters(MlpModel& model, std::span<const double> values) {
  if (values.size() != model.parameter_count()) {
    throw Error(ErrorKind::kDimensionMismatch, "parameter vector length mismatch");
  }
  std::size_t offset = 0;
  auto copy_into = [&](double* data, Eigen::Index size) {
    std::copy_n(values.data() + offset, size, data);
    offset += static_cast<std::size_t>(size);
  };
  for (AffineLayer& l : model.trunk) {
    copy_into(l.weights.data(), l.weights.size());
    copy_into(l.bias.data(), l.bias.size());
  }
  copy_into(model.heads.weights.data(), model.heads.weights.size());
  copy_into(model.heads.bias.data(), model.heads.bias.size());
}

std::vector<double> flatten_gradient(const MlpGradient& gradient) {
  std::vector<double> out;
  for_each_block(gradient.trunk, gradient.heads,
                 [&](const double* data, Eigen::Index size) { out.insert(out.end(), data, data + size); });
  return out;
}

MlpModel mlp_train(const MlpConfig& config, const std::vector<std::vector<double>>& inputs,
                   const std::vector<std::vector<double>>& labels, MlpTrainTrace* trace) {
  config.validate();
  if (inputs.empty()) throw Error(ErrorKind::kMissing, "empty training set");
  if (inputs.size() != labels.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "inputs and labels differ in length");
  }
  const auto n = static_cast<Eigen::Index>(inputs.size());
  const auto d = static_cast<Eigen::Index>(config.input_dim);
  const auto h = static_cast<Eigen::Index>(config.n_heads);
  Eigen::MatrixXd x(d, n);
  Eigen::MatrixXd y(h, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& in = inputs[static_cast<std::size_t>(i)];
    const auto& lab = labels[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(in.size()) != d) {
      throw Error(ErrorKind::kDimensionMismatch, "training input " + std::to_string(i) + " has wrong length");
    }
    if (static_cast<Eigen::Index>(lab.size()) != h) {
      throw Error(ErrorKind::kDimensionMismatch, "training label " + std::to_string(i) + " has wrong length");
    }
    for (Eigen::Index r = 0; r < d; ++r) x(r, i) = in[static_cast<std::size_t>(r)];
    for (Eigen::Index r = 0; r < h; ++r) {
      double v = lab[static_cast<std::size_t>(r)];
      if (v != 0.0 && v != 1.0) throw Error(ErrorKind::kInvalidArgument, "training labels must be 0 or 1");
      y(r, i) = v;
    }
  }
  if (!x.allFinite()) throw Error(ErrorKind::kNumerical, "non-finite training input");

  MlpModel model = mlp_init(config);
  const Eigen::VectorXd head_weights = head_weight_vector(config);
  std::vector<double> params = flatten_parameters(model);
  std::vector<double> m(params.size(), 0.0);
  std::vector<double> v(params.size(), 0.0);
  std::uint64_t step = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(derive_seed(config.seed, "mlp.shuffle"));

  ForwardCache cache;
  MlpGradient grad;
  Eigen::MatrixXd xb;
  Eigen::MatrixXd yb;
  const auto batch = static_cast<Eigen::Index>(config.batch_size);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index size = std::min(batch, n - start);
      xb.resize(d, size);
      yb.resize(h, size);
      for (Eigen::Index c = 0; c < size; ++c) {
        xb.col(c) = x.col(order[static_cast<std::size_t>(start + c)]);
        yb.col(c) = y.col(order[static_cast<std::size_t>(start + c)]);
      }
      forward(model, xb, cache);
      double loss = batch_loss(cache.logits, yb, head_weights);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::kNumerical, "training loss became non-finite at epoch " + std::to_string(epoch) +
                                               ", step " + std::to_string(step));
      }
      epoch_loss += loss * static_cast<double>(size);
      backward(model, cache, yb, head_weights, grad);
      std::vector<double> g = flatten_gradient(grad);
      ++step;
      if (config.optimizer == Optimizer::kSgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * g[i];
      } else {
        const double correction1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
        const double correction2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
          m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
          v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
          double m_hat = m[i] / correction1;
          double v_hat = v[i] / correction2;
          params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
        }
      }
      assign_parameters(model, params);
    }
    if (trace) trace->epoch_losses.push_back(epoch_loss / static_cast<double>(n));
  }
  return model;
}

}  // namespace finegrain
