#include "finegrain/reward_model.h"

#include <cmath>

#include "json.hpp"

#include "finegrain/error.h"
#include "finegrain/io.h"

namespace finegrain {

using nlohmann::json;

namespace {

constexpr const char* kModelFormat = "finegrain-reward-model";
constexpr int kModelVersion = 1;

std::vector<std::vector<double>> feature_rows(const std::vector<const Example*>& examples) {
  std::vector<std::vector<double>> rows;
  rows.reserve(examples.size());
  for (const Example* ex : examples) rows.push_back(ex->features());
  return rows;
}

Eigen::MatrixXd feature_matrix(const std::vector<const Example*>& examples, std::size_t dim) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(examples.size()));
  for (std::size_t c = 0; c < examples.size(); ++c) {
    std::vector<double> f = examples[c]->features();
    if (f.size() != dim) {
      throw Error(ErrorKind::kDimensionMismatch, "example " + examples[c]->example_id + " has " +
                                                     std::to_string(f.size()) + " features, model expects " +
                                                     std::to_string(dim));
    }
    for (std::size_t r = 0; r < dim; ++r) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f[r];
  }
  return x;
}

void require_examples(const std::vector<const Example*>& examples) {
  if (examples.empty()) throw Error(ErrorKind::kMissing, "training split is empty");
}

std::vector<bool> coarse_vector(const std::vector<const Example*>& examples, const LabelMap& labels) {
  std::vector<bool> out;
  out.reserve(examples.size());
  for (const Example* ex : examples) {
    auto it = labels.find(ex->example_id);
    if (it == labels.end()) throw Error(ErrorKind::kMissing, "no coarse label for example " + ex->example_id);
    out.push_back(it->second);
  }
  return out;
}

json encode_matrix(const Eigen::MatrixXd& m) {
  json values = json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) values.push_back(encode_hex_double(m.data()[i]));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", values}};
}

Eigen::MatrixXd decode_matrix(const json& j) {
  auto rows = j.at("rows").get<Eigen::Index>();
  auto cols = j.at("cols").get<Eigen::Index>();
  const json& values = j.at("values");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw Error(ErrorKind::kParse, "matrix size does not match its values");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = decode_hex_double(values[static_cast<std::size_t>(i)].get<std::string>());
  return m;
}

json encode_layer(const AffineLayer& layer) {
  return {{"weights", encode_matrix(layer.weights)}, {"bias", encode_matrix(layer.bias)}};
}

AffineLayer decode_layer(const json& j) {
  AffineLayer layer;
  layer.weights = decode_matrix(j.at("weights"));
  Eigen::MatrixXd bias = decode_matrix(j.at("bias"));
  if (bias.cols() != 1 || bias.rows() != layer.weights.rows()) throw Error(ErrorKind::kParse, "bias shape mismatch");
  layer.bias = bias.col(0);
  return layer;
}

}  // namespace

std::string_view model_kind_name(ModelKind kind) { return kind == ModelKind::kCoarse ? "coarse" : "cbm"; }

ModelKind parse_model_kind(std::string_view name) {
  if (name == "coarse") return ModelKind::kCoarse;
  if (name == "cbm") return ModelKind::kCbm;
  throw Error(ErrorKind::kUnknownName, "unknown model kind '" + std::string(name) + "'");
}

void RewardModel::validate() const {
  if (kind == ModelKind::kCoarse) {
    if (stage1.config.n_heads != 1 || stage2) {
      throw Error(ErrorKind::kInvalidArgument, "a coarse model has one head and no aggregator");
    }
  } else {
    if (!stage2 || stage1.config.n_heads != attribute_names.size() ||
        static_cast<std::size_t>(stage2->weights.size()) != attribute_names.size()) {
      throw Error(ErrorKind::kInvalidArgument, "a CBM needs one head and one aggregator weight per attribute");
    }
  }
  if (static_cast<std::size_t>(stage1.heads.weights.rows()) != stage1.config.n_heads) {
    throw Error(ErrorKind::kInvalidArgument, "stage-1 head count disagrees with its config");
  }
}

double score(const RewardModel& model, std::span<const double> features) {
  std::vector<double> probs = mlp_forward(model.stage1, features);
  if (model.kind == ModelKind::kCoarse) return probs[0];
  return model.stage2->score(probs);
}

std::vector<std::vector<double>> stage1_outputs(const RewardModel& model,
                                                const std::vector<const Example*>& examples) {
  std::vector<std::vector<double>> out;
  if (examples.empty()) return out;
  Eigen::MatrixXd probs = mlp_forward_batch(model.stage1, feature_matrix(examples, model.stage1.config.input_dim));
  out.resize(examples.size());
  for (std::size_t c = 0; c < examples.size(); ++c) {
    out[c].resize(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index h = 0; h < probs.rows(); ++h) out[c][static_cast<std::size_t>(h)] = probs(h, static_cast<Eigen::Index>(c));
  }
  return out;
}

std::vector<double> score_examples(const RewardModel& model, const std::vector<const Example*>& examples) {
  std::vector<double> scores;
  scores.reserve(examples.size());
  if (model.kind == ModelKind::kCoarse) {
    for (const auto& row : stage1_outputs(model, examples)) scores.push_back(row[0]);
  } else {
    for (const auto& row : stage1_outputs(model, examples)) scores.push_back(model.stage2->score(row));
  }
  return scores;
}

RewardModel train_cbm_on(const std::vector<const Example*>& examples, const FeedbackMap& feedback,
                         const std::vector<std::string>& attributes, const MlpConfig& config) {
  if (attributes.empty()) throw Error(ErrorKind::kInvalidArgument, "a CBM needs at least one attribute");
  require_examples(examples);
  std::vector<std::vector<double>> labels;
  LabelMap coarse;
  for (const Example* ex : examples) {
    auto it = feedback.find(ex->example_id);
    if (it == feedback.end()) throw Error(ErrorKind::kMissing, "no feedback for example " + ex->example_id);
    std::vector<double> row;
    for (const std::string& a : attributes) {
      auto label = it->second.attribute_labels.find(a);
      if (label == it->second.attribute_labels.end()) {
        throw Error(ErrorKind::kMissing, "example " + ex->example_id + " lacks attribute '" + a + "'");
      }
      row.push_back(label->second ? 1.0 : 0.0);
    }
    labels.push_back(std::move(row));
    if (!it->second.coarse_label) throw Error(ErrorKind::kMissing, "no coarse label for example " + ex->example_id);
    coarse[ex->example_id] = *it->second.coarse_label;
  }
  // Stage 2 requires both classes; fail before spending time on Stage 1.
  balanced_class_weights(coarse_vector(examples, coarse));

  MlpConfig stage1_config = config;
  stage1_config.input_dim = examples.front()->features().size();
  stage1_config.n_heads = attributes.size();
  RewardModel model;
  model.kind = ModelKind::kCbm;
  model.attribute_names = attributes;
  model.stage1 = mlp_train(stage1_config, feature_rows(examples), labels);
  return refit_aggregator(std::move(model), examples, coarse);
}

RewardModel refit_aggregator(RewardModel model, const std::vector<const Example*>& examples,
                             const LabelMap& coarse_labels) {
  if (model.kind != ModelKind::kCbm) throw Error(ErrorKind::kInvalidArgument, "only a CBM has an aggregator");
  AggregatorFit fit = aggregator_train(stage1_outputs(model, examples), coarse_vector(examples, coarse_labels));
  model.stage2 = std::move(fit.aggregator);
  return model;
}

RewardModel train_coarse_on(const std::vector<const Example*>& examples, const LabelMap& coarse_labels,
                            const MlpConfig& config) {
  require_examples(examples);
  std::vector<bool> coarse = coarse_vector(examples, coarse_labels);
  balanced_class_weights(coarse);  // rejects single-class labels
  std::vector<std::vector<double>> labels;
  labels.reserve(coarse.size());
  for (bool c : coarse) labels.push_back({c ? 1.0 : 0.0});
  MlpConfig stage1_config = config;
  stage1_config.input_dim = examples.front()->features().size();
  stage1_config.n_heads = 1;
  stage1_config.head_weights.clear();
  RewardModel model;
  model.kind = ModelKind::kCoarse;
  model.stage1 = mlp_train(stage1_config, feature_rows(examples), labels);
  return model;
}

RewardModel train_cbm(const Dataset& dataset, const FeedbackMap& feedback,
                      const std::vector<std::string>& attributes, const MlpConfig& config) {
  return train_cbm_on(dataset.examples_in(Split::kTrain), feedback, attributes, config);
}

RewardModel train_coarse(const Dataset& dataset, const LabelMap& coarse_labels, const MlpConfig& config) {
  return train_coarse_on(dataset.examples_in(Split::kTrain), coarse_labels, config);
}

AggregatorReport inspect_aggregator(const RewardModel& model) {
  if (model.kind != ModelKind::kCbm || !model.stage2) {
    throw Error(ErrorKind::kInvalidArgument, "inspect_aggregator requires a CBM");
  }
  AggregatorReport report;
  for (std::size_t j = 0; j < model.attribute_names.size(); ++j) {
    report.weights.emplace_back(model.attribute_names[j], model.stage2->weights(static_cast<Eigen::Index>(j)));
  }
  report.bias = model.stage2->bias;
  return report;
}

std::string serialize_model(const RewardModel& model) {
  model.validate();
  const MlpConfig& c = model.stage1.config;
  json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["kind"] = std::string(model_kind_name(model.kind));
  j["attributes"] = model.attribute_names;
  json hw = json::array();
  for (double w : c.head_weights) hw.push_back(encode_hex_double(w));
  j["config"] = {{"input_dim", c.input_dim},
                 {"hidden_dims", c.hidden_dims},
                 {"n_heads", c.n_heads},
                 {"learning_rate", encode_hex_double(c.learning_rate)},
                 {"epochs", c.epochs},
                 {"batch_size", c.batch_size},
                 {"seed", c.seed},
                 {"optimizer", c.optimizer == Optimizer::kAdam ? "adam" : "sgd"},
                 {"head_weights", hw}};
  json trunk = json::array();
  for (const AffineLayer& layer : model.stage1.trunk) trunk.push_back(encode_layer(layer));
  j["stage1"] = {{"trunk", trunk}, {"heads", encode_layer(model.stage1.heads)}};
  if (model.stage2) {
    j["stage2"] = {{"weights", encode_matrix(model.stage2->weights)},
                   {"bias", encode_hex_double(model.stage2->bias)},
                   {"class_weights",
                    {encode_hex_double(model.stage2->negative_class_weight),
                     encode_hex_double(model.stage2->positive_class_weight)}}};
  }
  return j.dump(1) + "\n";
}

RewardModel parse_model(std::string_view text) {
  RewardModel model;
  try {
    json j = json::parse(text);
    if (j.value("format", "") != kModelFormat) throw Error(ErrorKind::kParse, "not a finegrain reward model");
    if (j.value("version", 0) != kModelVersion) throw Error(ErrorKind::kParse, "unsupported model version");
    model.kind = parse_model_kind(j.at("kind").get<std::string>());
    model.attribute_names = j.at("attributes").get<std::vector<std::string>>();
    const json& c = j.at("config");
    MlpConfig& config = model.stage1.config;
    config.input_dim = c.at("input_dim").get<std::size_t>();
    config.hidden_dims = c.at("hidden_dims").get<std::vector<std::size_t>>();
    config.n_heads = c.at("n_heads").get<std::size_t>();
    config.learning_rate = decode_hex_double(c.at("learning_rate").get<std::string>());
    config.epochs = c.at("epochs").get<std::size_t>();
    config.batch_size = c.at("batch_size").get<std::size_t>();
    config.seed = c.at("seed").get<std::uint64_t>();
    config.optimizer = c.at("optimizer").get<std::string>() == "sgd" ? Optimizer::kSgd : Optimizer::kAdam;
    for (const json& w : c.at("head_weights")) config.head_weights.push_back(decode_hex_double(w.get<std::string>()));
    const json& s1 = j.at("stage1");
    for (const json& layer : s1.at("trunk")) model.stage1.trunk.push_back(decode_layer(layer));
    model.stage1.heads = decode_layer(s1.at("heads"));
    // Shape chain: input -> hidden... -> heads.
    auto expected_in = static_cast<Eigen::Index>(config.input_dim);
    if (model.stage1.trunk.size() != config.hidden_dims.size()) throw Error(ErrorKind::kParse, "layer count mismatch");
    for (std::size_t l = 0; l < model.stage1.trunk.size(); ++l) {
      const AffineLayer& layer = model.stage1.trunk[l];
      if (layer.weights.cols() != expected_in || layer.weights.rows() != static_cast<Eigen::Index>(config.hidden_dims[l])) {
        throw Error(ErrorKind::kParse, "trunk layer " + std::to_string(l) + " has the wrong shape");
      }
      expected_in = layer.weights.rows();
    }
    if (model.stage1.heads.weights.cols() != expected_in) throw Error(ErrorKind::kParse, "head layer has the wrong shape");
    if (j.contains("stage2")) {
      const json& s2 = j["stage2"];
      LinearAggregator agg;
      Eigen::MatrixXd w = decode_matrix(s2.at("weights"));
      if (w.cols() != 1) throw Error(ErrorKind::kParse, "aggregator weights must be a column");
      agg.weights = w.col(0);
      agg.bias = decode_hex_double(s2.at("bias").get<std::string>());
      agg.negative_class_weight = decode_hex_double(s2.at("class_weights").at(0).get<std::string>());
      agg.positive_class_weight = decode_hex_double(s2.at("class_weights").at(1).get<std::string>());
      model.stage2 = std::move(agg);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed model file: ") + e.what());
  }
  model.validate();
  for (double v : flatten_parameters(model.stage1)) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kNumerical, "model file holds non-finite parameters");
  }
  return model;
}

void save_model(const std::filesystem::path& path, const RewardModel& model) {
  write_file_atomic(path, serialize_model(model));
}

RewardModel load_model(const std::filesystem::path& path) {
  try {
    return parse_model(read_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace finegrain
