#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "finegrain/aggregator.h"
#include "finegrain/dataset.h"
#include "finegrain/mlp.h"

namespace finegrain {

enum class ModelKind { kCoarse, kCbm };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

// Either a single-head MLP trained on coarse labels, or a concept bottleneck:
// a multi-head attribute MLP followed by a linear aggregator.
struct RewardModel {
  ModelKind kind = ModelKind::kCoarse;
  MlpModel stage1;
  std::optional<LinearAggregator> stage2;
  std::vector<std::string> attribute_names;

  // Throws if the kind/head-count/aggregator invariants are violated.
  void validate() const;
};

// Score in (0, 1): the sigmoid head for coarse models, the aggregator's
// logistic output over Stage-1 probabilities for CBMs.
double score(const RewardModel& model, std::span<const double> features);

std::vector<double> score_examples(const RewardModel& model, const std::vector<const Example*>& examples);

// Stage-1 attribute probabilities for each example (rows).
std::vector<std::vector<double>> stage1_outputs(const RewardModel& model,
                                                const std::vector<const Example*>& examples);

RewardModel train_cbm_on(const std::vector<const Example*>& examples, const FeedbackMap& feedback,
                         const std::vector<std::string>& attributes, const MlpConfig& config);

RewardModel train_coarse_on(const std::vector<const Example*>& examples, const LabelMap& coarse_labels,
                            const MlpConfig& config);

// Trains on the dataset's train split. The CBM takes coarse labels from
// feedback[id].coarse_label. `config.input_dim` and `config.n_heads` are
// derived from the data.
RewardModel train_cbm(const Dataset& dataset, const FeedbackMap& feedback,
                      const std::vector<std::string>& attributes, const MlpConfig& config);
RewardModel train_coarse(const Dataset& dataset, const LabelMap& coarse_labels, const MlpConfig& config);

// Refits only Stage 2; the Stage-1 parameters are left untouched.
RewardModel refit_aggregator(RewardModel model, const std::vector<const Example*>& examples,
                             const LabelMap& coarse_labels);

struct AggregatorReport {
  std::vector<std::pair<std::string, double>> weights;
  double bias = 0.0;
};

AggregatorReport inspect_aggregator(const RewardModel& model);

// JSON container: format/version, kind, attribute names, the full MLP config
// and every parameter as a hex-float string, so reloading is bit-exact.
std::string serialize_model(const RewardModel& model);
RewardModel parse_model(std::string_view text);
void save_model(const std::filesystem::path& path, const RewardModel& model);
RewardModel load_model(const std::filesystem::path& path);

}  // namespace finegrain
