#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace finegrain {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

// One prompt-image datum.
struct Example {
  std::string example_id;
  std::string prompt_id;
  std::vector<double> image_embedding;
  // Empty when the dataset carries no text embedding.
  std::vector<double> text_embedding;
  std::map<std::string, double> raw_attribute_scores;  // each in [0, 1]
  std::vector<double> raw_human_scores;                // each in [1, 4]
  std::map<std::string, std::string> metadata;

  // Model input: image embedding followed by the text embedding.
  std::vector<double> features() const;
};

// Binarized fine-grained labels plus the coarse label. The coarse label is
// absent until a threshold or a target assigns it.
struct FeedbackVector {
  std::map<std::string, bool> attribute_labels;
  std::optional<bool> coarse_label;

  bool operator==(const FeedbackVector&) const = default;
};

using FeedbackMap = std::map<std::string, FeedbackVector>;
using LabelMap = std::map<std::string, bool>;

struct Dataset {
  std::vector<Example> examples;
  std::vector<std::string> attribute_names;
  std::size_t embedding_dim = 0;
  std::size_t text_embedding_dim = 0;
  // Declared number of raters; 0 when the dataset carries no human scores.
  std::size_t rater_count = 0;
  std::map<std::string, double> thresholds;
  std::optional<double> coarse_threshold;
  std::map<std::string, Split> split_assignment;  // prompt_id -> split

  std::size_t feature_dim() const { return embedding_dim + text_embedding_dim; }

  // Examples whose prompt is assigned to `split`, in dataset order.
  std::vector<const Example*> examples_in(Split split) const;

  // Throws if any invariant (dimensions, attribute names, score ranges, split
  // consistency) is violated.
  void validate() const;
};

// Line-record dataset file. The first line is a header object
//   {"format":"finegrain-dataset","version":1,"embedding_dim":D,
//    "text_embedding_dim":T,"attributes":[...],"rater_count":R}
// optionally with "thresholds" and "coarse_threshold"; each following line is
// one Example object with an optional "split" field.
Dataset parse_dataset(std::string_view text);
Dataset load_dataset(const std::filesystem::path& path);
std::string serialize_dataset(const Dataset& dataset);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);

// Feedback file: one {"example_id", "attributes":{name:0|1}, "coarse":0|1}
// record per line; "coarse" is omitted when unset.
FeedbackMap parse_feedback(std::string_view text);
FeedbackMap load_feedback(const std::filesystem::path& path);
std::string serialize_feedback(const FeedbackMap& feedback);

// Unweighted mean of the rater scores.
double aggregate_human_scores(const Example& example);

struct ThresholdPolicy {
  enum class Kind { kExplicit, kTrainMedian };
  Kind kind = Kind::kTrainMedian;
  // Used only by kExplicit; must cover every declared attribute. A missing
  // coarse threshold leaves coarse labels unset.
  std::map<std::string, double> thresholds;
  std::optional<double> coarse_threshold;

  static ThresholdPolicy train_median() { return {}; }
  static ThresholdPolicy explicit_thresholds(std::map<std::string, double> thresholds,
                                             std::optional<double> coarse);
};

struct BinarizeResult {
  FeedbackMap feedback;
  std::map<std::string, double> thresholds;
  std::optional<double> coarse_threshold;
};

// Strictly greater than the threshold maps to 1.
inline bool binarize_score(double score, double threshold) { return score > threshold; }

// Median of the values (mean of the middle pair for even counts).
double median(std::vector<double> values);

// Median thresholds are computed over the train split; when no split has been
// assigned, over all examples.
BinarizeResult binarize(const Dataset& dataset, const ThresholdPolicy& policy);

// Overwrites coarse labels with already-binary targets (e.g. a decision tree).
FeedbackMap with_coarse_labels(FeedbackMap feedback, const LabelMap& labels);

struct SplitFractions {
  double train = 0.5;
  double val = 0.25;
  double test = 0.25;
};

// Seeded shuffle of the distinct prompt ids, then contiguous partition.
Dataset split_by_prompt(const Dataset& dataset, const SplitFractions& fractions,
                        std::uint64_t seed);

struct SyntheticSpec {
  std::size_t n_examples = 2000;
  std::size_t embedding_dim = 16;
  std::size_t n_attributes = 8;
  std::vector<double> attribute_marginals;  // empty means 0.5 for all
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // Defaults to the built-in attribute vocabulary when empty.
  std::vector<std::string> attribute_names;
  std::size_t examples_per_prompt = 4;

  void validate() const;
};

// The first names are the attributes used by the default decision tree.
const std::vector<std::string>& default_attribute_names();

struct SyntheticData {
  Dataset dataset;
  FeedbackMap feedback;  // latent attributes, coarse label unset
};

// Latent binary attributes a ~ Bernoulli(marginals) per example, observed
// through embedding = W a + eps with W ~ N(0,1) fixed by the seed and
// eps ~ N(0, noise_sigma^2 I).
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace finegrain
