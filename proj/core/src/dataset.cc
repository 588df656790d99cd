#include "finegrain/dataset.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

#include "finegrain/error.h"
#include "finegrain/io.h"
#include "finegrain/random.h"

namespace finegrain {

using nlohmann::json;

namespace {

constexpr const char* kDatasetFormat = "finegrain-dataset";
constexpr int kDatasetVersion = 1;

[[noreturn]] void fail_at(int line, ErrorKind kind, const std::string& message) {
  throw Error(kind, "line " + std::to_string(line) + ": " + message);
}

std::vector<double> read_vector(const json& j, int line, const char* field) {
  if (!j.is_array()) fail_at(line, ErrorKind::kParse, std::string(field) + " must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const json& v : j) {
    if (!v.is_number()) fail_at(line, ErrorKind::kParse, std::string(field) + " holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

void check_finite(const std::vector<double>& values, int line, const char* field) {
  for (double v : values) {
    if (!std::isfinite(v)) fail_at(line, ErrorKind::kParse, std::string(field) + " is not finite");
  }
}

Example parse_example(const json& j, int line) {
  if (!j.is_object()) fail_at(line, ErrorKind::kParse, "record is not an object");
  Example ex;
  try {
    ex.example_id = j.at("example_id").get<std::string>();
    ex.prompt_id = j.at("prompt_id").get<std::string>();
  } catch (const json::exception&) {
    fail_at(line, ErrorKind::kParse, "record needs string example_id and prompt_id");
  }
  if (!j.contains("image_embedding")) fail_at(line, ErrorKind::kParse, "missing image_embedding");
  ex.image_embedding = read_vector(j["image_embedding"], line, "image_embedding");
  if (j.contains("text_embedding")) {
    ex.text_embedding = read_vector(j["text_embedding"], line, "text_embedding");
  }
  if (j.contains("raw_attribute_scores")) {
    const json& scores = j["raw_attribute_scores"];
    if (!scores.is_object()) fail_at(line, ErrorKind::kParse, "raw_attribute_scores must be an object");
    for (const auto& [name, value] : scores.items()) {
      if (!value.is_number()) fail_at(line, ErrorKind::kParse, "attribute score for " + name + " is not a number");
      ex.raw_attribute_scores[name] = value.get<double>();
    }
  }
  if (j.contains("raw_human_scores")) {
    ex.raw_human_scores = read_vector(j["raw_human_scores"], line, "raw_human_scores");
  }
  if (j.contains("metadata")) {
    const json& meta = j["metadata"];
    if (!meta.is_object()) fail_at(line, ErrorKind::kParse, "metadata must be an object");
    for (const auto& [key, value] : meta.items()) {
      if (!value.is_string()) fail_at(line, ErrorKind::kParse, "metadata value for " + key + " is not a string");
      ex.metadata[key] = value.get<std::string>();
    }
  }
  return ex;
}

json example_to_json(const Example& ex, const Dataset& dataset) {
  json j;
  j["example_id"] = ex.example_id;
  j["prompt_id"] = ex.prompt_id;
  j["image_embedding"] = ex.image_embedding;
  if (!ex.text_embedding.empty()) j["text_embedding"] = ex.text_embedding;
  j["raw_attribute_scores"] = json::object();
  for (const auto& [name, score] : ex.raw_attribute_scores) j["raw_attribute_scores"][name] = score;
  j["raw_human_scores"] = ex.raw_human_scores;
  j["metadata"] = json::object();
  for (const auto& [key, value] : ex.metadata) j["metadata"][key] = value;
  auto split = dataset.split_assignment.find(ex.prompt_id);
  if (split != dataset.split_assignment.end()) j["split"] = std::string(split_name(split->second));
  return j;
}

// Validation shared by the loader (which reports line numbers) and
// Dataset::validate.
void validate_example(const Example& ex, const Dataset& dataset,
                      const std::set<std::string>& attributes, int line) {
  if (ex.image_embedding.size() != dataset.embedding_dim) {
    fail_at(line, ErrorKind::kDimensionMismatch,
            "example " + ex.example_id + " has image_embedding length " +
                std::to_string(ex.image_embedding.size()) + ", expected " +
                std::to_string(dataset.embedding_dim));
  }
  if (ex.text_embedding.size() != dataset.text_embedding_dim) {
    fail_at(line, ErrorKind::kDimensionMismatch,
            "example " + ex.example_id + " has text_embedding length " +
                std::to_string(ex.text_embedding.size()) + ", expected " +
                std::to_string(dataset.text_embedding_dim));
  }
  check_finite(ex.image_embedding, line, "image_embedding");
  check_finite(ex.text_embedding, line, "text_embedding");
  for (const auto& [name, score] : ex.raw_attribute_scores) {
    if (!attributes.count(name)) {
      fail_at(line, ErrorKind::kUnknownName, "unknown attribute '" + name + "'");
    }
    if (!(score >= 0.0 && score <= 1.0)) {
      fail_at(line, ErrorKind::kParse, "attribute score for " + name + " outside [0,1]");
    }
  }
  for (double s : ex.raw_human_scores) {
    if (!(s >= 1.0 && s <= 4.0)) fail_at(line, ErrorKind::kParse, "human score outside [1,4]");
  }
  if (!ex.raw_human_scores.empty() && dataset.rater_count != 0 &&
      ex.raw_human_scores.size() != dataset.rater_count) {
    fail_at(line, ErrorKind::kDimensionMismatch,
            "example " + ex.example_id + " has " + std::to_string(ex.raw_human_scores.size()) +
                " human scores, expected " + std::to_string(dataset.rater_count));
  }
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error(ErrorKind::kParse, "unknown split '" + std::string(name) + "'");
}

std::vector<double> Example::features() const {
  std::vector<double> out;
  out.reserve(image_embedding.size() + text_embedding.size());
  out.insert(out.end(), image_embedding.begin(), image_embedding.end());
  out.insert(out.end(), text_embedding.begin(), text_embedding.end());
  return out;
}

std::vector<const Example*> Dataset::examples_in(Split split) const {
  std::vector<const Example*> out;
  for (const Example& ex : examples) {
    auto it = split_assignment.find(ex.prompt_id);
    if (it != split_assignment.end() && it->second == split) out.push_back(&ex);
  }
  return out;
}

void Dataset::validate() const {
  std::set<std::string> attributes(attribute_names.begin(), attribute_names.end());
  if (attributes.size() != attribute_names.size()) {
    throw Error(ErrorKind::kInvalidArgument, "duplicate attribute names");
  }
  std::set<std::string> ids;
  int index = 0;
  for (const Example& ex : examples) {
    ++index;
    // Line numbers are 1-based file lines; the header is line 1.
    validate_example(ex, *this, attributes, index + 1);
    if (!ids.insert(ex.example_id).second) {
      throw Error(ErrorKind::kInvalidArgument, "duplicate example_id " + ex.example_id);
    }
  }
  for (const auto& [name, value] : thresholds) {
    if (!std::isfinite(value)) throw Error(ErrorKind::kInvalidArgument, "threshold for " + name + " not finite");
  }
  if (coarse_threshold && !std::isfinite(*coarse_threshold)) {
    throw Error(ErrorKind::kInvalidArgument, "coarse threshold not finite");
  }
}

Dataset parse_dataset(std::string_view text) {
  std::vector<std::string> lines = split_lines(text);
  std::size_t first = 0;
  while (first < lines.size() && lines[first].find_first_not_of(" \t") == std::string::npos) ++first;
  if (first == lines.size()) throw Error(ErrorKind::kParse, "empty dataset file (missing header)");

  Dataset dataset;
  int header_line = static_cast<int>(first) + 1;
  json header;
  try {
    header = json::parse(lines[first]);
  } catch (const json::exception& e) {
    fail_at(header_line, ErrorKind::kParse, std::string("malformed header: ") + e.what());
  }
  if (!header.is_object() || header.value("format", "") != kDatasetFormat) {
    fail_at(header_line, ErrorKind::kParse, "header must declare format \"finegrain-dataset\"");
  }
  if (header.value("version", 0) != kDatasetVersion) {
    fail_at(header_line, ErrorKind::kParse, "unsupported dataset version");
  }
  try {
    dataset.embedding_dim = header.at("embedding_dim").get<std::size_t>();
    dataset.text_embedding_dim = header.value("text_embedding_dim", std::size_t{0});
    dataset.rater_count = header.value("rater_count", std::size_t{0});
    for (const json& name : header.at("attributes")) {
      std::string n = name.get<std::string>();
      if (std::find(dataset.attribute_names.begin(), dataset.attribute_names.end(), n) ==
          dataset.attribute_names.end()) {
        dataset.attribute_names.push_back(n);
      }
    }
    if (header.contains("thresholds")) {
      for (const auto& [name, value] : header["thresholds"].items()) {
        dataset.thresholds[name] = value.get<double>();
      }
    }
    if (header.contains("coarse_threshold")) {
      dataset.coarse_threshold = header["coarse_threshold"].get<double>();
    }
  } catch (const json::exception& e) {
    fail_at(header_line, ErrorKind::kParse, std::string("malformed header: ") + e.what());
  }
  if (dataset.embedding_dim == 0) fail_at(header_line, ErrorKind::kParse, "embedding_dim must be positive");

  std::set<std::string> attributes(dataset.attribute_names.begin(), dataset.attribute_names.end());
  for (const auto& [name, value] : dataset.thresholds) {
    if (!attributes.count(name)) fail_at(header_line, ErrorKind::kUnknownName, "threshold for unknown attribute '" + name + "'");
  }
  std::set<std::string> ids;
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    int line = static_cast<int>(i) + 1;
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      fail_at(line, ErrorKind::kParse, std::string("malformed record: ") + e.what());
    }
    Example ex = parse_example(j, line);
    validate_example(ex, dataset, attributes, line);
    if (!ids.insert(ex.example_id).second) {
      fail_at(line, ErrorKind::kInvalidArgument, "duplicate example_id " + ex.example_id);
    }
    if (j.contains("split")) {
      if (!j["split"].is_string()) fail_at(line, ErrorKind::kParse, "split must be a string");
      Split split;
      try {
        split = parse_split(j["split"].get<std::string>());
      } catch (const Error& e) {
        fail_at(line, ErrorKind::kParse, e.what());
      }
      auto [it, inserted] = dataset.split_assignment.emplace(ex.prompt_id, split);
      if (!inserted && it->second != split) {
        fail_at(line, ErrorKind::kInvalidArgument, "prompt " + ex.prompt_id + " straddles splits");
      }
    }
    dataset.examples.push_back(std::move(ex));
  }
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& path) {
  try {
    return parse_dataset(read_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string serialize_dataset(const Dataset& dataset) {
  json header;
  header["format"] = kDatasetFormat;
  header["version"] = kDatasetVersion;
  header["embedding_dim"] = dataset.embedding_dim;
  header["text_embedding_dim"] = dataset.text_embedding_dim;
  header["attributes"] = dataset.attribute_names;
  header["rater_count"] = dataset.rater_count;
  if (!dataset.thresholds.empty()) {
    header["thresholds"] = json::object();
    for (const auto& [name, value] : dataset.thresholds) header["thresholds"][name] = value;
  }
  if (dataset.coarse_threshold) header["coarse_threshold"] = *dataset.coarse_threshold;
  std::string out = header.dump() + "\n";
  for (const Example& ex : dataset.examples) out += example_to_json(ex, dataset).dump() + "\n";
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_file_atomic(path, serialize_dataset(dataset));
}

FeedbackMap parse_feedback(std::string_view text) {
  FeedbackMap out;
  int line = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line;
    if (raw.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::exception& e) {
      fail_at(line, ErrorKind::kParse, std::string("malformed feedback record: ") + e.what());
    }
    if (!j.is_object() || !j.contains("example_id") || !j["example_id"].is_string()) {
      fail_at(line, ErrorKind::kParse, "feedback record needs a string example_id");
    }
    FeedbackVector fv;
    auto read_bit = [&](const json& v, const std::string& what) {
      if (v.is_boolean()) return v.get<bool>();
      if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) return v.get<int>() == 1;
      fail_at(line, ErrorKind::kParse, what + " must be 0 or 1");
    };
    if (j.contains("attributes")) {
      for (const auto& [name, value] : j["attributes"].items()) {
        fv.attribute_labels[name] = read_bit(value, "label " + name);
      }
    }
    if (j.contains("coarse") && !j["coarse"].is_null()) fv.coarse_label = read_bit(j["coarse"], "coarse");
    std::string id = j["example_id"].get<std::string>();
    if (!out.emplace(id, std::move(fv)).second) {
      fail_at(line, ErrorKind::kInvalidArgument, "duplicate example_id " + id);
    }
  }
  return out;
}

FeedbackMap load_feedback(const std::filesystem::path& path) {
  try {
    return parse_feedback(read_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string serialize_feedback(const FeedbackMap& feedback) {
  std::string out;
  for (const auto& [id, fv] : feedback) {
    json j;
    j["example_id"] = id;
    j["attributes"] = json::object();
    for (const auto& [name, label] : fv.attribute_labels) j["attributes"][name] = label ? 1 : 0;
    if (fv.coarse_label) j["coarse"] = *fv.coarse_label ? 1 : 0;
    out += j.dump() + "\n";
  }
  return out;
}

double aggregate_human_scores(const Example& example) {
  if (example.raw_human_scores.empty()) {
    throw Error(ErrorKind::kMissing, "example " + example.example_id + " has no human scores");
  }
  double sum = 0.0;
  for (double s : example.raw_human_scores) sum += s;
  return sum / static_cast<double>(example.raw_human_scores.size());
}

ThresholdPolicy ThresholdPolicy::explicit_thresholds(std::map<std::string, double> thresholds,
                                                     std::optional<double> coarse) {
  ThresholdPolicy policy;
  policy.kind = Kind::kExplicit;
  policy.thresholds = std::move(thresholds);
  policy.coarse_threshold = coarse;
  return policy;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::kMissing, "median of an empty list");
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

BinarizeResult binarize(const Dataset& dataset, const ThresholdPolicy& policy) {
  BinarizeResult result;
  if (policy.kind == ThresholdPolicy::Kind::kExplicit) {
    for (const std::string& name : dataset.attribute_names) {
      auto it = policy.thresholds.find(name);
      if (it == policy.thresholds.end()) {
        throw Error(ErrorKind::kMissing, "no threshold for attribute '" + name + "'");
      }
      if (!std::isfinite(it->second)) throw Error(ErrorKind::kInvalidArgument, "threshold for " + name + " not finite");
      result.thresholds[name] = it->second;
    }
    result.coarse_threshold = policy.coarse_threshold;
  } else {
    std::vector<const Example*> pool = dataset.examples_in(Split::kTrain);
    if (dataset.split_assignment.empty()) {
      for (const Example& ex : dataset.examples) pool.push_back(&ex);
    }
    if (pool.empty()) throw Error(ErrorKind::kMissing, "train split is empty; cannot compute median thresholds");
    for (const std::string& name : dataset.attribute_names) {
      std::vector<double> scores;
      for (const Example* ex : pool) {
        auto it = ex->raw_attribute_scores.find(name);
        if (it != ex->raw_attribute_scores.end()) scores.push_back(it->second);
      }
      if (scores.empty()) throw Error(ErrorKind::kMissing, "no train scores for attribute '" + name + "'");
      result.thresholds[name] = median(std::move(scores));
    }
    std::vector<double> means;
    for (const Example* ex : pool) {
      if (!ex->raw_human_scores.empty()) means.push_back(aggregate_human_scores(*ex));
    }
    if (!means.empty()) result.coarse_threshold = median(std::move(means));
  }

  for (const Example& ex : dataset.examples) {
    FeedbackVector fv;
    for (const std::string& name : dataset.attribute_names) {
      auto it = ex.raw_attribute_scores.find(name);
      if (it == ex.raw_attribute_scores.end()) {
        throw Error(ErrorKind::kMissing, "example " + ex.example_id + " lacks a score for '" + name + "'");
      }
      fv.attribute_labels[name] = binarize_score(it->second, result.thresholds.at(name));
    }
    if (result.coarse_threshold && !ex.raw_human_scores.empty()) {
      fv.coarse_label = binarize_score(aggregate_human_scores(ex), *result.coarse_threshold);
    }
    result.feedback.emplace(ex.example_id, std::move(fv));
  }
  return result;
}

FeedbackMap with_coarse_labels(FeedbackMap feedback, const LabelMap& labels) {
  for (const auto& [id, label] : labels) {
    auto it = feedback.find(id);
    if (it == feedback.end()) throw Error(ErrorKind::kMissing, "no feedback for example " + id);
    it->second.coarse_label = label;
  }
  return feedback;
}

Dataset split_by_prompt(const Dataset& dataset, const SplitFractions& fractions,
                        std::uint64_t seed) {
  const double parts[3] = {fractions.train, fractions.val, fractions.test};
  for (double f : parts) {
    if (!(f > 0.0)) throw Error(ErrorKind::kInvalidArgument, "split fractions must be positive");
  }
  if (std::abs(parts[0] + parts[1] + parts[2] - 1.0) > 1e-9) {
    throw Error(ErrorKind::kInvalidArgument, "split fractions must sum to 1");
  }
  std::set<std::string> unique;
  for (const Example& ex : dataset.examples) unique.insert(ex.prompt_id);
  std::vector<std::string> prompts(unique.begin(), unique.end());
  const std::size_t n = prompts.size();
  if (n < 3) throw Error(ErrorKind::kInvalidArgument, "need at least 3 prompts to split, got " + std::to_string(n));

  Rng rng(derive_seed(seed, "split"));
  std::shuffle(prompts.begin(), prompts.end(), rng);

  auto n_train = static_cast<std::size_t>(std::llround(parts[0] * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(parts[1] * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
  n_val = std::clamp<std::size_t>(n_val, 1, n - n_train - 1);

  Dataset out = dataset;
  out.split_assignment.clear();
  for (std::size_t i = 0; i < n; ++i) {
    Split s = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
    out.split_assignment[prompts[i]] = s;
  }
  return out;
}

const std::vector<std::string>& default_attribute_names() {
  static const std::vector<std::string> names = {
      "photorealistic", "visually_compelling", "chaotic", "distorted",
      "bright",         "captivating",         "disturbing", "funny",
      "blurry",
  };
  return names;
}

void SyntheticSpec::validate() const {
  if (n_examples == 0 || embedding_dim == 0 || n_attributes == 0 || examples_per_prompt == 0) {
    throw Error(ErrorKind::kInvalidArgument, "synthetic sizes must be positive");
  }
  if (!attribute_marginals.empty() && attribute_marginals.size() != n_attributes) {
    throw Error(ErrorKind::kInvalidArgument, "attribute_marginals length must equal n_attributes");
  }
  for (double p : attribute_marginals) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::kInvalidArgument, "marginals must lie in (0,1)");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw Error(ErrorKind::kInvalidArgument, "noise_sigma must be a finite nonnegative number");
  }
  if (!attribute_names.empty() && attribute_names.size() != n_attributes) {
    throw Error(ErrorKind::kInvalidArgument, "attribute_names length must equal n_attributes");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::string> names = spec.attribute_names;
  if (names.empty()) {
    const auto& defaults = default_attribute_names();
    for (std::size_t j = 0; j < spec.n_attributes; ++j) {
      names.push_back(j < defaults.size() ? defaults[j] : "attr_" + std::to_string(j));
    }
  }
  std::vector<double> marginals = spec.attribute_marginals;
  if (marginals.empty()) marginals.assign(spec.n_attributes, 0.5);

  // W is row-major embedding_dim x n_attributes.
  std::vector<double> weights(spec.embedding_dim * spec.n_attributes);
  {
    Rng rng(derive_seed(spec.seed, "synthetic.weights"));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& w : weights) w = normal(rng);
  }
  Rng attribute_rng(derive_seed(spec.seed, "synthetic.attributes"));
  Rng noise_rng(derive_seed(spec.seed, "synthetic.noise"));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticData data;
  Dataset& ds = data.dataset;
  ds.attribute_names = names;
  ds.embedding_dim = spec.embedding_dim;
  for (const std::string& name : names) ds.thresholds[name] = 0.5;
  ds.examples.reserve(spec.n_examples);

  char id[32];
  std::vector<double> latent(spec.n_attributes);
  for (std::size_t i = 0; i < spec.n_examples; ++i) {
    Example ex;
    std::snprintf(id, sizeof(id), "ex%06zu", i);
    ex.example_id = id;
    std::snprintf(id, sizeof(id), "pr%05zu", i / spec.examples_per_prompt);
    ex.prompt_id = id;
    FeedbackVector fv;
    for (std::size_t j = 0; j < spec.n_attributes; ++j) {
      bool on = uniform(attribute_rng) < marginals[j];
      latent[j] = on ? 1.0 : 0.0;
      fv.attribute_labels[names[j]] = on;
      ex.raw_attribute_scores[names[j]] = latent[j];
    }
    ex.image_embedding.resize(spec.embedding_dim);
    for (std::size_t r = 0; r < spec.embedding_dim; ++r) {
      double v = 0.0;
      for (std::size_t j = 0; j < spec.n_attributes; ++j) v += weights[r * spec.n_attributes + j] * latent[j];
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(noise_rng);
      ex.image_embedding[r] = v;
    }
    data.feedback.emplace(ex.example_id, std::move(fv));
    ds.examples.push_back(std::move(ex));
  }
  return data;
}

}  // namespace finegrain
