#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "finegrain/config.h"
#include "finegrain/dataset.h"
#include "finegrain/mlp.h"
#include "finegrain/reward_model.h"

namespace finegrain {

// Mann-Whitney statistic over (positive, negative) pairs, ties counted half,
// via midrank sums in O(n log n).
double roc_auc(std::span<const double> scores, const std::vector<bool>& labels);

struct CostModel {
  double coarse_cost = 1.0;
  std::map<std::string, double> attribute_costs;
  bool include_coarse_for_cbm = true;

  static CostModel unit(const std::vector<std::string>& attributes);
  // Keys: cost.coarse, cost.attr.<name>, cost.include_coarse.
  static CostModel from_config(const Config& config);

  void validate() const;
};

// coarse: n * coarse_cost; cbm: n * (sum of attribute costs + coarse_cost if
// include_coarse_for_cbm).
double annotation_cost(const CostModel& cost_model, std::size_t n,
                       const std::vector<std::string>& attributes, ModelKind kind);

struct AttributeSet {
  std::string name;
  std::vector<std::string> attributes;
};

struct SweepSpec {
  std::vector<std::size_t> train_sizes;
  std::vector<AttributeSet> attribute_sets;  // used by CBM cells
  std::vector<std::uint64_t> seeds;
  std::vector<ModelKind> model_kinds = {ModelKind::kCoarse, ModelKind::kCbm};

  void validate(std::size_t available_train) const;
};

struct CurvePoint {
  std::string model_name;
  std::size_t n_train = 0;
  double cost = 0.0;
  double auc = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const CurvePoint&) const = default;
};

struct SweepFailure {
  std::string model_name;
  std::size_t n_train = 0;
  std::uint64_t seed = 0;
  std::string message;
};

struct SweepResult {
  std::vector<CurvePoint> points;
  std::vector<SweepFailure> failures;
};

// "coarse" or "cbm[<set name>]".
std::string sweep_model_name(ModelKind kind, const std::string& attribute_set);

// Seeded nested subsample: the first n entries of one seeded permutation of
// the train split, so smaller sizes are prefixes of larger ones.
std::vector<const Example*> nested_subsample(const Dataset& dataset, std::size_t n, std::uint64_t seed);

// Trains and evaluates every (kind, attribute set, size, seed) cell on the
// full test split. Cells run on `jobs` threads; output order is fixed by the
// cell enumeration, not completion order. A failing cell is recorded in
// `failures` and the sweep continues.
SweepResult run_sweep(const Dataset& dataset, const FeedbackMap& feedback, const LabelMap& coarse_labels,
                      const SweepSpec& spec, const CostModel& cost_model, const MlpConfig& config,
                      unsigned jobs = 1);

enum class ReportFormat { kCsv, kJsonLines };

ReportFormat parse_report_format(std::string_view name);

// Columns model_name, n_train, cost, auc, seed; rows sorted by
// (model_name, n_train, seed).
std::string emit_report(std::vector<CurvePoint> points, ReportFormat format);
std::vector<CurvePoint> parse_report(std::string_view text, ReportFormat format);

// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace finegrain
