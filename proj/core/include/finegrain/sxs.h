#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "finegrain/dataset.h"
#include "finegrain/reward_model.h"

namespace finegrain {

struct CandidatePool {
  std::vector<Example> items;
  std::string source_tag;
};

struct DisagreementPair {
  std::string pair_id;
  std::string prompt_id;
  std::string item_a;  // preferred by model A
  std::string item_b;  // preferred by model B
  double score_gap = 0.0;

  bool operator==(const DisagreementPair&) const = default;
};

enum class PairSelectionMode {
  // Per prompt: the argmax of each model; gap = (sA(a*) - sA(b*)) + (sB(b*) - sB(a*)).
  kDualArgmax,
  // Per prompt: a* = argmax (sA - sB), b* = argmax (sB - sA); gap is the sum of
  // those two per-item differences.
  kItemGap,
};

PairSelectionMode parse_pair_selection_mode(std::string_view name);

struct PairSelection {
  std::vector<DisagreementPair> pairs;
  std::size_t eligible = 0;
  // k minus the number of pairs returned, when fewer than k were eligible.
  std::size_t shortfall = 0;
};

// Top-k pairs by gap (ties by prompt id). Argmax ties go to the smallest
// example id, so results do not depend on item order within a prompt.
PairSelection select_disagreement_pairs(const CandidatePool& pool, const RewardModel& model_a,
                                        const RewardModel& model_b, std::size_t k,
                                        PairSelectionMode mode = PairSelectionMode::kDualArgmax);

std::string serialize_pairs(const std::vector<DisagreementPair>& pairs);
std::vector<DisagreementPair> parse_pairs(std::string_view text);

enum class ModelSide { kA, kB };
enum class Choice { kLeft, kRight, kUnsure };

std::string_view model_side_name(ModelSide side);
ModelSide parse_model_side(std::string_view name);
std::string_view choice_name(Choice choice);
Choice parse_choice(std::string_view name);

// The judged model, or nothing for "unsure".
std::optional<ModelSide> chosen_model(Choice choice, ModelSide left_model);
// Inverse of chosen_model for decided votes.
Choice choice_for(ModelSide chosen, ModelSide left_model);

inline constexpr std::string_view kAggregateTask = "aggregate";

// aggregate plus the eight image-quality attributes.
const std::vector<std::string>& default_sxs_tasks();

// Rater-facing question for a task.
std::string task_question(std::string_view task);

struct PlanPair {
  DisagreementPair pair;
  std::string image_ref_a;
  std::string image_ref_b;
  std::string prompt_text;
};

struct Assignment {
  std::size_t pair_index = 0;
  std::string task;
  std::size_t rater_slot = 0;
  ModelSide left_model = ModelSide::kA;
};

struct AnnotationPlan {
  std::vector<std::string> tasks;
  std::size_t raters_per_pair = 3;
  std::uint64_t seed = 0;
  std::vector<PlanPair> pairs;
  // One per (pair, task, rater slot), enumerated in that nesting order.
  std::vector<Assignment> assignments;
  // Per rater slot, the shuffled presentation order (indices into assignments).
  std::vector<std::vector<std::size_t>> slot_orders;

  const PlanPair& pair_of(const Assignment& a) const { return pairs[a.pair_index]; }
  std::optional<std::size_t> find_pair(std::string_view pair_id) const;
  bool has_task(std::string_view task) const;
};

// Image references come from metadata "image_ref" (falling back to the
// example id); prompt text from metadata "prompt_text" (falling back to the
// prompt id).
std::vector<PlanPair> attach_pool_refs(const std::vector<DisagreementPair>& pairs, const CandidatePool& pool);

AnnotationPlan build_annotation_plan(std::vector<PlanPair> pairs, std::vector<std::string> tasks,
                                     std::size_t raters_per_pair, std::uint64_t seed);

std::string serialize_plan(const AnnotationPlan& plan);
AnnotationPlan parse_plan(std::string_view text);

struct SxSRecord {
  std::string pair_id;
  std::string task;
  std::string rater_id;
  Choice choice = Choice::kUnsure;
  ModelSide left_model = ModelSide::kA;
  std::int64_t response_ms = 0;
  std::string timestamp;

  bool operator==(const SxSRecord&) const = default;
};

std::string record_to_json(const SxSRecord& record);
SxSRecord record_from_json(std::string_view text);

// Log file: a {"format":"finegrain-sxs-log","version":1} header line, then
// one record per line.
std::string sxs_log_header();
std::string serialize_sxs_log(const std::vector<SxSRecord>& records);
std::vector<SxSRecord> parse_sxs_log(std::string_view text);

struct SxSTaskSummary {
  std::string task;
  std::size_t votes = 0;
  std::size_t votes_a = 0;
  std::size_t votes_b = 0;
  std::size_t votes_unsure = 0;
  double pct_model_a = 0.0;
  double pct_model_b = 0.0;
  double pct_unsure = 0.0;
  double mean_response_seconds = 0.0;
};

// Tasks in plan order; tasks without votes are omitted.
struct SxSReport {
  std::vector<SxSTaskSummary> tasks;

  const SxSTaskSummary* find(std::string_view task) const;
};

// Maps left/right back to models, rejecting unknown pairs/tasks and duplicate
// (pair, task, rater) submissions.
SxSReport ingest_sxs(const std::vector<SxSRecord>& records, const AnnotationPlan& plan);

std::string serialize_report(const SxSReport& report);
// Fixed-width table with one-decimal percentages.
std::string render_report_table(const SxSReport& report);

}  // namespace finegrain
