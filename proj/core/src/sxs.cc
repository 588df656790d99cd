#include "finegrain/sxs.h"

#include <algorithm>
#include <cstdio>
#include <set>
#include <tuple>

#include "json.hpp"

#include "finegrain/error.h"
#include "finegrain/evaluation.h"
#include "finegrain/io.h"
#include "finegrain/random.h"

namespace finegrain {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kLogFormat = "finegrain-sxs-log";
constexpr const char* kPlanFormat = "finegrain-sxs-plan";
constexpr int kFormatVersion = 1;

// Index of the maximum value; ties resolved toward the earlier index, and
// callers pass items sorted by example id.
std::size_t argmax(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace

PairSelectionMode parse_pair_selection_mode(std::string_view name) {
  if (name == "dual-argmax") return PairSelectionMode::kDualArgmax;
  if (name == "item-gap") return PairSelectionMode::kItemGap;
  throw Error(ErrorKind::kUnknownName, "unknown pair selection mode '" + std::string(name) + "'");
}

PairSelection select_disagreement_pairs(const CandidatePool& pool, const RewardModel& model_a,
                                        const RewardModel& model_b, std::size_t k, PairSelectionMode mode) {
  if (k == 0) throw Error(ErrorKind::kInvalidArgument, "k must be at least 1");
  if (pool.items.empty()) throw Error(ErrorKind::kMissing, "candidate pool is empty");

  std::map<std::string, std::vector<const Example*>> groups;
  for (const Example& ex : pool.items) groups[ex.prompt_id].push_back(&ex);

  PairSelection selection;
  for (auto& [prompt, items] : groups) {
    if (items.size() < 2) {
      throw Error(ErrorKind::kInvalidArgument, "prompt group " + prompt + " has fewer than two candidates");
    }
    std::sort(items.begin(), items.end(),
              [](const Example* a, const Example* b) { return a->example_id < b->example_id; });
    std::vector<double> sa = score_examples(model_a, items);
    std::vector<double> sb = score_examples(model_b, items);
    std::size_t ia = 0;
    std::size_t ib = 0;
    double gap = 0.0;
    if (mode == PairSelectionMode::kDualArgmax) {
      ia = argmax(sa);
      ib = argmax(sb);
      gap = (sa[ia] - sa[ib]) + (sb[ib] - sb[ia]);
    } else {
      std::vector<double> a_minus_b(items.size());
      std::vector<double> b_minus_a(items.size());
      for (std::size_t i = 0; i < items.size(); ++i) {
        a_minus_b[i] = sa[i] - sb[i];
        b_minus_a[i] = sb[i] - sa[i];
      }
      ia = argmax(a_minus_b);
      ib = argmax(b_minus_a);
      gap = a_minus_b[ia] + b_minus_a[ib];
    }
    if (ia == ib || !(gap > 0.0)) continue;
    selection.pairs.push_back({"pair-" + prompt, prompt, items[ia]->example_id, items[ib]->example_id, gap});
  }
  selection.eligible = selection.pairs.size();
  std::stable_sort(selection.pairs.begin(), selection.pairs.end(),
                   [](const DisagreementPair& a, const DisagreementPair& b) {
                     if (a.score_gap != b.score_gap) return a.score_gap > b.score_gap;
                     return a.prompt_id < b.prompt_id;
                   });
  if (selection.pairs.size() > k) selection.pairs.resize(k);
  selection.shortfall = k - selection.pairs.size();
  return selection;
}

std::string serialize_pairs(const std::vector<DisagreementPair>& pairs) {
  std::string out;
  for (const DisagreementPair& p : pairs) {
    ordered_json j;
    j["pair_id"] = p.pair_id;
    j["prompt_id"] = p.prompt_id;
    j["item_a"] = p.item_a;
    j["item_b"] = p.item_b;
    j["score_gap"] = encode_hex_double(p.score_gap);
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<DisagreementPair> parse_pairs(std::string_view text) {
  std::vector<DisagreementPair> pairs;
  int line = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line;
    if (raw.empty()) continue;
    try {
      json j = json::parse(raw);
      DisagreementPair p;
      p.pair_id = j.at("pair_id").get<std::string>();
      p.prompt_id = j.at("prompt_id").get<std::string>();
      p.item_a = j.at("item_a").get<std::string>();
      p.item_b = j.at("item_b").get<std::string>();
      p.score_gap = decode_hex_double(j.at("score_gap").get<std::string>());
      if (p.item_a == p.item_b || !(p.score_gap > 0.0)) throw Error(ErrorKind::kInvalidArgument, "degenerate pair");
      pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParse, "pairs line " + std::to_string(line) + ": " + e.what());
    }
  }
  return pairs;
}

std::string_view model_side_name(ModelSide side) { return side == ModelSide::kA ? "A" : "B"; }

ModelSide parse_model_side(std::string_view name) {
  if (name == "A") return ModelSide::kA;
  if (name == "B") return ModelSide::kB;
  throw Error(ErrorKind::kParse, "model side must be A or B, got '" + std::string(name) + "'");
}

std::string_view choice_name(Choice choice) {
  switch (choice) {
    case Choice::kLeft: return "left";
    case Choice::kRight: return "right";
    case Choice::kUnsure: return "unsure";
  }
  return "unsure";
}

Choice parse_choice(std::string_view name) {
  if (name == "left") return Choice::kLeft;
  if (name == "right") return Choice::kRight;
  if (name == "unsure") return Choice::kUnsure;
  throw Error(ErrorKind::kParse, "choice must be left, right or unsure, got '" + std::string(name) + "'");
}

std::optional<ModelSide> chosen_model(Choice choice, ModelSide left_model) {
  ModelSide right_model = left_model == ModelSide::kA ? ModelSide::kB : ModelSide::kA;
  switch (choice) {
    case Choice::kLeft: return left_model;
    case Choice::kRight: return right_model;
    case Choice::kUnsure: return std::nullopt;
  }
  return std::nullopt;
}

Choice choice_for(ModelSide chosen, ModelSide left_model) {
  return chosen == left_model ? Choice::kLeft : Choice::kRight;
}

const std::vector<std::string>& default_sxs_tasks() {
  static const std::vector<std::string> tasks = {
      "aggregate", "distorted",           "bright",     "captivating", "photorealistic",
      "chaotic",   "visually_compelling", "disturbing", "funny",
  };
  return tasks;
}

std::string task_question(std::string_view task) {
  if (task == kAggregateTask) return "Which image do you prefer?";
  std::string words(task);
  std::replace(words.begin(), words.end(), '_', ' ');
  return "Which image is more " + words + "?";
}

std::optional<std::size_t> AnnotationPlan::find_pair(std::string_view pair_id) const {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].pair.pair_id == pair_id) return i;
  }
  return std::nullopt;
}

bool AnnotationPlan::has_task(std::string_view task) const {
  return std::find(tasks.begin(), tasks.end(), task) != tasks.end();
}

std::vector<PlanPair> attach_pool_refs(const std::vector<DisagreementPair>& pairs, const CandidatePool& pool) {
  std::map<std::string, const Example*> by_id;
  for (const Example& ex : pool.items) by_id[ex.example_id] = &ex;
  auto meta = [](const Example& ex, const char* key, const std::string& fallback) {
    auto it = ex.metadata.find(key);
    return it == ex.metadata.end() ? fallback : it->second;
  };
  std::vector<PlanPair> out;
  for (const DisagreementPair& p : pairs) {
    auto a = by_id.find(p.item_a);
    auto b = by_id.find(p.item_b);
    if (a == by_id.end() || b == by_id.end()) {
      throw Error(ErrorKind::kMissing, "pair " + p.pair_id + " references an item missing from the pool");
    }
    out.push_back({p, meta(*a->second, "image_ref", p.item_a), meta(*b->second, "image_ref", p.item_b),
                   meta(*a->second, "prompt_text", p.prompt_id)});
  }
  return out;
}

AnnotationPlan build_annotation_plan(std::vector<PlanPair> pairs, std::vector<std::string> tasks,
                                     std::size_t raters_per_pair, std::uint64_t seed) {
  if (tasks.empty()) throw Error(ErrorKind::kInvalidArgument, "annotation plan needs at least one task");
  if (raters_per_pair == 0) throw Error(ErrorKind::kInvalidArgument, "raters_per_pair must be at least 1");
  std::set<std::string> task_names;
  for (const std::string& t : tasks) {
    if (t.empty()) throw Error(ErrorKind::kInvalidArgument, "task names must be nonempty");
    if (!task_names.insert(t).second) throw Error(ErrorKind::kInvalidArgument, "duplicate task " + t);
  }
  std::set<std::string> ids;
  for (const PlanPair& p : pairs) {
    if (!ids.insert(p.pair.pair_id).second) throw Error(ErrorKind::kInvalidArgument, "duplicate pair id " + p.pair.pair_id);
  }
  AnnotationPlan plan;
  plan.tasks = std::move(tasks);
  plan.raters_per_pair = raters_per_pair;
  plan.seed = seed;
  plan.pairs = std::move(pairs);

  Rng side_rng(derive_seed(seed, "plan.sides"));
  std::bernoulli_distribution coin(0.5);
  for (std::size_t p = 0; p < plan.pairs.size(); ++p) {
    for (const std::string& task : plan.tasks) {
      for (std::size_t slot = 0; slot < raters_per_pair; ++slot) {
        plan.assignments.push_back({p, task, slot, coin(side_rng) ? ModelSide::kA : ModelSide::kB});
      }
    }
  }
  plan.slot_orders.resize(raters_per_pair);
  for (std::size_t i = 0; i < plan.assignments.size(); ++i) {
    plan.slot_orders[plan.assignments[i].rater_slot].push_back(i);
  }
  for (std::size_t slot = 0; slot < raters_per_pair; ++slot) {
    Rng order_rng(derive_seed(derive_seed(seed, "plan.order"), static_cast<std::uint64_t>(slot)));
    std::shuffle(plan.slot_orders[slot].begin(), plan.slot_orders[slot].end(), order_rng);
  }
  return plan;
}

std::string serialize_plan(const AnnotationPlan& plan) {
  ordered_json j;
  j["format"] = kPlanFormat;
  j["version"] = kFormatVersion;
  j["tasks"] = plan.tasks;
  j["raters_per_pair"] = plan.raters_per_pair;
  j["seed"] = plan.seed;
  ordered_json pairs = ordered_json::array();
  for (const PlanPair& p : plan.pairs) {
    ordered_json pj;
    pj["pair_id"] = p.pair.pair_id;
    pj["prompt_id"] = p.pair.prompt_id;
    pj["item_a"] = p.pair.item_a;
    pj["item_b"] = p.pair.item_b;
    pj["score_gap"] = encode_hex_double(p.pair.score_gap);
    pj["image_ref_a"] = p.image_ref_a;
    pj["image_ref_b"] = p.image_ref_b;
    pj["prompt_text"] = p.prompt_text;
    pairs.push_back(std::move(pj));
  }
  j["pairs"] = std::move(pairs);
  ordered_json assignments = ordered_json::array();
  for (const Assignment& a : plan.assignments) {
    assignments.push_back({a.pair_index, a.task, a.rater_slot, std::string(model_side_name(a.left_model))});
  }
  j["assignments"] = std::move(assignments);
  j["slot_orders"] = plan.slot_orders;
  return j.dump() + "\n";
}

AnnotationPlan parse_plan(std::string_view text) {
  AnnotationPlan plan;
  try {
    json j = json::parse(text);
    if (j.value("format", "") != kPlanFormat || j.value("version", 0) != kFormatVersion) {
      throw Error(ErrorKind::kParse, "not a finegrain annotation plan");
    }
    plan.tasks = j.at("tasks").get<std::vector<std::string>>();
    plan.raters_per_pair = j.at("raters_per_pair").get<std::size_t>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    for (const json& pj : j.at("pairs")) {
      PlanPair p;
      p.pair.pair_id = pj.at("pair_id").get<std::string>();
      p.pair.prompt_id = pj.at("prompt_id").get<std::string>();
      p.pair.item_a = pj.at("item_a").get<std::string>();
      p.pair.item_b = pj.at("item_b").get<std::string>();
      p.pair.score_gap = decode_hex_double(pj.at("score_gap").get<std::string>());
      p.image_ref_a = pj.at("image_ref_a").get<std::string>();
      p.image_ref_b = pj.at("image_ref_b").get<std::string>();
      p.prompt_text = pj.at("prompt_text").get<std::string>();
      plan.pairs.push_back(std::move(p));
    }
    for (const json& aj : j.at("assignments")) {
      Assignment a;
      a.pair_index = aj.at(0).get<std::size_t>();
      a.task = aj.at(1).get<std::string>();
      a.rater_slot = aj.at(2).get<std::size_t>();
      a.left_model = parse_model_side(aj.at(3).get<std::string>());
      if (a.pair_index >= plan.pairs.size() || a.rater_slot >= plan.raters_per_pair || !plan.has_task(a.task)) {
        throw Error(ErrorKind::kParse, "assignment references an unknown pair, task or slot");
      }
      plan.assignments.push_back(std::move(a));
    }
    plan.slot_orders = j.at("slot_orders").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& order : plan.slot_orders) {
      for (std::size_t i : order) {
        if (i >= plan.assignments.size()) throw Error(ErrorKind::kParse, "slot order references an unknown assignment");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed plan: ") + e.what());
  }
  return plan;
}

std::string record_to_json(const SxSRecord& r) {
  ordered_json j;
  j["pair_id"] = r.pair_id;
  j["task"] = r.task;
  j["rater_id"] = r.rater_id;
  j["choice"] = std::string(choice_name(r.choice));
  j["left_model"] = std::string(model_side_name(r.left_model));
  j["response_ms"] = r.response_ms;
  j["timestamp"] = r.timestamp;
  return j.dump();
}

SxSRecord record_from_json(std::string_view text) {
  SxSRecord r;
  try {
    json j = json::parse(text);
    r.pair_id = j.at("pair_id").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.rater_id = j.at("rater_id").get<std::string>();
    r.choice = parse_choice(j.at("choice").get<std::string>());
    r.left_model = parse_model_side(j.at("left_model").get<std::string>());
    r.response_ms = j.at("response_ms").get<std::int64_t>();
    r.timestamp = j.value("timestamp", "");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed SxS record: ") + e.what());
  }
  if (r.response_ms < 0) throw Error(ErrorKind::kInvalidArgument, "response_ms must be nonnegative");
  if (r.rater_id.empty()) throw Error(ErrorKind::kInvalidArgument, "rater_id must be nonempty");
  return r;
}

std::string sxs_log_header() {
  ordered_json j;
  j["format"] = kLogFormat;
  j["version"] = kFormatVersion;
  return j.dump();
}

std::string serialize_sxs_log(const std::vector<SxSRecord>& records) {
  std::string out = sxs_log_header() + "\n";
  for (const SxSRecord& r : records) out += record_to_json(r) + "\n";
  return out;
}

std::vector<SxSRecord> parse_sxs_log(std::string_view text) {
  std::vector<std::string> lines = split_lines(text);
  if (lines.empty()) throw Error(ErrorKind::kParse, "SxS log lacks a header");
  try {
    json header = json::parse(lines[0]);
    if (header.value("format", "") != kLogFormat || header.value("version", 0) != kFormatVersion) {
      throw Error(ErrorKind::kParse, "unsupported SxS log header");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("SxS log header: ") + e.what());
  }
  std::vector<SxSRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      records.push_back(record_from_json(lines[i]));
    } catch (const Error& e) {
      throw Error(e.kind(), "SxS log line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return records;
}

const SxSTaskSummary* SxSReport::find(std::string_view task) const {
  for (const SxSTaskSummary& t : tasks) {
    if (t.task == task) return &t;
  }
  return nullptr;
}

SxSReport ingest_sxs(const std::vector<SxSRecord>& records, const AnnotationPlan& plan) {
  // Left-side models offered for each (pair index, task).
  std::map<std::pair<std::size_t, std::string>, std::set<ModelSide>> offered;
  for (const Assignment& a : plan.assignments) offered[{a.pair_index, a.task}].insert(a.left_model);

  struct Tally {
    std::size_t a = 0, b = 0, unsure = 0;
    std::int64_t total_ms = 0;
  };
  std::map<std::string, Tally> tallies;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const SxSRecord& r : records) {
    auto pair = plan.find_pair(r.pair_id);
    if (!pair) throw Error(ErrorKind::kUnknownName, "record references unknown pair '" + r.pair_id + "'");
    if (!plan.has_task(r.task)) throw Error(ErrorKind::kUnknownName, "record references unknown task '" + r.task + "'");
    auto sides = offered.find({*pair, r.task});
    if (sides == offered.end() || !sides->second.count(r.left_model)) {
      throw Error(ErrorKind::kInvalidArgument, "record for " + r.pair_id + "/" + r.task +
                                                   " has a side assignment the plan never made");
    }
    if (!seen.insert({r.pair_id, r.task, r.rater_id}).second) {
      throw Error(ErrorKind::kConflict, "duplicate submission for " + r.pair_id + "/" + r.task + " by " + r.rater_id);
    }
    if (r.response_ms < 0) throw Error(ErrorKind::kInvalidArgument, "negative response time");
    Tally& t = tallies[r.task];
    auto model = chosen_model(r.choice, r.left_model);
    if (!model) {
      ++t.unsure;
    } else if (*model == ModelSide::kA) {
      ++t.a;
    } else {
      ++t.b;
    }
    t.total_ms += r.response_ms;
  }

  SxSReport report;
  for (const std::string& task : plan.tasks) {
    auto it = tallies.find(task);
    if (it == tallies.end()) continue;
    const Tally& t = it->second;
    SxSTaskSummary s;
    s.task = task;
    s.votes = t.a + t.b + t.unsure;
    s.votes_a = t.a;
    s.votes_b = t.b;
    s.votes_unsure = t.unsure;
    const auto total = static_cast<double>(s.votes);
    s.pct_model_a = 100.0 * static_cast<double>(t.a) / total;
    s.pct_model_b = 100.0 * static_cast<double>(t.b) / total;
    s.pct_unsure = 100.0 * static_cast<double>(t.unsure) / total;
    s.mean_response_seconds = static_cast<double>(t.total_ms) / total / 1000.0;
    report.tasks.push_back(std::move(s));
  }
  return report;
}

std::string serialize_report(const SxSReport& report) {
  ordered_json tasks = ordered_json::array();
  for (const SxSTaskSummary& s : report.tasks) {
    ordered_json j;
    j["task"] = s.task;
    j["votes"] = s.votes;
    j["votes_a"] = s.votes_a;
    j["votes_b"] = s.votes_b;
    j["votes_unsure"] = s.votes_unsure;
    j["pct_model_a"] = s.pct_model_a;
    j["pct_model_b"] = s.pct_model_b;
    j["pct_unsure"] = s.pct_unsure;
    j["mean_response_seconds"] = s.mean_response_seconds;
    tasks.push_back(std::move(j));
  }
  ordered_json j;
  j["tasks"] = std::move(tasks);
  return j.dump() + "\n";
}

std::string render_report_table(const SxSReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-22s %8s %8s %8s %9s %7s\n", "task", "model_a", "model_b", "unsure", "time_s",
                "votes");
  out += line;
  for (const SxSTaskSummary& s : report.tasks) {
    std::snprintf(line, sizeof(line), "%-22s %8.1f %8.1f %8.1f %9.1f %7zu\n", s.task.c_str(), s.pct_model_a,
                  s.pct_model_b, s.pct_unsure, s.mean_response_seconds, s.votes);
    out += line;
  }
  return out;
}

}  // namespace finegrain
