#include "finegrain/evaluation.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <thread>

#include "json.hpp"

#include "finegrain/error.h"
#include "finegrain/io.h"
#include "finegrain/random.h"

namespace finegrain {

double roc_auc(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::kDimensionMismatch, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(scores[i])) throw Error(ErrorKind::kNumerical, "non-finite score");
    positives += labels[i];
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw Error(ErrorKind::kDegenerate, "ROC-AUC needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; a tie group spanning ranks [i+1, j] gets (i+1+j)/2.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) positive_rank_sum += midrank;
    }
    i = j;
  }
  const auto np = static_cast<double>(positives);
  const auto nn = static_cast<double>(negatives);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

CostModel CostModel::unit(const std::vector<std::string>& attributes) {
  CostModel model;
  for (const std::string& a : attributes) model.attribute_costs[a] = 1.0;
  return model;
}

CostModel CostModel::from_config(const Config& config) {
  CostModel model;
  model.coarse_cost = config.get_double("cost.coarse", 1.0);
  model.include_coarse_for_cbm = config.get_bool("cost.include_coarse", true);
  for (const auto& [name, value] : config.with_prefix("cost.attr.")) {
    model.attribute_costs[name] = parse_double(value);
  }
  model.validate();
  return model;
}

void CostModel::validate() const {
  if (!(coarse_cost > 0.0) || !std::isfinite(coarse_cost)) {
    throw Error(ErrorKind::kInvalidArgument, "coarse cost must be positive");
  }
  for (const auto& [name, c] : attribute_costs) {
    if (!(c > 0.0) || !std::isfinite(c)) throw Error(ErrorKind::kInvalidArgument, "cost for " + name + " must be positive");
  }
}

double annotation_cost(const CostModel& cost_model, std::size_t n,
                       const std::vector<std::string>& attributes, ModelKind kind) {
  const auto count = static_cast<double>(n);
  if (kind == ModelKind::kCoarse) return count * cost_model.coarse_cost;
  double per_example = cost_model.include_coarse_for_cbm ? cost_model.coarse_cost : 0.0;
  for (const std::string& a : attributes) {
    auto it = cost_model.attribute_costs.find(a);
    if (it == cost_model.attribute_costs.end()) throw Error(ErrorKind::kUnknownName, "no cost for attribute '" + a + "'");
    per_example += it->second;
  }
  return count * per_example;
}

void SweepSpec::validate(std::size_t available_train) const {
  if (train_sizes.empty() || seeds.empty() || model_kinds.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "sweep needs train sizes, seeds and model kinds");
  }
  for (std::size_t n : train_sizes) {
    if (n == 0) throw Error(ErrorKind::kInvalidArgument, "train sizes must be positive");
    if (n > available_train) {
      throw Error(ErrorKind::kInvalidArgument, "train size " + std::to_string(n) + " exceeds the " +
                                                   std::to_string(available_train) + " train examples");
    }
  }
  bool wants_cbm = std::find(model_kinds.begin(), model_kinds.end(), ModelKind::kCbm) != model_kinds.end();
  if (wants_cbm && attribute_sets.empty()) throw Error(ErrorKind::kInvalidArgument, "CBM cells need attribute sets");
  std::set<std::string> names;
  for (const AttributeSet& s : attribute_sets) {
    if (!names.insert(s.name).second) throw Error(ErrorKind::kInvalidArgument, "duplicate attribute set " + s.name);
  }
}

std::string sweep_model_name(ModelKind kind, const std::string& attribute_set) {
  if (kind == ModelKind::kCoarse) return "coarse";
  return "cbm[" + attribute_set + "]";
}

std::vector<const Example*> nested_subsample(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  std::vector<const Example*> train = dataset.examples_in(Split::kTrain);
  if (n > train.size()) throw Error(ErrorKind::kInvalidArgument, "subsample larger than the train split");
  Rng rng(derive_seed(seed, "sweep.subsample"));
  std::shuffle(train.begin(), train.end(), rng);
  train.resize(n);
  return train;
}

namespace {

struct Cell {
  ModelKind kind;
  const AttributeSet* attributes;  // null for coarse cells
  std::size_t n_train;
  std::uint64_t seed;
};

}  // namespace

SweepResult run_sweep(const Dataset& dataset, const FeedbackMap& feedback, const LabelMap& coarse_labels,
                      const SweepSpec& spec, const CostModel& cost_model, const MlpConfig& config,
                      unsigned jobs) {
  std::vector<const Example*> test = dataset.examples_in(Split::kTest);
  spec.validate(dataset.examples_in(Split::kTrain).size());
  if (test.empty()) throw Error(ErrorKind::kMissing, "test split is empty");
  std::vector<bool> test_labels;
  for (const Example* ex : test) {
    auto it = coarse_labels.find(ex->example_id);
    if (it == coarse_labels.end()) throw Error(ErrorKind::kMissing, "no coarse label for test example " + ex->example_id);
    test_labels.push_back(it->second);
  }
  const FeedbackMap merged = with_coarse_labels(feedback, coarse_labels);

  std::vector<Cell> cells;
  for (ModelKind kind : spec.model_kinds) {
    if (kind == ModelKind::kCoarse) {
      for (std::size_t n : spec.train_sizes) {
        for (std::uint64_t seed : spec.seeds) cells.push_back({kind, nullptr, n, seed});
      }
    } else {
      for (const AttributeSet& set : spec.attribute_sets) {
        for (std::size_t n : spec.train_sizes) {
          for (std::uint64_t seed : spec.seeds) cells.push_back({kind, &set, n, seed});
        }
      }
    }
  }

  std::vector<std::optional<CurvePoint>> points(cells.size());
  std::vector<std::optional<SweepFailure>> failures(cells.size());
  auto run_cell = [&](std::size_t index) {
    const Cell& cell = cells[index];
    std::string name = sweep_model_name(cell.kind, cell.attributes ? cell.attributes->name : "");
    try {
      std::vector<const Example*> train = nested_subsample(dataset, cell.n_train, cell.seed);
      MlpConfig cell_config = config;
      cell_config.seed = derive_seed(cell.seed, "sweep.model");
      RewardModel model = cell.kind == ModelKind::kCoarse
                              ? train_coarse_on(train, coarse_labels, cell_config)
                              : train_cbm_on(train, merged, cell.attributes->attributes, cell_config);
      std::vector<double> scores = score_examples(model, test);
      CurvePoint point;
      point.model_name = name;
      point.n_train = cell.n_train;
      point.seed = cell.seed;
      point.auc = roc_auc(scores, test_labels);
      point.cost = annotation_cost(cost_model, cell.n_train,
                                   cell.attributes ? cell.attributes->attributes : std::vector<std::string>{},
                                   cell.kind);
      points[index] = std::move(point);
    } catch (const std::exception& e) {
      failures[index] = SweepFailure{name, cell.n_train, cell.seed, e.what()};
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
      });
    }
    for (std::thread& t : threads) t.join();
  }

  SweepResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (points[i]) result.points.push_back(std::move(*points[i]));
    if (failures[i]) result.failures.push_back(std::move(*failures[i]));
  }
  return result;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "jsonl" || name == "json-lines") return ReportFormat::kJsonLines;
  throw Error(ErrorKind::kUnknownName, "unknown report format '" + std::string(name) + "'");
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error(ErrorKind::kNumerical, "cannot format number");
  return std::string(buf, ptr);
}

std::string emit_report(std::vector<CurvePoint> points, ReportFormat format) {
  std::sort(points.begin(), points.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return std::tie(a.model_name, a.n_train, a.seed, a.cost, a.auc) <
           std::tie(b.model_name, b.n_train, b.seed, b.cost, b.auc);
  });
  std::string out;
  if (format == ReportFormat::kCsv) {
    out = "model_name,n_train,cost,auc,seed\n";
    for (const CurvePoint& p : points) {
      if (p.model_name.find_first_of(",\"\n") != std::string::npos) {
        throw Error(ErrorKind::kInvalidArgument, "model name not representable in CSV: " + p.model_name);
      }
      out += p.model_name + "," + std::to_string(p.n_train) + "," + format_double(p.cost) + "," +
             format_double(p.auc) + "," + std::to_string(p.seed) + "\n";
    }
  } else {
    for (const CurvePoint& p : points) {
      nlohmann::ordered_json j;
      j["model_name"] = p.model_name;
      j["n_train"] = p.n_train;
      j["cost"] = p.cost;
      j["auc"] = p.auc;
      j["seed"] = p.seed;
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::vector<CurvePoint> parse_report(std::string_view text, ReportFormat format) {
  std::vector<CurvePoint> points;
  std::vector<std::string> lines = split_lines(text);
  std::size_t first = 0;
  if (format == ReportFormat::kCsv) {
    if (lines.empty() || lines[0] != "model_name,n_train,cost,auc,seed") {
      throw Error(ErrorKind::kParse, "missing or unexpected CSV header");
    }
    first = 1;
  }
  for (std::size_t i = first; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    CurvePoint p;
    try {
      if (format == ReportFormat::kCsv) {
        std::vector<std::string> cells = split_list(lines[i]);
        if (cells.size() != 5) throw Error(ErrorKind::kParse, "expected 5 columns");
        p.model_name = cells[0];
        p.n_train = static_cast<std::size_t>(parse_int(cells[1]));
        p.cost = parse_double(cells[2]);
        p.auc = parse_double(cells[3]);
        p.seed = std::stoull(cells[4]);
      } else {
        auto j = nlohmann::json::parse(lines[i]);
        p.model_name = j.at("model_name").get<std::string>();
        p.n_train = j.at("n_train").get<std::size_t>();
        p.cost = j.at("cost").get<double>();
        p.auc = j.at("auc").get<double>();
        p.seed = j.at("seed").get<std::uint64_t>();
      }
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse, "report line " + std::to_string(i + 1) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::kParse, "report line " + std::to_string(i + 1) + ": " + e.what());
    }
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace finegrain
