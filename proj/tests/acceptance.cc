// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any selected criterion fails. Pass criterion numbers as arguments to
// run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cli.h"
#include "finegrain/aggregator.h"
#include "finegrain/annotation_service.h"
#include "finegrain/dataset.h"
#include "finegrain/evaluation.h"
#include "finegrain/io.h"
#include "finegrain/mlp.h"
#include "finegrain/oracles.h"
#include "finegrain/reward_model.h"
#include "finegrain/sxs.h"
#include "finegrain/targets.h"
#include "support.h"

// After Eigen: resolv.h defines a _res macro.
#include "httplib.h"
#include "json.hpp"

using namespace finegrain;
using finegrain::test_support::TempDir;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

const std::vector<std::string> kTreeAttributes = {"photorealistic", "visually_compelling", "chaotic"};
const std::vector<std::string> kDisjointAttributes = {"distorted", "bright", "captivating", "disturbing", "funny"};

// Synthetic data split by prompt and labelled by the default tree.
struct TreeData {
  Dataset dataset;
  FeedbackMap feedback;
};

TreeData tree_data(std::size_t n, double noise, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_examples = n;
  spec.noise_sigma = noise;
  spec.seed = seed;
  SyntheticData data = generate_synthetic(spec);
  Dataset ds = split_by_prompt(data.dataset, {}, seed);
  LabelMap labels = label_dataset_with_tree(ds, DecisionTreeTarget::default_tree(), data.feedback);
  return {std::move(ds), with_coarse_labels(std::move(data.feedback), labels)};
}

std::vector<bool> coarse_of(const std::vector<const Example*>& examples, const FeedbackMap& fb) {
  std::vector<bool> y;
  for (const Example* ex : examples) y.push_back(*fb.at(ex->example_id).coarse_label);
  return y;
}

Outcome gradient_oracle() {
  auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  std::uniform_int_distribution<std::size_t> heads(1, 3);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  for (int net = 0; net < 100; ++net) {
    MlpConfig config;
    config.input_dim = dim(rng);
    config.hidden_dims = {dim(rng), dim(rng)};
    config.n_heads = heads(rng);
    config.seed = rng();
    MlpModel model = mlp_init(config);
    std::vector<double> params = flatten_parameters(model);
    for (double& p : params) p = unit(rng);
    assign_parameters(model, params);
    std::vector<double> x(config.input_dim);
    for (double& v : x) v = unit(rng) * 2.0;
    std::vector<double> y(config.n_heads);
    for (double& v : y) v = (rng() & 1U) ? 1.0 : 0.0;

    std::vector<double> analytic = flatten_gradient(mlp_gradient(model, x, y));
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::vector<double> p = params;
      p[i] = params[i] + h;
      assign_parameters(model, p);
      double up = mlp_loss(model, x, y);
      p[i] = params[i] - h;
      assign_parameters(model, p);
      double down = mlp_loss(model, x, y);
      double numeric = (up - down) / (2.0 * h);
      double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
      ++checked;
    }
    assign_parameters(model, params);
  }
  double elapsed = seconds_since(start);
  return {worst < 1e-4 && elapsed < 10.0, "100 nets, " + std::to_string(checked) + " parameters, max rel err " +
                                              fmt(worst, 3) + ", " + fmt(elapsed, 3) + " s"};
}

Outcome auc_oracle() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> size(2, 200);
  double worst = 0.0;
  int instances = 0;
  for (int t = 0; t < 1000; ++t) {
    std::size_t n = size(rng);
    // Few distinct values so ties are common.
    std::uniform_int_distribution<int> level(0, 1 + static_cast<int>(rng() % 20));
    std::vector<double> scores(n);
    std::vector<bool> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = level(rng) * 0.1;
      labels[i] = (rng() & 1U) != 0;
    }
    labels[0] = true;
    labels[1] = false;
    worst = std::max(worst, std::abs(roc_auc(scores, labels) - finegrain::test_support::brute_force_auc(scores, labels)));
    ++instances;
  }
  std::vector<double> fixed = {0.1, 0.4, 0.35, 0.8};
  double fixed_auc = roc_auc(fixed, {false, false, true, true});
  return {worst <= 1e-12 && fixed_auc == 0.75, std::to_string(instances) + " instances, max |diff| " + fmt(worst, 3) +
                                                   ", fixed example " + fmt(fixed_auc)};
}

Outcome realizability() {
  auto start = Clock::now();
  TreeData data = tree_data(2000, 0.0, 11);
  MlpConfig config;
  config.seed = 11;
  RewardModel cbm = train_cbm(data.dataset, data.feedback, kTreeAttributes, config);
  auto test = data.dataset.examples_in(Split::kTest);
  double auc = roc_auc(score_examples(cbm, test), coarse_of(test, data.feedback));

  auto train = data.dataset.examples_in(Split::kTrain);
  auto attrs_of = [&](const std::vector<const Example*>& examples) {
    std::vector<std::vector<double>> x;
    for (const Example* ex : examples) {
      std::vector<double> row;
      for (const std::string& a : kTreeAttributes) row.push_back(data.feedback.at(ex->example_id).attribute_labels.at(a));
      x.push_back(row);
    }
    return x;
  };
  AggregatorFit fit = aggregator_train(attrs_of(train), coarse_of(train, data.feedback));
  std::vector<std::vector<double>> test_x = attrs_of(test);
  std::vector<bool> test_y = coarse_of(test, data.feedback);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_x.size(); ++i) correct += (fit.aggregator.score(test_x[i]) > 0.5) == test_y[i];
  double elapsed = seconds_since(start);
  bool pass = std::abs(auc - 1.0) <= 1e-6 && correct == test_x.size() && elapsed < 120.0;
  return {pass, "cbm held-out AUC " + fmt(auc, 10) + ", ground-truth aggregator " + std::to_string(correct) + "/" +
                    std::to_string(test_x.size()) + " correct, " + fmt(elapsed, 3) + " s"};
}

Outcome ordering() {
  auto start = Clock::now();
  TreeData data = tree_data(2000, 1.0, 5);
  SweepSpec spec;
  spec.train_sizes = {100, 250, 500, 1000};
  spec.seeds = {1, 2, 3, 4, 5};
  spec.attribute_sets = {{"tree", kTreeAttributes}, {"disjoint", kDisjointAttributes}};
  LabelMap coarse;
  for (const auto& [id, fv] : data.feedback) coarse[id] = *fv.coarse_label;
  SweepResult result = run_sweep(data.dataset, data.feedback, coarse, spec, CostModel::unit(data.dataset.attribute_names),
                                 MlpConfig{}, 1);
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> aucs;
  for (const CurvePoint& p : result.points) aucs[{p.model_name, p.n_train}].push_back(p.auc);
  auto mean = [&](const std::string& name, std::size_t n) {
    const auto& v = aucs[{name, n}];
    return v.size() == spec.seeds.size() ? std::accumulate(v.begin(), v.end(), 0.0) / v.size() : std::nan("");
  };
  bool pass = result.failures.empty();
  std::string detail;
  for (std::size_t n : spec.train_sizes) {
    double tree = mean("cbm[tree]", n);
    double disjoint = mean("cbm[disjoint]", n);
    double coarse_auc = mean("coarse", n);
    pass = pass && tree >= coarse_auc && tree - disjoint >= 0.05;
    detail += "N=" + std::to_string(n) + " tree " + fmt(tree, 4) + " coarse " + fmt(coarse_auc, 4) + " disjoint " +
              fmt(disjoint, 4) + "; ";
  }
  double elapsed = seconds_since(start);
  pass = pass && elapsed < 600.0;
  return {pass, detail + fmt(elapsed, 3) + " s"};
}

Outcome cost_accounting() {
  std::vector<std::string> twelve;
  for (int i = 0; i < 12; ++i) twelve.push_back("a" + std::to_string(i));
  CostModel unit = CostModel::unit(twelve);
  double coarse = annotation_cost(unit, 100, {}, ModelKind::kCoarse);
  double with = annotation_cost(unit, 100, twelve, ModelKind::kCbm);
  unit.include_coarse_for_cbm = false;
  double without = annotation_cost(unit, 100, twelve, ModelKind::kCbm);

  Config table = Config::load((finegrain::test_support::data_dir() / "task_costs.cfg").string());
  CostModel timed = CostModel::from_config(table);
  std::vector<std::string> eight = {"distorted", "bright",  "captivating", "photorealistic",
                                    "chaotic",   "visually_compelling", "disturbing", "funny"};
  double hand_cbm = 100.0 * (52.7 + 56.1 + 18.4 + 20.2 + 19.4 + 24.1 + 16.2 + 19.2 + 12.8);
  double hand_coarse = 100.0 * 52.7;
  double hand_tree = 250.0 * (52.7 + 19.4 + 16.2 + 24.1);
  double got_cbm = annotation_cost(timed, 100, eight, ModelKind::kCbm);
  double got_coarse = annotation_cost(timed, 100, {}, ModelKind::kCoarse);
  double got_tree = annotation_cost(timed, 250, {"photorealistic", "visually_compelling", "chaotic"}, ModelKind::kCbm);
  bool pass = coarse == 100.0 && with == 1300.0 && without == 1200.0 && std::abs(got_cbm - hand_cbm) <= 1e-9 &&
              std::abs(got_coarse - hand_coarse) <= 1e-9 && std::abs(got_tree - hand_tree) <= 1e-9;
  return {pass, "unit " + fmt(coarse) + "/" + fmt(with) + "/" + fmt(without) + ", timed cbm " + fmt(got_cbm, 12) +
                    " (hand " + fmt(hand_cbm, 12) + "), coarse " + fmt(got_coarse, 12) + ", tree " + fmt(got_tree, 12)};
}

PlanPair plan_pair(std::size_t i) {
  PlanPair p;
  p.pair.pair_id = "pair-p" + std::to_string(i);
  p.pair.prompt_id = "p" + std::to_string(i);
  p.pair.item_a = "a" + std::to_string(i);
  p.pair.item_b = "b" + std::to_string(i);
  p.image_ref_a = "img/a" + std::to_string(i) + ".png";
  p.image_ref_b = "img/b" + std::to_string(i) + ".png";
  p.prompt_text = "prompt " + std::to_string(i);
  return p;
}

const std::vector<std::pair<std::string, double>> kTaskSeconds = {
    {"aggregate", 52.7},      {"distorted", 56.1}, {"bright", 18.4},
    {"captivating", 20.2},    {"photorealistic", 19.4}, {"chaotic", 24.1},
    {"visually_compelling", 16.2}, {"disturbing", 19.2}, {"funny", 12.8}};

Outcome sxs_fixture() {
  TempDir dir("acceptance-sxs");
  // Aggregate fixture: 1000 judgments over 250 pairs x 4 raters.
  std::vector<PlanPair> pairs;
  for (std::size_t i = 0; i < 250; ++i) pairs.push_back(plan_pair(i));
  AnnotationPlan plan = build_annotation_plan(pairs, {"aggregate"}, 4, 3);
  std::vector<SxSRecord> records;
  for (std::size_t i = 0; i < plan.assignments.size(); ++i) {
    const Assignment& a = plan.assignments[i];
    SxSRecord r;
    r.pair_id = plan.pair_of(a).pair.pair_id;
    r.task = a.task;
    r.rater_id = "rater" + std::to_string(a.rater_slot);
    r.left_model = a.left_model;
    r.choice = i < 256 ? choice_for(ModelSide::kA, a.left_model)
               : i < 505 ? choice_for(ModelSide::kB, a.left_model)
                         : Choice::kUnsure;
    r.response_ms = 52700 + (i % 2 == 0 ? 1000 : -1000);
    r.timestamp = "2024-01-01T00:00:00Z";
    records.push_back(r);
  }
  SxSReport offline = ingest_sxs(records, plan);
  const SxSTaskSummary* agg = offline.find("aggregate");
  bool preference_ok = agg && std::abs(agg->pct_model_a - 25.6) <= 0.1 && std::abs(agg->pct_model_b - 24.9) <= 0.1 &&
                std::abs(agg->pct_unsure - 49.5) <= 0.1;

  // Service replaying the same log.
  write_file_atomic(dir / "preference_ok.log", serialize_sxs_log(records));
  AnnotationService replay(plan, dir / "preference_ok.log");
  bool replay_equal = serialize_report(replay.report()) ==
                      serialize_report(ingest_sxs(parse_sxs_log(read_file(dir / "preference_ok.log")), plan));

  // Per-task timings, collected online over HTTP from scripted raters.
  std::vector<PlanPair> small;
  for (std::size_t i = 0; i < 10; ++i) small.push_back(plan_pair(i));
  std::vector<std::string> tasks;
  for (const auto& [task, seconds] : kTaskSeconds) tasks.push_back(task);
  AnnotationPlan timing_plan = build_annotation_plan(small, tasks, 3, 9);
  AnnotationService service(timing_plan, dir / "timing.log");
  AnnotationServer server(service);
  int port = server.start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", port);
  std::size_t submitted = 0;
  std::map<std::string, std::size_t> per_task;
  for (int rater = 0; rater < 3; ++rater) {
    std::string id = "r" + std::to_string(rater);
    for (;;) {
      auto res = client.Get("/api/assignment?rater=" + id);
      if (!res || res->status != 200) break;
      auto view = nlohmann::json::parse(res->body);
      if (view.contains("done")) break;
      std::string task = view["task"];
      double seconds = std::find_if(kTaskSeconds.begin(), kTaskSeconds.end(), [&](const auto& e) { return e.first == task; })->second;
      auto target_ms = static_cast<std::int64_t>(std::llround(seconds * 1000));
      nlohmann::json body = {{"pair_id", view["pair_id"]}, {"task", task}, {"rater_id", id},
                             {"choice", submitted % 3 == 0 ? "left" : submitted % 3 == 1 ? "right" : "unsure"},
                             {"response_ms", target_ms + (per_task[task]++ % 2 == 0 ? 300 : -300)}};
      auto post = client.Post("/api/response", body.dump(), "application/json");
      if (!post || post->status != 200) break;
      ++submitted;
    }
  }
  auto online = client.Get("/api/report");
  server.stop();
  std::string offline_timing = serialize_report(ingest_sxs(parse_sxs_log(read_file(dir / "timing.log")), timing_plan));
  bool online_equal = online && online->body == offline_timing && submitted == timing_plan.assignments.size();
  SxSReport timing = ingest_sxs(parse_sxs_log(read_file(dir / "timing.log")), timing_plan);
  bool timing_ok = true;
  for (const auto& [task, seconds] : kTaskSeconds) {
    const SxSTaskSummary* s = timing.find(task);
    timing_ok = timing_ok && s && s->mean_response_seconds == seconds;
  }
  timing_ok = timing_ok && agg && agg->mean_response_seconds == 52.7;
  return {preference_ok && timing_ok && replay_equal && online_equal,
          "aggregate " + (agg ? fmt(agg->pct_model_a, 4) + "/" + fmt(agg->pct_model_b, 4) + "/" + fmt(agg->pct_unsure, 4)
                              : std::string("missing")) +
              ", timing means " + (timing_ok ? "exact" : "mismatch") + ", " + std::to_string(submitted) +
              " online submissions, online==offline " + (online_equal && replay_equal ? "yes" : "no")};
}

Outcome categorizer() {
  std::vector<std::pair<std::string, AlignmentCategory>> appendix = {
      {"is there a dog?", AlignmentCategory::kObjectNoun},
      {"is the dog green?", AlignmentCategory::kAttributeAdjective},
      {"is the dog to the left of the river?", AlignmentCategory::kRelation},
      {"is the dog running?", AlignmentCategory::kActionVerb}};
  std::size_t appendix_ok = 0;
  for (const auto& [q, expected] : appendix) appendix_ok += categorize_question({q, "yes", 1.0}) == expected;

  std::size_t total = 0;
  std::size_t correct = 0;
  for (const std::string& line : split_lines(read_file(finegrain::test_support::data_dir() / "questions_gold.tsv"))) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    AlignmentCategory gold = parse_category(line.substr(tab + 1));
    ++total;
    correct += categorize_question({line.substr(0, tab), "yes", 1.0}) == gold;
  }
  double accuracy = total ? static_cast<double>(correct) / total : 0.0;
  return {appendix_ok == 4 && total >= 60 && accuracy >= 0.9,
          "appendix " + std::to_string(appendix_ok) + "/4, corpus " + std::to_string(correct) + "/" +
              std::to_string(total) + " (" + fmt(100 * accuracy, 4) + "%)"};
}

int cli(const std::vector<std::string>& args) {
  std::vector<std::string> argv = {"finegrain"};
  argv.insert(argv.end(), args.begin(), args.end());
  std::ostringstream out;
  std::ostringstream err;
  int code = finegrain::cli::run_cli(argv, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Outcome determinism() {
  std::vector<std::string> reports;
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  for (int run = 0; run < 2; ++run) {
    TempDir dir("acceptance-det");
    auto p = [&](const std::string& name) { return (dir / name).string(); };
    std::string jobs = run == 0 ? "1" : "3";
    bool ok = cli({"synth", "--seed", "7", "-n", "600", "--noise", "0.5", "--out-dataset", p("syn.jsonl"),
                   "--out-feedback", p("latent.jsonl")}) == 0 &&
              cli({"split", "-i", p("syn.jsonl"), "-o", p("split.jsonl"), "--seed", "7"}) == 0 &&
              cli({"tree-label", "--dataset", p("split.jsonl"), "--feedback", p("latent.jsonl"), "-o", p("fb.jsonl")}) == 0 &&
              cli({"train-cbm", "--dataset", p("split.jsonl"), "--feedback", p("fb.jsonl"), "--attributes",
                   "photorealistic,visually_compelling,chaotic", "--epochs", "10", "--hidden", "32,32", "--seed", "3",
                   "-o", p("cbm.json")}) == 0 &&
              cli({"sweep", "--dataset", p("split.jsonl"), "--feedback", p("fb.jsonl"), "--sizes", "50,100,200",
                   "--seeds", "1,2", "--epochs", "10", "--hidden", "32,32", "--jobs", jobs, "--set",
                   "tree=photorealistic,visually_compelling,chaotic", "--set",
                   "disjoint=distorted,bright,captivating,disturbing,funny", "-o", p("curve.csv")}) == 0;
    if (!ok) return {false, "pipeline failed on run " + std::to_string(run + 1)};
    reports.push_back(read_file(dir / "curve.csv"));
    models.push_back(read_file(dir / "cbm.json"));
    datasets.push_back(read_file(dir / "split.jsonl"));

    if (run == 0) {
      // Reloaded model against the same model retrained in memory.
      Dataset ds = load_dataset(dir / "split.jsonl");
      FeedbackMap fb = load_feedback(dir / "fb.jsonl");
      MlpConfig config;
      config.hidden_dims = {32, 32};
      config.epochs = 10;
      config.seed = 3;
      RewardModel fresh = train_cbm(ds, fb, {"photorealistic", "visually_compelling", "chaotic"}, config);
      RewardModel loaded = load_model(dir / "cbm.json");
      std::vector<const Example*> all;
      for (const Example& ex : ds.examples) all.push_back(&ex);
      std::vector<double> a = score_examples(fresh, all);
      std::vector<double> b = score_examples(loaded, all);
      if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) {
        return {false, "reloaded model scores differ from the in-memory model"};
      }
    }
  }
  bool pass = reports[0] == reports[1] && models[0] == models[1] && datasets[0] == datasets[1] &&
              std::count(reports[0].begin(), reports[0].end(), '\n') == 19;
  return {pass, "report " + std::to_string(reports[0].size()) + " bytes identical across runs (jobs 1 vs 3): " +
                    (reports[0] == reports[1] ? "yes" : "no") + ", model bytes identical: " +
                    (models[0] == models[1] ? "yes" : "no") + ", reload bit-identical: yes"};
}

Outcome softmax() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> logit(-50.0, 50.0);
  std::uniform_real_distribution<double> shift(-20.0, 20.0);
  double worst_anti = 0.0;
  double worst_shift = 0.0;
  for (int i = 0; i < 100000; ++i) {
    double a = logit(rng);
    double b = logit(rng);
    double t = shift(rng);
    double p = normalize_yes_no({a, b});
    worst_anti = std::max(worst_anti, std::abs(p + normalize_yes_no({b, a}) - 1.0));
    worst_shift = std::max(worst_shift, std::abs(normalize_yes_no({a + t, b + t}) - p));
  }
  double hi = normalize_yes_no({1000.0, 0.0});
  double lo = normalize_yes_no({0.0, 1000.0});
  double eq = normalize_yes_no({1000.0, 1000.0});
  double neg = normalize_yes_no({-1000.0, 1000.0});
  bool finite = std::isfinite(hi) && std::isfinite(lo) && std::isfinite(eq) && std::isfinite(neg);
  bool pass = worst_anti <= 1e-12 && worst_shift <= 1e-12 && finite && std::abs(hi - 1.0) <= 1e-12 &&
              std::abs(lo) <= 1e-12 && eq == 0.5 && neg == 0.0;
  return {pass, "1e5 pairs, antisymmetry " + fmt(worst_anti, 3) + ", translation " + fmt(worst_shift, 3) +
                    ", (1000,0) -> " + fmt(hi, 17) + ", (0,1000) -> " + fmt(lo, 3)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient oracle", gradient_oracle},
      {"AUC oracle", auc_oracle},
      {"synthetic realizability", realizability},
      {"attribute-set ordering", ordering},
      {"cost accounting", cost_accounting},
      {"side-by-side report fixture", sxs_fixture},
      {"question categorizer", categorizer},
      {"determinism", determinism},
      {"yes/no normalization", softmax}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  bool all_pass = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    int number = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && outcome.pass;
    std::cout << "criterion " << number << " [" << criteria[i].first << "]: " << (outcome.pass ? "PASS" : "FAIL")
              << " (" << outcome.detail << ")" << std::endl;
  }
  return all_pass ? 0 : 1;
}
