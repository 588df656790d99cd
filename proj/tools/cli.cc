#include "cli.h"

#include <algorithm>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "finegrain/annotation_service.h"
#include "finegrain/dataset.h"
#include "finegrain/error.h"
#include "finegrain/evaluation.h"
#include "finegrain/io.h"
#include "finegrain/oracles.h"
#include "finegrain/reward_model.h"
#include "finegrain/sxs.h"
#include "finegrain/targets.h"
#include "run_context.h"

namespace finegrain::cli {
namespace {

constexpr const char* kEnvPrefix = "FINEGRAIN_";

// A subcommand whose flags are bound to configuration keys. After parsing,
// flags given on the command line override the environment, which overrides
// the --config file, which overrides built-in defaults.
class Command {
 public:
  using Body = std::function<void(RunContext&, std::ostream&)>;

  Command(CLI::App& parent, const std::string& name, const std::string& description)
      : app_(parent.add_subcommand(name, description)), name_(name) {
    app_->add_option("--config", config_path_, "Key-value configuration file");
  }

  Command& option(const std::string& flags, const std::string& key, const std::string& help) {
    auto storage = std::make_unique<std::string>();
    CLI::Option* opt = app_->add_option(flags, *storage, help + "  [" + key + "]");
    bindings_.push_back({opt, key, std::move(storage)});
    return *this;
  }

  Command& body(Body body) {
    body_ = std::move(body);
    return *this;
  }

  CLI::App* app() const { return app_; }
  const std::string& name() const { return name_; }

  Config resolve_config(const std::vector<std::pair<std::string, std::string>>& extra) const {
    Config config;
    if (!config_path_.empty()) config = Config::load(config_path_);
    std::vector<std::string> keys;
    for (const Binding& b : bindings_) keys.push_back(b.key);
    config.apply_environment(kEnvPrefix, keys);
    for (const Binding& b : bindings_) {
      if (b.option->count() > 0) config.set(b.key, *b.value);
    }
    for (const auto& [key, value] : extra) config.set(key, value);
    return config;
  }

  const Body& run() const { return body_; }
  std::vector<std::string> extra_values;  // filled by repeatable options

 private:
  struct Binding {
    CLI::Option* option;
    std::string key;
    std::unique_ptr<std::string> value;
  };
  CLI::App* app_;
  std::string name_;
  std::string config_path_;
  std::vector<Binding> bindings_;
  Body body_;
};

MlpConfig mlp_config_from(const Config& config) {
  MlpConfig c;
  std::vector<std::size_t> hidden;
  for (const std::string& h : config.get_strings("mlp.hidden", {"256", "256"})) {
    hidden.push_back(static_cast<std::size_t>(parse_int(h)));
  }
  c.hidden_dims = hidden;
  c.learning_rate = config.get_double("mlp.lr", 1e-4);
  c.epochs = static_cast<std::size_t>(config.get_int("mlp.epochs", 100));
  c.batch_size = static_cast<std::size_t>(config.get_int("mlp.batch", 128));
  c.seed = static_cast<std::uint64_t>(config.get_int("mlp.seed", 0));
  std::string optimizer = config.get_string("mlp.optimizer", "adam");
  if (optimizer == "adam") {
    c.optimizer = Optimizer::kAdam;
  } else if (optimizer == "sgd") {
    c.optimizer = Optimizer::kSgd;
  } else {
    throw Error(ErrorKind::kInvalidArgument, "mlp.optimizer must be adam or sgd");
  }
  c.head_weights = config.get_doubles("mlp.head_weights", {});
  return c;
}

void add_mlp_options(Command& cmd) {
  cmd.option("--hidden", "mlp.hidden", "Hidden layer widths, comma-separated (default 256,256)")
      .option("--lr", "mlp.lr", "Learning rate (default 1e-4)")
      .option("--epochs", "mlp.epochs", "Training epochs (default 100)")
      .option("--batch-size", "mlp.batch", "Mini-batch size (default 128)")
      .option("--seed", "mlp.seed", "Root seed for initialization and shuffling")
      .option("--optimizer", "mlp.optimizer", "adam or sgd");
}

LabelMap coarse_labels_of(const FeedbackMap& feedback) {
  LabelMap labels;
  for (const auto& [id, fv] : feedback) {
    if (fv.coarse_label) labels[id] = *fv.coarse_label;
  }
  return labels;
}

void emit(RunContext& ctx, std::ostream& out, const std::string& key, std::string contents) {
  auto path = ctx.config().get(key);
  if (path && !path->empty()) {
    ctx.stage(*path, std::move(contents));
  } else {
    out << contents;
  }
}

std::vector<std::string> all_or(const Config& config, const std::string& key, const std::vector<std::string>& all) {
  std::vector<std::string> chosen = config.get_strings(key, {});
  return chosen.empty() ? all : chosen;
}

void register_commands(CLI::App& app, std::vector<std::unique_ptr<Command>>& commands) {
  auto add = [&](const std::string& name, const std::string& description) -> Command& {
    commands.push_back(std::make_unique<Command>(app, name, description));
    return *commands.back();
  };

  add("ingest", "Validate a dataset file and optionally rewrite it in canonical form")
      .option("-i,--input", "io.input", "Dataset file")
      .option("-o,--output", "io.output", "Canonical dataset output")
      .body([](RunContext& ctx, std::ostream& out) {
        Dataset ds = load_dataset(ctx.input("io.input"));
        std::set<std::string> prompts;
        for (const Example& ex : ds.examples) prompts.insert(ex.prompt_id);
        out << "examples " << ds.examples.size() << "\nprompts " << prompts.size() << "\nembedding_dim "
            << ds.embedding_dim << "\ntext_embedding_dim " << ds.text_embedding_dim << "\nattributes "
            << ds.attribute_names.size() << "\n";
        if (ctx.config().contains("io.output")) ctx.stage(ctx.output_path("io.output"), serialize_dataset(ds));
      });

  add("synth", "Generate a synthetic dataset with latent binary attributes")
      .option("-n,--n", "synthetic.n", "Number of examples")
      .option("--dim", "synthetic.dim", "Embedding dimension")
      .option("--attributes", "synthetic.attributes", "Number of latent attributes")
      .option("--names", "synthetic.names", "Attribute names, comma-separated")
      .option("--marginals", "synthetic.marginals", "Per-attribute probabilities, comma-separated")
      .option("--noise", "synthetic.noise", "Observation noise standard deviation")
      .option("--per-prompt", "synthetic.per_prompt", "Examples per prompt")
      .option("--seed", "synthetic.seed", "Root seed")
      .option("--out-dataset", "io.dataset_out", "Dataset output file")
      .option("--out-feedback", "io.feedback_out", "Latent attribute labels output file")
      .body([](RunContext& ctx, std::ostream& out) {
        const Config& c = ctx.config();
        SyntheticSpec spec;
        spec.n_examples = static_cast<std::size_t>(c.get_int("synthetic.n", 2000));
        spec.embedding_dim = static_cast<std::size_t>(c.get_int("synthetic.dim", 16));
        spec.attribute_names = c.get_strings("synthetic.names", {});
        spec.n_attributes = static_cast<std::size_t>(
            c.get_int("synthetic.attributes", spec.attribute_names.empty() ? 8 : static_cast<std::int64_t>(spec.attribute_names.size())));
        spec.attribute_marginals = c.get_doubles("synthetic.marginals", {});
        spec.noise_sigma = c.get_double("synthetic.noise", 0.0);
        spec.examples_per_prompt = static_cast<std::size_t>(c.get_int("synthetic.per_prompt", 4));
        spec.seed = static_cast<std::uint64_t>(c.get_int("synthetic.seed", 0));
        ctx.note_seed("synthetic", spec.seed);
        SyntheticData data = generate_synthetic(spec);
        ctx.stage(ctx.output_path("io.dataset_out"), serialize_dataset(data.dataset));
        ctx.stage(ctx.output_path("io.feedback_out"), serialize_feedback(data.feedback));
        out << "generated " << data.dataset.examples.size() << " examples\n";
      });

  add("split", "Assign prompts to train/val/test splits")
      .option("-i,--input", "io.input", "Dataset file")
      .option("-o,--output", "io.output", "Dataset output with split assignment")
      .option("--fractions", "split.fractions", "train,val,test fractions (default 0.5,0.25,0.25)")
      .option("--seed", "split.seed", "Root seed")
      .body([](RunContext& ctx, std::ostream& out) {
        const Config& c = ctx.config();
        std::vector<double> f = c.get_doubles("split.fractions", {0.5, 0.25, 0.25});
        if (f.size() != 3) throw Error(ErrorKind::kInvalidArgument, "split.fractions needs three values");
        auto seed = static_cast<std::uint64_t>(c.get_int("split.seed", 0));
        ctx.note_seed("split", seed);
        Dataset ds = split_by_prompt(load_dataset(ctx.input("io.input")), {f[0], f[1], f[2]}, seed);
        ctx.stage(ctx.output_path("io.output"), serialize_dataset(ds));
        for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
          out << split_name(s) << " " << ds.examples_in(s).size() << "\n";
        }
      });

  add("binarize", "Binarize attribute scores and human ratings into feedback labels")
      .option("-i,--input", "io.input", "Dataset file")
      .option("-o,--output", "io.output", "Feedback output file")
      .option("--policy", "binarize.policy", "median (train-split medians) or explicit (threshold.* keys)")
      .body([](RunContext& ctx, std::ostream& out) {
        const Config& c = ctx.config();
        Dataset ds = load_dataset(ctx.input("io.input"));
        std::string policy_name = c.get_string("binarize.policy", "median");
        ThresholdPolicy policy;
        if (policy_name == "explicit") {
          std::map<std::string, double> thresholds = ds.thresholds;
          for (const auto& [name, value] : c.with_prefix("threshold.")) {
            if (name != "coarse") thresholds[name] = parse_double(value);
          }
          std::optional<double> coarse = ds.coarse_threshold;
          if (c.contains("threshold.coarse")) coarse = c.get_double("threshold.coarse", 0.0);
          policy = ThresholdPolicy::explicit_thresholds(thresholds, coarse);
        } else if (policy_name != "median") {
          throw Error(ErrorKind::kInvalidArgument, "binarize.policy must be median or explicit");
        }
        BinarizeResult result = binarize(ds, policy);
        ctx.stage(ctx.output_path("io.output"), serialize_feedback(result.feedback));
        for (const auto& [name, t] : result.thresholds) out << "threshold." << name << " = " << format_double(t) << "\n";
        if (result.coarse_threshold) out << "threshold.coarse = " << format_double(*result.coarse_threshold) << "\n";
      });

  add("tree-label", "Assign coarse labels from a decision-tree target")
      .option("--dataset", "io.dataset", "Dataset file")
      .option("--feedback", "io.feedback", "Feedback file with attribute labels")
      .option("--tree", "tree.file", "Tree file (default: photorealistic, visually_compelling, not chaotic)")
      .option("-o,--output", "io.output", "Feedback output with coarse labels")
      .body([](RunContext& ctx, std::ostream& out) {
        Dataset ds = load_dataset(ctx.input("io.dataset"));
        FeedbackMap fb = load_feedback(ctx.input("io.feedback"));
        DecisionTreeTarget tree = ctx.config().contains("tree.file")
                                      ? DecisionTreeTarget::parse(read_file(ctx.input("tree.file")))
                                      : DecisionTreeTarget::default_tree();
        tree.check_attributes(ds.attribute_names);
        LabelMap labels = label_dataset_with_tree(ds, tree, fb);
        std::size_t positives = 0;
        for (const auto& [id, l] : labels) positives += l;
        ctx.stage(ctx.output_path("io.output"), serialize_feedback(with_coarse_labels(fb, labels)));
        out << "tree " << tree.to_string() << "\npositive " << positives << " of " << labels.size() << "\n";
      });

  Command& train_coarse_cmd = add("train-coarse", "Train a single-stage reward model on coarse labels")
                                  .option("--dataset", "io.dataset", "Dataset file with splits")
                                  .option("--feedback", "io.feedback", "Feedback file with coarse labels")
                                  .option("-o,--output", "io.output", "Model output file");
  add_mlp_options(train_coarse_cmd);
  train_coarse_cmd.body([](RunContext& ctx, std::ostream& out) {
    Dataset ds = load_dataset(ctx.input("io.dataset"));
    FeedbackMap fb = load_feedback(ctx.input("io.feedback"));
    MlpConfig config = mlp_config_from(ctx.config());
    ctx.note_seed("mlp", config.seed);
    RewardModel model = train_coarse(ds, coarse_labels_of(fb), config);
    ctx.stage(ctx.output_path("io.output"), serialize_model(model));
    out << "trained coarse model on " << ds.examples_in(Split::kTrain).size() << " examples\n";
  });

  Command& train_cbm_cmd = add("train-cbm", "Train a two-stage concept-bottleneck reward model")
                               .option("--dataset", "io.dataset", "Dataset file with splits")
                               .option("--feedback", "io.feedback", "Feedback file with attribute and coarse labels")
                               .option("--attributes", "cbm.attributes", "Attributes to model (default: all)")
                               .option("-o,--output", "io.output", "Model output file");
  add_mlp_options(train_cbm_cmd);
  train_cbm_cmd.body([](RunContext& ctx, std::ostream& out) {
    Dataset ds = load_dataset(ctx.input("io.dataset"));
    FeedbackMap fb = load_feedback(ctx.input("io.feedback"));
    MlpConfig config = mlp_config_from(ctx.config());
    ctx.note_seed("mlp", config.seed);
    std::vector<std::string> attributes = all_or(ctx.config(), "cbm.attributes", ds.attribute_names);
    RewardModel model = train_cbm(ds, fb, attributes, config);
    ctx.stage(ctx.output_path("io.output"), serialize_model(model));
    out << "trained cbm over " << attributes.size() << " attributes on " << ds.examples_in(Split::kTrain).size()
        << " examples\n";
  });

  add("score", "Score examples with a trained reward model")
      .option("--model", "io.model", "Model file")
      .option("--dataset", "io.dataset", "Dataset file")
      .option("--split", "score.split", "all, train, val or test (default all)")
      .option("-o,--output", "io.output", "CSV output (example_id,score); stdout when omitted")
      .body([](RunContext& ctx, std::ostream& out) {
        RewardModel model = load_model(ctx.input("io.model"));
        Dataset ds = load_dataset(ctx.input("io.dataset"));
        std::string which = ctx.config().get_string("score.split", "all");
        std::vector<const Example*> examples;
        if (which == "all") {
          for (const Example& ex : ds.examples) examples.push_back(&ex);
        } else {
          examples = ds.examples_in(parse_split(which));
        }
        std::string csv = "example_id,score\n";
        for (const Example* ex : examples) csv += ex->example_id + "," + format_double(score(model, ex->features())) + "\n";
        emit(ctx, out, "io.output", std::move(csv));
      });

  Command& sweep_cmd = add("sweep", "Train and evaluate models over train sizes, attribute sets and seeds")
                           .option("--dataset", "io.dataset", "Dataset file with splits")
                           .option("--feedback", "io.feedback", "Feedback file with attribute and coarse labels")
                           .option("--sizes", "sweep.sizes", "Train sizes, comma-separated")
                           .option("--seeds", "sweep.seeds", "Seeds, comma-separated")
                           .option("--kinds", "sweep.kinds", "Model kinds: coarse,cbm")
                           .option("--jobs", "sweep.jobs", "Parallel cells")
                           .option("--costs", "io.costs", "Cost-model file (cost.* keys)")
                           .option("--format", "report.format", "csv or jsonl")
                           .option("-o,--output", "io.output", "Curve report output");
  add_mlp_options(sweep_cmd);
  sweep_cmd.app()->add_option("--set", sweep_cmd.extra_values, "Attribute set NAME=a,b,c (repeatable)  [sweep.set.NAME]");
  sweep_cmd.body([](RunContext& ctx, std::ostream& out) {
    const Config& c = ctx.config();
    Dataset ds = load_dataset(ctx.input("io.dataset"));
    FeedbackMap fb = load_feedback(ctx.input("io.feedback"));
    SweepSpec spec;
    for (const std::string& s : c.get_strings("sweep.sizes", {})) spec.train_sizes.push_back(static_cast<std::size_t>(parse_int(s)));
    for (const std::string& s : c.get_strings("sweep.seeds", {"0"})) spec.seeds.push_back(static_cast<std::uint64_t>(parse_int(s)));
    spec.model_kinds.clear();
    for (const std::string& k : c.get_strings("sweep.kinds", {"coarse", "cbm"})) spec.model_kinds.push_back(parse_model_kind(k));
    for (const auto& [name, value] : c.with_prefix("sweep.set.")) spec.attribute_sets.push_back({name, split_list(value)});
    if (spec.attribute_sets.empty()) spec.attribute_sets.push_back({"all", ds.attribute_names});
    for (std::uint64_t s : spec.seeds) ctx.note_seed("sweep." + std::to_string(s), s);

    Config cost_config = c;
    if (c.contains("io.costs")) {
      Config file = Config::load(ctx.input("io.costs").string());
      file.merge(c);
      cost_config = file;
    }
    CostModel costs = CostModel::unit(ds.attribute_names);
    CostModel configured = CostModel::from_config(cost_config);
    costs.coarse_cost = configured.coarse_cost;
    costs.include_coarse_for_cbm = configured.include_coarse_for_cbm;
    for (const auto& [name, cost] : configured.attribute_costs) costs.attribute_costs[name] = cost;

    auto jobs = static_cast<unsigned>(c.get_int("sweep.jobs", 1));
    SweepResult result = run_sweep(ds, fb, coarse_labels_of(fb), spec, costs, mlp_config_from(c), jobs);
    ReportFormat format = parse_report_format(c.get_string("report.format", "csv"));
    emit(ctx, out, "io.output", emit_report(result.points, format));
    for (const SweepFailure& f : result.failures) {
      out << "failed " << f.model_name << " n=" << f.n_train << " seed=" << f.seed << ": " << f.message << "\n";
    }
    if (!result.failures.empty() && result.points.empty()) {
      throw Error(ErrorKind::kDegenerate, "every sweep cell failed");
    }
  });

  add("cost-report", "Annotation cost for coarse or fine-grained labelling")
      .option("--costs", "io.costs", "Cost-model file (cost.* keys)")
      .option("-n,--n", "cost.n", "Example counts, comma-separated")
      .option("--attributes", "cost.attributes", "Attributes elicited for a cbm")
      .option("--kind", "cost.kind", "coarse or cbm")
      .option("--include-coarse", "cost.include_coarse", "Count the coarse label for cbm (true/false)")
      .option("-o,--output", "io.output", "CSV output; stdout when omitted")
      .body([](RunContext& ctx, std::ostream& out) {
        Config c = ctx.config();
        if (c.contains("io.costs")) {
          Config file = Config::load(ctx.input("io.costs").string());
          file.merge(c);
          c = file;
        }
        CostModel costs = CostModel::from_config(c);
        ModelKind kind = parse_model_kind(c.get_string("cost.kind", "cbm"));
        std::vector<std::string> attributes;
        for (const auto& [name, cost] : costs.attribute_costs) attributes.push_back(name);
        attributes = all_or(c, "cost.attributes", attributes);
        std::string csv = "kind,n,cost\n";
        for (const std::string& n : c.get_strings("cost.n", {"1"})) {
          auto count = static_cast<std::size_t>(parse_int(n));
          csv += std::string(model_kind_name(kind)) + "," + n + "," +
                 format_double(annotation_cost(costs, count, attributes, kind)) + "\n";
        }
        emit(ctx, out, "io.output", std::move(csv));
      });

  add("select-pairs", "Select prompts where two reward models disagree most, and build an annotation plan")
      .option("--pool", "io.pool", "Candidate pool (dataset file)")
      .option("--model-a", "io.model_a", "Model A file")
      .option("--model-b", "io.model_b", "Model B file")
      .option("-k,--k", "pairs.k", "Number of pairs (default 194)")
      .option("--mode", "pairs.mode", "dual-argmax or item-gap")
      .option("-o,--output", "io.output", "Pairs output file")
      .option("--plan", "io.plan", "Annotation plan output file")
      .option("--tasks", "plan.tasks", "Tasks (default: aggregate + 8 attributes)")
      .option("--raters", "plan.raters", "Raters per pair (default 3)")
      .option("--seed", "plan.seed", "Root seed for sides and ordering")
      .body([](RunContext& ctx, std::ostream& out) {
        const Config& c = ctx.config();
        Dataset pool_ds = load_dataset(ctx.input("io.pool"));
        CandidatePool pool{pool_ds.examples, ctx.config().get_string("io.pool", "")};
        RewardModel a = load_model(ctx.input("io.model_a"));
        RewardModel b = load_model(ctx.input("io.model_b"));
        auto k = static_cast<std::size_t>(c.get_int("pairs.k", 194));
        PairSelection sel = select_disagreement_pairs(pool, a, b, k,
                                                      parse_pair_selection_mode(c.get_string("pairs.mode", "dual-argmax")));
        ctx.stage(ctx.output_path("io.output"), serialize_pairs(sel.pairs));
        out << "selected " << sel.pairs.size() << " of " << sel.eligible << " eligible pairs\n";
        if (sel.shortfall > 0) out << "warning: " << sel.shortfall << " fewer pairs than requested\n";
        if (c.contains("io.plan")) {
          auto seed = static_cast<std::uint64_t>(c.get_int("plan.seed", 0));
          ctx.note_seed("plan", seed);
          AnnotationPlan plan = build_annotation_plan(attach_pool_refs(sel.pairs, pool),
                                                      all_or(c, "plan.tasks", default_sxs_tasks()),
                                                      static_cast<std::size_t>(c.get_int("plan.raters", 3)), seed);
          ctx.stage(ctx.output_path("io.plan"), serialize_plan(plan));
          out << "plan " << plan.assignments.size() << " assignments\n";
        }
      });

  add("serve-annotation", "Serve the side-by-side annotation API and UI")
      .option("--plan", "io.plan", "Annotation plan file")
      .option("--log", "io.log", "Append-only response log")
      .option("--bind", "serve.bind", "host:port (default 127.0.0.1:8080)")
      .option("--static", "serve.static", "Directory with the annotator UI bundle")
      .body([](RunContext& ctx, std::ostream& out) {
        const Config& c = ctx.config();
        AnnotationPlan plan = parse_plan(read_file(ctx.input("io.plan")));
        AnnotationService service(std::move(plan), ctx.output_path("io.log"));
        std::string bind = c.get_string("serve.bind", "127.0.0.1:8080");
        auto colon = bind.rfind(':');
        if (colon == std::string::npos) throw Error(ErrorKind::kInvalidArgument, "serve.bind must be host:port");
        AnnotationServer server(service, c.get_string("serve.static", ""));
        out << "serving on " << bind << std::endl;
        server.run(bind.substr(0, colon), static_cast<int>(parse_int(bind.substr(colon + 1))));
      });

  add("sxs-report", "Aggregate side-by-side judgments into per-task preference shares and timings")
      .option("--plan", "io.plan", "Annotation plan file")
      .option("--log", "io.log", "Response log")
      .option("--format", "report.format", "json or table (default table)")
      .option("-o,--output", "io.output", "Report output; stdout when omitted")
      .body([](RunContext& ctx, std::ostream& out) {
        AnnotationPlan plan = parse_plan(read_file(ctx.input("io.plan")));
        SxSReport report = ingest_sxs(parse_sxs_log(read_file(ctx.input("io.log"))), plan);
        std::string format = ctx.config().get_string("report.format", "table");
        if (format != "json" && format != "table") throw Error(ErrorKind::kInvalidArgument, "report.format must be json or table");
        emit(ctx, out, "io.output", format == "json" ? serialize_report(report) : render_report_table(report));
      });

  add("inspect-aggregator", "Print the named Stage-2 weights of a CBM")
      .option("--model", "io.model", "Model file")
      .option("-o,--output", "io.output", "CSV output; stdout when omitted")
      .body([](RunContext& ctx, std::ostream& out) {
        AggregatorReport report = inspect_aggregator(load_model(ctx.input("io.model")));
        std::string csv = "attribute,weight\n";
        for (const auto& [name, w] : report.weights) csv += name + "," + format_double(w) + "\n";
        csv += "(bias)," + format_double(report.bias) + "\n";
        emit(ctx, out, "io.output", std::move(csv));
      });

  add("agreement-matrix", "Pairwise label agreement between attributes")
      .option("--feedback", "io.feedback", "Feedback file")
      .option("--attributes", "agreement.attributes", "Attributes (default: all present)")
      .option("-o,--output", "io.output", "CSV output; stdout when omitted")
      .body([](RunContext& ctx, std::ostream& out) {
        FeedbackMap fb = load_feedback(ctx.input("io.feedback"));
        std::vector<std::string> present;
        if (!fb.empty()) {
          for (const auto& [name, l] : fb.begin()->second.attribute_labels) present.push_back(name);
        }
        std::vector<std::string> attributes = all_or(ctx.config(), "agreement.attributes", present);
        AgreementMatrix m = attribute_agreement_matrix(fb, attributes);
        std::string csv = "attribute";
        for (const std::string& a : attributes) csv += "," + a;
        csv += "\n";
        for (std::size_t i = 0; i < attributes.size(); ++i) {
          csv += attributes[i];
          for (std::size_t j = 0; j < attributes.size(); ++j) csv += "," + format_double(m.at(i, j));
          csv += "\n";
        }
        emit(ctx, out, "io.output", std::move(csv));
      });

  add("categorize-questions", "Group alignment questions into four categories and average their scores")
      .option("-i,--input", "io.input", "Question-score file")
      .option("--lexicon", "io.lexicon", "Lexicon file (default: built-in)")
      .option("-o,--output", "io.output", "Per-example scores (JSON lines); stdout when omitted")
      .body([](RunContext& ctx, std::ostream& out) {
        auto questions = parse_question_scores(read_file(ctx.input("io.input")));
        Lexicon lexicon = ctx.config().contains("io.lexicon") ? Lexicon::load(ctx.input("io.lexicon")) : Lexicon::builtin();
        std::string lines;
        for (const auto& [id, qs] : questions) {
          nlohmann::ordered_json j;
          j["example_id"] = id;
          nlohmann::ordered_json scores = nlohmann::ordered_json::object();
          for (const auto& [cat, v] : alignment_scores(qs, lexicon)) scores[std::string(category_name(cat))] = v;
          j["scores"] = std::move(scores);
          nlohmann::ordered_json items = nlohmann::ordered_json::array();
          for (const AlignmentQuestion& q : qs) {
            items.push_back({{"question_text", q.question_text},
                             {"category", std::string(category_name(categorize_question(q, lexicon)))}});
          }
          j["questions"] = std::move(items);
          lines += j.dump() + "\n";
        }
        emit(ctx, out, "io.output", std::move(lines));
      });
}

}  // namespace

int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fine-grained versus coarse reward-model toolkit", "finegrain"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;
  register_commands(app, commands);

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto& cmd : commands) {
      if (cmd->app()->parsed()) target = cmd->app();
    }
    out << target->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error\tusage\t" << e.what() << "\n" << app.help();
    return 2;
  }

  for (const auto& cmd : commands) {
    if (!cmd->app()->parsed()) continue;
    try {
      std::vector<std::pair<std::string, std::string>> extra;
      for (const std::string& set : cmd->extra_values) {
        auto eq = set.find('=');
        if (eq == std::string::npos || eq == 0) {
          err << "error\tusage\t--set expects NAME=a,b,c\n";
          return 2;
        }
        extra.emplace_back("sweep.set." + set.substr(0, eq), set.substr(eq + 1));
      }
      RunContext ctx(cmd->name(), argv, cmd->resolve_config(extra));
      cmd->run()(ctx, out);
      ctx.commit();
      return 0;
    } catch (const Error& e) {
      std::string message = e.what();
      std::replace(message.begin(), message.end(), '\n', ' ');
      err << "error\t" << error_kind_name(e.kind()) << "\t" << message << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::string message = e.what();
      std::replace(message.begin(), message.end(), '\n', ' ');
      err << "error\tinternal\t" << message << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace finegrain::cli
