#include "graphmask/pipeline.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "graphmask/render.hpp"

namespace graphmask {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Binds the keys of one JSON object to typed fields and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }
  ~Section() = default;

  template <typename T>
  Section& field(const std::string& key, T& target) {
    known_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      target = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + path(key) + "': " + e.what());
    }
    return *this;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!known_.count(item.key())) throw ConfigError("unknown config key '" + path(item.key()) + "'");
    }
  }

 private:
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }
  const json& j_;
  std::string name_;
  std::set<std::string> known_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void validate(const PipelineConfig& c) {
  require(c.data.count >= 3, "data.count must be at least 3");
  require(c.data.num_colors >= 2, "data.num_colors must be at least 2");
  require(c.model.max_epochs > 0 && c.model.batch_size > 0, "model epochs and batch size must be positive");
  require(c.model.learning_rate > 0.0, "model.learning_rate must be positive");
  require(c.graphmask.beta >= 0.0, "graphmask.beta must be non-negative");
  require(c.graphmask.epochs_per_stage > 0, "graphmask.epochs_per_stage must be positive");
  require(c.graphmask.batch_size > 0, "graphmask.batch_size must be positive");
  require(c.graphmask.learning_rate > 0.0 && c.graphmask.lambda_learning_rate > 0.0,
          "graphmask learning rates must be positive");
  require(c.graphmask.hard_concrete.temperature > 0.0, "graphmask.temperature must be positive");
  require(c.graphmask.hard_concrete.lower <= 0.0 && c.graphmask.hard_concrete.upper >= 1.0,
          "graphmask stretch interval must contain [0, 1]");
  require(c.nonamortized.steps > 0 && c.nonamortized.check_every > 0,
          "nonamortized steps and check_every must be positive");
  require(c.bottleneck.batch_size > 0, "bottleneck.batch_size must be positive");
  require(c.gnnexplainer.learning_rate > 0.0, "gnnexplainer.learning_rate must be positive");
  require(c.ig_steps > 0, "ig_steps must be positive");
  require(!c.seeds.empty(), "at least one seed is required");
  require(c.degradation_resamples > 0, "degradation.resamples must be positive");
  for (double f : c.degradation_fractions) {
    require(f >= 0.0 && f <= 1.0, "degradation fractions must lie in [0, 1]");
  }
  require(!c.methods.empty(), "at least one method is required");
  for (const auto& m : c.methods) {
    require(std::find(kAllMethods.begin(), kAllMethods.end(), m) != kAllMethods.end(),
            "unknown method '" + m + "'");
  }
}

bool selected(const PipelineConfig& c, const std::string& method) {
  return std::find(c.methods.begin(), c.methods.end(), method) != c.methods.end();
}

void attach_examples(AttributionSet& set, const std::vector<StarGraphExample>& examples) {
  for (AttributionResult& r : set.results) r.example = examples.at(r.example_id);
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

// ---------------------------------------------------------------- config

json config_to_json(const PipelineConfig& c) {
  const auto& hc = c.graphmask.hard_concrete;
  return {
      {"data",
       {{"seed", c.data.seed},
        {"count", c.data.count},
        {"num_colors", c.data.num_colors},
        {"split", {c.data.split.train, c.data.split.validation, c.data.split.test}},
        {"min_positive_rate", c.data.min_positive_rate},
        {"max_positive_rate", c.data.max_positive_rate},
        {"max_attempts", c.data.max_attempts}}},
      {"model",
       {{"seed", c.model.seed},
        {"max_epochs", c.model.max_epochs},
        {"batch_size", c.model.batch_size},
        {"learning_rate", c.model.learning_rate},
        {"target_accuracy", c.model.target_accuracy}}},
      {"graphmask",
       {{"beta", c.graphmask.beta},
        {"epochs_per_stage", c.graphmask.epochs_per_stage},
        {"joint_epochs", c.graphmask.joint_epochs},
        {"batch_size", c.graphmask.batch_size},
        {"learning_rate", c.graphmask.learning_rate},
        {"lambda_learning_rate", c.graphmask.lambda_learning_rate},
        {"hidden_dim", c.graphmask.hidden_dim},
        {"temperature", hc.temperature},
        {"lower", hc.lower},
        {"upper", hc.upper},
        {"location_bias", hc.location_bias}}},
      {"nonamortized",
       {{"steps", c.nonamortized.steps},
        {"learning_rate", c.nonamortized.learning_rate},
        {"lambda_learning_rate", c.nonamortized.lambda_learning_rate},
        {"check_every", c.nonamortized.check_every},
        {"seed", c.nonamortized.seed}}},
      {"bottleneck",
       {{"beta", c.bottleneck.beta},
        {"epochs", c.bottleneck.epochs},
        {"batch_size", c.bottleneck.batch_size},
        {"learning_rate", c.bottleneck.learning_rate},
        {"hidden_dim", c.bottleneck.hidden_dim},
        {"variance_floor", c.bottleneck.variance_floor},
        {"seed", c.bottleneck.seed}}},
      {"gnnexplainer", gnnexplainer_metadata(c.gnnexplainer)},
      {"ig_steps", c.ig_steps},
      {"methods", c.methods},
      {"seeds", c.seeds},
      {"degradation", {{"fractions", c.degradation_fractions}, {"resamples", c.degradation_resamples}}},
      {"render_count", c.render_count},
      {"output_dir", c.output_dir}};
}

PipelineConfig config_from_json(const json& j, PipelineConfig c) {
  Section top(j, "");
  top.field("ig_steps", c.ig_steps)
      .field("methods", c.methods)
      .field("seeds", c.seeds)
      .field("render_count", c.render_count)
      .field("output_dir", c.output_dir);
  json ignored;
  for (const char* name : {"data", "model", "graphmask", "nonamortized", "bottleneck",
                           "gnnexplainer", "degradation"}) {
    top.field(name, ignored);
  }
  top.finish();

  if (j.contains("data")) {
    std::vector<double> split;
    Section s(j.at("data"), "data");
    s.field("seed", c.data.seed)
        .field("count", c.data.count)
        .field("num_colors", c.data.num_colors)
        .field("split", split)
        .field("min_positive_rate", c.data.min_positive_rate)
        .field("max_positive_rate", c.data.max_positive_rate)
        .field("max_attempts", c.data.max_attempts)
        .finish();
    if (!split.empty()) {
      require(split.size() == 3, "data.split must list train, validation and test ratios");
      c.data.split = {split[0], split[1], split[2]};
    }
  }
  if (j.contains("model")) {
    Section(j.at("model"), "model")
        .field("seed", c.model.seed)
        .field("max_epochs", c.model.max_epochs)
        .field("batch_size", c.model.batch_size)
        .field("learning_rate", c.model.learning_rate)
        .field("target_accuracy", c.model.target_accuracy)
        .finish();
  }
  if (j.contains("graphmask")) {
    auto& hc = c.graphmask.hard_concrete;
    Section(j.at("graphmask"), "graphmask")
        .field("beta", c.graphmask.beta)
        .field("epochs_per_stage", c.graphmask.epochs_per_stage)
        .field("joint_epochs", c.graphmask.joint_epochs)
        .field("batch_size", c.graphmask.batch_size)
        .field("learning_rate", c.graphmask.learning_rate)
        .field("lambda_learning_rate", c.graphmask.lambda_learning_rate)
        .field("hidden_dim", c.graphmask.hidden_dim)
        .field("temperature", hc.temperature)
        .field("lower", hc.lower)
        .field("upper", hc.upper)
        .field("location_bias", hc.location_bias)
        .finish();
  }
  if (j.contains("nonamortized")) {
    Section(j.at("nonamortized"), "nonamortized")
        .field("steps", c.nonamortized.steps)
        .field("learning_rate", c.nonamortized.learning_rate)
        .field("lambda_learning_rate", c.nonamortized.lambda_learning_rate)
        .field("check_every", c.nonamortized.check_every)
        .field("seed", c.nonamortized.seed)
        .finish();
  }
  if (j.contains("bottleneck")) {
    Section(j.at("bottleneck"), "bottleneck")
        .field("beta", c.bottleneck.beta)
        .field("epochs", c.bottleneck.epochs)
        .field("batch_size", c.bottleneck.batch_size)
        .field("learning_rate", c.bottleneck.learning_rate)
        .field("hidden_dim", c.bottleneck.hidden_dim)
        .field("variance_floor", c.bottleneck.variance_floor)
        .field("seed", c.bottleneck.seed)
        .finish();
  }
  if (j.contains("gnnexplainer")) {
    Section(j.at("gnnexplainer"), "gnnexplainer")
        .field("sparsity_weight", c.gnnexplainer.sparsity_weight)
        .field("entropy_weight", c.gnnexplainer.entropy_weight)
        .field("steps", c.gnnexplainer.steps)
        .field("learning_rate", c.gnnexplainer.learning_rate)
        .field("initial_logit", c.gnnexplainer.initial_logit)
        .finish();
  }
  if (j.contains("degradation")) {
    Section(j.at("degradation"), "degradation")
        .field("fractions", c.degradation_fractions)
        .field("resamples", c.degradation_resamples)
        .finish();
  }
  c.nonamortized.beta = c.graphmask.beta;
  c.nonamortized.hard_concrete = c.graphmask.hard_concrete;
  validate(c);
  return c;
}

std::vector<std::string> parse_methods(const std::string& list) {
  if (list == "all") return kAllMethods;
  std::vector<std::string> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    if (std::find(kAllMethods.begin(), kAllMethods.end(), item) == kAllMethods.end()) {
      throw ConfigError("unknown method '" + item + "'");
    }
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty method list");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("invalid seed specification '" + text + "'");
    }
  };
  std::vector<std::uint64_t> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto first = number(text.substr(0, dots));
    const auto last = number(text.substr(dots + 2));
    if (last < first) throw ConfigError("seed range '" + text + "' is empty");
    for (auto s = first; s <= last; ++s) out.push_back(s);
    return out;
  }
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(number(item));
  if (out.empty()) throw ConfigError("no seeds given");
  return out;
}

// ---------------------------------------------------------------- files

std::string content_hash(const std::string& bytes) {
  const std::string blob = "blob " + std::to_string(bytes.size()) + '\0' + bytes;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &length, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string write_checkpoint(const ParameterStore& params, const std::string& path) {
  const std::string text = checkpoint_to_json(params) + "\n";
  write_text(path, text);
  return content_hash(text);
}

std::vector<GnnInput> star_inputs(const std::vector<StarGraphExample>& examples, int num_colors) {
  std::vector<GnnInput> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(make_star_input(e, num_colors));
  return out;
}

std::vector<std::vector<bool>> gold_masks(const std::vector<StarGraphExample>& examples) {
  std::vector<std::vector<bool>> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(gold_mask(e));
  return out;
}

// ---------------------------------------------------------------- stages

AttributionSet explain_graphmask(const RelationalGnn& model, const GateClassifier& classifier,
                                 const std::vector<StarGraphExample>& examples, int num_colors,
                                 double beta) {
  AttributionSet set;
  set.method = "graphmask";
  set.metadata = {{"gates", "hard threshold"}, {"beta", beta}};
  const auto inputs = star_inputs(examples, num_colors);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    set.results.push_back(explain(classifier, model, inputs[i], i, beta));
  }
  attach_examples(set, examples);
  return set;
}

AttributionSet explain_nonamortized(const RelationalGnn& model,
                                    const std::vector<StarGraphExample>& examples, int num_colors,
                                    const NonAmortizedConfig& config) {
  AttributionSet set;
  set.method = "nonamortized";
  set.metadata = {{"steps", config.steps},
                  {"learning_rate", config.learning_rate},
                  {"lambda_learning_rate", config.lambda_learning_rate},
                  {"beta", config.beta}};
  const auto runs = train_nonamortized(model, star_inputs(examples, num_colors), config);
  std::size_t unsatisfied = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    AttributionResult r = attribution_from_run(runs[i].run, i, config.beta);
    r.flagged = !runs[i].satisfied;
    unsatisfied += r.flagged;
    set.results.push_back(std::move(r));
  }
  set.metadata["unsatisfied"] = unsatisfied;
  attach_examples(set, examples);
  return set;
}

AttributionSet run_erasure(const RelationalGnn& model, const std::vector<StarGraphExample>& examples,
                           int num_colors) {
  AttributionSet set;
  set.method = "erasure";
  set.metadata = {{"removal", "zero message"}};
  const auto inputs = star_inputs(examples, num_colors);
  for (std::size_t i = 0; i < inputs.size(); ++i) set.results.push_back(erasure_search(model, inputs[i], i));
  attach_examples(set, examples);
  return set;
}

namespace {

AttributionSet finish_soft(const std::string& method, const RelationalGnn& model,
                           std::vector<AttributionResult> validation,
                           std::vector<AttributionResult> test,
                           const std::vector<StarGraphExample>& validation_examples,
                           const std::vector<StarGraphExample>& test_examples, int num_colors,
                           const std::vector<Tensor>& replacements, double beta) {
  AttributionSet set;
  set.method = method;
  const double t = select_threshold(validation, gold_masks(validation_examples));
  set.threshold = t;
  apply_threshold(model, star_inputs(test_examples, num_colors), test, t, replacements, beta);
  set.results = std::move(test);
  attach_examples(set, test_examples);
  return set;
}

}  // namespace

AttributionSet run_integrated_gradients(const RelationalGnn& model,
                                        const std::vector<StarGraphExample>& validation,
                                        const std::vector<StarGraphExample>& test, int num_colors,
                                        std::size_t steps, double beta) {
  auto run = [&](const std::vector<StarGraphExample>& examples) {
    std::vector<AttributionResult> out;
    const auto inputs = star_inputs(examples, num_colors);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      out.push_back(integrated_gradients(model, inputs[i], steps, i));
    }
    return out;
  };
  AttributionSet set = finish_soft("ig", model, run(validation), run(test), validation, test,
                                   num_colors, std::vector<Tensor>(model.config().num_layers), beta);
  set.metadata = {{"steps", steps}, {"normalisation", "per-example max |attribution|"}};
  return set;
}

AttributionSet run_information_bottleneck(const RelationalGnn& model,
                                          const InformationBottleneck& bottleneck,
                                          const std::vector<StarGraphExample>& validation,
                                          const std::vector<StarGraphExample>& test, int num_colors,
                                          double beta) {
  auto run = [&](const std::vector<StarGraphExample>& examples) {
    std::vector<AttributionResult> out;
    const auto inputs = star_inputs(examples, num_colors);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      out.push_back(information_bottleneck(bottleneck, model, inputs[i], i));
    }
    return out;
  };
  AttributionSet set = finish_soft("ib", model, run(validation), run(test), validation, test,
                                   num_colors, bottleneck.statistics().mean, beta);
  set.metadata = {{"replacement", "training-set message mean"},
                  {"variance_floored_dimensions", bottleneck.statistics().floored}};
  return set;
}

AttributionSet run_gnnexplainer(const RelationalGnn& model,
                                const std::vector<StarGraphExample>& validation,
                                const std::vector<StarGraphExample>& test, int num_colors,
                                const GnnExplainerConfig& config, double beta) {
  AttributionSet set = finish_soft(
      "gnnexplainer", model, gnnexplainer(model, star_inputs(validation, num_colors), config),
      gnnexplainer(model, star_inputs(test, num_colors), config), validation, test, num_colors,
      std::vector<Tensor>(model.config().num_layers), beta);
  set.metadata = gnnexplainer_metadata(config);
  return set;
}

// ---------------------------------------------------------------- pipeline

const FaithfulnessReport* PipelineResult::report_for(const std::string& method) const {
  for (const auto& r : reports) {
    if (r.method == method) return &r;
  }
  return nullptr;
}

double PipelineResult::seconds(const std::string& stage) const {
  double total = 0.0;
  for (const auto& t : timings) {
    if (t.stage == stage) total += t.seconds;
  }
  return total;
}

PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log) {
  validate(config);
  PipelineResult result;
  json checkpoints = json::object();
  const bool write = !config.output_dir.empty();
  const fs::path root(config.output_dir);

  auto stage = [&](const std::string& name, auto&& body) {
    if (log) *log << "[" << name << "] start" << std::endl;
    const auto start = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const ConstraintNotSatisfied&) {
      throw;
    } catch (const StageFailure&) {
      throw;
    } catch (const std::exception& e) {
      throw StageFailure(name, e.what());
    }
    result.timings.push_back({name, elapsed(start)});
    if (log) *log << "[" << name << "] done in " << result.timings.back().seconds << " s" << std::endl;
  };

  stage("generate", [&] {
    result.dataset = generate_dataset(config.data);
    result.num_colors = config.data.num_colors;
    if (write) {
      fs::create_directories(root / "data");
      write_jsonl((root / "data" / "train.jsonl").string(), result.dataset.train);
      write_jsonl((root / "data" / "validation.jsonl").string(), result.dataset.validation);
      write_jsonl((root / "data" / "test.jsonl").string(), result.dataset.test);
    }
  });
  const Dataset& ds = result.dataset;
  const int colors = result.num_colors;

  std::optional<RelationalGnn> model;
  stage("train-model", [&] {
    ModelTrainingResult trained = train_toy_model(ds.train, ds.validation, colors, config.model);
    result.model_validation_accuracy = 100.0 * trained.validation_accuracy;
    result.model_epochs = trained.epochs;
    model.emplace(std::move(trained.model));
    result.model_test_accuracy = 100.0 * accuracy(predict(*model, ds.test, colors), ds.test);
    if (write) checkpoints["model"] = write_checkpoint(model->parameters(), (root / "model.json").string());
  });
  if (log) *log << "model test accuracy " << result.model_test_accuracy << "%" << std::endl;

  const auto train_inputs = star_inputs(ds.train, colors);
  const auto validation_inputs = star_inputs(ds.validation, colors);
  const auto test_inputs = star_inputs(ds.test, colors);
  const double beta = config.graphmask.beta;

  std::optional<GraphMaskTrainingResult> primary;
  if (selected(config, "graphmask")) {
    for (std::size_t s = 0; s < config.seeds.size(); ++s) {
      const std::string name = s == 0 ? "train-graphmask" : "train-graphmask-stability";
      stage(name, [&] {
        GraphMaskConfig gm = config.graphmask;
        gm.seed = config.seeds[s];
        GraphMaskTrainingResult trained = train_graphmask(
            *model, train_inputs, validation_inputs, gm, [&](const EpochReport& r) {
              if (log) {
                *log << "  seed " << gm.seed << " epoch " << r.epoch << " penalty " << r.penalty
                     << " lambda " << r.lambda << " val divergence " << r.validation_divergence
                     << " val retained " << r.validation_retained_fraction << std::endl;
              }
            });
        if (write) {
          checkpoints["classifier_seed" + std::to_string(gm.seed)] = write_checkpoint(
              trained.classifier.parameters(),
              (root / ("classifier_seed" + std::to_string(gm.seed) + ".json")).string());
        }
        const AttributionSet set = explain_graphmask(*model, trained.classifier, ds.test, colors, beta);
        std::vector<bool> decisions;
        for (const auto& r : set.results) {
          for (const auto& layer : r.retained) decisions.insert(decisions.end(), layer.begin(), layer.end());
        }
        result.seed_decisions.push_back(std::move(decisions));
        if (s == 0) {
          result.attributions["graphmask"] = set;
          result.attributions["graphmask"].metadata["seed"] = gm.seed;
          result.attributions["graphmask"].metadata["best_epoch"] = trained.best_epoch;
          primary.emplace(std::move(trained));
        }
      });
    }
  }
  if (selected(config, "nonamortized")) {
    stage("nonamortized", [&] {
      result.attributions["nonamortized"] = explain_nonamortized(*model, ds.test, colors, config.nonamortized);
    });
  }
  if (selected(config, "erasure")) {
    stage("erasure", [&] { result.attributions["erasure"] = run_erasure(*model, ds.test, colors); });
  }
  if (selected(config, "ig")) {
    stage("ig", [&] {
      result.attributions["ig"] =
          run_integrated_gradients(*model, ds.validation, ds.test, colors, config.ig_steps, beta);
    });
  }
  if (selected(config, "ib")) {
    stage("ib", [&] {
      const InformationBottleneck ib = train_information_bottleneck(*model, train_inputs, config.bottleneck);
      if (write) checkpoints["bottleneck"] = write_checkpoint(ib.checkpoint(), (root / "bottleneck.json").string());
      result.attributions["ib"] = run_information_bottleneck(*model, ib, ds.validation, ds.test, colors, beta);
    });
  }
  if (selected(config, "gnnexplainer")) {
    stage("gnnexplainer", [&] {
      result.attributions["gnnexplainer"] =
          run_gnnexplainer(*model, ds.validation, ds.test, colors, config.gnnexplainer, beta);
    });
  }

  stage("evaluate", [&] {
    for (const std::string& method : config.methods) {
      result.reports.push_back(evaluate_attributions(result.attributions.at(method), ds.test));
    }
    if (result.seed_decisions.size() >= 2) result.stability = fleiss_kappa(result.seed_decisions);
    if (primary) {
      std::vector<int> labels;
      for (const auto& e : ds.test) labels.push_back(e.label ? 1 : 0);
      std::vector<Tensor> baselines;
      for (std::size_t k = 0; k < primary->classifier.num_layers(); ++k) {
        baselines.push_back(primary->classifier.baseline(k));
      }
      result.degradation = degradation_curve(*model, test_inputs, labels,
                                             result.attributions.at("graphmask").results, baselines,
                                             config.degradation_fractions,
                                             config.degradation_resamples, config.data.seed);
    }
  });

  json report;
  report["config"] = config_to_json(config);
  report["checkpoints"] = checkpoints;
  report["seeds"] = config.seeds;
  report["model"] = {{"validation_accuracy", result.model_validation_accuracy},
                     {"test_accuracy", result.model_test_accuracy},
                     {"epochs", result.model_epochs}};
  report["averaging"] = "micro over all (example, layer, edge) gates; macro also reported";
  report["faithfulness"] = json::array();
  for (const auto& r : result.reports) report["faithfulness"].push_back(report_to_json(r));
  if (result.stability) {
    report["stability"] = {{"kappa", result.stability->kappa},
                           {"observed_agreement", result.stability->observed_agreement},
                           {"expected_agreement", result.stability->expected_agreement},
                           {"degenerate", result.stability->degenerate},
                           {"seeds", config.seeds}};
  } else {
    report["stability"] = {{"notice", "stability needs at least two GraphMask seeds"}};
  }
  report["degradation"] = json::array();
  for (const auto& p : result.degradation) {
    report["degradation"].push_back({{"fraction", p.fraction},
                                     {"mean_accuracy", p.mean_accuracy},
                                     {"stdev_accuracy", p.stdev_accuracy},
                                     {"accuracies", p.accuracies}});
  }
  report["timings"] = json::object();
  for (const auto& t : result.timings) report["timings"][t.stage] = report["timings"].value(t.stage, 0.0) + t.seconds;
  result.report = report;

  if (write) {
    stage("write-reports", [&] {
      fs::create_directories(root / "attributions");
      for (const auto& [method, set] : result.attributions) {
        AttributionSet copy = set;
        copy.metadata["config"] = report["config"];
        copy.metadata["checkpoints"] = checkpoints;
        write_attribution_file((root / "attributions" / (method + ".json")).string(), copy);
      }
      write_text(root / "report.json", report.dump(2) + "\n");
      write_text(root / "table1.csv", reports_to_csv(result.reports));
      std::ostringstream curve;
      curve << "fraction,mean_accuracy,stdev_accuracy\n";
      for (const auto& p : result.degradation) {
        curve << p.fraction << ',' << p.mean_accuracy << ',' << p.stdev_accuracy << '\n';
      }
      write_text(root / "degradation.csv", curve.str());

      fs::create_directories(root / "svg");
      std::mt19937_64 rng(config.data.seed);
      std::vector<std::size_t> ids(ds.test.size());
      std::iota(ids.begin(), ids.end(), 0);
      std::shuffle(ids.begin(), ids.end(), rng);
      ids.resize(std::min(config.render_count, ids.size()));
      for (const auto& [method, set] : result.attributions) {
        for (std::size_t id : ids) {
          write_text(root / "svg" / (method + "_example" + std::to_string(id) + ".svg"),
                     render_star_svg(ds.test[id], set.results.at(id),
                                     method + ", test example " + std::to_string(id)));
        }
      }
    });
  }
  return result;
}

}  // namespace graphmask
