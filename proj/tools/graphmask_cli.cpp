// graphmask command-line driver.
//
// Every subcommand works inside one run directory:
//   data/{train,validation,test}.jsonl   model.json   classifier_seed<S>.json
//   bottleneck.json   attributions/<method>.json   evaluation/<method>.json
//   report.json   table1.csv   degradation.csv   svg/
// The directory comes from --output-dir, then the config's output_dir, then
// $GRAPHMASK_OUTPUT_ROOT, then ./graphmask_run.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "graphmask/pipeline.hpp"
#include "graphmask/render.hpp"

namespace fs = std::filesystem;
using namespace graphmask;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitConstraint = 3;
constexpr int kExitStage = 4;

struct Overrides {
  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::size_t> count;
  std::optional<int> num_colors;
  std::optional<std::uint64_t> model_seed;
  std::optional<double> beta;
  std::optional<double> temperature;
  std::optional<std::size_t> joint_epochs;
  std::optional<std::string> methods;
  std::optional<std::string> seeds;
};

PipelineConfig load_config(const Overrides& o) {
  PipelineConfig config;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError("cannot read config file '" + o.config_path + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config file '" + o.config_path + "' is not valid JSON: " + e.what());
    }
    config = config_from_json(j, config);
  }
  if (o.data_seed) config.data.seed = *o.data_seed;
  if (o.count) config.data.count = *o.count;
  if (o.num_colors) config.data.num_colors = *o.num_colors;
  if (o.model_seed) config.model.seed = *o.model_seed;
  if (o.beta) config.graphmask.beta = *o.beta;
  if (o.temperature) config.graphmask.hard_concrete.temperature = *o.temperature;
  if (o.joint_epochs) config.graphmask.joint_epochs = *o.joint_epochs;
  if (o.methods) config.methods = parse_methods(*o.methods);
  if (o.seeds) config.seeds = parse_seeds(*o.seeds);
  if (!o.output_dir.empty()) {
    config.output_dir = o.output_dir;
  } else if (config.output_dir.empty()) {
    const char* env = std::getenv("GRAPHMASK_OUTPUT_ROOT");
    config.output_dir = env && *env ? env : "graphmask_run";
  }
  // Revalidates and propagates shared settings.
  return config_from_json(json::object(), config);
}

fs::path root_of(const PipelineConfig& c) { return fs::path(c.output_dir); }

std::vector<StarGraphExample> load_split(const PipelineConfig& c, const std::string& split) {
  const fs::path path = root_of(c) / "data" / (split + ".jsonl");
  if (!fs::exists(path)) throw std::runtime_error("missing '" + path.string() + "'; run generate first");
  return read_jsonl(path.string());
}

RelationalGnn load_model(const PipelineConfig& c) {
  const fs::path path = root_of(c) / "model.json";
  if (!fs::exists(path)) throw std::runtime_error("missing '" + path.string() + "'; run train-model first");
  return RelationalGnn(toy_model_config(c.data.num_colors), load_checkpoint(path.string()));
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return content_hash(bytes.str());
}

void write_set(const PipelineConfig& c, AttributionSet set) {
  set.metadata["config"] = config_to_json(c);
  set.metadata["checkpoints"] = {{"model", file_hash(root_of(c) / "model.json")}};
  fs::create_directories(root_of(c) / "attributions");
  const fs::path path = root_of(c) / "attributions" / (set.method + ".json");
  write_attribution_file(path.string(), set);
  std::cout << "wrote " << path.string() << " (" << set.results.size() << " examples)\n";
}

AttributionSet load_set(const PipelineConfig& c, const std::string& method) {
  const fs::path path = root_of(c) / "attributions" / (method + ".json");
  if (!fs::exists(path)) throw std::runtime_error("missing '" + path.string() + "'");
  return read_attribution_file(path.string());
}

std::vector<std::string> available_methods(const PipelineConfig& c) {
  std::vector<std::string> out;
  for (const auto& m : kAllMethods) {
    if (fs::exists(root_of(c) / "attributions" / (m + ".json"))) out.push_back(m);
  }
  return out;
}

void print_report(const FaithfulnessReport& r) {
  std::cout << r.method << ": P " << r.micro.precision << " R " << r.micro.recall << " F1 "
            << r.micro.f1 << " | accuracy delta " << r.accuracy_delta << " | mean divergence "
            << r.mean_divergence << '\n';
}

// ---------------------------------------------------------------- commands

void cmd_generate(const PipelineConfig& c) {
  const Dataset ds = generate_dataset(c.data);
  const fs::path dir = root_of(c) / "data";
  fs::create_directories(dir);
  write_jsonl((dir / "train.jsonl").string(), ds.train);
  write_jsonl((dir / "validation.jsonl").string(), ds.validation);
  write_jsonl((dir / "test.jsonl").string(), ds.test);
  std::cout << "train " << ds.train.size() << " validation " << ds.validation.size() << " test "
            << ds.test.size() << " -> " << dir.string() << '\n';
}

void cmd_train_model(const PipelineConfig& c) {
  const auto train = load_split(c, "train");
  const auto validation = load_split(c, "validation");
  const auto test = load_split(c, "test");
  const ModelTrainingResult trained = train_toy_model(train, validation, c.data.num_colors, c.model);
  const double test_accuracy = 100.0 * accuracy(predict(trained.model, test, c.data.num_colors), test);
  const std::string hash = write_checkpoint(trained.model.parameters(), (root_of(c) / "model.json").string());
  std::cout << "epochs " << trained.epochs << " validation " << 100.0 * trained.validation_accuracy
            << "% test " << test_accuracy << "% checkpoint " << hash << '\n';
}

void cmd_train_graphmask(const PipelineConfig& c, std::uint64_t seed) {
  const RelationalGnn model = load_model(c);
  GraphMaskConfig gm = c.graphmask;
  gm.seed = seed;
  const auto train = star_inputs(load_split(c, "train"), c.data.num_colors);
  const auto validation = star_inputs(load_split(c, "validation"), c.data.num_colors);
  const GraphMaskTrainingResult trained =
      train_graphmask(model, train, validation, gm, [](const EpochReport& r) {
        std::cout << "epoch " << r.epoch << " layers " << r.enabled_layers << " penalty " << r.penalty
                  << " lambda " << r.lambda << " val divergence " << r.validation_divergence
                  << " val retained " << r.validation_retained_fraction << std::endl;
      });
  const fs::path path = root_of(c) / ("classifier_seed" + std::to_string(seed) + ".json");
  const std::string hash = write_checkpoint(trained.classifier.parameters(), path.string());
  std::cout << "best epoch " << trained.best_epoch << " checkpoint " << path.string() << " " << hash << '\n';
}

void cmd_explain(const PipelineConfig& c, std::uint64_t seed, bool nonamortized) {
  const RelationalGnn model = load_model(c);
  const auto test = load_split(c, "test");
  if (nonamortized) {
    write_set(c, explain_nonamortized(model, test, c.data.num_colors, c.nonamortized));
    return;
  }
  const fs::path path = root_of(c) / ("classifier_seed" + std::to_string(seed) + ".json");
  if (!fs::exists(path)) throw std::runtime_error("missing '" + path.string() + "'; run train-graphmask first");
  const GateClassifier classifier(load_checkpoint(path.string()), c.graphmask.hard_concrete);
  AttributionSet set = explain_graphmask(model, classifier, test, c.data.num_colors, c.graphmask.beta);
  set.metadata["seed"] = seed;
  set.metadata["classifier"] = file_hash(path);
  write_set(c, std::move(set));
}

void cmd_baseline(const PipelineConfig& c, const std::string& method) {
  const RelationalGnn model = load_model(c);
  const auto validation = load_split(c, "validation");
  const auto test = load_split(c, "test");
  const int colors = c.data.num_colors;
  const double beta = c.graphmask.beta;
  if (method == "erasure") {
    write_set(c, run_erasure(model, test, colors));
  } else if (method == "ig") {
    write_set(c, run_integrated_gradients(model, validation, test, colors, c.ig_steps, beta));
  } else if (method == "ib") {
    const auto train = star_inputs(load_split(c, "train"), colors);
    const InformationBottleneck ib = train_information_bottleneck(
        model, train, c.bottleneck, [](const BottleneckEpoch& e) {
          std::cout << "epoch " << e.epoch << " loss " << e.loss << " divergence " << e.divergence
                    << " kl " << e.kl << std::endl;
        });
    write_checkpoint(ib.checkpoint(), (root_of(c) / "bottleneck.json").string());
    write_set(c, run_information_bottleneck(model, ib, validation, test, colors, beta));
  } else if (method == "gnnexplainer") {
    write_set(c, run_gnnexplainer(model, validation, test, colors, c.gnnexplainer, beta));
  } else {
    throw ConfigError("unknown baseline '" + method + "'");
  }
}

std::vector<FaithfulnessReport> evaluate_methods(const PipelineConfig& c, std::vector<std::string> methods) {
  if (methods.empty()) methods = available_methods(c);
  if (methods.empty()) throw std::runtime_error("no attribution files under '" + root_of(c).string() + "'");
  const auto test = load_split(c, "test");
  std::vector<FaithfulnessReport> reports;
  for (const auto& m : methods) reports.push_back(evaluate_attributions(load_set(c, m), test));
  return reports;
}

void cmd_evaluate(const PipelineConfig& c, const std::vector<std::string>& methods) {
  const fs::path dir = root_of(c) / "evaluation";
  fs::create_directories(dir);
  for (const auto& r : evaluate_methods(c, methods)) {
    json j = report_to_json(r);
    j["config"] = config_to_json(c);
    j["seeds"] = c.seeds;
    std::ofstream(dir / (r.method + ".json")) << j.dump(2) << '\n';
    print_report(r);
  }
}

void cmd_compare(const PipelineConfig& c, const std::vector<std::string>& methods) {
  const auto reports = evaluate_methods(c, methods);
  const std::string csv = reports_to_csv(reports);
  std::ofstream(root_of(c) / "table1.csv") << csv;
  json j;
  j["config"] = config_to_json(c);
  j["seeds"] = c.seeds;
  j["checkpoints"] = {{"model", file_hash(root_of(c) / "model.json")}};
  j["faithfulness"] = json::array();
  for (const auto& r : reports) {
    j["faithfulness"].push_back(report_to_json(r));
    print_report(r);
  }
  std::ofstream(root_of(c) / "comparison.json") << j.dump(2) << '\n';
  std::cout << "wrote " << (root_of(c) / "table1.csv").string() << '\n';
}

std::string describe_ids(const AttributionSet& set) {
  std::vector<std::size_t> ids;
  for (const auto& r : set.results) ids.push_back(r.example_id);
  std::sort(ids.begin(), ids.end());
  std::ostringstream out;
  for (std::size_t i = 0; i < ids.size();) {
    std::size_t j = i;
    while (j + 1 < ids.size() && ids[j + 1] == ids[j] + 1) ++j;
    if (i) out << ',';
    out << ids[i];
    if (j > i) out << ".." << ids[j];
    i = j + 1;
  }
  return out.str();
}

void cmd_render(const PipelineConfig& c, const std::string& method, const std::vector<std::size_t>& ids) {
  const AttributionSet set = load_set(c, method);
  std::optional<std::vector<StarGraphExample>> test;
  const fs::path dir = root_of(c) / "svg";
  fs::create_directories(dir);
  for (std::size_t id : ids) {
    auto it = std::find_if(set.results.begin(), set.results.end(),
                           [&](const AttributionResult& r) { return r.example_id == id; });
    if (it == set.results.end()) {
      throw ConfigError("unknown example id " + std::to_string(id) + "; available ids: " + describe_ids(set));
    }
    StarGraphExample example;
    if (it->example) {
      example = *it->example;
    } else {
      if (!test) test = load_split(c, "test");
      example = test->at(id);
    }
    const fs::path path = dir / (method + "_example" + std::to_string(id) + ".svg");
    std::ofstream(path) << render_star_svg(example, *it, method + ", test example " + std::to_string(id));
    std::cout << "wrote " << path.string() << '\n';
  }
}

void cmd_pipeline(const PipelineConfig& c) {
  const PipelineResult result = run_pipeline(c, &std::cout);
  std::cout << "model test accuracy " << result.model_test_accuracy << "%\n";
  for (const auto& r : result.reports) print_report(r);
  if (result.stability) {
    std::cout << "stability: Fleiss kappa " << result.stability->kappa << " over " << c.seeds.size()
              << " seeds\n";
  } else {
    std::cout << "stability: omitted, needs at least two seeds\n";
  }
  for (const auto& p : result.degradation) {
    std::cout << "degradation keep " << p.fraction << ": " << p.mean_accuracy << " +- " << p.stdev_accuracy << '\n';
  }
  std::cout << "report: " << (root_of(c) / "report.json").string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GraphMask: amortized edge masking for interpreting graph neural networks"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--output-dir", o.output_dir, "Run directory (default: $GRAPHMASK_OUTPUT_ROOT)");
  app.add_option("--num-colors", o.num_colors, "Number of edge colours");
  app.add_option("--beta", o.beta, "Divergence tolerance");
  app.add_option("--temperature", o.temperature, "Hard Concrete temperature");
  app.add_option("--model-seed", o.model_seed, "Toy model initialisation seed");

  auto* generate = app.add_subcommand("generate", "Generate the star-graph dataset");
  generate->add_option("--seed", o.data_seed, "Dataset seed");
  generate->add_option("--count", o.count, "Total number of examples");

  app.add_subcommand("train-model", "Train the toy R-GCN");

  std::uint64_t gm_seed = 0;
  auto* train_gm = app.add_subcommand("train-graphmask", "Train the amortized gate classifier");
  train_gm->add_option("--seed", gm_seed, "Classifier seed");
  train_gm->add_option("--joint-epochs", o.joint_epochs, "Epochs after every layer is enabled");

  bool nonamortized = false;
  auto* explain_cmd = app.add_subcommand("explain", "Attribute the test split with GraphMask");
  explain_cmd->add_option("--seed", gm_seed, "Classifier seed");
  explain_cmd->add_flag("--nonamortized", nonamortized, "Optimise gates per example instead");

  std::string baseline_method;
  auto* baseline = app.add_subcommand("baseline", "Attribute the test split with a baseline method");
  baseline->add_option("--method", baseline_method, "Baseline method")
      ->required()
      ->check(CLI::IsMember({"erasure", "ig", "ib", "gnnexplainer"}));

  std::string method_list;
  auto* evaluate = app.add_subcommand("evaluate", "Score attribution files against the gold masks");
  evaluate->add_option("--methods", method_list, "Comma-separated methods (default: every file present)");
  auto* compare = app.add_subcommand("compare", "Write the method comparison table");
  compare->add_option("--methods", method_list, "Comma-separated methods (default: every file present)");

  std::string render_method = "graphmask";
  std::vector<std::size_t> render_ids;
  auto* render = app.add_subcommand("render", "Draw attributed examples as SVG");
  render->add_option("--method", render_method, "Attribution file to draw");
  render->add_option("--ids", render_ids, "Test example ids")->required()->delimiter(',');

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  pipeline->add_option("--seed", o.data_seed, "Dataset seed");
  pipeline->add_option("--count", o.count, "Total number of examples");
  pipeline->add_option("--methods", o.methods, "Comma-separated methods or 'all'");
  pipeline->add_option("--seeds", o.seeds, "GraphMask seeds, e.g. 0..4 or 0,2");
  pipeline->add_option("--joint-epochs", o.joint_epochs, "Epochs after every layer is enabled");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  std::string stage = "config";
  try {
    const PipelineConfig config = load_config(o);
    const auto methods = method_list.empty() ? std::vector<std::string>{} : parse_methods(method_list);
    CLI::App* chosen = app.get_subcommands().front();
    stage = chosen->get_name();
    if (chosen == generate) {
      cmd_generate(config);
    } else if (stage == "train-model") {
      cmd_train_model(config);
    } else if (chosen == train_gm) {
      cmd_train_graphmask(config, gm_seed);
    } else if (chosen == explain_cmd) {
      cmd_explain(config, gm_seed, nonamortized);
    } else if (chosen == baseline) {
      cmd_baseline(config, baseline_method);
    } else if (chosen == evaluate) {
      cmd_evaluate(config, methods);
    } else if (chosen == compare) {
      cmd_compare(config, methods);
    } else if (chosen == render) {
      cmd_render(config, render_method, render_ids);
    } else if (chosen == pipeline) {
      cmd_pipeline(config);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConstraintNotSatisfied& e) {
    std::cerr << "constraint not satisfied: " << e.what() << '\n';
    return kExitConstraint;
  } catch (const StageFailure& e) {
    std::cerr << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "stage '" << stage << "' failed: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
