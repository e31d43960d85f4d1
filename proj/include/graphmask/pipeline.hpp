#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphmask/attribution.hpp"
#include "graphmask/baselines.hpp"
#include "graphmask/eval.hpp"
#include "graphmask/gnn.hpp"
#include "graphmask/graphmask.hpp"
#include "graphmask/graphs.hpp"
#include "json.hpp"

namespace graphmask {

/// Method tags used in attribution files and reports.
inline const std::vector<std::string> kAllMethods = {"graphmask", "nonamortized", "erasure",
                                                     "ig",        "ib",           "gnnexplainer"};

struct PipelineConfig {
  GeneratorConfig data;
  ModelTrainingConfig model;
  GraphMaskConfig graphmask;
  NonAmortizedConfig nonamortized;
  BottleneckConfig bottleneck;
  GnnExplainerConfig gnnexplainer;
  std::size_t ig_steps = 50;
  std::vector<std::string> methods = kAllMethods;
  // GraphMask training seeds; the first one produces the reported attributions.
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<double> degradation_fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t degradation_resamples = 5;
  std::size_t render_count = 4;
  // Empty: nothing is written.
  std::string output_dir;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, const std::string& cause)
      : std::runtime_error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

nlohmann::json config_to_json(const PipelineConfig& config);
/// Overlays the keys present in `j` onto `base`. Throws ConfigError on
/// unknown keys, wrong types or invalid values.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
/// Parses a comma-separated method list; "all" selects every method.
std::vector<std::string> parse_methods(const std::string& list);
/// Parses "0..4", "0,2,7" or a single number.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/// Git blob hash (SHA-1 of "blob <size>\0" + bytes), lowercase hex.
std::string content_hash(const std::string& bytes);
/// Writes the checkpoint and returns its content hash.
std::string write_checkpoint(const ParameterStore& params, const std::string& path);

std::vector<GnnInput> star_inputs(const std::vector<StarGraphExample>& examples, int num_colors);
std::vector<std::vector<bool>> gold_masks(const std::vector<StarGraphExample>& examples);

// Stage helpers. Every returned set carries the explained examples and ids
// matching positions in `examples` / `test`.
AttributionSet explain_graphmask(const RelationalGnn& model, const GateClassifier& classifier,
                                 const std::vector<StarGraphExample>& examples, int num_colors,
                                 double beta);
AttributionSet explain_nonamortized(const RelationalGnn& model,
                                    const std::vector<StarGraphExample>& examples, int num_colors,
                                    const NonAmortizedConfig& config);
AttributionSet run_erasure(const RelationalGnn& model, const std::vector<StarGraphExample>& examples,
                           int num_colors);
/// Soft methods pick their threshold on `validation` and report on `test`.
AttributionSet run_integrated_gradients(const RelationalGnn& model,
                                        const std::vector<StarGraphExample>& validation,
                                        const std::vector<StarGraphExample>& test, int num_colors,
                                        std::size_t steps, double beta);
AttributionSet run_information_bottleneck(const RelationalGnn& model,
                                          const InformationBottleneck& bottleneck,
                                          const std::vector<StarGraphExample>& validation,
                                          const std::vector<StarGraphExample>& test, int num_colors,
                                          double beta);
AttributionSet run_gnnexplainer(const RelationalGnn& model,
                                const std::vector<StarGraphExample>& validation,
                                const std::vector<StarGraphExample>& test, int num_colors,
                                const GnnExplainerConfig& config, double beta);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineResult {
  Dataset dataset;
  int num_colors = 0;
  double model_validation_accuracy = 0.0;  // percent
  double model_test_accuracy = 0.0;        // percent
  std::size_t model_epochs = 0;
  std::map<std::string, AttributionSet> attributions;
  std::vector<FaithfulnessReport> reports;
  // Set when at least two seeds ran.
  std::optional<KappaResult> stability;
  std::vector<std::vector<bool>> seed_decisions;  // [seed][gate]
  std::vector<DegradationPoint> degradation;
  std::vector<StageTiming> timings;
  nlohmann::json report;

  const FaithfulnessReport* report_for(const std::string& method) const;
  double seconds(const std::string& stage) const;
};

/// generate -> train-model -> train-graphmask (every seed) -> explain ->
/// baselines -> evaluate -> stability -> degradation -> render. Progress goes
/// to `log` when given. Stage errors are rethrown as StageFailure, except
/// ConstraintNotSatisfied which propagates unchanged.
PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log = nullptr);

}  // namespace graphmask
