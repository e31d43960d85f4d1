#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graphmask/attribution.hpp"
#include "graphmask/gnn.hpp"
#include "graphmask/graphs.hpp"
#include "json.hpp"

namespace graphmask {

/// Precision, recall and F1 in percent.
struct Faithfulness {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

/// Scores aligned decision arrays. Precision is 100 when nothing is
/// predicted. Throws std::invalid_argument when gold has no positive entry or
/// the arrays differ in length.
Faithfulness faithfulness(const std::vector<bool>& predicted, const std::vector<bool>& gold);

/// Micro average over every (example, layer, edge). Each example's gold edge
/// mask applies to every layer.
Faithfulness micro_faithfulness(const std::vector<AttributionResult>& results,
                                const std::vector<std::vector<bool>>& gold);
/// Mean of per-example scores over examples with at least one gold edge.
Faithfulness macro_faithfulness(const std::vector<AttributionResult>& results,
                                const std::vector<std::vector<bool>>& gold);

struct KappaResult {
  double kappa = 0.0;
  double observed_agreement = 0.0;
  double expected_agreement = 0.0;
  // Every decision falls in one category; kappa is reported as 1.
  bool degenerate = false;
};

/// Fleiss' kappa for binary decisions, indexed [rater][item].
KappaResult fleiss_kappa(const std::vector<std::vector<bool>>& decisions);

struct DegradationPoint {
  double fraction = 1.0;
  double mean_accuracy = 0.0;
  double stdev_accuracy = 0.0;
  std::vector<double> accuracies;
};

/// Keeps each retained gate with probability `fraction`; every other message
/// is replaced by `baselines[k]` ([d] per layer). Accuracy in percent against
/// `labels`, over `resamples` draws per fraction.
std::vector<DegradationPoint> degradation_curve(const RelationalGnn& model,
                                               const std::vector<GnnInput>& inputs,
                                               const std::vector<int>& labels,
                                               const std::vector<AttributionResult>& attributions,
                                               const std::vector<Tensor>& baselines,
                                               const std::vector<double>& fractions,
                                               std::size_t resamples = 5, std::uint64_t seed = 0);

/// Mean over examples of each layer's share of the example's total score,
/// in percent. Throws when an example's scores sum to zero.
std::vector<double> layer_attribution_mass(const std::vector<AttributionResult>& results);

/// Fraction of retained gates per layer over all examples.
std::vector<double> retained_fraction_per_layer(const std::vector<AttributionResult>& results);

struct FaithfulnessReport {
  std::string method;
  std::optional<double> threshold;
  Faithfulness micro;
  Faithfulness macro;
  double original_accuracy = 0.0;  // percent
  double masked_accuracy = 0.0;    // percent
  double accuracy_delta = 0.0;     // masked - original, percent points
  double mean_divergence = 0.0;
  std::size_t flagged = 0;
  std::vector<double> retained_fraction;  // per layer
};

/// Scores an attribution set against the examples' gold masks and labels.
/// Results are matched to examples by id.
FaithfulnessReport evaluate_attributions(const AttributionSet& set,
                                         const std::vector<StarGraphExample>& examples);

nlohmann::json report_to_json(const FaithfulnessReport& report);
/// Long format: header `method,metric,value`, one row per (method, metric).
std::string reports_to_csv(const std::vector<FaithfulnessReport>& reports);

}  // namespace graphmask
