#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "graphmask/attribution.hpp"
#include "graphmask/gnn.hpp"
#include "graphmask/graphmask.hpp"
#include "graphmask/optim.hpp"

namespace graphmask {

// ---------------------------------------------------------------- erasure

inline constexpr std::size_t kMaxErasureGates = 20;

/// Exhaustive search for the smallest set of (layer, edge) messages that,
/// with every other message set to zero, keeps the original argmax. Sets are
/// tried by size, then in lexicographic order of flattened gate index
/// (layer-major). Throws std::invalid_argument above `max_gates` gates.
AttributionResult erasure_search(const RelationalGnn& model, const GnnInput& input,
                                 std::size_t example_id = 0,
                                 std::size_t max_gates = kMaxErasureGates);

// ---------------------------------------------------------------- integrated gradients

struct IntegratedGradients {
  std::vector<std::vector<double>> raw;  // [layer][edge], unnormalised
  int target = 0;                        // originally predicted class
  double full_logit = 0.0;               // target logit with every message
  double empty_logit = 0.0;              // target logit with every message zeroed
};

/// Path integral of d(target logit)/d(z_e) from z = 0 to z = 1, where z_e
/// scales the message of gate e and every z moves along the same path.
/// Midpoint rule with `steps` points.
IntegratedGradients integrated_gradients_raw(const RelationalGnn& model, const GnnInput& input,
                                             std::size_t steps = 50);

/// Attribution scores |raw| / max |raw| per example.
AttributionResult integrated_gradients(const RelationalGnn& model, const GnnInput& input,
                                       std::size_t steps = 50, std::size_t example_id = 0);

// ---------------------------------------------------------------- information bottleneck

struct MessageStatistics {
  std::vector<Tensor> mean;      // [d] per layer
  std::vector<Tensor> variance;  // [d] per layer, floored
  std::size_t floored = 0;       // dimensions raised to the floor
};

/// Per-layer, per-dimension mean and variance of every message the model
/// sends on `inputs`. Variances below `variance_floor` are raised to it with
/// a warning on stderr.
MessageStatistics message_statistics(const RelationalGnn& model, const std::vector<GnnInput>& inputs,
                                     double variance_floor = 1e-6);

inline constexpr double kMaxKeepProbability = 1.0 - 1e-6;

/// KL[N(xi m + (1 - xi) mu, (1 - xi)^2 var) || N(mu, var)] summed over
/// dimensions, per edge ([E x 1]). xi is clamped to kMaxKeepProbability.
Tensor bottleneck_kl(const Tensor& keep, const Tensor& messages, const Tensor& mean,
                     const Tensor& variance);

/// Amortized keep-probability readout: xi = sigmoid(edge readout of q),
/// parameters `ib{k}.*`; noise statistics are stored as `stats{k}.mean` and
/// `stats{k}.variance` in the checkpoint.
class InformationBottleneck {
 public:
  InformationBottleneck(std::size_t num_layers, std::size_t state_dim, std::size_t hidden_dim,
                        std::uint64_t seed, MessageStatistics statistics);
  explicit InformationBottleneck(const ParameterStore& checkpoint);

  std::size_t num_layers() const { return statistics_.mean.size(); }
  const MessageStatistics& statistics() const { return statistics_; }
  const ParameterStore& parameters() const { return params_; }
  ParameterStore& parameters() { return params_; }
  ParameterStore checkpoint() const;

  /// xi per edge, [E x 1].
  Tensor keep_probability(std::size_t layer, const GnnLayerTrace& trace, const Graph& graph) const;

 private:
  MessageStatistics statistics_;
  ParameterStore params_;
};

struct BottleneckConfig {
  double beta = 0.1;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  std::size_t hidden_dim = 0;  // 0 means the model's state size
  double variance_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct BottleneckEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double divergence = 0.0;
  double kl = 0.0;
};

/// Trains the readout on task divergence plus beta times the mean per-edge
/// KL, with m~ = xi m + (1 - xi) eps and eps ~ N(mu, var).
InformationBottleneck train_information_bottleneck(
    const RelationalGnn& model, const std::vector<GnnInput>& train, const BottleneckConfig& config,
    const std::function<void(const BottleneckEpoch&)>& on_epoch = {});

/// Noise-free scores xi; binarised masks replace messages with the mean.
AttributionResult information_bottleneck(const InformationBottleneck& bottleneck,
                                         const RelationalGnn& model, const GnnInput& input,
                                         std::size_t example_id = 0);

// ---------------------------------------------------------------- GNNExplainer-style

struct GnnExplainerConfig {
  double sparsity_weight = 0.05;
  double entropy_weight = 0.1;
  std::size_t steps = 200;
  double learning_rate = 0.1;
  double initial_logit = 0.0;
};

/// Per-example soft masks sigma(w), m~ = sigma(w) m, minimising the
/// cross-entropy of the original prediction plus sparsity and mask-entropy
/// terms. Examples are optimised together but independently; result i gets
/// id first_id + i.
std::vector<AttributionResult> gnnexplainer(const RelationalGnn& model,
                                            const std::vector<GnnInput>& inputs,
                                            const GnnExplainerConfig& config,
                                            std::size_t first_id = 0);

nlohmann::json gnnexplainer_metadata(const GnnExplainerConfig& config);

// ---------------------------------------------------------------- thresholds

/// {0.1, 0.2, ..., 0.9}.
std::vector<double> threshold_grid();

/// Grid threshold with the highest micro F1 of (score > t) against gold;
/// ties keep the smallest t.
double select_threshold(const std::vector<AttributionResult>& results,
                        const std::vector<std::vector<bool>>& gold);

/// Sets retained = (score > t) and recomputes masked predictions and
/// divergences with dropped messages replaced by `replacements[k]` ([d] per
/// layer, undefined for zero).
void apply_threshold(const RelationalGnn& model, const std::vector<GnnInput>& inputs,
                     std::vector<AttributionResult>& results, double threshold,
                     const std::vector<Tensor>& replacements, double beta = 0.03);

}  // namespace graphmask
