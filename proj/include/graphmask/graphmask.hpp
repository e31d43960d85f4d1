#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphmask/attribution.hpp"
#include "graphmask/gnn.hpp"
#include "graphmask/hard_concrete.hpp"
#include "graphmask/optim.hpp"
#include "graphmask/tensor.hpp"

namespace graphmask {

/// Per-edge scalar readout ReLU(LN(q W1)) W2 + b2 over
/// q = [h_u^(k-1); h_v^(k-1); m_(u,v)^(k)], taken from a layer trace.
/// Parameters live under `prefix`: w1 [3d x hidden], ln_gain, ln_shift,
/// w2 [hidden x 1], b2 [1].
void add_edge_readout(ParameterStore& params, const std::string& prefix, std::size_t state_dim,
                      std::size_t hidden_dim, std::mt19937_64& rng);
/// Returns [E x 1].
Tensor edge_readout(const ParameterStore& params, const std::string& prefix,
                    const GnnLayerTrace& trace, const Graph& graph);

/// Amortized gate predictor plus the learned per-layer baselines.
///
/// For edge (u, v) at layer k the classifier reads
///   q = [h_u^(k-1); h_v^(k-1); m_(u,v)^(k)]
/// and predicts the Hard Concrete location
///   gamma = ReLU(LN(q W1)) W2 + b2.
/// Parameters: gate{k}.w1 [3d x hidden], gate{k}.ln_gain, gate{k}.ln_shift,
/// gate{k}.w2 [hidden x 1], gate{k}.b2 [1], baseline{k} [d].
class GateClassifier {
 public:
  GateClassifier(std::size_t num_layers, std::size_t state_dim, std::size_t hidden_dim,
                 std::uint64_t seed, HardConcrete hard_concrete = {});
  GateClassifier(ParameterStore parameters, HardConcrete hard_concrete = {});

  /// Classifier whose output weights are zero, so every gate starts open.
  static GateClassifier all_open(std::size_t num_layers, std::size_t state_dim,
                                 std::size_t hidden_dim, HardConcrete hard_concrete = {});

  std::size_t num_layers() const { return num_layers_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  const HardConcrete& hard_concrete() const { return hard_concrete_; }
  const ParameterStore& parameters() const { return params_; }
  ParameterStore& parameters() { return params_; }

  /// Locations gamma [E x 1] for every edge of `graph` at `layer`, computed
  /// from that layer's trace of the original run.
  Tensor gate_logits(std::size_t layer, const GnnLayerTrace& trace, const Graph& graph) const;
  const Tensor& baseline(std::size_t layer) const;

 private:
  void check_layer(std::size_t layer) const;
  std::size_t num_layers_ = 0;
  std::size_t state_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  HardConcrete hard_concrete_;
  ParameterStore params_;
};

enum class GateSampling {
  stochastic,   // one Hard Concrete sample per gate
  expectation,  // u fixed at 0.5
  hard,         // 1 iff prob_nonzero > 0.5
};

/// Result of re-running a model with gated messages.
struct MaskedRun {
  Tensor original_logits;  // [G x classes], no history
  Tensor masked_logits;    // [G x classes]
  // Per layer; undefined tensors for layers without gates.
  std::vector<Tensor> locations;  // [E x 1]
  std::vector<Tensor> gates;      // [E x 1], the z used in the masked pass
  // Per layer and edge. Layers without gates report probability 1 and keep
  // every edge.
  std::vector<std::vector<double>> probabilities;
  std::vector<std::vector<bool>> hard;
  Tensor divergence;  // [G x 1]
  std::size_t retained_count = 0;

  std::vector<int> original_predictions() const;
  std::vector<int> masked_predictions() const;
  std::vector<double> divergences() const;
};

/// Per-row KL(softmax(original) || softmax(masked)) as [G x 1]. The original
/// side carries no gradient.
Tensor divergence(const Tensor& original_logits, const Tensor& masked_logits);

/// Masked re-execution from explicit locations. `locations[k]` undefined
/// leaves layer k ungated; `baselines[k]` is the replacement, either one
/// vector [d] or one row per edge [E x d].
/// `rng` is required for stochastic sampling.
MaskedRun masked_forward(const RelationalGnn& model, const GnnInput& input,
                         const std::vector<Tensor>& locations, const std::vector<Tensor>& baselines,
                         const HardConcrete& hard_concrete, GateSampling sampling,
                         std::mt19937_64* rng = nullptr);

/// Gates from the classifier, computed on the original run for every layer
/// before the masked re-execution. `enabled` empty means all layers.
MaskedRun masked_forward(const RelationalGnn& model, const GateClassifier& classifier,
                         const GnnInput& input, GateSampling sampling,
                         std::mt19937_64* rng = nullptr, const std::vector<bool>& enabled = {});

/// Sum over gated layers and edges of prob_nonzero(gamma).
Tensor expected_l0_penalty(const HardConcrete& hard_concrete, const std::vector<Tensor>& locations);

/// Dual variables for divergence constraints: gradient ascent with RMSProp,
/// projected onto lambda >= 0 after every step. Holds one multiplier per
/// constraint, all starting at `initial`.
class LagrangeMultiplier {
 public:
  explicit LagrangeMultiplier(double learning_rate = 1e-2, double initial = 0.0,
                              std::size_t count = 1);
  LagrangeMultiplier(const LagrangeMultiplier&) = delete;
  LagrangeMultiplier& operator=(const LagrangeMultiplier&) = delete;

  const Tensor& tensor() const { return lambda_; }
  /// First multiplier.
  double value() const { return lambda_.data()[0]; }
  /// sum_i lambda_i * (constraint_i - beta); `constraint` is [count x 1] or a
  /// scalar when count is 1.
  Tensor lagrangian_term(const Tensor& constraint, double beta) const;
  void step();
  void zero_grad() { lambda_.zero_grad(); }

 private:
  Tensor lambda_;
  Optimizer optimizer_;
};

struct GraphMaskConfig {
  double beta = 0.03;
  std::size_t epochs_per_stage = 1;
  std::size_t joint_epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double lambda_learning_rate = 1e-2;
  std::size_t hidden_dim = 0;  // 0 means the model's state size
  std::uint64_t seed = 0;
  HardConcrete hard_concrete{};
};

struct EpochReport {
  std::size_t epoch = 0;
  std::size_t enabled_layers = 0;
  double loss = 0.0;
  double penalty = 0.0;  // expected L0 per enabled gate
  double train_divergence = 0.0;
  double lambda = 0.0;
  double validation_divergence = 0.0;
  double validation_retained_fraction = 1.0;
  bool feasible = false;
};

struct MaskEvaluation {
  double mean_divergence = 0.0;
  double retained_fraction = 1.0;
  std::size_t retained = 0;
  std::size_t total = 0;
  std::vector<double> divergences;
  std::vector<int> original_predictions;
  std::vector<int> masked_predictions;
};

/// Hard-mode evaluation of a classifier over single-graph inputs.
MaskEvaluation evaluate_classifier(const RelationalGnn& model, const GateClassifier& classifier,
                                   const std::vector<GnnInput>& inputs,
                                   const std::vector<bool>& enabled = {},
                                   std::size_t batch_size = 256);

struct GraphMaskTrainingResult {
  GateClassifier classifier;
  std::size_t best_epoch = 0;
  MaskEvaluation validation;
  std::vector<EpochReport> history;
};

class ConstraintNotSatisfied : public std::runtime_error {
 public:
  ConstraintNotSatisfied(double best_divergence, double beta);
  double best_divergence() const { return best_divergence_; }

 private:
  double best_divergence_;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Min-max training of the gate classifier on a frozen model. Layers get
/// gates top-down, `epochs_per_stage` epochs apart, then all layers train
/// jointly for `joint_epochs`. Returns the snapshot with the lowest validation
/// retained fraction among epochs that have every layer gated and a mean
/// validation divergence <= beta (ties go to the later epoch).
/// Throws ConstraintNotSatisfied when no epoch qualifies.
GraphMaskTrainingResult train_graphmask(const RelationalGnn& model,
                                        const std::vector<GnnInput>& train,
                                        const std::vector<GnnInput>& validation,
                                        const GraphMaskConfig& config,
                                        const EpochCallback& on_epoch = {});

struct NonAmortizedConfig {
  double beta = 0.03;
  std::size_t steps = 300;
  double learning_rate = 0.1;
  double lambda_learning_rate = 0.1;
  std::size_t check_every = 10;
  std::uint64_t seed = 0;
  HardConcrete hard_concrete{};
};

struct NonAmortizedResult {
  std::vector<Tensor> locations;  // [E x 1] per layer
  std::vector<Tensor> baselines;  // [d] per layer
  MaskedRun run;                  // hard-mode run of the returned gates
  bool satisfied = false;
};

/// Free location per (layer, edge) and a baseline per layer, optimised for a
/// single graph with the same objective. Keeps the sparsest hard-mode state
/// seen within the tolerance; `satisfied` is false when none was.
NonAmortizedResult train_nonamortized(const RelationalGnn& model, const GnnInput& input,
                                      const NonAmortizedConfig& config);

/// Independent non-amortized runs for many single-graph inputs, optimised
/// together in one batch. Every graph has its own locations, baselines and
/// multiplier, and the optimisers act elementwise, so the runs do not interact.
std::vector<NonAmortizedResult> train_nonamortized(const RelationalGnn& model,
                                                   const std::vector<GnnInput>& inputs,
                                                   const NonAmortizedConfig& config);

/// Builds an attribution record from a single-graph masked run.
AttributionResult attribution_from_run(const MaskedRun& run, std::size_t example_id, double beta);

/// Hard-mode attribution of one single-graph input.
AttributionResult explain(const GateClassifier& classifier, const RelationalGnn& model,
                          const GnnInput& input, std::size_t example_id = 0, double beta = 0.03);

}  // namespace graphmask
