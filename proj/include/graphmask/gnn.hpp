#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "graphmask/graphs.hpp"
#include "graphmask/optim.hpp"
#include "graphmask/tensor.hpp"

namespace graphmask {

/// A batch of graphs merged into one disjoint union, plus everything the
/// model reads besides the edges.
struct GnnInput {
  Graph graph;
  // Raw feature rows; vertex v reads row feature_row[v].
  Tensor features;
  std::vector<std::size_t> feature_row;
  // One prediction per readout vertex (one per graph in a batch).
  std::vector<std::size_t> readout_vertices;
  // Edges of graph g occupy [edge_offset[g], edge_offset[g + 1]).
  std::vector<std::size_t> edge_offset;
  std::vector<int> labels;

  std::size_t num_graphs() const { return readout_vertices.size(); }
  std::size_t num_edges() const { return graph.num_edges(); }
  std::size_t edges_in(std::size_t g) const { return edge_offset[g + 1] - edge_offset[g]; }
};

/// Star examples as model input: every vertex of an example reads the same
/// feature row, the concatenated one-hot encodings of the two query colours.
GnnInput make_star_input(std::span<const StarGraphExample> examples, int num_colors);
GnnInput make_star_input(const StarGraphExample& example, int num_colors);

/// Batches inputs into one; graph g of the result is parts[g].
GnnInput merge_inputs(std::span<const GnnInput> parts);

struct GnnConfig {
  std::size_t input_dim = 12;
  std::size_t state_dim = 50;
  std::size_t hidden_dim = 100;
  std::size_t num_relations = 6;
  std::size_t num_layers = 1;
  bool shared_layer_weights = false;
  std::size_t num_classes = 2;
};

/// Toy-model configuration for a given colour count.
GnnConfig toy_model_config(int num_colors);

/// Relational GCN: an MLP encoder produces h^(0); layer k sends
/// m_e = ReLU(W_{r_e} h_u + b_{r_e}) along every edge e = (u, v, r) and sums
/// incoming messages per vertex; an MLP reads the final state of each
/// readout vertex out into class logits.
class RelationalGnn {
 public:
  RelationalGnn(GnnConfig config, std::uint64_t seed);
  RelationalGnn(GnnConfig config, ParameterStore parameters);

  const GnnConfig& config() const { return config_; }
  const ParameterStore& parameters() const { return params_; }
  ParameterStore& parameters() { return params_; }

  /// Value copy whose parameters record no gradient.
  RelationalGnn frozen_copy() const;

  Tensor encode(const GnnInput& input) const;
  Tensor messages(std::size_t layer, const Tensor& states, const Graph& graph) const;
  Tensor aggregate(const Tensor& messages, const Graph& graph) const;
  Tensor readout(const Tensor& states, const GnnInput& input) const;

 private:
  std::string layer_prefix(std::size_t layer) const;
  GnnConfig config_;
  ParameterStore params_;
};

/// Receives the messages about to be aggregated at `layer` and returns the
/// messages to aggregate instead (same shape).
using MessageInterceptor = std::function<Tensor(std::size_t layer, const Tensor& messages)>;

struct GnnLayerTrace {
  std::size_t layer = 0;
  Tensor states_in;   // h^(k-1), [V x d]
  Tensor messages;    // aggregated messages, [E x d]
  Tensor states_out;  // h^(k), [V x d]
};

struct ForwardResult {
  Tensor logits;  // [G x classes]
  std::vector<GnnLayerTrace> traces;
};

ForwardResult gnn_forward(const RelationalGnn& model, const GnnInput& input,
                          const MessageInterceptor& interceptor = {});

/// m~ = z * m + (1 - z) * replacement, with z of shape [E x 1].
/// An undefined replacement means the zero vector.
struct LayerGate {
  Tensor gate;
  Tensor replacement;
};

Tensor apply_gate(const Tensor& messages, const LayerGate& gate);

/// Forward pass with `gates[k]` applied to layer k (nullopt passes through).
ForwardResult gated_forward(const RelationalGnn& model, const GnnInput& input,
                            const std::vector<std::optional<LayerGate>>& gates);

/// Logits with fixed gate values [layer][edge]; `replacements[k]` is [d],
/// [E x d] or undefined (zero). Records no gradient.
Tensor gated_logits(const RelationalGnn& model, const GnnInput& input,
                    const std::vector<std::vector<double>>& gate_values,
                    const std::vector<Tensor>& replacements);

std::vector<int> argmax_rows(const Tensor& logits);
/// Mean cross-entropy of logits against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

std::vector<int> predict(const RelationalGnn& model, std::span<const StarGraphExample> examples,
                         int num_colors, std::size_t batch_size = 256);
double accuracy(std::span<const int> predictions, std::span<const StarGraphExample> examples);

struct ModelTrainingConfig {
  std::uint64_t seed = 0;
  std::size_t max_epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double target_accuracy = 0.995;
};

struct ModelTrainingResult {
  RelationalGnn model;
  double validation_accuracy = 0.0;
  std::size_t epochs = 0;
  std::vector<double> epoch_losses;
};

class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam on cross-entropy; stops early at 100% validation accuracy and keeps
/// the best validation snapshot. Throws TrainingFailure when the best
/// validation accuracy stays below target_accuracy.
ModelTrainingResult train_toy_model(const std::vector<StarGraphExample>& train,
                                    const std::vector<StarGraphExample>& validation,
                                    int num_colors, const ModelTrainingConfig& config);

}  // namespace graphmask
