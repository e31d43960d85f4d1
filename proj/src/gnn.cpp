#include "graphmask/gnn.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "graphmask/init.hpp"

namespace graphmask {

GnnInput make_star_input(std::span<const StarGraphExample> examples, int num_colors) {
  GnnInput input;
  const auto c = static_cast<std::size_t>(num_colors);
  std::vector<double> features(examples.size() * 2 * c, 0.0);
  std::vector<Graph> graphs;
  graphs.reserve(examples.size());
  input.edge_offset.push_back(0);
  std::size_t vertex_base = 0;
  for (std::size_t g = 0; g < examples.size(); ++g) {
    const StarGraphExample& ex = examples[g];
    const auto [x, y] = ex.query;
    if (x < 0 || y < 0 || x >= num_colors || y >= num_colors) {
      throw std::invalid_argument("query colour outside the model's colour range");
    }
    for (int col : ex.leaf_colors) {
      if (col < 0 || col >= num_colors) {
        throw std::invalid_argument("edge colour outside the model's colour range");
      }
    }
    features[g * 2 * c + static_cast<std::size_t>(x)] = 1.0;
    features[g * 2 * c + c + static_cast<std::size_t>(y)] = 1.0;
    graphs.push_back(ex.graph());
    for (std::size_t v = 0; v < graphs.back().num_vertices; ++v) input.feature_row.push_back(g);
    input.readout_vertices.push_back(vertex_base);
    vertex_base += graphs.back().num_vertices;
    input.edge_offset.push_back(input.edge_offset.back() + graphs.back().num_edges());
    input.labels.push_back(ex.label ? 1 : 0);
  }
  std::vector<const Graph*> parts;
  for (const auto& g : graphs) parts.push_back(&g);
  input.graph = disjoint_union(parts);
  input.graph.layer_active.clear();
  input.features = Tensor::from({examples.size(), 2 * c}, std::move(features));
  return input;
}

GnnInput make_star_input(const StarGraphExample& example, int num_colors) {
  return make_star_input(std::span<const StarGraphExample>(&example, 1), num_colors);
}

GnnInput merge_inputs(std::span<const GnnInput> parts) {
  if (parts.empty()) throw std::invalid_argument("merge_inputs needs at least one input");
  GnnInput out;
  std::vector<const Graph*> graphs;
  std::vector<Tensor> features;
  std::size_t vertex_base = 0;
  std::size_t feature_base = 0;
  out.edge_offset.push_back(0);
  for (const GnnInput& part : parts) {
    graphs.push_back(&part.graph);
    features.push_back(part.features);
    for (std::size_t row : part.feature_row) out.feature_row.push_back(row + feature_base);
    for (std::size_t v : part.readout_vertices) out.readout_vertices.push_back(v + vertex_base);
    const std::size_t edge_base = out.edge_offset.back();
    for (std::size_t g = 1; g < part.edge_offset.size(); ++g) {
      out.edge_offset.push_back(edge_base + part.edge_offset[g]);
    }
    out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
    vertex_base += part.graph.num_vertices;
    feature_base += part.features.rows();
  }
  out.graph = disjoint_union(graphs);
  bool any_layer_mask = false;
  for (const Graph* g : graphs) any_layer_mask = any_layer_mask || !g->layer_active.empty();
  if (!any_layer_mask) out.graph.layer_active.clear();
  out.features = features.size() == 1 ? features[0] : concat(features, 0);
  return out;
}

GnnConfig toy_model_config(int num_colors) {
  GnnConfig config;
  config.input_dim = 2 * static_cast<std::size_t>(num_colors);
  config.num_relations = static_cast<std::size_t>(num_colors);
  config.num_layers = 1;
  return config;
}

RelationalGnn::RelationalGnn(GnnConfig config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.state_dim;
  const std::size_t h = config_.hidden_dim;
  params_.add("encoder.w1", glorot_uniform(config_.input_dim, h, rng));
  params_.add("encoder.b1", zero_bias(h));
  params_.add("encoder.w2", glorot_uniform(h, d, rng));
  params_.add("encoder.b2", zero_bias(d));
  const std::size_t distinct_layers = config_.shared_layer_weights ? 1 : config_.num_layers;
  for (std::size_t k = 0; k < distinct_layers; ++k) {
    for (std::size_t r = 0; r < config_.num_relations; ++r) {
      const std::string prefix = layer_prefix(k) + ".rel" + std::to_string(r);
      params_.add(prefix + ".weight", glorot_uniform(d, d, rng));
      params_.add(prefix + ".bias", zero_bias(d));
    }
  }
  params_.add("readout.w1", glorot_uniform(d, h, rng));
  params_.add("readout.b1", zero_bias(h));
  params_.add("readout.w2", glorot_uniform(h, config_.num_classes, rng));
  params_.add("readout.b2", zero_bias(config_.num_classes));
}

RelationalGnn::RelationalGnn(GnnConfig config, ParameterStore parameters) : config_(config) {
  RelationalGnn reference(config_, 0);
  params_ = reference.params_;
  params_.load(parameters);
}

RelationalGnn RelationalGnn::frozen_copy() const {
  RelationalGnn copy = *this;
  copy.params_ = params_.clone(false);
  return copy;
}

std::string RelationalGnn::layer_prefix(std::size_t layer) const {
  return "layer" + std::to_string(config_.shared_layer_weights ? 0 : layer);
}

Tensor RelationalGnn::encode(const GnnInput& input) const {
  if (input.feature_row.size() != input.graph.num_vertices) {
    throw ShapeError("encode", {Shape{input.feature_row.size()}, Shape{input.graph.num_vertices}},
                     "one feature row per vertex required");
  }
  if (input.features.cols() != config_.input_dim) {
    throw ShapeError("encode", {input.features.shape(), Shape{config_.input_dim}},
                     "feature width differs from model input dimension");
  }
  Tensor hidden = relu(add(matmul(input.features, params_.get("encoder.w1")),
                           params_.get("encoder.b1")));
  Tensor rows = add(matmul(hidden, params_.get("encoder.w2")), params_.get("encoder.b2"));
  return gather_rows(rows, input.feature_row);
}

Tensor RelationalGnn::messages(std::size_t layer, const Tensor& states, const Graph& graph) const {
  const std::size_t d = config_.state_dim;
  if (states.rows() != graph.num_vertices || states.cols() != d) {
    throw ShapeError("messages", {states.shape(), Shape{graph.num_vertices, d}},
                     "vertex states do not match graph");
  }
  const std::size_t num_edges = graph.num_edges();
  if (num_edges == 0) return Tensor::zeros({0, d});

  // Group edges by relation, transform each group with its own weights, then
  // restore edge order with one gather.
  std::vector<std::vector<std::size_t>> sources(config_.num_relations);
  std::vector<std::vector<std::size_t>> members(config_.num_relations);
  for (std::size_t e = 0; e < num_edges; ++e) {
    const Edge& edge = graph.edges[e];
    if (edge.relation >= config_.num_relations) {
      throw std::invalid_argument("edge relation " + std::to_string(edge.relation) +
                                  " outside model's " + std::to_string(config_.num_relations) +
                                  " relations");
    }
    sources[edge.relation].push_back(edge.source);
    members[edge.relation].push_back(e);
  }
  std::vector<Tensor> blocks;
  std::vector<std::size_t> position(num_edges);
  std::size_t offset = 0;
  const std::string prefix = layer_prefix(layer);
  for (std::size_t r = 0; r < config_.num_relations; ++r) {
    if (members[r].empty()) continue;
    const std::string name = prefix + ".rel" + std::to_string(r);
    Tensor x = gather_rows(states, sources[r]);
    blocks.push_back(add(matmul(x, params_.get(name + ".weight")), params_.get(name + ".bias")));
    for (std::size_t e : members[r]) position[e] = offset++;
  }
  Tensor grouped = blocks.size() == 1 ? blocks[0] : concat(blocks, 0);
  Tensor out = gather_rows(relu(grouped), position);
  if (!graph.layer_active.empty()) {
    std::vector<double> on(num_edges);
    for (std::size_t e = 0; e < num_edges; ++e) on[e] = graph.active(layer, e) ? 1.0 : 0.0;
    out = mul(out, Tensor::from({num_edges, 1}, std::move(on)));
  }
  return out;
}

Tensor RelationalGnn::aggregate(const Tensor& messages, const Graph& graph) const {
  if (messages.rows() != graph.num_edges()) {
    throw ShapeError("aggregate", {messages.shape(), Shape{graph.num_edges()}},
                     "one message per edge required");
  }
  if (graph.num_edges() == 0) return Tensor::zeros({graph.num_vertices, config_.state_dim});
  std::vector<std::size_t> targets(graph.num_edges());
  for (std::size_t e = 0; e < targets.size(); ++e) targets[e] = graph.edges[e].target;
  return segment_sum(messages, targets, graph.num_vertices);
}

Tensor RelationalGnn::readout(const Tensor& states, const GnnInput& input) const {
  Tensor x = gather_rows(states, input.readout_vertices);
  Tensor hidden = relu(add(matmul(x, params_.get("readout.w1")), params_.get("readout.b1")));
  return add(matmul(hidden, params_.get("readout.w2")), params_.get("readout.b2"));
}

ForwardResult gnn_forward(const RelationalGnn& model, const GnnInput& input,
                          const MessageInterceptor& interceptor) {
  input.graph.validate();
  ForwardResult result;
  Tensor states = model.encode(input);
  for (std::size_t k = 0; k < model.config().num_layers; ++k) {
    Tensor messages = model.messages(k, states, input.graph);
    if (interceptor) {
      Tensor replaced = interceptor(k, messages);
      if (replaced.shape() != messages.shape()) {
        throw ShapeError("message interceptor", {messages.shape(), replaced.shape()});
      }
      messages = std::move(replaced);
    }
    Tensor next = model.aggregate(messages, input.graph);
    result.traces.push_back({k, states, messages, next});
    states = std::move(next);
  }
  result.logits = model.readout(states, input);
  return result;
}

Tensor apply_gate(const Tensor& messages, const LayerGate& gate) {
  if (gate.gate.rows() != messages.rows()) {
    throw ShapeError("apply_gate", {messages.shape(), gate.gate.shape()}, "one gate per edge");
  }
  Tensor kept = mul(messages, gate.gate);
  if (!gate.replacement.defined()) return kept;
  Tensor closed = add_scalar(neg(gate.gate), 1.0);
  return add(kept, mul(closed, gate.replacement));
}

ForwardResult gated_forward(const RelationalGnn& model, const GnnInput& input,
                            const std::vector<std::optional<LayerGate>>& gates) {
  return gnn_forward(model, input, [&gates](std::size_t layer, const Tensor& messages) {
    if (layer < gates.size() && gates[layer]) return apply_gate(messages, *gates[layer]);
    return messages;
  });
}

Tensor gated_logits(const RelationalGnn& model, const GnnInput& input,
                    const std::vector<std::vector<double>>& gate_values,
                    const std::vector<Tensor>& replacements) {
  const std::size_t layers = model.config().num_layers;
  if (gate_values.size() != layers || replacements.size() != layers) {
    throw std::invalid_argument("gated_logits needs one gate row and replacement per layer");
  }
  NoGradGuard no_grad;
  std::vector<std::optional<LayerGate>> gates(layers);
  for (std::size_t k = 0; k < layers; ++k) {
    if (gate_values[k].size() != input.num_edges()) {
      throw ShapeError("gated_logits", {Shape{gate_values[k].size()}, Shape{input.num_edges()}},
                       "one gate value per edge");
    }
    gates[k] = LayerGate{Tensor::from({input.num_edges(), 1}, gate_values[k]), replacements[k]};
  }
  return gated_forward(model, input, gates).logits;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  std::vector<int> out(rows);
  const auto v = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto* row = v.data() + r * cols;
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  if (labels.size() != rows) throw ShapeError("cross_entropy", {logits.shape(), Shape{labels.size()}});
  std::vector<double> pick(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    pick[r * cols + static_cast<std::size_t>(labels[r])] = -1.0 / static_cast<double>(rows);
  }
  return sum(mul(log_softmax(logits), Tensor::from({rows, cols}, std::move(pick))));
}

std::vector<int> predict(const RelationalGnn& model, std::span<const StarGraphExample> examples,
                         int num_colors, std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<int> out;
  out.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, examples.size() - start);
    const GnnInput input = make_star_input(examples.subspan(start, n), num_colors);
    const auto preds = argmax_rows(gnn_forward(model, input).logits);
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

double accuracy(std::span<const int> predictions, std::span<const StarGraphExample> examples) {
  if (predictions.size() != examples.size() || examples.empty()) {
    throw std::invalid_argument("accuracy needs one prediction per example");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    correct += predictions[i] == (examples[i].label ? 1 : 0) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

ModelTrainingResult train_toy_model(const std::vector<StarGraphExample>& train,
                                    const std::vector<StarGraphExample>& validation,
                                    int num_colors, const ModelTrainingConfig& config) {
  if (train.empty() || validation.empty()) {
    throw std::invalid_argument("training needs non-empty train and validation sets");
  }
  std::mt19937_64 rng(config.seed);
  RelationalGnn model(toy_model_config(num_colors), rng());
  OptimizerConfig opt_config;
  opt_config.kind = OptimizerKind::adam;
  opt_config.learning_rate = config.learning_rate;
  Optimizer optimizer(opt_config, model.parameters().named());

  ParameterStore best = model.parameters().clone(false);
  double best_accuracy = -1.0;
  std::vector<double> losses;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<StarGraphExample> batch;
  std::size_t epoch = 0;
  while (epoch < config.max_epochs) {
    ++epoch;
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        batch.push_back(train[order[i]]);
      }
      const GnnInput input = make_star_input(batch, num_colors);
      optimizer.zero_grad();
      Tensor loss = cross_entropy(gnn_forward(model, input).logits, input.labels);
      backward(loss);
      optimizer.step();
      total += loss.item();
      ++batches;
    }
    losses.push_back(total / static_cast<double>(batches));
    const double acc = accuracy(predict(model, validation, num_colors), validation);
    if (acc > best_accuracy) {
      best_accuracy = acc;
      best = model.parameters().clone(false);
    }
    if (acc >= 1.0) break;
  }
  if (best_accuracy < config.target_accuracy) {
    throw TrainingFailure("validation accuracy " + std::to_string(100.0 * best_accuracy) +
                          "% after " + std::to_string(epoch) + " epochs is below the " +
                          std::to_string(100.0 * config.target_accuracy) +
                          "% target; try another seed or a larger epoch budget");
  }
  model.parameters().load(best);
  return {std::move(model), best_accuracy, epoch, std::move(losses)};
}

}  // namespace graphmask
