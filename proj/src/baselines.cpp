#include "graphmask/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "graphmask/eval.hpp"

namespace graphmask {

using nlohmann::json;

namespace {

void require_single(const GnnInput& input, const char* method) {
  if (input.num_graphs() != 1) {
    throw std::invalid_argument(std::string(method) + " explains one graph at a time");
  }
}

GnnInput replicate(const GnnInput& input, std::size_t copies) {
  return merge_inputs(std::vector<GnnInput>(copies, input));
}

/// Splits flat [layer][batch edge] scores into per-graph records and fills in
/// predictions with dropped messages replaced by `replacements`.
void finish_records(const RelationalGnn& model, const GnnInput& batch,
                    std::vector<AttributionResult>& records, const std::vector<Tensor>& replacements,
                    double beta) {
  const std::size_t layers = model.config().num_layers;
  std::vector<std::vector<double>> gates(layers);
  for (std::size_t k = 0; k < layers; ++k) {
    for (const AttributionResult& r : records) {
      for (bool b : r.retained[k]) gates[k].push_back(b ? 1.0 : 0.0);
    }
  }
  NoGradGuard no_grad;
  const Tensor original = gnn_forward(model, batch).logits;
  const Tensor masked = gated_logits(model, batch, gates, replacements);
  const Tensor divergences = divergence(original, masked);
  const auto div = divergences.data();
  const auto op = argmax_rows(original);
  const auto mp = argmax_rows(masked);
  for (std::size_t g = 0; g < records.size(); ++g) {
    records[g].original_prediction = op[g];
    records[g].masked_prediction = mp[g];
    records[g].divergence = div[g];
    records[g].flagged = div[g] > beta;
  }
}

/// Records with `scores` sliced per graph and retained = score > threshold.
std::vector<AttributionResult> split_scores(const GnnInput& batch,
                                            const std::vector<std::vector<double>>& scores,
                                            std::size_t first_id, double threshold) {
  std::vector<AttributionResult> out(batch.num_graphs());
  for (std::size_t g = 0; g < out.size(); ++g) {
    AttributionResult& r = out[g];
    r.example_id = first_id + g;
    for (const auto& layer : scores) {
      std::vector<double> s(layer.begin() + static_cast<std::ptrdiff_t>(batch.edge_offset[g]),
                            layer.begin() + static_cast<std::ptrdiff_t>(batch.edge_offset[g + 1]));
      std::vector<bool> keep(s.size());
      for (std::size_t e = 0; e < s.size(); ++e) keep[e] = s[e] > threshold;
      r.scores.push_back(std::move(s));
      r.retained.push_back(std::move(keep));
    }
  }
  return out;
}

std::vector<double> column_values(const Tensor& t) {
  const auto d = t.data();
  return {d.begin(), d.end()};
}

}  // namespace

// ---------------------------------------------------------------- erasure

AttributionResult erasure_search(const RelationalGnn& model, const GnnInput& input,
                                 std::size_t example_id, std::size_t max_gates) {
  require_single(input, "erasure search");
  const std::size_t layers = model.config().num_layers;
  const std::size_t edges = input.num_edges();
  const std::size_t n = layers * edges;
  if (n > max_gates) {
    throw std::invalid_argument("erasure search over " + std::to_string(n) +
                                " gates refused (limit " + std::to_string(max_gates) + ")");
  }
  NoGradGuard no_grad;
  const Tensor original = gnn_forward(model, input).logits;
  const int target = argmax_rows(original).front();
  const std::vector<Tensor> zero(layers);

  const std::size_t chunk = std::min<std::size_t>(256, std::size_t{1} << n);
  const GnnInput batch = replicate(input, chunk);
  std::vector<std::vector<std::size_t>> pending;

  // Returns the first pending set that keeps the prediction, if any.
  auto flush = [&]() -> std::optional<std::vector<std::size_t>> {
    if (pending.empty()) return std::nullopt;
    std::vector<std::vector<double>> gates(layers, std::vector<double>(chunk * edges, 1.0));
    for (std::size_t c = 0; c < pending.size(); ++c) {
      for (std::size_t k = 0; k < layers; ++k) {
        std::fill_n(gates[k].begin() + static_cast<std::ptrdiff_t>(c * edges), edges, 0.0);
      }
      for (std::size_t flat : pending[c]) gates[flat / edges][c * edges + flat % edges] = 1.0;
    }
    const auto preds = argmax_rows(gated_logits(model, batch, gates, zero));
    for (std::size_t c = 0; c < pending.size(); ++c) {
      if (preds[c] == target) return pending[c];
    }
    pending.clear();
    return std::nullopt;
  };

  std::optional<std::vector<std::size_t>> found;
  for (std::size_t size = 0; size <= n && !found; ++size) {
    std::vector<std::size_t> combo(size);
    std::iota(combo.begin(), combo.end(), 0);
    while (true) {
      pending.push_back(combo);
      if (pending.size() == chunk && (found = flush())) break;
      std::size_t i = size;
      while (i > 0 && combo[i - 1] == n - size + i - 1) --i;
      if (i == 0) break;
      ++combo[i - 1];
      for (std::size_t j = i; j < size; ++j) combo[j] = combo[j - 1] + 1;
    }
    if (!found) found = flush();
  }

  AttributionResult r;
  r.example_id = example_id;
  r.scores.assign(layers, std::vector<double>(edges, 0.0));
  r.retained.assign(layers, std::vector<bool>(edges, false));
  // The full set always keeps the prediction, so `found` is set here.
  for (std::size_t flat : *found) {
    r.scores[flat / edges][flat % edges] = 1.0;
    r.retained[flat / edges][flat % edges] = true;
  }
  std::vector<AttributionResult> one{std::move(r)};
  finish_records(model, input, one, zero, std::numeric_limits<double>::infinity());
  return std::move(one.front());
}

// ---------------------------------------------------------------- integrated gradients

IntegratedGradients integrated_gradients_raw(const RelationalGnn& model, const GnnInput& input,
                                             std::size_t steps) {
  require_single(input, "integrated gradients");
  if (steps == 0) throw std::invalid_argument("integrated gradients needs at least one step");
  const RelationalGnn frozen = model.frozen_copy();
  const std::size_t layers = frozen.config().num_layers;
  const std::size_t edges = input.num_edges();

  IntegratedGradients ig;
  {
    NoGradGuard no_grad;
    const Tensor original = gnn_forward(frozen, input).logits;
    ig.target = argmax_rows(original).front();
    ig.full_logit = original.at(0, static_cast<std::size_t>(ig.target));
    const Tensor empty = gated_logits(frozen, input, std::vector<std::vector<double>>(layers, std::vector<double>(edges, 0.0)),
                                      std::vector<Tensor>(layers));
    ig.empty_logit = empty.at(0, static_cast<std::size_t>(ig.target));
  }

  const GnnInput batch = replicate(input, steps);
  std::vector<double> alphas(steps * edges);
  for (std::size_t j = 0; j < steps; ++j) {
    const double alpha = (static_cast<double>(j) + 0.5) / static_cast<double>(steps);
    std::fill_n(alphas.begin() + static_cast<std::ptrdiff_t>(j * edges), edges, alpha);
  }
  std::vector<Tensor> scales(layers);
  std::vector<std::optional<LayerGate>> gates(layers);
  for (std::size_t k = 0; k < layers; ++k) {
    scales[k] = Tensor::from({steps * edges, 1}, alphas, true);
    gates[k] = LayerGate{scales[k], Tensor()};
  }
  const Tensor logits = gated_forward(frozen, batch, gates).logits;
  std::vector<double> pick(logits.numel(), 0.0);
  for (std::size_t j = 0; j < steps; ++j) pick[j * logits.cols() + static_cast<std::size_t>(ig.target)] = 1.0;
  backward(sum(mul(logits, Tensor::from(logits.shape(), std::move(pick)))));

  ig.raw.assign(layers, std::vector<double>(edges, 0.0));
  for (std::size_t k = 0; k < layers; ++k) {
    const auto grad = scales[k].grad();
    for (std::size_t j = 0; j < steps; ++j) {
      for (std::size_t e = 0; e < edges; ++e) ig.raw[k][e] += grad[j * edges + e];
    }
    for (double& v : ig.raw[k]) v /= static_cast<double>(steps);
  }
  return ig;
}

AttributionResult integrated_gradients(const RelationalGnn& model, const GnnInput& input,
                                       std::size_t steps, std::size_t example_id) {
  const IntegratedGradients ig = integrated_gradients_raw(model, input, steps);
  double largest = 0.0;
  for (const auto& layer : ig.raw) {
    for (double v : layer) largest = std::max(largest, std::abs(v));
  }
  AttributionResult r;
  r.example_id = example_id;
  for (const auto& layer : ig.raw) {
    std::vector<double> s(layer.size());
    std::vector<bool> keep(layer.size());
    for (std::size_t e = 0; e < layer.size(); ++e) {
      s[e] = largest > 0.0 ? std::abs(layer[e]) / largest : 0.0;
      keep[e] = s[e] > 0.5;
    }
    r.scores.push_back(std::move(s));
    r.retained.push_back(std::move(keep));
  }
  std::vector<AttributionResult> one{std::move(r)};
  finish_records(model, input, one, std::vector<Tensor>(model.config().num_layers),
                 std::numeric_limits<double>::infinity());
  return std::move(one.front());
}

// ---------------------------------------------------------------- information bottleneck

MessageStatistics message_statistics(const RelationalGnn& model, const std::vector<GnnInput>& inputs,
                                     double variance_floor) {
  if (inputs.empty()) throw std::invalid_argument("message statistics need at least one input");
  NoGradGuard no_grad;
  const std::size_t layers = model.config().num_layers;
  const std::size_t d = model.config().state_dim;
  std::vector<std::vector<double>> total(layers, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> total_sq(layers, std::vector<double>(d, 0.0));
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < inputs.size(); begin += 256) {
    const std::size_t end = std::min(inputs.size(), begin + 256);
    const GnnInput batch = merge_inputs(std::span<const GnnInput>(inputs).subspan(begin, end - begin));
    const ForwardResult run = gnn_forward(model, batch);
    for (std::size_t k = 0; k < layers; ++k) {
      const auto m = run.traces[k].messages.data();
      for (std::size_t e = 0; e < batch.num_edges(); ++e) {
        for (std::size_t c = 0; c < d; ++c) {
          const double v = m[e * d + c];
          total[k][c] += v;
          total_sq[k][c] += v * v;
        }
      }
    }
    count += batch.num_edges();
  }
  if (count == 0) throw std::invalid_argument("message statistics need at least one edge");
  MessageStatistics stats;
  for (std::size_t k = 0; k < layers; ++k) {
    std::vector<double> mean(d);
    std::vector<double> var(d);
    for (std::size_t c = 0; c < d; ++c) {
      mean[c] = total[k][c] / static_cast<double>(count);
      var[c] = std::max(0.0, total_sq[k][c] / static_cast<double>(count) - mean[c] * mean[c]);
      if (var[c] < variance_floor) {
        var[c] = variance_floor;
        ++stats.floored;
      }
    }
    stats.mean.push_back(Tensor::from({d}, std::move(mean)));
    stats.variance.push_back(Tensor::from({d}, std::move(var)));
  }
  if (stats.floored > 0) {
    std::cerr << "warning: " << stats.floored << " message dimension(s) with variance below "
              << variance_floor << " were floored\n";
  }
  return stats;
}

Tensor bottleneck_kl(const Tensor& keep, const Tensor& messages, const Tensor& mean,
                     const Tensor& variance) {
  if (keep.rows() != messages.rows() || keep.cols() != 1 || mean.numel() != messages.cols() ||
      variance.numel() != messages.cols()) {
    throw ShapeError("bottleneck_kl", {keep.shape(), messages.shape(), mean.shape(), variance.shape()});
  }
  const double d = static_cast<double>(messages.cols());
  const Tensor xi = clamp(keep, 0.0, kMaxKeepProbability);
  const Tensor closed = add_scalar(neg(xi), 1.0);
  const Tensor log_term = scale(neg(log(closed)), d);
  const Tensor spread = scale(square(closed), 0.5 * d);
  const Tensor shift = row_sum(div(square(sub(messages, mean)), scale(variance, 2.0)));
  return add_scalar(add(add(log_term, spread), mul(square(xi), shift)), -0.5 * d);
}

InformationBottleneck::InformationBottleneck(std::size_t num_layers, std::size_t state_dim,
                                             std::size_t hidden_dim, std::uint64_t seed,
                                             MessageStatistics statistics)
    : statistics_(std::move(statistics)) {
  if (statistics_.mean.size() != num_layers || statistics_.variance.size() != num_layers) {
    throw std::invalid_argument("message statistics must cover every layer");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < num_layers; ++k) {
    add_edge_readout(params_, "ib" + std::to_string(k) + ".", state_dim, hidden_dim, rng);
  }
}

InformationBottleneck::InformationBottleneck(const ParameterStore& checkpoint) {
  for (const auto& [name, value] : checkpoint.items()) {
    if (name.rfind("stats", 0) != 0) params_.add(name, value.clone(true));
  }
  for (std::size_t k = 0; checkpoint.contains("stats" + std::to_string(k) + ".mean"); ++k) {
    statistics_.mean.push_back(checkpoint.get("stats" + std::to_string(k) + ".mean").clone(false));
    statistics_.variance.push_back(
        checkpoint.get("stats" + std::to_string(k) + ".variance").clone(false));
    if (!params_.contains("ib" + std::to_string(k) + ".w1")) {
      throw std::invalid_argument("bottleneck checkpoint lacks readout for layer " + std::to_string(k));
    }
  }
  if (statistics_.mean.empty()) throw std::invalid_argument("checkpoint holds no bottleneck layers");
}

ParameterStore InformationBottleneck::checkpoint() const {
  ParameterStore out = params_.clone(false);
  for (std::size_t k = 0; k < statistics_.mean.size(); ++k) {
    out.add("stats" + std::to_string(k) + ".mean", statistics_.mean[k].clone(false));
    out.add("stats" + std::to_string(k) + ".variance", statistics_.variance[k].clone(false));
  }
  return out;
}

Tensor InformationBottleneck::keep_probability(std::size_t layer, const GnnLayerTrace& trace,
                                               const Graph& graph) const {
  if (layer >= num_layers()) throw std::out_of_range("bottleneck layer out of range");
  return sigmoid(edge_readout(params_, "ib" + std::to_string(layer) + ".", trace, graph));
}

InformationBottleneck train_information_bottleneck(
    const RelationalGnn& model, const std::vector<GnnInput>& train, const BottleneckConfig& config,
    const std::function<void(const BottleneckEpoch&)>& on_epoch) {
  if (train.empty()) throw std::invalid_argument("bottleneck training needs training inputs");
  if (config.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  const RelationalGnn frozen = model.frozen_copy();
  const std::size_t layers = frozen.config().num_layers;
  const std::size_t d = frozen.config().state_dim;
  const std::size_t hidden = config.hidden_dim == 0 ? d : config.hidden_dim;
  std::mt19937_64 rng(config.seed);
  InformationBottleneck ib(layers, d, hidden, rng(),
                           message_statistics(frozen, train, config.variance_floor));
  OptimizerConfig adam;
  adam.kind = OptimizerKind::adam;
  adam.learning_rate = config.learning_rate;
  Optimizer optimizer(adam, ib.parameters().named());

  std::vector<std::vector<double>> stdev(layers);
  for (std::size_t k = 0; k < layers; ++k) {
    for (double v : ib.statistics().variance[k].data()) stdev[k].push_back(std::sqrt(v));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    BottleneckEpoch report;
    report.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < train.size(); begin += config.batch_size) {
      const std::size_t end = std::min(train.size(), begin + config.batch_size);
      std::vector<GnnInput> parts;
      for (std::size_t i = begin; i < end; ++i) parts.push_back(train[order[i]]);
      const GnnInput batch = merge_inputs(parts);
      const std::size_t edges = batch.num_edges();
      ForwardResult original;
      {
        NoGradGuard no_grad;
        original = gnn_forward(frozen, batch);
      }
      std::vector<std::optional<LayerGate>> gates(layers);
      Tensor kl;
      for (std::size_t k = 0; k < layers; ++k) {
        const Tensor xi = ib.keep_probability(k, original.traces[k], batch.graph);
        const auto mu = ib.statistics().mean[k].data();
        std::vector<double> noise(edges * d);
        for (std::size_t e = 0; e < edges; ++e) {
          for (std::size_t c = 0; c < d; ++c) noise[e * d + c] = mu[c] + stdev[k][c] * normal(rng);
        }
        gates[k] = LayerGate{xi, Tensor::from({edges, d}, std::move(noise))};
        Tensor layer_kl = sum(bottleneck_kl(xi, original.traces[k].messages,
                                            ib.statistics().mean[k], ib.statistics().variance[k]));
        kl = kl.defined() ? add(kl, layer_kl) : layer_kl;
      }
      kl = scale(kl, 1.0 / static_cast<double>(layers * std::max<std::size_t>(edges, 1)));
      const Tensor div = mean(divergence(original.logits, gated_forward(frozen, batch, gates).logits));
      const Tensor loss = add(div, scale(kl, config.beta));
      optimizer.zero_grad();
      backward(loss);
      optimizer.step();
      report.loss += loss.item();
      report.divergence += div.item();
      report.kl += kl.item();
      ++batches;
    }
    report.loss /= static_cast<double>(batches);
    report.divergence /= static_cast<double>(batches);
    report.kl /= static_cast<double>(batches);
    if (on_epoch) on_epoch(report);
  }
  ib.parameters().set_requires_grad(false);
  return ib;
}

AttributionResult information_bottleneck(const InformationBottleneck& bottleneck,
                                         const RelationalGnn& model, const GnnInput& input,
                                         std::size_t example_id) {
  require_single(input, "information bottleneck");
  if (bottleneck.num_layers() != model.config().num_layers) {
    throw std::invalid_argument("bottleneck layer count does not match the model");
  }
  NoGradGuard no_grad;
  const ForwardResult original = gnn_forward(model, input);
  std::vector<std::vector<double>> scores;
  for (std::size_t k = 0; k < bottleneck.num_layers(); ++k) {
    scores.push_back(column_values(bottleneck.keep_probability(k, original.traces[k], input.graph)));
  }
  auto records = split_scores(input, scores, example_id, 0.5);
  finish_records(model, input, records, bottleneck.statistics().mean,
                 std::numeric_limits<double>::infinity());
  return std::move(records.front());
}

// ---------------------------------------------------------------- GNNExplainer-style

std::vector<AttributionResult> gnnexplainer(const RelationalGnn& model,
                                            const std::vector<GnnInput>& inputs,
                                            const GnnExplainerConfig& config,
                                            std::size_t first_id) {
  if (inputs.empty()) return {};
  for (const GnnInput& in : inputs) require_single(in, "GNNExplainer");
  const RelationalGnn frozen = model.frozen_copy();
  const std::size_t layers = frozen.config().num_layers;
  const GnnInput batch = merge_inputs(inputs);
  const std::size_t edges = batch.num_edges();
  std::vector<int> targets;
  {
    NoGradGuard no_grad;
    targets = argmax_rows(gnn_forward(frozen, batch).logits);
  }
  std::vector<Tensor> logits_w(layers);
  std::vector<std::pair<std::string, Tensor>> named;
  for (std::size_t k = 0; k < layers; ++k) {
    logits_w[k] = Tensor::full({edges, 1}, config.initial_logit, true);
    named.emplace_back("mask" + std::to_string(k), logits_w[k]);
  }
  OptimizerConfig adam;
  adam.kind = OptimizerKind::adam;
  adam.learning_rate = config.learning_rate;
  Optimizer optimizer(adam, named);
  const double graphs = static_cast<double>(inputs.size());

  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<std::optional<LayerGate>> gates(layers);
    Tensor regulariser;
    for (std::size_t k = 0; k < layers; ++k) {
      const Tensor mask = sigmoid(logits_w[k]);
      gates[k] = LayerGate{mask, Tensor()};
      const Tensor entropy = neg(add(mul(mask, log_sigmoid(logits_w[k])),
                                     mul(add_scalar(neg(mask), 1.0), log_sigmoid(neg(logits_w[k])))));
      Tensor term = add(scale(sum(mask), config.sparsity_weight), scale(sum(entropy), config.entropy_weight));
      regulariser = regulariser.defined() ? add(regulariser, term) : term;
    }
    const Tensor ce = scale(cross_entropy(gated_forward(frozen, batch, gates).logits, targets), graphs);
    optimizer.zero_grad();
    backward(add(ce, regulariser));
    optimizer.step();
  }

  std::vector<std::vector<double>> scores;
  {
    NoGradGuard no_grad;
    for (const Tensor& w : logits_w) scores.push_back(column_values(sigmoid(w)));
  }
  auto records = split_scores(batch, scores, first_id, 0.5);
  finish_records(frozen, batch, records, std::vector<Tensor>(layers),
                 std::numeric_limits<double>::infinity());
  return records;
}

json gnnexplainer_metadata(const GnnExplainerConfig& config) {
  return {{"sparsity_weight", config.sparsity_weight}, {"entropy_weight", config.entropy_weight},
          {"steps", config.steps}, {"learning_rate", config.learning_rate},
          {"initial_logit", config.initial_logit}};
}

// ---------------------------------------------------------------- thresholds

std::vector<double> threshold_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 9; ++i) grid.push_back(i / 10.0);
  return grid;
}

double select_threshold(const std::vector<AttributionResult>& results,
                        const std::vector<std::vector<bool>>& gold) {
  if (results.size() != gold.size() || results.empty()) {
    throw std::invalid_argument("threshold selection needs one gold mask per attribution");
  }
  double best_t = 0.0;
  double best_f1 = -1.0;
  for (double t : threshold_grid()) {
    std::vector<bool> predicted;
    std::vector<bool> flat_gold;
    for (std::size_t i = 0; i < results.size(); ++i) {
      for (const auto& layer : results[i].scores) {
        if (layer.size() != gold[i].size()) {
          throw std::invalid_argument("attribution and gold mask differ in edge count");
        }
        for (std::size_t e = 0; e < layer.size(); ++e) {
          predicted.push_back(layer[e] > t);
          flat_gold.push_back(gold[i][e]);
        }
      }
    }
    const double f1 = faithfulness(predicted, flat_gold).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return best_t;
}

void apply_threshold(const RelationalGnn& model, const std::vector<GnnInput>& inputs,
                     std::vector<AttributionResult>& results, double threshold,
                     const std::vector<Tensor>& replacements, double beta) {
  if (inputs.size() != results.size()) {
    throw std::invalid_argument("apply_threshold needs one input per attribution");
  }
  for (AttributionResult& r : results) {
    for (std::size_t k = 0; k < r.scores.size(); ++k) {
      for (std::size_t e = 0; e < r.scores[k].size(); ++e) r.retained[k][e] = r.scores[k][e] > threshold;
    }
  }
  for (std::size_t begin = 0; begin < inputs.size(); begin += 256) {
    const std::size_t end = std::min(inputs.size(), begin + 256);
    const GnnInput batch = merge_inputs(std::span<const GnnInput>(inputs).subspan(begin, end - begin));
    std::vector<AttributionResult> chunk(results.begin() + static_cast<std::ptrdiff_t>(begin),
                                         results.begin() + static_cast<std::ptrdiff_t>(end));
    finish_records(model, batch, chunk, replacements, beta);
    std::move(chunk.begin(), chunk.end(), results.begin() + static_cast<std::ptrdiff_t>(begin));
  }
}

}  // namespace graphmask
