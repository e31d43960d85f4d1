#include "graphmask/graphmask.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "graphmask/init.hpp"

namespace graphmask {

namespace {

std::string gate_prefix(std::size_t layer) { return "gate" + std::to_string(layer) + "."; }
std::string baseline_name(std::size_t layer) { return "baseline" + std::to_string(layer); }

std::size_t count_layers(const ParameterStore& params) {
  std::size_t n = 0;
  while (params.contains(baseline_name(n))) ++n;
  return n;
}

std::vector<double> uniform_draws(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(std::nextafter(0.0, 1.0), 1.0);
  std::vector<double> u(n);
  for (double& x : u) x = dist(rng);
  return u;
}

std::vector<bool> resolve_enabled(const std::vector<bool>& enabled, std::size_t num_layers) {
  if (enabled.empty()) return std::vector<bool>(num_layers, true);
  if (enabled.size() != num_layers) {
    throw std::invalid_argument("enabled-layer mask has " + std::to_string(enabled.size()) +
                                " entries for " + std::to_string(num_layers) + " layers");
  }
  return enabled;
}

std::vector<GnnInput> slice(const std::vector<GnnInput>& inputs, std::span<const std::size_t> order,
                            std::size_t begin, std::size_t end) {
  std::vector<GnnInput> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(inputs[order[i]]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- classifier

void add_edge_readout(ParameterStore& params, const std::string& prefix, std::size_t state_dim,
                      std::size_t hidden_dim, std::mt19937_64& rng) {
  params.add(prefix + "w1", glorot_uniform(3 * state_dim, hidden_dim, rng));
  params.add(prefix + "ln_gain", Tensor::full({hidden_dim}, 1.0, true));
  params.add(prefix + "ln_shift", zero_bias(hidden_dim));
  params.add(prefix + "w2", glorot_uniform(hidden_dim, 1, rng));
  params.add(prefix + "b2", zero_bias(1));
}

Tensor edge_readout(const ParameterStore& params, const std::string& prefix,
                    const GnnLayerTrace& trace, const Graph& graph) {
  const Tensor& w1 = params.get(prefix + "w1");
  const std::size_t d = w1.rows() / 3;
  const std::size_t e = graph.num_edges();
  if (w1.rows() != 3 * d || trace.states_in.cols() != d || trace.messages.cols() != d ||
      trace.messages.rows() != e || trace.states_in.rows() != graph.num_vertices) {
    throw ShapeError("edge_readout", {w1.shape(), trace.states_in.shape(), trace.messages.shape()},
                     "expected states [" + std::to_string(graph.num_vertices) + " x " +
                         std::to_string(d) + "] and messages [" + std::to_string(e) + " x " +
                         std::to_string(d) + "]");
  }
  std::vector<std::size_t> sources(e);
  std::vector<std::size_t> targets(e);
  for (std::size_t i = 0; i < e; ++i) {
    sources[i] = graph.edges[i].source;
    targets[i] = graph.edges[i].target;
  }
  Tensor q = concat({gather_rows(trace.states_in, sources), gather_rows(trace.states_in, targets),
                     trace.messages},
                    1);
  Tensor hidden = relu(
      layer_norm(matmul(q, w1), params.get(prefix + "ln_gain"), params.get(prefix + "ln_shift")));
  return add(matmul(hidden, params.get(prefix + "w2")), params.get(prefix + "b2"));
}

GateClassifier::GateClassifier(std::size_t num_layers, std::size_t state_dim,
                               std::size_t hidden_dim, std::uint64_t seed,
                               HardConcrete hard_concrete)
    : num_layers_(num_layers),
      state_dim_(state_dim),
      hidden_dim_(hidden_dim),
      hard_concrete_(hard_concrete) {
  hard_concrete_.validate();
  if (num_layers == 0 || state_dim == 0 || hidden_dim == 0) {
    throw std::invalid_argument("gate classifier needs positive layer count and dimensions");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < num_layers; ++k) {
    add_edge_readout(params_, gate_prefix(k), state_dim, hidden_dim, rng);
    params_.add(baseline_name(k), zero_bias(state_dim));
  }
}

GateClassifier::GateClassifier(ParameterStore parameters, HardConcrete hard_concrete)
    : hard_concrete_(hard_concrete), params_(std::move(parameters)) {
  hard_concrete_.validate();
  num_layers_ = count_layers(params_);
  if (num_layers_ == 0) throw std::invalid_argument("checkpoint holds no gate classifier layers");
  const Tensor& w1 = params_.get(gate_prefix(0) + "w1");
  hidden_dim_ = w1.cols();
  state_dim_ = params_.get(baseline_name(0)).numel();
  for (std::size_t k = 0; k < num_layers_; ++k) {
    const std::string p = gate_prefix(k);
    const Tensor& w = params_.get(p + "w1");
    if (w.rows() != 3 * state_dim_ || w.cols() != hidden_dim_ ||
        params_.get(p + "w2").numel() != hidden_dim_ ||
        params_.get(p + "ln_gain").numel() != hidden_dim_ ||
        params_.get(p + "ln_shift").numel() != hidden_dim_ || params_.get(p + "b2").numel() != 1 ||
        params_.get(baseline_name(k)).numel() != state_dim_) {
      throw ShapeError("GateClassifier", {w.shape(), params_.get(baseline_name(k)).shape()},
                       "inconsistent parameters for layer " + std::to_string(k));
    }
  }
}

GateClassifier GateClassifier::all_open(std::size_t num_layers, std::size_t state_dim,
                                        std::size_t hidden_dim, HardConcrete hard_concrete) {
  GateClassifier c(num_layers, state_dim, hidden_dim, 0, hard_concrete);
  for (std::size_t k = 0; k < num_layers; ++k) {
    for (double& w : c.params_.get(gate_prefix(k) + "w2").mutable_data()) w = 0.0;
  }
  return c;
}

void GateClassifier::check_layer(std::size_t layer) const {
  if (layer >= num_layers_) {
    throw std::out_of_range("layer " + std::to_string(layer) + " outside classifier with " +
                            std::to_string(num_layers_) + " layers");
  }
}

Tensor GateClassifier::gate_logits(std::size_t layer, const GnnLayerTrace& trace,
                                   const Graph& graph) const {
  check_layer(layer);
  return edge_readout(params_, gate_prefix(layer), trace, graph);
}

const Tensor& GateClassifier::baseline(std::size_t layer) const {
  check_layer(layer);
  return params_.get(baseline_name(layer));
}

// ---------------------------------------------------------------- masked runs

std::vector<int> MaskedRun::original_predictions() const { return argmax_rows(original_logits); }
std::vector<int> MaskedRun::masked_predictions() const { return argmax_rows(masked_logits); }
std::vector<double> MaskedRun::divergences() const {
  const auto d = divergence.data();
  return {d.begin(), d.end()};
}

Tensor divergence(const Tensor& original_logits, const Tensor& masked_logits) {
  if (original_logits.shape() != masked_logits.shape()) {
    throw ShapeError("divergence", {original_logits.shape(), masked_logits.shape()});
  }
  const Tensor reference = original_logits.detach();
  const Tensor log_p = log_softmax(reference);
  return row_sum(mul(exp(log_p), sub(log_p, log_softmax(masked_logits))));
}

Tensor expected_l0_penalty(const HardConcrete& hard_concrete, const std::vector<Tensor>& locations) {
  Tensor total;
  for (const Tensor& loc : locations) {
    if (!loc.defined()) continue;
    Tensor layer_sum = sum(prob_nonzero(hard_concrete, loc));
    total = total.defined() ? add(total, layer_sum) : layer_sum;
  }
  if (!total.defined()) throw std::invalid_argument("expected L0 penalty needs at least one gated layer");
  return total;
}

MaskedRun masked_forward(const RelationalGnn& model, const GnnInput& input,
                         const std::vector<Tensor>& locations, const std::vector<Tensor>& baselines,
                         const HardConcrete& hard_concrete, GateSampling sampling,
                         std::mt19937_64* rng) {
  const std::size_t num_layers = model.config().num_layers;
  if (locations.size() != num_layers || baselines.size() != num_layers) {
    throw std::invalid_argument("masked_forward needs one location and baseline entry per layer");
  }
  if (sampling == GateSampling::stochastic && rng == nullptr) {
    throw std::invalid_argument("stochastic gates need a random generator");
  }
  MaskedRun run;
  {
    NoGradGuard no_grad;
    run.original_logits = gnn_forward(model, input).logits;
  }
  const std::size_t e = input.num_edges();
  run.locations = locations;
  run.gates.resize(num_layers);
  run.probabilities.assign(num_layers, std::vector<double>(e, 1.0));
  run.hard.assign(num_layers, std::vector<bool>(e, true));
  std::vector<std::optional<LayerGate>> layer_gates(num_layers);
  for (std::size_t k = 0; k < num_layers; ++k) {
    const Tensor& loc = locations[k];
    if (!loc.defined()) continue;
    if (loc.rows() != e || loc.cols() != 1) {
      throw ShapeError("masked_forward", {loc.shape(), Shape{e, 1}}, "one location per edge");
    }
    const Tensor& column = loc;
    for (std::size_t i = 0; i < e; ++i) {
      const double p = prob_nonzero(hard_concrete, column.data()[i]);
      run.probabilities[k][i] = p;
      run.hard[k][i] = p > 0.5;
    }
    Tensor z;
    switch (sampling) {
      case GateSampling::stochastic: {
        const auto u = uniform_draws(e, *rng);
        z = sample_gate(hard_concrete, column, u);
        break;
      }
      case GateSampling::expectation:
        z = deterministic_gate(hard_concrete, column, GateMode::expectation);
        break;
      case GateSampling::hard:
        z = deterministic_gate(hard_concrete, column, GateMode::hard_threshold);
        break;
    }
    run.gates[k] = z;
    layer_gates[k] = LayerGate{z, baselines[k]};
  }
  run.masked_logits = gated_forward(model, input, layer_gates).logits;
  run.divergence = divergence(run.original_logits, run.masked_logits);
  for (const auto& layer : run.hard) {
    run.retained_count += static_cast<std::size_t>(std::count(layer.begin(), layer.end(), true));
  }
  return run;
}

MaskedRun masked_forward(const RelationalGnn& model, const GateClassifier& classifier,
                         const GnnInput& input, GateSampling sampling, std::mt19937_64* rng,
                         const std::vector<bool>& enabled) {
  const std::size_t num_layers = model.config().num_layers;
  if (classifier.num_layers() != num_layers || classifier.state_dim() != model.config().state_dim) {
    throw std::invalid_argument("gate classifier shape does not match the model (" +
                                std::to_string(classifier.num_layers()) + " layers, state " +
                                std::to_string(classifier.state_dim()) + ")");
  }
  const std::vector<bool> on = resolve_enabled(enabled, num_layers);
  ForwardResult original;
  {
    NoGradGuard no_grad;
    original = gnn_forward(model, input);
  }
  std::vector<Tensor> locations(num_layers);
  std::vector<Tensor> baselines(num_layers);
  for (std::size_t k = 0; k < num_layers; ++k) {
    if (!on[k]) continue;
    locations[k] = classifier.gate_logits(k, original.traces[k], input.graph);
    baselines[k] = classifier.baseline(k);
  }
  return masked_forward(model, input, locations, baselines, classifier.hard_concrete(), sampling,
                        rng);
}

// ---------------------------------------------------------------- Lagrangian

LagrangeMultiplier::LagrangeMultiplier(double learning_rate, double initial, std::size_t count)
    : lambda_(Tensor::full({count, 1}, std::max(0.0, initial), true)),
      optimizer_(
          [learning_rate] {
            OptimizerConfig c;
            c.kind = OptimizerKind::rmsprop;
            c.learning_rate = learning_rate;
            c.maximize = true;
            return c;
          }(),
          {{"lambda", lambda_}}) {
  if (count == 0) throw std::invalid_argument("need at least one Lagrange multiplier");
}

Tensor LagrangeMultiplier::lagrangian_term(const Tensor& constraint, double beta) const {
  const bool single = lambda_.numel() == 1 && constraint.numel() == 1;
  if (!single && (constraint.rows() != lambda_.rows() || constraint.cols() != 1)) {
    throw ShapeError("lagrangian_term", {lambda_.shape(), constraint.shape()},
                     "one constraint value per multiplier, as a column");
  }
  return sum(mul(lambda_, add_scalar(constraint, -beta)));
}

void LagrangeMultiplier::step() {
  optimizer_.step();
  for (double& v : lambda_.mutable_data()) v = std::max(0.0, v);
}

// ---------------------------------------------------------------- training

ConstraintNotSatisfied::ConstraintNotSatisfied(double best_divergence, double beta)
    : std::runtime_error([&] {
        std::ostringstream msg;
        msg << "divergence constraint never met on validation: best mean divergence "
            << best_divergence << " > beta " << beta;
        return msg.str();
      }()),
      best_divergence_(best_divergence) {}

MaskEvaluation evaluate_classifier(const RelationalGnn& model, const GateClassifier& classifier,
                                   const std::vector<GnnInput>& inputs,
                                   const std::vector<bool>& enabled, std::size_t batch_size) {
  if (inputs.empty()) throw std::invalid_argument("evaluation needs at least one input");
  NoGradGuard no_grad;
  MaskEvaluation eval;
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t begin = 0; begin < inputs.size(); begin += batch_size) {
    const std::size_t end = std::min(inputs.size(), begin + batch_size);
    const GnnInput batch = merge_inputs(slice(inputs, order, begin, end));
    const MaskedRun run = masked_forward(model, classifier, batch, GateSampling::hard, nullptr, enabled);
    const auto d = run.divergences();
    eval.divergences.insert(eval.divergences.end(), d.begin(), d.end());
    const auto op = run.original_predictions();
    const auto mp = run.masked_predictions();
    eval.original_predictions.insert(eval.original_predictions.end(), op.begin(), op.end());
    eval.masked_predictions.insert(eval.masked_predictions.end(), mp.begin(), mp.end());
    eval.retained += run.retained_count;
    eval.total += run.hard.size() * batch.num_edges();
  }
  eval.mean_divergence = std::accumulate(eval.divergences.begin(), eval.divergences.end(), 0.0) /
                         static_cast<double>(eval.divergences.size());
  eval.retained_fraction =
      eval.total == 0 ? 1.0 : static_cast<double>(eval.retained) / static_cast<double>(eval.total);
  return eval;
}

GraphMaskTrainingResult train_graphmask(const RelationalGnn& model,
                                        const std::vector<GnnInput>& train,
                                        const std::vector<GnnInput>& validation,
                                        const GraphMaskConfig& config,
                                        const EpochCallback& on_epoch) {
  if (train.empty() || validation.empty()) {
    throw std::invalid_argument("GraphMask training needs non-empty train and validation sets");
  }
  if (config.batch_size == 0 || config.epochs_per_stage == 0) {
    throw std::invalid_argument("batch size and epochs per stage must be positive");
  }
  if (!(config.beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
  const RelationalGnn frozen = model.frozen_copy();
  const std::size_t num_layers = frozen.config().num_layers;
  const std::size_t hidden = config.hidden_dim == 0 ? frozen.config().state_dim : config.hidden_dim;

  std::mt19937_64 rng(config.seed);
  GateClassifier classifier(num_layers, frozen.config().state_dim, hidden, rng(),
                            config.hard_concrete);
  OptimizerConfig adam;
  adam.kind = OptimizerKind::adam;
  adam.learning_rate = config.learning_rate;
  Optimizer optimizer(adam, classifier.parameters().named());
  LagrangeMultiplier lambda(config.lambda_learning_rate);

  const std::size_t total_epochs = num_layers * config.epochs_per_stage + config.joint_epochs;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  GraphMaskTrainingResult result{classifier, 0, {}, {}};
  bool found = false;
  double best_fraction = std::numeric_limits<double>::infinity();
  double best_divergence = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= total_epochs; ++epoch) {
    const std::size_t stage = (epoch - 1) / config.epochs_per_stage;
    const std::size_t active = std::min(num_layers, stage + 1);
    std::vector<bool> enabled(num_layers, false);
    for (std::size_t k = num_layers - active; k < num_layers; ++k) enabled[k] = true;

    std::shuffle(order.begin(), order.end(), rng);
    EpochReport report;
    report.epoch = epoch;
    report.enabled_layers = active;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < train.size(); begin += config.batch_size) {
      const std::size_t end = std::min(train.size(), begin + config.batch_size);
      const GnnInput batch = merge_inputs(slice(train, order, begin, end));
      const double gates = static_cast<double>(active * batch.num_edges());
      const MaskedRun run =
          masked_forward(frozen, classifier, batch, GateSampling::stochastic, &rng, enabled);
      const Tensor penalty = scale(expected_l0_penalty(classifier.hard_concrete(), run.locations),
                                   1.0 / gates);
      const Tensor mean_div = mean(run.divergence);
      const Tensor loss = add(penalty, lambda.lagrangian_term(mean_div, config.beta));
      optimizer.zero_grad();
      lambda.zero_grad();
      backward(loss);
      optimizer.step();
      lambda.step();
      report.loss += loss.item();
      report.penalty += penalty.item();
      report.train_divergence += mean_div.item();
      ++batches;
    }
    report.loss /= static_cast<double>(batches);
    report.penalty /= static_cast<double>(batches);
    report.train_divergence /= static_cast<double>(batches);
    report.lambda = lambda.value();

    MaskEvaluation eval = evaluate_classifier(frozen, classifier, validation, enabled);
    report.validation_divergence = eval.mean_divergence;
    report.validation_retained_fraction = eval.retained_fraction;
    report.feasible = eval.mean_divergence <= config.beta;
    if (active == num_layers) {
      best_divergence = std::min(best_divergence, eval.mean_divergence);
      if (report.feasible && eval.retained_fraction <= best_fraction) {
        found = true;
        best_fraction = eval.retained_fraction;
        result.classifier = GateClassifier(classifier.parameters().clone(false), config.hard_concrete);
        result.best_epoch = epoch;
        result.validation = std::move(eval);
      }
    }
    result.history.push_back(report);
    if (on_epoch) on_epoch(report);
  }
  if (!found) throw ConstraintNotSatisfied(best_divergence, config.beta);
  return result;
}

NonAmortizedResult train_nonamortized(const RelationalGnn& model, const GnnInput& input,
                                      const NonAmortizedConfig& config) {
  return std::move(train_nonamortized(model, std::vector<GnnInput>{input}, config).front());
}

std::vector<NonAmortizedResult> train_nonamortized(const RelationalGnn& model,
                                                   const std::vector<GnnInput>& inputs,
                                                   const NonAmortizedConfig& config) {
  if (inputs.empty()) throw std::invalid_argument("non-amortized training needs at least one input");
  for (const GnnInput& in : inputs) {
    if (in.num_graphs() != 1) throw std::invalid_argument("non-amortized masks explain one graph each");
  }
  if (config.check_every == 0) throw std::invalid_argument("check_every must be positive");
  config.hard_concrete.validate();
  const RelationalGnn frozen = model.frozen_copy();
  const std::size_t num_layers = frozen.config().num_layers;
  const std::size_t d = frozen.config().state_dim;
  const std::size_t num_graphs = inputs.size();
  const GnnInput batch = merge_inputs(inputs);
  const std::size_t num_edges = batch.num_edges();
  std::vector<std::size_t> edge_graph(num_edges);
  for (std::size_t g = 0; g < num_graphs; ++g) {
    for (std::size_t e = batch.edge_offset[g]; e < batch.edge_offset[g + 1]; ++e) edge_graph[e] = g;
  }

  std::vector<Tensor> locations(num_layers);
  std::vector<Tensor> baselines(num_layers);
  std::vector<std::pair<std::string, Tensor>> named;
  for (std::size_t k = 0; k < num_layers; ++k) {
    locations[k] = Tensor::zeros({num_edges, 1}, true);
    baselines[k] = Tensor::zeros({num_graphs, d}, true);
    named.emplace_back("location" + std::to_string(k), locations[k]);
    named.emplace_back(baseline_name(k), baselines[k]);
  }
  OptimizerConfig adam;
  adam.kind = OptimizerKind::adam;
  adam.learning_rate = config.learning_rate;
  Optimizer optimizer(adam, named);
  LagrangeMultiplier lambda(config.lambda_learning_rate, 0.0, num_graphs);
  std::mt19937_64 rng(config.seed);

  auto replacements = [&] {
    std::vector<Tensor> out(num_layers);
    for (std::size_t k = 0; k < num_layers; ++k) out[k] = gather_rows(baselines[k], edge_graph);
    return out;
  };

  struct Snapshot {
    bool taken = false;
    bool satisfied = false;
    double divergence = std::numeric_limits<double>::infinity();
    std::size_t retained = 0;
    std::vector<std::vector<double>> locations;
    std::vector<std::vector<double>> baselines;
  };
  std::vector<Snapshot> best(num_graphs);
  auto consider = [&] {
    NoGradGuard no_grad;
    const MaskedRun run = masked_forward(frozen, batch, locations, replacements(),
                                         config.hard_concrete, GateSampling::hard);
    const auto div = run.divergences();
    for (std::size_t g = 0; g < num_graphs; ++g) {
      const std::size_t begin = batch.edge_offset[g];
      const std::size_t end = batch.edge_offset[g + 1];
      std::size_t retained = 0;
      for (const auto& layer : run.hard) {
        retained += static_cast<std::size_t>(std::count(layer.begin() + begin, layer.begin() + end, true));
      }
      const bool feasible = div[g] <= config.beta;
      Snapshot& b = best[g];
      const bool better = feasible ? (!b.satisfied || retained <= b.retained)
                                   : (!b.satisfied && div[g] < b.divergence);
      if (!b.taken || better) {
        b.taken = true;
        b.satisfied = feasible;
        b.divergence = div[g];
        b.retained = retained;
        b.locations.assign(num_layers, {});
        b.baselines.assign(num_layers, {});
        for (std::size_t k = 0; k < num_layers; ++k) {
          const auto loc = locations[k].data();
          const auto base = baselines[k].data();
          b.locations[k].assign(loc.begin() + begin, loc.begin() + end);
          b.baselines[k].assign(base.begin() + g * d, base.begin() + (g + 1) * d);
        }
      }
    }
  };

  consider();
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const MaskedRun run = masked_forward(frozen, batch, locations, replacements(),
                                         config.hard_concrete, GateSampling::stochastic, &rng);
    const Tensor penalty = expected_l0_penalty(config.hard_concrete, run.locations);
    const Tensor loss = add(penalty, lambda.lagrangian_term(run.divergence, config.beta));
    optimizer.zero_grad();
    lambda.zero_grad();
    backward(loss);
    optimizer.step();
    lambda.step();
    if (step % config.check_every == 0 || step == config.steps) consider();
  }

  std::vector<NonAmortizedResult> results(num_graphs);
  for (std::size_t g = 0; g < num_graphs; ++g) {
    NonAmortizedResult& r = results[g];
    const std::size_t edges = inputs[g].num_edges();
    for (std::size_t k = 0; k < num_layers; ++k) {
      r.locations.push_back(Tensor::from({edges, 1}, best[g].locations[k]));
      r.baselines.push_back(Tensor::from({d}, best[g].baselines[k]));
    }
    NoGradGuard no_grad;
    r.run = masked_forward(frozen, inputs[g], r.locations, r.baselines, config.hard_concrete,
                           GateSampling::hard);
    r.satisfied = best[g].satisfied;
  }
  return results;
}

AttributionResult attribution_from_run(const MaskedRun& run, std::size_t example_id, double beta) {
  if (run.original_logits.rows() != 1) {
    throw std::invalid_argument("attribution records describe a single graph");
  }
  AttributionResult r;
  r.example_id = example_id;
  r.scores = run.probabilities;
  r.retained = run.hard;
  r.original_prediction = run.original_predictions().front();
  r.masked_prediction = run.masked_predictions().front();
  r.divergence = run.divergence.item();
  r.flagged = r.divergence > beta;
  return r;
}

AttributionResult explain(const GateClassifier& classifier, const RelationalGnn& model,
                          const GnnInput& input, std::size_t example_id, double beta) {
  NoGradGuard no_grad;
  const MaskedRun run = masked_forward(model, classifier, input, GateSampling::hard);
  return attribution_from_run(run, example_id, beta);
}

}  // namespace graphmask
