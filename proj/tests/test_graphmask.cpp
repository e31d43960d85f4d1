#include <cmath>

#include "doctest.h"
#include "graphmask/graphmask.hpp"
#include "support.hpp"
#include "trained.hpp"

using namespace graphmask;
using namespace graphmask::testing;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::vector<Tensor> constant_locations(std::size_t layers, std::size_t edges, double value) {
  return std::vector<Tensor>(layers, Tensor::full({edges, 1}, value));
}

}  // namespace

TEST_CASE("gated message is exactly z m + (1 - z) b") {
  std::mt19937_64 rng(21);
  const Tensor m = random_tensor({7, 5}, rng, -3, 3, false);
  const Tensor z = random_tensor({7, 1}, rng, 0, 1, false);
  const Tensor b = random_tensor({5}, rng, -3, 3, false);
  const Tensor out = apply_gate(m, {z, b});
  for (std::size_t e = 0; e < 7; ++e) {
    const double ze = z.at(e, 0);
    for (std::size_t j = 0; j < 5; ++j) {
      const double expected = ze * m.at(e, j) + (1.0 - ze) * b.data()[j];
      CHECK(std::abs(out.at(e, j) - expected) <= 1e-12);
    }
  }
  // Per-edge replacement rows use the same identity.
  const Tensor rows = random_tensor({7, 5}, rng, -3, 3, false);
  const Tensor out_rows = apply_gate(m, {z, rows});
  for (std::size_t e = 0; e < 7; ++e) {
    for (std::size_t j = 0; j < 5; ++j) {
      const double expected = z.at(e, 0) * m.at(e, j) + (1.0 - z.at(e, 0)) * rows.at(e, j);
      CHECK(std::abs(out_rows.at(e, j) - expected) <= 1e-12);
    }
  }
}

TEST_CASE("zero output weights open every gate") {
  std::mt19937_64 rng(2);
  const RelationalGnn model(deep_config(2, 2, 3), 1);
  const GnnInput in = chain_input(4, 2, 3, rng);
  const GateClassifier open = GateClassifier::all_open(2, 8, 8);
  const ForwardResult fwd = gnn_forward(model, in);
  for (std::size_t k = 0; k < 2; ++k) {
    const Tensor gamma = open.gate_logits(k, fwd.traces[k], in.graph);
    for (double g : gamma.data()) CHECK(g == 0.0);
  }
  const MaskedRun run = masked_forward(model, open, in, GateSampling::hard);
  CHECK(run.retained_count == 2 * in.num_edges());
  CHECK(values(run.masked_logits) == values(run.original_logits));
}

TEST_CASE("gate logits are deterministic for a fixed trace") {
  std::mt19937_64 rng(2);
  const RelationalGnn model(deep_config(1, 2, 3), 1);
  const GnnInput in = chain_input(4, 2, 3, rng);
  const GateClassifier c(1, 8, 8, 42);
  const ForwardResult fwd = gnn_forward(model, in);
  CHECK(values(c.gate_logits(0, fwd.traces[0], in.graph)) == values(c.gate_logits(0, fwd.traces[0], in.graph)));
  const GateClassifier wrong(1, 9, 8, 42);
  CHECK_THROWS(wrong.gate_logits(0, fwd.traces[0], in.graph));
}

TEST_CASE("forced gates: all open is the original run, all closed ignores edge colours") {
  const RelationalGnn& model = trained_model();
  const GnnInput a = make_star_input(star({0, 0, 1, 2, 3, 4}, 0, 1), 6);
  const GnnInput b = make_star_input(star({1, 1, 1, 5, 5, 4}, 0, 1), 6);
  std::mt19937_64 rng(5);
  const std::vector<Tensor> baselines{random_tensor({50}, rng, 0, 1, false)};
  const MaskedRun open = masked_forward(model, a, constant_locations(1, 6, 50.0), baselines, {}, GateSampling::hard);
  CHECK(values(open.masked_logits) == values(open.original_logits));
  CHECK(open.divergence.item() == 0.0);
  const MaskedRun shut_a = masked_forward(model, a, constant_locations(1, 6, -50.0), baselines, {}, GateSampling::hard);
  const MaskedRun shut_b = masked_forward(model, b, constant_locations(1, 6, -50.0), baselines, {}, GateSampling::hard);
  CHECK(values(shut_a.masked_logits) == values(shut_b.masked_logits));
  CHECK(shut_a.retained_count == 0);
}

TEST_CASE("gates opened at initialisation leave the prediction untouched") {
  const RelationalGnn& model = trained_model();
  const GnnInput in = make_star_input(default_dataset().test[0], 6);
  const std::vector<Tensor> zero_location{Tensor::zeros({in.num_edges(), 1})};
  const MaskedRun run = masked_forward(model, in, zero_location, {Tensor::zeros({50})}, {}, GateSampling::expectation);
  CHECK(run.divergence.item() < 1e-12);
}

TEST_CASE("no look-ahead: lower-layer gates ignore upper layers") {
  std::mt19937_64 rng(31);
  const GnnConfig cfg = deep_config(3, 2, 4);
  const RelationalGnn model(cfg, 3);
  const GnnInput in = chain_input(6, 2, 4, rng);
  const GateClassifier classifier(3, cfg.state_dim, cfg.hidden_dim, 9);
  const MaskedRun base = masked_forward(model, classifier, in, GateSampling::expectation);

  // Perturb the top layer's message weights.
  ParameterStore perturbed = model.parameters().clone(false);
  for (const auto& [name, t] : perturbed.items()) {
    if (name.rfind("layer2.", 0) != 0) continue;
    Tensor copy = t;
    for (double& v : copy.mutable_data()) v += 0.5;
  }
  const RelationalGnn upper_changed(cfg, perturbed);
  const MaskedRun moved = masked_forward(upper_changed, classifier, in, GateSampling::expectation);
  CHECK(values(moved.locations[0]) == values(base.locations[0]));
  CHECK(values(moved.locations[1]) == values(base.locations[1]));
  CHECK(values(moved.locations[2]) != values(base.locations[2]));

  // Changing which layers are gated does not move any other layer's gates.
  const MaskedRun top_off = masked_forward(model, classifier, in, GateSampling::expectation, nullptr,
                                           {true, true, false});
  CHECK(values(top_off.locations[0]) == values(base.locations[0]));
  CHECK(values(top_off.locations[1]) == values(base.locations[1]));
  CHECK_FALSE(top_off.locations[2].defined());
}

TEST_CASE("expected L0 penalty saturates and matches prob_nonzero") {
  const HardConcrete hc{};
  const std::size_t layers = 3, edges = 5;
  const double c = hc.location_bias;
  CHECK(expected_l0_penalty(hc, constant_locations(layers, edges, 20.0 - c)).item() ==
        doctest::Approx(static_cast<double>(layers * edges)));
  CHECK(expected_l0_penalty(hc, constant_locations(layers, edges, -20.0 - c)).item() < 1e-6);
  const double single = expected_l0_penalty(hc, constant_locations(1, 1, -c)).item();
  CHECK(single == doctest::Approx(0.690).epsilon(1e-3));
  CHECK(single == doctest::Approx(prob_nonzero(hc, -c)).epsilon(1e-15));
}

TEST_CASE("divergence is zero for identical logits and about 20 for swapped point masses") {
  const Tensor a = Tensor::from({1, 2}, {10.0, -10.0});
  const Tensor b = Tensor::from({1, 2}, {-10.0, 10.0});
  CHECK(divergence(a, a).item() == doctest::Approx(0.0));
  // KL written out for two classes.
  const long double p1 = 1.0L / (1.0L + std::exp(-20.0L)), p2 = 1.0L - p1;
  const long double kl = p1 * std::log(p1 / p2) + p2 * std::log(p2 / p1);
  CHECK(divergence(a, b).item() == doctest::Approx(static_cast<double>(kl)).epsilon(1e-12));
  CHECK(divergence(a, b).item() == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("divergence carries no gradient into the original side") {
  Tensor orig = Tensor::from({1, 2}, {0.3, -0.2}, true);
  Tensor masked = Tensor::from({1, 2}, {-0.1, 0.4}, true);
  backward(sum(divergence(orig, masked)));
  CHECK((!orig.has_grad() || (orig.grad()[0] == 0.0 && orig.grad()[1] == 0.0)));
  CHECK(masked.has_grad());
}

TEST_CASE("Lagrange multiplier rises while the constraint is violated and stays non-negative") {
  LagrangeMultiplier lambda(1e-2);
  CHECK(lambda.value() == 0.0);
  const double beta = 0.03;
  // First RMSProp ascent step: lr * g / sqrt((1 - decay) g^2 + eps).
  const double g = 0.5 - beta;
  lambda.zero_grad();
  backward(lambda.lagrangian_term(Tensor::scalar(0.5), beta));
  lambda.step();
  CHECK(lambda.value() == doctest::Approx(1e-2 * g / std::sqrt(0.01 * g * g + 1e-8)).epsilon(1e-12));
  double previous = lambda.value();
  for (int i = 0; i < 20; ++i) {
    lambda.zero_grad();
    backward(lambda.lagrangian_term(Tensor::scalar(0.5), beta));
    lambda.step();
    CHECK(lambda.value() > previous);
    previous = lambda.value();
  }
  for (int i = 0; i < 500; ++i) {
    lambda.zero_grad();
    backward(lambda.lagrangian_term(Tensor::scalar(0.0), beta));
    lambda.step();
    CHECK(lambda.value() >= 0.0);
  }
  CHECK(lambda.value() == 0.0);
}

TEST_CASE("vector multipliers move independently") {
  LagrangeMultiplier lambda(1e-2, 0.0, 2);
  backward(lambda.lagrangian_term(Tensor::from({2, 1}, {1.0, 0.0}), 0.03));
  lambda.step();
  CHECK(lambda.tensor().data()[0] > 0.0);
  CHECK(lambda.tensor().data()[1] == 0.0);
  CHECK_THROWS_AS(lambda.lagrangian_term(Tensor::zeros({3, 1}), 0.03), ShapeError);
}

TEST_CASE("huge tolerance lets the penalty close every gate") {
  const RelationalGnn& model = trained_model();
  const Dataset& ds = default_dataset();
  std::vector<GnnInput> train, validation;
  for (std::size_t i = 0; i < 320; ++i) train.push_back(make_star_input(ds.train[i], 6));
  for (std::size_t i = 0; i < 100; ++i) validation.push_back(make_star_input(ds.validation[i], 6));
  GraphMaskConfig cfg;
  cfg.beta = 1e3;
  cfg.learning_rate = 5e-2;
  cfg.joint_epochs = 20;
  const GraphMaskTrainingResult out = train_graphmask(model, train, validation, cfg);
  CHECK(out.validation.retained == 0);
  CHECK(out.history.back().lambda == 0.0);
}

TEST_CASE("unreachable tolerance raises ConstraintNotSatisfied with the best divergence") {
  const RelationalGnn& model = trained_model();
  const Dataset& ds = default_dataset();
  std::vector<GnnInput> train, validation;
  for (std::size_t i = 0; i < 64; ++i) train.push_back(make_star_input(ds.train[i], 6));
  for (std::size_t i = 0; i < 32; ++i) validation.push_back(make_star_input(ds.validation[i], 6));
  GraphMaskConfig cfg;
  cfg.beta = 1e-12;
  cfg.learning_rate = 0.5;
  cfg.joint_epochs = 1;
  try {
    (void)train_graphmask(model, train, validation, cfg);
    FAIL("expected ConstraintNotSatisfied");
  } catch (const ConstraintNotSatisfied& e) {
    CHECK(e.best_divergence() >= 0.0);
  }
}

TEST_CASE("all-open classifier explains with every edge and zero divergence") {
  const RelationalGnn& model = trained_model();
  const GnnInput in = make_star_input(default_dataset().test[3], 6);
  const AttributionResult r = explain(GateClassifier::all_open(1, 50, 50), model, in, 3);
  CHECK(r.example_id == 3);
  CHECK(r.retained_count() == in.num_edges());
  CHECK(r.divergence == 0.0);
  CHECK(r.original_prediction == r.masked_prediction);
}

TEST_CASE("non-amortized gates on a negative example drop every edge") {
  const RelationalGnn& model = trained_model();
  // count(x) < count(y): the prediction survives with nothing retained.
  const GnnInput in = make_star_input(star({1, 1, 1, 0, 2, 3, 4}, 0, 1), 6);
  const NonAmortizedResult out = train_nonamortized(model, in, NonAmortizedConfig{});
  CHECK(out.satisfied);
  CHECK(out.run.retained_count <= 1);
  CHECK(out.run.divergence.item() <= 0.03);
}

TEST_CASE("batched non-amortized runs are reproducible and report feasibility per graph") {
  const RelationalGnn& model = trained_model();
  const auto& test = default_dataset().test;
  std::vector<GnnInput> inputs;
  for (std::size_t i = 0; i < 4; ++i) inputs.push_back(make_star_input(test[i], 6));
  NonAmortizedConfig cfg;
  cfg.steps = 60;
  const auto a = train_nonamortized(model, inputs, cfg);
  const auto b = train_nonamortized(model, inputs, cfg);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a[i].run.hard == b[i].run.hard);
    CHECK(a[i].run.original_logits.rows() == 1);
    CHECK(a[i].satisfied == (a[i].run.divergence.item() <= cfg.beta));
  }
}

TEST_CASE("classifier checkpoints round-trip") {
  const GateClassifier c(2, 6, 5, 13);
  const GateClassifier back(checkpoint_from_json(checkpoint_to_json(c.parameters())));
  CHECK(back.num_layers() == 2);
  CHECK(back.state_dim() == 6);
  CHECK(back.hidden_dim() == 5);
  CHECK(checkpoint_to_json(back.parameters()) == checkpoint_to_json(c.parameters()));
}
