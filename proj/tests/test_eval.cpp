#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "graphmask/eval.hpp"
#include "graphmask/graphmask.hpp"
#include "support.hpp"
#include "trained.hpp"

using namespace graphmask;
using namespace graphmask::testing;

namespace {

AttributionResult record(std::size_t id, std::vector<std::vector<double>> scores) {
  AttributionResult r;
  r.example_id = id;
  for (const auto& layer : scores) {
    std::vector<bool> keep;
    for (double s : layer) keep.push_back(s > 0.5);
    r.retained.push_back(keep);
  }
  r.scores = std::move(scores);
  return r;
}

// Fleiss' kappa written out for binary ratings, [rater][item].
double longhand_kappa(const std::vector<std::vector<bool>>& d) {
  const double n = static_cast<double>(d.size());
  const std::size_t items = d[0].size();
  double agreement = 0.0, ones = 0.0;
  for (std::size_t i = 0; i < items; ++i) {
    double yes = 0.0;
    for (const auto& rater : d) yes += rater[i];
    const double no = n - yes;
    agreement += (yes * (yes - 1.0) + no * (no - 1.0)) / (n * (n - 1.0));
    ones += yes;
  }
  const double p_bar = agreement / static_cast<double>(items);
  const double p1 = ones / (n * static_cast<double>(items));
  const double pe = p1 * p1 + (1.0 - p1) * (1.0 - p1);
  return (p_bar - pe) / (1.0 - pe);
}

}  // namespace

TEST_CASE("faithfulness by hand") {
  const Faithfulness half = faithfulness({true, false}, {true, true});
  CHECK(half.precision == doctest::Approx(100.0));
  CHECK(half.recall == doctest::Approx(50.0));
  CHECK(half.f1 == doctest::Approx(200.0 / 3.0));
  const Faithfulness same = faithfulness({true, false, true}, {true, false, true});
  CHECK(same.precision == 100.0);
  CHECK(same.recall == 100.0);
  CHECK(same.f1 == 100.0);
  const Faithfulness none = faithfulness({false, false}, {true, false});
  CHECK(none.precision == 100.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK_THROWS_AS(faithfulness({true, false}, {false, false}), std::invalid_argument);
  CHECK_THROWS_AS(faithfulness({true}, {true, false}), std::invalid_argument);
}

TEST_CASE("micro pools gates while macro averages examples") {
  // Example 0: gold {0, 1}, predicted {0, 1}. Example 1: gold {0, 1, 2, 3},
  // predicted {0}.
  const std::vector<AttributionResult> results{record(0, {{0.9, 0.9, 0.1}}),
                                               record(1, {{0.9, 0.1, 0.1, 0.1}})};
  const std::vector<std::vector<bool>> gold{{true, true, false}, {true, true, true, true}};
  const Faithfulness micro = micro_faithfulness(results, gold);
  CHECK(micro.true_positives == 3);
  CHECK(micro.false_negatives == 3);
  CHECK(micro.precision == doctest::Approx(100.0));
  CHECK(micro.recall == doctest::Approx(50.0));
  const Faithfulness macro = macro_faithfulness(results, gold);
  CHECK(macro.recall == doctest::Approx((100.0 + 25.0) / 2.0));
  CHECK(macro.f1 == doctest::Approx((100.0 + 40.0) / 2.0));
}

TEST_CASE("Fleiss kappa matches the longhand formula on three raters and four items") {
  const std::vector<std::vector<bool>> d{{true, true, false, false},
                                         {true, false, false, true},
                                         {true, true, false, true}};
  const KappaResult k = fleiss_kappa(d);
  CHECK(k.kappa == doctest::Approx(longhand_kappa(d)).epsilon(1e-12));
  CHECK(k.kappa == doctest::Approx(11.0 / 35.0).epsilon(1e-12));
  CHECK(k.observed_agreement == doctest::Approx(2.0 / 3.0));
  CHECK(k.expected_agreement == doctest::Approx(37.0 / 72.0));
  CHECK_FALSE(k.degenerate);
}

TEST_CASE("Fleiss kappa extremes") {
  const KappaResult agree = fleiss_kappa({{true, false, true}, {true, false, true}, {true, false, true}});
  CHECK(agree.kappa == doctest::Approx(1.0));
  CHECK_FALSE(agree.degenerate);
  const KappaResult single = fleiss_kappa({{false, false}, {false, false}});
  CHECK(single.kappa == 1.0);
  CHECK(single.degenerate);
  CHECK_THROWS(fleiss_kappa({{true, false}}));
  CHECK_THROWS(fleiss_kappa({{true, false}, {true}}));
}

TEST_CASE("Fleiss kappa is near zero for independent random raters") {
  std::mt19937_64 rng(77);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::vector<bool>> d(5, std::vector<bool>(10000));
  for (auto& rater : d) {
    for (std::size_t i = 0; i < rater.size(); ++i) rater[i] = coin(rng);
  }
  const KappaResult k = fleiss_kappa(d);
  CHECK(std::abs(k.kappa) < 0.05);
  CHECK(k.kappa == doctest::Approx(longhand_kappa(d)).epsilon(1e-12));
}

TEST_CASE("degradation endpoints match the masked and fully baselined models") {
  const RelationalGnn& model = trained_model();
  const auto& test = default_dataset().test;
  std::vector<GnnInput> inputs;
  std::vector<int> labels;
  std::vector<AttributionResult> attributions;
  for (std::size_t i = 0; i < 200; ++i) {
    inputs.push_back(make_star_input(test[i], 6));
    labels.push_back(test[i].label ? 1 : 0);
    AttributionResult r;
    r.example_id = i;
    r.retained = {gold_mask(test[i])};
    r.scores = {std::vector<double>(test[i].num_leaves(), 1.0)};
    attributions.push_back(r);
  }
  std::mt19937_64 rng(3);
  const std::vector<Tensor> baselines{random_tensor({50}, rng, 0, 0.5, false)};
  auto accuracy_with = [&](bool keep_retained) {
    double correct = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      std::vector<double> z;
      for (bool b : attributions[i].retained[0]) z.push_back(keep_retained && b ? 1.0 : 0.0);
      correct += argmax_rows(gated_logits(model, inputs[i], {z}, baselines)).front() == labels[i];
    }
    return 100.0 * correct / static_cast<double>(inputs.size());
  };
  const auto curve = degradation_curve(model, inputs, labels, attributions, baselines, {0.0, 0.5, 1.0}, 5, 11);
  REQUIRE(curve.size() == 3);
  CHECK(curve[0].mean_accuracy == doctest::Approx(accuracy_with(false)));
  CHECK(curve[0].stdev_accuracy == 0.0);
  CHECK(curve[2].mean_accuracy == doctest::Approx(accuracy_with(true)));
  CHECK(curve[2].stdev_accuracy == 0.0);
  CHECK(curve[1].accuracies.size() == 5);
  const auto again = degradation_curve(model, inputs, labels, attributions, baselines, {0.0, 0.5, 1.0}, 5, 11);
  CHECK(again[1].accuracies == curve[1].accuracies);
}

TEST_CASE("layer attribution mass") {
  CHECK(layer_attribution_mass({record(0, {{0.2, 0.7}})}) == std::vector<double>{100.0});
  const auto even = layer_attribution_mass({record(0, {{0.5, 0.5}, {0.5, 0.5}})});
  CHECK(even[0] == doctest::Approx(50.0));
  CHECK(even[1] == doctest::Approx(50.0));
  CHECK_THROWS(layer_attribution_mass({record(0, {{0.0, 0.0}})}));

  // Three-layer model with the top layer's gates forced shut.
  std::mt19937_64 rng(5);
  const GnnConfig cfg = deep_config(3, 2, 4);
  const RelationalGnn model(cfg, 4);
  const GnnInput in = chain_input(5, 2, 4, rng);
  const std::size_t e = in.num_edges();
  const std::vector<Tensor> locations{Tensor::zeros({e, 1}), Tensor::full({e, 1}, 1.0),
                                      Tensor::full({e, 1}, -100.0)};
  const std::vector<Tensor> baselines(3, Tensor::zeros({cfg.state_dim}));
  const MaskedRun run = masked_forward(model, in, locations, baselines, {}, GateSampling::hard);
  const auto mass = layer_attribution_mass({attribution_from_run(run, 0, 0.03)});
  CHECK(mass[2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mass[0] + mass[1] + mass[2] == doctest::Approx(100.0));
}

TEST_CASE("retained fraction per layer") {
  const auto f = retained_fraction_per_layer({record(0, {{0.9, 0.1}, {0.9, 0.9}}), record(1, {{0.1, 0.1}, {0.9, 0.1}})});
  REQUIRE(f.size() == 2);
  CHECK(f[0] == doctest::Approx(0.25));
  CHECK(f[1] == doctest::Approx(0.75));
}

TEST_CASE("attribution reports and long-format csv") {
  const std::vector<StarGraphExample> examples{star({0, 0, 1, 2, 3, 4}, 0, 1), star({1, 1, 0, 2, 3, 4}, 0, 1)};
  AttributionSet set;
  set.method = "graphmask";
  AttributionResult a = record(0, {{0.9, 0.9, 0.9, 0.1, 0.1, 0.1}});
  a.original_prediction = a.masked_prediction = 1;
  AttributionResult b = record(1, {{0.9, 0.1, 0.1, 0.1, 0.1, 0.1}});
  b.original_prediction = 0;
  b.masked_prediction = 1;
  b.divergence = 0.5;
  b.flagged = true;
  set.results = {b, a};
  const FaithfulnessReport r = evaluate_attributions(set, examples);
  CHECK(r.micro.true_positives == 4);
  CHECK(r.micro.false_negatives == 2);
  CHECK(r.original_accuracy == doctest::Approx(100.0));
  CHECK(r.masked_accuracy == doctest::Approx(50.0));
  CHECK(r.accuracy_delta == doctest::Approx(-50.0));
  CHECK(r.mean_divergence == doctest::Approx(0.25));
  CHECK(r.flagged == 1);

  FaithfulnessReport other = r;
  other.method = "erasure";
  const std::string csv = reports_to_csv({r, other});
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "method,metric,value");
  std::set<std::string> methods;
  while (std::getline(in, line)) methods.insert(line.substr(0, line.find(',')));
  CHECK(methods == std::set<std::string>{"graphmask", "erasure"});
  const auto j = report_to_json(r);
  CHECK(j.at("method") == "graphmask");
}
