#include "graphmask/eval.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace graphmask {

using nlohmann::json;

namespace {

Faithfulness from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp + fn == 0) throw std::invalid_argument("gold standard has no relevant edge");
  Faithfulness f;
  f.true_positives = tp;
  f.false_positives = fp;
  f.false_negatives = fn;
  f.precision = tp + fp == 0 ? 100.0 : 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp);
  f.recall = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn);
  f.f1 = f.precision + f.recall == 0.0 ? 0.0 : 2.0 * f.precision * f.recall / (f.precision + f.recall);
  return f;
}

void count_example(const AttributionResult& r, const std::vector<bool>& gold, std::size_t& tp,
                   std::size_t& fp, std::size_t& fn) {
  for (const auto& layer : r.retained) {
    if (layer.size() != gold.size()) {
      throw std::invalid_argument("example " + std::to_string(r.example_id) + " has " +
                                  std::to_string(layer.size()) + " gates per layer but " +
                                  std::to_string(gold.size()) + " gold edges");
    }
    for (std::size_t e = 0; e < gold.size(); ++e) {
      tp += layer[e] && gold[e];
      fp += layer[e] && !gold[e];
      fn += !layer[e] && gold[e];
    }
  }
}

void check_aligned(const std::vector<AttributionResult>& results,
                   const std::vector<std::vector<bool>>& gold) {
  if (results.size() != gold.size()) {
    throw std::invalid_argument("got " + std::to_string(results.size()) + " attributions for " +
                                std::to_string(gold.size()) + " gold masks");
  }
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Faithfulness faithfulness(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("prediction and gold masks differ in length");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    tp += predicted[i] && gold[i];
    fp += predicted[i] && !gold[i];
    fn += !predicted[i] && gold[i];
  }
  return from_counts(tp, fp, fn);
}

Faithfulness micro_faithfulness(const std::vector<AttributionResult>& results,
                                const std::vector<std::vector<bool>>& gold) {
  check_aligned(results, gold);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < results.size(); ++i) count_example(results[i], gold[i], tp, fp, fn);
  return from_counts(tp, fp, fn);
}

Faithfulness macro_faithfulness(const std::vector<AttributionResult>& results,
                                const std::vector<std::vector<bool>>& gold) {
  check_aligned(results, gold);
  Faithfulness total;
  std::size_t n = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::size_t tp = 0, fp = 0, fn = 0;
    count_example(results[i], gold[i], tp, fp, fn);
    if (tp + fn == 0) continue;
    const Faithfulness f = from_counts(tp, fp, fn);
    total.precision += f.precision;
    total.recall += f.recall;
    total.f1 += f.f1;
    total.true_positives += tp;
    total.false_positives += fp;
    total.false_negatives += fn;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("gold standard has no relevant edge");
  total.precision /= static_cast<double>(n);
  total.recall /= static_cast<double>(n);
  total.f1 /= static_cast<double>(n);
  return total;
}

KappaResult fleiss_kappa(const std::vector<std::vector<bool>>& decisions) {
  const std::size_t raters = decisions.size();
  if (raters < 2) throw std::invalid_argument("Fleiss' kappa needs at least two raters");
  const std::size_t items = decisions.front().size();
  if (items == 0) throw std::invalid_argument("Fleiss' kappa needs at least one item");
  for (const auto& row : decisions) {
    if (row.size() != items) throw std::invalid_argument("every rater must rate every item");
  }
  const double n = static_cast<double>(raters);
  double agreement = 0.0;
  double positives = 0.0;
  for (std::size_t i = 0; i < items; ++i) {
    double yes = 0.0;
    for (std::size_t r = 0; r < raters; ++r) yes += decisions[r][i] ? 1.0 : 0.0;
    const double no = n - yes;
    agreement += (yes * (yes - 1.0) + no * (no - 1.0)) / (n * (n - 1.0));
    positives += yes;
  }
  KappaResult k;
  k.observed_agreement = agreement / static_cast<double>(items);
  const double p_yes = positives / (n * static_cast<double>(items));
  k.expected_agreement = p_yes * p_yes + (1.0 - p_yes) * (1.0 - p_yes);
  if (k.expected_agreement >= 1.0) {
    k.degenerate = true;
    k.kappa = 1.0;
    return k;
  }
  k.kappa = (k.observed_agreement - k.expected_agreement) / (1.0 - k.expected_agreement);
  return k;
}

std::vector<DegradationPoint> degradation_curve(const RelationalGnn& model,
                                               const std::vector<GnnInput>& inputs,
                                               const std::vector<int>& labels,
                                               const std::vector<AttributionResult>& attributions,
                                               const std::vector<Tensor>& baselines,
                                               const std::vector<double>& fractions,
                                               std::size_t resamples, std::uint64_t seed) {
  if (inputs.empty() || inputs.size() != labels.size() || inputs.size() != attributions.size()) {
    throw std::invalid_argument("degradation curve needs one label and attribution per input");
  }
  if (resamples == 0) throw std::invalid_argument("need at least one resample");
  const std::size_t layers = model.config().num_layers;
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("fractions must lie in [0, 1]");
  }
  const GnnInput batch = merge_inputs(inputs);
  std::mt19937_64 rng(seed);
  std::vector<DegradationPoint> curve;
  for (double f : fractions) {
    DegradationPoint point;
    point.fraction = f;
    std::bernoulli_distribution keep(f);
    for (std::size_t s = 0; s < resamples; ++s) {
      std::vector<std::vector<double>> gates(layers);
      for (std::size_t k = 0; k < layers; ++k) {
        gates[k].reserve(batch.num_edges());
        for (const AttributionResult& a : attributions) {
          if (a.retained.size() != layers) {
            throw std::invalid_argument("attribution layer count does not match the model");
          }
          for (bool r : a.retained[k]) gates[k].push_back(r && keep(rng) ? 1.0 : 0.0);
        }
      }
      const auto preds = argmax_rows(gated_logits(model, batch, gates, baselines));
      std::size_t correct = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) correct += preds[i] == labels[i];
      point.accuracies.push_back(100.0 * static_cast<double>(correct) /
                                 static_cast<double>(labels.size()));
    }
    point.mean_accuracy = mean_of(point.accuracies);
    double var = 0.0;
    for (double a : point.accuracies) var += (a - point.mean_accuracy) * (a - point.mean_accuracy);
    point.stdev_accuracy =
        resamples > 1 ? std::sqrt(var / static_cast<double>(resamples - 1)) : 0.0;
    curve.push_back(std::move(point));
  }
  return curve;
}

std::vector<double> layer_attribution_mass(const std::vector<AttributionResult>& results) {
  if (results.empty()) throw std::invalid_argument("no attributions to summarise");
  const std::size_t layers = results.front().num_layers();
  std::vector<double> mass(layers, 0.0);
  for (const AttributionResult& r : results) {
    if (r.num_layers() != layers) throw std::invalid_argument("attributions differ in layer count");
    std::vector<double> per_layer(layers, 0.0);
    for (std::size_t k = 0; k < layers; ++k) {
      for (double s : r.scores[k]) per_layer[k] += std::abs(s);
    }
    const double total = std::accumulate(per_layer.begin(), per_layer.end(), 0.0);
    if (total <= 0.0) {
      throw std::invalid_argument("example " + std::to_string(r.example_id) +
                                  " has zero total attribution");
    }
    for (std::size_t k = 0; k < layers; ++k) mass[k] += 100.0 * per_layer[k] / total;
  }
  for (double& m : mass) m /= static_cast<double>(results.size());
  return mass;
}

std::vector<double> retained_fraction_per_layer(const std::vector<AttributionResult>& results) {
  if (results.empty()) return {};
  const std::size_t layers = results.front().num_layers();
  std::vector<double> kept(layers, 0.0);
  std::vector<double> total(layers, 0.0);
  for (const AttributionResult& r : results) {
    for (std::size_t k = 0; k < layers && k < r.retained.size(); ++k) {
      for (bool b : r.retained[k]) kept[k] += b ? 1.0 : 0.0;
      total[k] += static_cast<double>(r.retained[k].size());
    }
  }
  for (std::size_t k = 0; k < layers; ++k) kept[k] = total[k] > 0.0 ? kept[k] / total[k] : 0.0;
  return kept;
}

FaithfulnessReport evaluate_attributions(const AttributionSet& set,
                                         const std::vector<StarGraphExample>& examples) {
  if (set.results.empty()) throw std::invalid_argument("attribution set '" + set.method + "' is empty");
  std::vector<std::vector<bool>> gold;
  std::size_t original_correct = 0;
  std::size_t masked_correct = 0;
  double divergence = 0.0;
  FaithfulnessReport report;
  report.method = set.method;
  report.threshold = set.threshold;
  for (const AttributionResult& r : set.results) {
    if (r.example_id >= examples.size()) {
      throw std::out_of_range("attribution refers to example " + std::to_string(r.example_id) +
                              " but only " + std::to_string(examples.size()) + " examples exist");
    }
    const StarGraphExample& ex = examples[r.example_id];
    gold.push_back(gold_mask(ex));
    const int label = ex.label ? 1 : 0;
    original_correct += r.original_prediction == label;
    masked_correct += r.masked_prediction == label;
    divergence += r.divergence;
    report.flagged += r.flagged;
  }
  const double n = static_cast<double>(set.results.size());
  report.micro = micro_faithfulness(set.results, gold);
  report.macro = macro_faithfulness(set.results, gold);
  report.original_accuracy = 100.0 * static_cast<double>(original_correct) / n;
  report.masked_accuracy = 100.0 * static_cast<double>(masked_correct) / n;
  report.accuracy_delta = report.masked_accuracy - report.original_accuracy;
  report.mean_divergence = divergence / n;
  report.retained_fraction = retained_fraction_per_layer(set.results);
  return report;
}

json report_to_json(const FaithfulnessReport& report) {
  auto scores = [](const Faithfulness& f) {
    return json{{"precision", f.precision}, {"recall", f.recall}, {"f1", f.f1},
                {"true_positives", f.true_positives}, {"false_positives", f.false_positives},
                {"false_negatives", f.false_negatives}};
  };
  json j = {{"method", report.method},
            {"micro", scores(report.micro)},
            {"macro", scores(report.macro)},
            {"original_accuracy", report.original_accuracy},
            {"masked_accuracy", report.masked_accuracy},
            {"accuracy_delta", report.accuracy_delta},
            {"mean_divergence", report.mean_divergence},
            {"flagged", report.flagged},
            {"retained_fraction", report.retained_fraction}};
  j["threshold"] = report.threshold ? json(*report.threshold) : json(nullptr);
  return j;
}

std::string reports_to_csv(const std::vector<FaithfulnessReport>& reports) {
  std::ostringstream out;
  out.precision(10);
  out << "method,metric,value\n";
  for (const auto& r : reports) {
    auto row = [&](const std::string& metric, double value) {
      out << r.method << ',' << metric << ',' << value << '\n';
    };
    row("precision", r.micro.precision);
    row("recall", r.micro.recall);
    row("f1", r.micro.f1);
    row("macro_precision", r.macro.precision);
    row("macro_recall", r.macro.recall);
    row("macro_f1", r.macro.f1);
    if (r.threshold) row("threshold", *r.threshold);
    row("accuracy_delta", r.accuracy_delta);
    row("mean_divergence", r.mean_divergence);
    row("flagged", static_cast<double>(r.flagged));
    for (std::size_t k = 0; k < r.retained_fraction.size(); ++k) {
      row("retained_fraction_layer" + std::to_string(k), r.retained_fraction[k]);
    }
  }
  return out.str();
}

}  // namespace graphmask
