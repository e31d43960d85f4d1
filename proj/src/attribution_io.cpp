#include "graphmask/attribution.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace graphmask {

using nlohmann::json;

std::size_t AttributionResult::retained_count() const {
  std::size_t n = 0;
  for (const auto& layer : retained) {
    for (bool r : layer) n += r ? 1 : 0;
  }
  return n;
}

json attribution_to_json(const AttributionResult& result) {
  json layers = json::array();
  for (std::size_t k = 0; k < result.scores.size(); ++k) {
    json edges = json::array();
    for (std::size_t e = 0; e < result.scores[k].size(); ++e) {
      edges.push_back({{"edge", e}, {"prob", result.scores[k][e]}, {"hard", result.retained[k][e]}});
    }
    layers.push_back(std::move(edges));
  }
  json j = {{"id", result.example_id},
            {"original_prediction", result.original_prediction},
            {"masked_prediction", result.masked_prediction},
            {"divergence", result.divergence},
            {"flagged", result.flagged},
            {"layers", std::move(layers)}};
  if (result.example) {
    j["leaves"] = result.example->leaf_colors;
    j["query"] = {result.example->query.first, result.example->query.second};
    j["label"] = result.example->label;
  }
  return j;
}

AttributionResult attribution_from_json(const json& j) {
  AttributionResult r;
  r.example_id = j.value("id", std::size_t{0});
  r.original_prediction = j.at("original_prediction").get<int>();
  r.masked_prediction = j.at("masked_prediction").get<int>();
  r.divergence = j.at("divergence").get<double>();
  r.flagged = j.value("flagged", false);
  for (const auto& layer : j.at("layers")) {
    std::vector<double> scores(layer.size());
    std::vector<bool> hard(layer.size());
    for (const auto& edge : layer) {
      const auto e = edge.at("edge").get<std::size_t>();
      if (e >= layer.size()) throw std::invalid_argument("edge index out of range in attribution");
      scores[e] = edge.at("prob").get<double>();
      hard[e] = edge.at("hard").get<bool>();
    }
    r.scores.push_back(std::move(scores));
    r.retained.push_back(std::move(hard));
  }
  if (j.contains("leaves")) {
    StarGraphExample ex;
    ex.leaf_colors = j.at("leaves").get<std::vector<int>>();
    const auto q = j.at("query").get<std::vector<int>>();
    ex.query = {q.at(0), q.at(1)};
    ex.label = j.value("label", ex.compute_label());
    r.example = ex;
  }
  return r;
}

json attribution_set_to_json(const AttributionSet& set) {
  json examples = json::array();
  for (const auto& r : set.results) examples.push_back(attribution_to_json(r));
  json j = {{"method", set.method}, {"metadata", set.metadata}, {"examples", std::move(examples)}};
  j["threshold"] = set.threshold ? json(*set.threshold) : json(nullptr);
  return j;
}

AttributionSet attribution_set_from_json(const json& j) {
  AttributionSet set;
  set.method = j.at("method").get<std::string>();
  if (j.contains("threshold") && !j.at("threshold").is_null()) {
    set.threshold = j.at("threshold").get<double>();
  }
  set.metadata = j.value("metadata", json::object());
  for (const auto& e : j.at("examples")) set.results.push_back(attribution_from_json(e));
  return set;
}

void write_attribution_file(const std::string& path, const AttributionSet& set) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << attribution_set_to_json(set).dump(1) << '\n';
}

AttributionSet read_attribution_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return attribution_set_from_json(json::parse(buffer.str()));
}

}  // namespace graphmask
