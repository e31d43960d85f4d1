#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "graphmask/graphs.hpp"
#include "json.hpp"

namespace graphmask {

/// Per-layer, per-edge attribution for one example, from any method.
struct AttributionResult {
  std::size_t example_id = 0;
  std::vector<std::vector<double>> scores;  // [layer][edge]
  std::vector<std::vector<bool>> retained;  // [layer][edge]
  int original_prediction = 0;
  int masked_prediction = 0;
  double divergence = 0.0;
  // Set when the masked model leaves the divergence tolerance.
  bool flagged = false;
  std::optional<StarGraphExample> example;

  std::size_t num_layers() const { return scores.size(); }
  std::size_t retained_count() const;
};

struct AttributionSet {
  std::string method;
  // Binarisation threshold for soft methods; nullopt for methods that decide
  // hard gates themselves.
  std::optional<double> threshold;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<AttributionResult> results;
};

nlohmann::json attribution_to_json(const AttributionResult& result);
AttributionResult attribution_from_json(const nlohmann::json& j);
nlohmann::json attribution_set_to_json(const AttributionSet& set);
AttributionSet attribution_set_from_json(const nlohmann::json& j);
void write_attribution_file(const std::string& path, const AttributionSet& set);
AttributionSet read_attribution_file(const std::string& path);

}  // namespace graphmask
