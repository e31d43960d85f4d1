#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace graphmask {

struct Edge {
  std::size_t source = 0;
  std::size_t target = 0;
  std::size_t relation = 0;

  bool operator==(const Edge&) const = default;
};

/// Directed multigraph. Edge index is the identifier every gate and
/// attribution structure refers to, so edge order is never changed.
struct Graph {
  std::size_t num_vertices = 0;
  std::vector<Edge> edges;
  // layer_active[k][e]: whether edge e carries a message at layer k.
  // Empty means every edge is active in every layer.
  std::vector<std::vector<bool>> layer_active;

  std::size_t num_edges() const { return edges.size(); }
  bool active(std::size_t layer, std::size_t edge) const;
  /// Throws std::invalid_argument on out-of-range endpoints.
  void validate() const;
};

/// Disjoint union; vertex and edge indices of later graphs are offset.
Graph disjoint_union(const std::vector<const Graph*>& parts);

/// One star-graph counting instance. Leaf i (vertex i + 1) has one edge to
/// the centroid (vertex 0) whose relation is the leaf's colour.
struct StarGraphExample {
  std::vector<int> leaf_colors;
  std::pair<int, int> query{0, 1};
  bool label = false;

  std::size_t num_leaves() const { return leaf_colors.size(); }
  Graph graph() const;
  /// count(x) > count(y); ties are false.
  bool compute_label() const;
};

constexpr std::size_t kMinLeaves = 6;
constexpr std::size_t kMaxLeaves = 12;

/// Edge i is relevant iff its colour is one of the two queried colours.
std::vector<bool> gold_mask(const StarGraphExample& example);

struct SplitRatios {
  double train = 10.0 / 12.0;
  double validation = 1.0 / 12.0;
  double test = 1.0 / 12.0;
};

struct Dataset {
  std::vector<StarGraphExample> train;
  std::vector<StarGraphExample> validation;
  std::vector<StarGraphExample> test;
};

struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::size_t count = 12000;
  int num_colors = 6;
  SplitRatios split{};
  double min_positive_rate = 0.3;
  double max_positive_rate = 0.7;
  std::size_t max_attempts = 1000;
};

/// Deterministic in the seed. Whole draws whose positive-label rate falls
/// outside [min_positive_rate, max_positive_rate] are rejected and redrawn.
Dataset generate_dataset(const GeneratorConfig& config);

// JSON Lines: {"leaves":[...],"query":[x,y],"label":bool}
std::string example_to_json(const StarGraphExample& example);
StarGraphExample example_from_json(const std::string& line);
void write_jsonl(const std::string& path, const std::vector<StarGraphExample>& examples);
std::vector<StarGraphExample> read_jsonl(const std::string& path);

/// Number of colours referenced by the examples (max colour id + 1).
int infer_num_colors(const std::vector<StarGraphExample>& examples);

}  // namespace graphmask
