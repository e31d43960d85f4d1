#include "graphmask/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace graphmask {

using nlohmann::json;

bool Graph::active(std::size_t layer, std::size_t edge) const {
  if (layer_active.empty()) return true;
  return layer_active.at(layer).at(edge);
}

void Graph::validate() const {
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    if (e.source >= num_vertices || e.target >= num_vertices) {
      throw std::invalid_argument("edge " + std::to_string(i) + " (" + std::to_string(e.source) +
                                  " -> " + std::to_string(e.target) + ") outside " +
                                  std::to_string(num_vertices) + " vertices");
    }
  }
  for (const auto& layer : layer_active) {
    if (layer.size() != edges.size()) {
      throw std::invalid_argument("per-layer edge validity has wrong length");
    }
  }
}

Graph disjoint_union(const std::vector<const Graph*>& parts) {
  Graph out;
  std::size_t num_layers = 0;
  for (const Graph* g : parts) num_layers = std::max(num_layers, g->layer_active.size());
  out.layer_active.resize(num_layers);
  for (const Graph* g : parts) {
    for (const Edge& e : g->edges) {
      out.edges.push_back({e.source + out.num_vertices, e.target + out.num_vertices, e.relation});
    }
    for (std::size_t k = 0; k < num_layers; ++k) {
      for (std::size_t i = 0; i < g->edges.size(); ++i) {
        const bool on = g->layer_active.empty() || (k < g->layer_active.size() && g->layer_active[k][i]);
        out.layer_active[k].push_back(on);
      }
    }
    out.num_vertices += g->num_vertices;
  }
  return out;
}

Graph StarGraphExample::graph() const {
  Graph g;
  g.num_vertices = leaf_colors.size() + 1;
  g.edges.reserve(leaf_colors.size());
  for (std::size_t i = 0; i < leaf_colors.size(); ++i) {
    g.edges.push_back({i + 1, 0, static_cast<std::size_t>(leaf_colors[i])});
  }
  return g;
}

bool StarGraphExample::compute_label() const {
  const auto x = std::count(leaf_colors.begin(), leaf_colors.end(), query.first);
  const auto y = std::count(leaf_colors.begin(), leaf_colors.end(), query.second);
  return x > y;
}

std::vector<bool> gold_mask(const StarGraphExample& example) {
  std::vector<bool> mask(example.leaf_colors.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int c = example.leaf_colors[i];
    mask[i] = c == example.query.first || c == example.query.second;
  }
  return mask;
}

namespace {

StarGraphExample draw_example(std::mt19937_64& rng, int num_colors) {
  std::uniform_int_distribution<std::size_t> leaves(kMinLeaves, kMaxLeaves);
  std::uniform_int_distribution<int> color(0, num_colors - 1);
  // Ordered distinct pairs: pick x, then y among the remaining colours.
  std::uniform_int_distribution<int> other(0, num_colors - 2);

  StarGraphExample ex;
  ex.leaf_colors.resize(leaves(rng));
  for (int& c : ex.leaf_colors) c = color(rng);
  const int x = color(rng);
  int y = other(rng);
  if (y >= x) ++y;
  ex.query = {x, y};
  ex.label = ex.compute_label();
  return ex;
}

}  // namespace

Dataset generate_dataset(const GeneratorConfig& config) {
  if (config.count == 0) throw std::invalid_argument("count must be positive");
  if (config.num_colors < 2) throw std::invalid_argument("need at least two colours");
  const SplitRatios& s = config.split;
  if (s.train < 0 || s.validation < 0 || s.test < 0 ||
      std::abs(s.train + s.validation + s.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");
  }

  std::mt19937_64 rng(config.seed);
  std::vector<StarGraphExample> all;
  bool balanced = false;
  for (std::size_t attempt = 0; attempt < config.max_attempts && !balanced; ++attempt) {
    all.clear();
    std::size_t positives = 0;
    for (std::size_t i = 0; i < config.count; ++i) {
      all.push_back(draw_example(rng, config.num_colors));
      positives += all.back().label ? 1 : 0;
    }
    const double rate = static_cast<double>(positives) / static_cast<double>(config.count);
    balanced = rate >= config.min_positive_rate && rate <= config.max_positive_rate;
  }
  if (!balanced) {
    throw std::invalid_argument("cannot reach a positive-label rate in [" +
                                std::to_string(config.min_positive_rate) + ", " +
                                std::to_string(config.max_positive_rate) + "] with count " +
                                std::to_string(config.count));
  }

  const auto n = static_cast<double>(config.count);
  const auto n_val = static_cast<std::size_t>(std::llround(n * s.validation));
  const auto n_test = static_cast<std::size_t>(std::llround(n * s.test));
  if (n_val + n_test > config.count) throw std::invalid_argument("split sizes exceed count");
  const std::size_t n_train = config.count - n_val - n_test;

  Dataset out;
  auto it = all.begin();
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  it += static_cast<std::ptrdiff_t>(n_train);
  out.validation.assign(it, it + static_cast<std::ptrdiff_t>(n_val));
  it += static_cast<std::ptrdiff_t>(n_val);
  out.test.assign(it, all.end());
  return out;
}

std::string example_to_json(const StarGraphExample& example) {
  json j = {{"leaves", example.leaf_colors},
            {"query", {example.query.first, example.query.second}},
            {"label", example.label}};
  return j.dump();
}

StarGraphExample example_from_json(const std::string& line) {
  const json j = json::parse(line);
  StarGraphExample ex;
  ex.leaf_colors = j.at("leaves").get<std::vector<int>>();
  const auto q = j.at("query").get<std::vector<int>>();
  if (q.size() != 2) throw std::invalid_argument("query must hold two colours");
  if (q[0] == q[1]) throw std::invalid_argument("query colours must differ");
  ex.query = {q[0], q[1]};
  for (int c : ex.leaf_colors) {
    if (c < 0) throw std::invalid_argument("negative colour id");
  }
  ex.label = j.at("label").get<bool>();
  if (ex.label != ex.compute_label()) {
    throw std::invalid_argument("stored label disagrees with colour counts");
  }
  return ex;
}

void write_jsonl(const std::string& path, const std::vector<StarGraphExample>& examples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& ex : examples) out << example_to_json(ex) << '\n';
}

std::vector<StarGraphExample> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::vector<StarGraphExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(example_from_json(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

int infer_num_colors(const std::vector<StarGraphExample>& examples) {
  int top = 1;
  for (const auto& ex : examples) {
    for (int c : ex.leaf_colors) top = std::max(top, c);
    top = std::max({top, ex.query.first, ex.query.second});
  }
  return top + 1;
}

}  // namespace graphmask
