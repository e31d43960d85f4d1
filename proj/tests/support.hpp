#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "graphmask/gnn.hpp"
#include "graphmask/graphs.hpp"
#include "graphmask/tensor.hpp"

namespace graphmask::testing {

using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> data(shape_numel(shape));
  for (double& x : data) x = u(rng);
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

/// Entries of magnitude in [lo, hi] with random sign; keeps inputs away from
/// kinks at zero.
inline Tensor signed_tensor(Shape shape, std::mt19937_64& rng, double lo = 0.2, double hi = 1.5) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> data(shape_numel(shape));
  for (double& x : data) x = coin(rng) ? u(rng) : -u(rng);
  return Tensor::from(std::move(shape), std::move(data), true);
}

/// Scalar loss sum(fn(inputs) * weights) with fixed random weights, so every
/// output element contributes with its own coefficient.
inline Fn weighted_loss(const Fn& fn, std::uint64_t seed) {
  return [fn, seed](const std::vector<Tensor>& in) {
    const Tensor out = fn(in);
    std::mt19937_64 rng(seed);
    const Tensor w = random_tensor(out.shape(), rng, -1.0, 1.0, false);
    return sum(mul(out, w));
  };
}

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over every input
/// element that requires grad, with central differences of step eps.
inline double gradient_error(const Fn& loss_fn, std::vector<Tensor> inputs, double eps = 1e-5) {
  for (Tensor& t : inputs) t.zero_grad();
  backward(loss_fn(inputs));
  double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
  for (Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      double numeric = 0.0;
      {
        NoGradGuard no_grad;
        auto data = t.mutable_data();
        const double saved = data[i];
        data[i] = saved + eps;
        const double up = loss_fn(inputs).item();
        data[i] = saved - eps;
        const double down = loss_fn(inputs).item();
        data[i] = saved;
        numeric = (up - down) / (2.0 * eps);
      }
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      norm_a += analytic[i] * analytic[i];
      norm_n += numeric * numeric;
    }
  }
  const double scale = std::max(std::sqrt(std::max(norm_a, norm_n)), 1e-12);
  return std::sqrt(diff) / scale;
}

inline StarGraphExample star(std::vector<int> colors, int x, int y) {
  StarGraphExample e;
  e.leaf_colors = std::move(colors);
  e.query = {x, y};
  e.label = e.compute_label();
  return e;
}

/// Small multi-layer relational GNN over an arbitrary graph, for property
/// tests that need more than one layer.
inline GnnInput chain_input(std::size_t vertices, std::size_t relations, std::size_t feature_dim,
                            std::mt19937_64& rng) {
  GnnInput in;
  in.graph.num_vertices = vertices;
  std::uniform_int_distribution<std::size_t> rel(0, relations - 1);
  for (std::size_t v = 0; v + 1 < vertices; ++v) {
    in.graph.edges.push_back({v + 1, v, rel(rng)});
    in.graph.edges.push_back({v, v + 1, rel(rng)});
  }
  in.features = random_tensor({vertices, feature_dim}, rng, -1.0, 1.0, false);
  for (std::size_t v = 0; v < vertices; ++v) in.feature_row.push_back(v);
  in.readout_vertices = {0};
  in.edge_offset = {0, in.graph.num_edges()};
  in.labels = {0};
  return in;
}

inline GnnConfig deep_config(std::size_t layers, std::size_t relations, std::size_t feature_dim) {
  GnnConfig c;
  c.input_dim = feature_dim;
  c.state_dim = 8;
  c.hidden_dim = 12;
  c.num_relations = relations;
  c.num_layers = layers;
  return c;
}

}  // namespace graphmask::testing
