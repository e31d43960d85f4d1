#pragma once

#include <cmath>
#include <random>

#include "graphmask/tensor.hpp"

namespace graphmask {

// Glorot-uniform [fan_in x fan_out] weight.
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(fan_in * fan_out);
  for (double& v : data) v = dist(rng);
  return Tensor::from({fan_in, fan_out}, std::move(data), true);
}

inline Tensor zero_bias(std::size_t n) { return Tensor::zeros({n}, true); }

}  // namespace graphmask
