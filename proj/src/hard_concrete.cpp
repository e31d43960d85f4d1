#include "graphmask/hard_concrete.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace graphmask {

namespace {

double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double clipped_logit(double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw std::invalid_argument("uniform draw " + std::to_string(u) + " outside (0, 1)");
  }
  u = std::clamp(u, kUniformClip, 1.0 - kUniformClip);
  return std::log(u) - std::log1p(-u);
}

double log_ratio(const HardConcrete& hc) { return std::log(-hc.lower / hc.upper); }

}  // namespace

void HardConcrete::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (lower > 0.0) throw std::invalid_argument("lower stretch bound must be <= 0");
  if (upper < 1.0) throw std::invalid_argument("upper stretch bound must be >= 1");
}

double sample_gate(const HardConcrete& hc, double location, double u) {
  const double s = sigmoid_scalar((clipped_logit(u) + location + hc.location_bias) / hc.temperature);
  return std::clamp(s * (hc.upper - hc.lower) + hc.lower, 0.0, 1.0);
}

Tensor sample_gate(const HardConcrete& hc, const Tensor& location,
                   std::span<const double> uniforms) {
  if (uniforms.size() != location.numel()) {
    throw ShapeError("sample_gate", {location.shape(), Shape{uniforms.size()}},
                     "one uniform per gate required");
  }
  std::vector<double> noise(uniforms.size());
  for (std::size_t i = 0; i < noise.size(); ++i) {
    noise[i] = clipped_logit(uniforms[i]) + hc.location_bias;
  }
  Tensor shifted = add(location, Tensor::from(location.shape(), std::move(noise)));
  Tensor s = sigmoid(scale(shifted, 1.0 / hc.temperature));
  return clamp(add_scalar(scale(s, hc.upper - hc.lower), hc.lower), 0.0, 1.0);
}

double prob_nonzero(const HardConcrete& hc, double location) {
  return sigmoid_scalar(location + hc.location_bias - hc.temperature * log_ratio(hc));
}

Tensor prob_nonzero(const HardConcrete& hc, const Tensor& location) {
  return sigmoid(add_scalar(location, hc.location_bias - hc.temperature * log_ratio(hc)));
}

double deterministic_gate(const HardConcrete& hc, double location, GateMode mode) {
  if (mode == GateMode::hard_threshold) return prob_nonzero(hc, location) > 0.5 ? 1.0 : 0.0;
  const double s = sigmoid_scalar((location + hc.location_bias) / hc.temperature);
  return std::clamp(s * (hc.upper - hc.lower) + hc.lower, 0.0, 1.0);
}

Tensor deterministic_gate(const HardConcrete& hc, const Tensor& location, GateMode mode) {
  std::vector<double> out(location.numel());
  const auto loc = location.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = deterministic_gate(hc, loc[i], mode);
  return Tensor::from(location.shape(), std::move(out));
}

}  // namespace graphmask
