#pragma once

#include <span>

#include "graphmask/tensor.hpp"

namespace graphmask {

/// Stretched and rectified Binary Concrete ("Hard Concrete") gates.
///
/// For a raw location gamma the effective location is gamma + location_bias.
/// A sample is
///   s = sigmoid((logit(u) + gamma + c) / temperature)
///   z = clamp(s * (upper - lower) + lower, 0, 1)
/// so that z has point masses at exactly 0 and exactly 1.
struct HardConcrete {
  double temperature = 1.0 / 3.0;
  double lower = -0.1;
  double upper = 1.1;
  double location_bias = 2.0;

  /// Throws std::invalid_argument unless temperature > 0, lower <= 0, upper >= 1.
  void validate() const;
};

inline constexpr double kUniformClip = 1e-6;

/// Throws std::invalid_argument when u is outside (0, 1).
double sample_gate(const HardConcrete& hc, double location, double u);
/// Differentiable in `location` ([n x 1]); one uniform per row.
Tensor sample_gate(const HardConcrete& hc, const Tensor& location, std::span<const double> uniforms);

/// P(z != 0) = sigmoid(gamma + c - temperature * log(-lower / upper)).
double prob_nonzero(const HardConcrete& hc, double location);
Tensor prob_nonzero(const HardConcrete& hc, const Tensor& location);

enum class GateMode {
  expectation,     // u fixed at 0.5
  hard_threshold,  // 1 if prob_nonzero > 0.5 else 0
};

double deterministic_gate(const HardConcrete& hc, double location, GateMode mode);
/// No gradient; values only.
Tensor deterministic_gate(const HardConcrete& hc, const Tensor& location, GateMode mode);

}  // namespace graphmask
