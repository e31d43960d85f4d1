#include <cmath>

#include "doctest.h"
#include "graphmask/hard_concrete.hpp"
#include "support.hpp"

using namespace graphmask;
using namespace graphmask::testing;

namespace {

const HardConcrete hc{};

// Raw location whose effective location gamma + c equals `shifted`.
double at(double shifted) { return shifted - hc.location_bias; }

double monte_carlo_nonzero(double location, std::size_t draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(kUniformClip, 1.0 - kUniformClip);
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < draws; ++i) nonzero += sample_gate(hc, location, u(rng)) > 0.0;
  return static_cast<double>(nonzero) / static_cast<double>(draws);
}

}  // namespace

TEST_CASE("median sample at zero effective location is the midpoint") {
  CHECK(sample_gate(hc, at(0.0), 0.5) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("samples saturate at both ends") {
  for (double u = 0.011; u < 0.99; u += 0.0437) {
    CHECK(sample_gate(hc, at(20.0), u) == 1.0);
    CHECK(sample_gate(hc, at(-20.0), u) == 0.0);
  }
}

TEST_CASE("uniform outside (0, 1) is rejected") {
  CHECK_THROWS_AS(sample_gate(hc, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sample_gate(hc, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(sample_gate(hc, 0.0, -0.2), std::invalid_argument);
}

TEST_CASE("prob_nonzero at zero effective location is about 0.690") {
  const double closed = prob_nonzero(hc, at(0.0));
  CHECK(closed == doctest::Approx(0.690).epsilon(1e-3));
  CHECK(std::abs(monte_carlo_nonzero(at(0.0), 1000000, 1) - closed) < 1e-3);
}

TEST_CASE("prob_nonzero matches Monte Carlo on a five-point grid") {
  for (double shifted : {-3.0, -1.5, 0.0, 1.5, 3.0}) {
    const double closed = prob_nonzero(hc, at(shifted));
    const double mc = monte_carlo_nonzero(at(shifted), 200000, 7);
    INFO("gamma + c = " << shifted);
    CHECK(std::abs(mc - closed) < 1e-2);
  }
}

TEST_CASE("prob_nonzero limits") {
  CHECK(prob_nonzero(hc, at(-60.0)) < 1e-20);
  CHECK(prob_nonzero(hc, at(60.0)) == doctest::Approx(1.0));
}

TEST_CASE("deterministic gates") {
  CHECK(deterministic_gate(hc, at(0.0), GateMode::expectation) == doctest::Approx(0.5));
  CHECK(deterministic_gate(hc, at(0.0), GateMode::hard_threshold) == 1.0);
  for (GateMode mode : {GateMode::expectation, GateMode::hard_threshold}) {
    CHECK(deterministic_gate(hc, at(20.0), mode) == 1.0);
    CHECK(deterministic_gate(hc, at(-20.0), mode) == 0.0);
  }
  // prob_nonzero crosses one half at gamma + c = tau * log(-l / r).
  const double boundary = hc.temperature * std::log(-hc.lower / hc.upper);
  CHECK(deterministic_gate(hc, at(boundary + 1e-6), GateMode::hard_threshold) == 1.0);
  CHECK(deterministic_gate(hc, at(boundary - 1e-6), GateMode::hard_threshold) == 0.0);
}

TEST_CASE("tensor forms agree with the scalar forms and differentiate correctly") {
  std::mt19937_64 rng(3);
  const Tensor loc = random_tensor({6, 1}, rng, -3.0, 1.0);
  const std::vector<double> u{0.1, 0.3, 0.5, 0.6, 0.8, 0.95};
  const Tensor z = sample_gate(hc, loc, u);
  const Tensor p = prob_nonzero(hc, loc);
  const Tensor h = deterministic_gate(hc, loc, GateMode::hard_threshold);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(z.data()[i] == doctest::Approx(sample_gate(hc, loc.data()[i], u[i])).epsilon(1e-14));
    CHECK(p.data()[i] == doctest::Approx(prob_nonzero(hc, loc.data()[i])).epsilon(1e-14));
    CHECK(h.data()[i] == deterministic_gate(hc, loc.data()[i], GateMode::hard_threshold));
  }
  CHECK(gradient_error([](const std::vector<Tensor>& in) { return sum(prob_nonzero(hc, in[0])); }, {loc}) < 1e-4);
  // Rows in the clamped region have zero gradient on both sides, so keep
  // every sample strictly inside (0, 1).
  const Tensor inner = Tensor::from({3, 1}, {-2.0, -1.6, -2.3}, true);
  const std::vector<double> mid{0.5, 0.4, 0.6};
  CHECK(gradient_error([mid](const std::vector<Tensor>& in) { return sum(sample_gate(hc, in[0], mid)); },
                       {inner}) < 1e-4);
}

TEST_CASE("invalid stretch parameters are rejected") {
  HardConcrete bad = hc;
  bad.temperature = 0.0;
  CHECK_THROWS(bad.validate());
  bad = hc;
  bad.lower = 0.1;
  CHECK_THROWS(bad.validate());
  bad = hc;
  bad.upper = 0.9;
  CHECK_THROWS(bad.validate());
}
