#include <cmath>
#include <limits>

#include "doctest.h"
#include "graphmask/optim.hpp"
#include "support.hpp"

using namespace graphmask;
using namespace graphmask::testing;

namespace {

// Loss whose gradient with respect to p is exactly g.
void push_gradient(Tensor& p, const std::vector<double>& g) {
  p.zero_grad();
  backward(sum(mul(p, Tensor::from(p.shape(), g))));
}

}  // namespace

TEST_CASE("adam leaves parameters unchanged under zero gradient") {
  Tensor p = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  Optimizer opt({OptimizerKind::adam, 0.1}, {{"p", p}});
  for (int i = 0; i < 5; ++i) {
    push_gradient(p, {0.0, 0.0, 0.0});
    opt.step();
  }
  CHECK(p.data()[0] == 0.5);
  CHECK(p.data()[1] == -1.0);
  CHECK(p.data()[2] == 2.0);
}

TEST_CASE("adam first step moves each parameter by lr against the gradient sign") {
  Tensor p = Tensor::from({3}, {0.0, 0.0, 0.0}, true);
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  Optimizer opt(cfg, {{"p", p}});
  const std::vector<double> g{3.0, -0.02, 1e-3};
  push_gradient(p, g);
  opt.step();
  // m_hat = g and v_hat = g^2 after bias correction.
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected = -0.1 * g[i] / (std::abs(g[i]) + cfg.eps);
    CHECK(p.data()[i] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(p.data()[i] == doctest::Approx(-0.1 * (g[i] > 0 ? 1 : -1)).epsilon(1e-4));
  }
}

TEST_CASE("rmsprop step under a constant gradient approaches lr / sqrt(1 + eps / g^2)") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::rmsprop;
  cfg.learning_rate = 1e-2;
  cfg.eps = 1e-8;
  const double g = 1e-4;  // eps / g^2 = 1, fixed point lr / sqrt(2)
  Tensor p = Tensor::scalar(0.0, true);
  Optimizer opt(cfg, {{"p", p}});
  double last = 0.0, delta = 0.0;
  for (int i = 0; i < 3000; ++i) {
    push_gradient(p, {g});
    opt.step();
    delta = last - p.item();
    last = p.item();
  }
  CHECK(delta == doctest::Approx(cfg.learning_rate / std::sqrt(1.0 + cfg.eps / (g * g))).epsilon(1e-6));
  CHECK(delta == doctest::Approx(cfg.learning_rate / std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("rmsprop first step matches the recurrence by hand") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::rmsprop;
  cfg.learning_rate = 0.05;
  Tensor p = Tensor::scalar(1.0, true);
  Optimizer opt(cfg, {{"p", p}});
  push_gradient(p, {2.0});
  opt.step();
  const double v = (1.0 - cfg.rms_decay) * 4.0;
  CHECK(p.item() == doctest::Approx(1.0 - 0.05 * 2.0 / std::sqrt(v + cfg.eps)).epsilon(1e-14));
}

TEST_CASE("maximize ascends") {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.maximize = true;
  Tensor p = Tensor::scalar(0.0, true);
  Optimizer opt(cfg, {{"p", p}});
  push_gradient(p, {1.0});
  opt.step();
  CHECK(p.item() > 0.0);
}

TEST_CASE("non-finite gradient names the parameter") {
  Tensor a = Tensor::scalar(0.0, true);
  Tensor b = Tensor::scalar(0.0, true);
  Optimizer opt({}, {{"alpha", a}, {"bravo", b}});
  push_gradient(a, {1.0});
  push_gradient(b, {std::numeric_limits<double>::quiet_NaN()});
  try {
    opt.step();
    FAIL("expected NonFiniteGradient");
  } catch (const NonFiniteGradient& e) {
    CHECK(e.parameter() == "bravo");
  }
  CHECK(a.item() == 0.0);
}

TEST_CASE("checkpoint json round-trips exactly") {
  std::mt19937_64 rng(9);
  ParameterStore store;
  store.add("layer.w", random_tensor({3, 2}, rng));
  store.add("layer.b", random_tensor({2}, rng));
  const std::string text = checkpoint_to_json(store);
  const ParameterStore back = checkpoint_from_json(text);
  CHECK(back.size() == 2);
  CHECK(back.get("layer.w").shape() == Shape{3, 2});
  for (const auto& [name, t] : store.items()) {
    const auto a = t.data();
    const auto b = back.get(name).data();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  CHECK(checkpoint_to_json(back) == text);
}

TEST_CASE("checkpoint loading rejects shape mismatches") {
  ParameterStore a;
  a.add("w", Tensor::zeros({2, 2}));
  ParameterStore b;
  b.add("w", Tensor::zeros({3}));
  CHECK_THROWS(a.load(b));
  CHECK_THROWS(checkpoint_from_json("{\"w\": {\"shape\": [2], \"data\": [1]}}"));
}
