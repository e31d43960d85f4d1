#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"

using namespace graphmask;
using namespace graphmask::testing;

namespace {

struct RandomOp {
  const char* name;
  std::function<std::pair<Fn, std::vector<Tensor>>(std::mt19937_64&)> build;
};

std::size_t dim(std::mt19937_64& rng, std::size_t lo = 1, std::size_t hi = 5) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<RandomOp> op_catalogue() {
  using In = std::vector<Tensor>;
  std::vector<RandomOp> ops;
  auto binary = [&](const char* name, auto op, bool positive_rhs) {
    ops.push_back({name, [op, positive_rhs](std::mt19937_64& rng) {
                     const std::size_t n = dim(rng), m = dim(rng);
                     // Broadcast in one of four layouts.
                     const int layout = static_cast<int>(dim(rng, 0, 3));
                     const Shape a = layout == 3 ? Shape{n, 1} : Shape{n, m};
                     const Shape b = layout == 0   ? Shape{n, m}
                                     : layout == 1 ? Shape{m}
                                     : layout == 2 ? Shape{n, 1}
                                                   : Shape{m};
                     Tensor rhs = positive_rhs ? random_tensor(b, rng, 0.5, 2.0) : random_tensor(b, rng);
                     return std::pair<Fn, In>{[op](const In& in) { return op(in[0], in[1]); },
                                              {random_tensor(a, rng), rhs}};
                   }});
  };
  binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, false);
  binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, false);
  binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, false);
  binary("div", [](const Tensor& a, const Tensor& b) { return div(a, b); }, true);

  auto unary = [&](const char* name, auto op, double lo, double hi, bool away_from_zero) {
    ops.push_back({name, [=](std::mt19937_64& rng) {
                     const Shape s{dim(rng), dim(rng)};
                     Tensor x = away_from_zero ? signed_tensor(s, rng) : random_tensor(s, rng, lo, hi);
                     return std::pair<Fn, In>{[op](const In& in) { return op(in[0]); }, {x}};
                   }});
  };
  unary("scale", [](const Tensor& a) { return scale(a, -1.7); }, -1, 1, false);
  unary("add_scalar", [](const Tensor& a) { return add_scalar(a, 0.3); }, -1, 1, false);
  unary("neg", [](const Tensor& a) { return neg(a); }, -1, 1, false);
  unary("relu", [](const Tensor& a) { return relu(a); }, 0, 0, true);
  unary("sigmoid", [](const Tensor& a) { return sigmoid(a); }, -3, 3, false);
  unary("log_sigmoid", [](const Tensor& a) { return log_sigmoid(a); }, -3, 3, false);
  unary("exp", [](const Tensor& a) { return exp(a); }, -2, 2, false);
  unary("log", [](const Tensor& a) { return log(a); }, 0.3, 3, false);
  unary("square", [](const Tensor& a) { return square(a); }, -2, 2, false);
  unary("clamp", [](const Tensor& a) { return clamp(a, -1.0, 1.0); }, 0, 0, true);
  unary("softmax", [](const Tensor& a) { return softmax(a); }, -2, 2, false);
  unary("log_softmax", [](const Tensor& a) { return log_softmax(a); }, -2, 2, false);
  unary("sum", [](const Tensor& a) { return sum(a); }, -1, 1, false);
  unary("mean", [](const Tensor& a) { return mean(a); }, -1, 1, false);
  unary("row_sum", [](const Tensor& a) { return row_sum(a); }, -1, 1, false);

  ops.push_back({"matmul", [](std::mt19937_64& rng) {
                   const std::size_t n = dim(rng), k = dim(rng), m = dim(rng);
                   return std::pair<Fn, In>{[](const In& in) { return matmul(in[0], in[1]); },
                                            {random_tensor({n, k}, rng), random_tensor({k, m}, rng)}};
                 }});
  ops.push_back({"matmul_transposed", [](std::mt19937_64& rng) {
                   const std::size_t n = dim(rng), k = dim(rng), m = dim(rng);
                   return std::pair<Fn, In>{
                       [](const In& in) { return matmul_transposed(in[0], in[1]); },
                       {random_tensor({n, k}, rng), random_tensor({m, k}, rng)}};
                 }});
  ops.push_back({"concat", [](std::mt19937_64& rng) {
                   const std::size_t n = dim(rng), m = dim(rng);
                   const std::size_t axis = dim(rng, 0, 1);
                   const Shape b = axis == 0 ? Shape{dim(rng), m} : Shape{n, dim(rng)};
                   return std::pair<Fn, In>{[axis](const In& in) { return concat({in[0], in[1]}, axis); },
                                            {random_tensor({n, m}, rng), random_tensor(b, rng)}};
                 }});
  ops.push_back({"gather_rows", [](std::mt19937_64& rng) {
                   const std::size_t n = dim(rng, 2, 5), m = dim(rng);
                   std::vector<std::size_t> rows(dim(rng, 1, 7));
                   for (auto& r : rows) r = dim(rng, 0, n - 1);
                   return std::pair<Fn, In>{[rows](const In& in) { return gather_rows(in[0], rows); },
                                            {random_tensor({n, m}, rng)}};
                 }});
  ops.push_back({"segment_sum", [](std::mt19937_64& rng) {
                   const std::size_t n = dim(rng, 2, 7), m = dim(rng), groups = dim(rng, 1, 4);
                   std::vector<std::size_t> group(n);
                   for (auto& g : group) g = dim(rng, 0, groups - 1);
                   return std::pair<Fn, In>{
                       [group, groups](const In& in) { return segment_sum(in[0], group, groups); },
                       {random_tensor({n, m}, rng)}};
                 }});
  ops.push_back({"segment_max", [](std::mt19937_64& rng) {
                   const std::size_t n = dim(rng, 2, 7), m = dim(rng), groups = dim(rng, 1, 3);
                   std::vector<std::size_t> group(n);
                   for (auto& g : group) g = dim(rng, 0, groups - 1);
                   // Distinct, well-separated values so the argmax is stable.
                   std::vector<double> v(n * m);
                   std::iota(v.begin(), v.end(), 0.0);
                   std::shuffle(v.begin(), v.end(), rng);
                   for (double& x : v) x *= 0.1;
                   return std::pair<Fn, In>{
                       [group, groups](const In& in) { return segment_max(in[0], group, groups); },
                       {Tensor::from({n, m}, v, true)}};
                 }});
  ops.push_back({"layer_norm", [](std::mt19937_64& rng) {
                   const std::size_t n = dim(rng), m = dim(rng, 2, 6);
                   return std::pair<Fn, In>{
                       [](const In& in) { return layer_norm(in[0], in[1], in[2]); },
                       {random_tensor({n, m}, rng, -2, 2), random_tensor({m}, rng),
                        random_tensor({m}, rng)}};
                 }});
  ops.push_back({"column_times_row", [](std::mt19937_64& rng) {
                   const std::size_t e = dim(rng), d = dim(rng);
                   return std::pair<Fn, In>{[](const In& in) { return mul(in[0], in[1]); },
                                            {random_tensor({e, 1}, rng), random_tensor({d}, rng)}};
                 }});
  return ops;
}

}  // namespace

TEST_CASE("elementwise definitions") {
  const Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
  const Tensor out = relu(x);
  const auto r = out.data();
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);
  CHECK(sigmoid(Tensor::from({1}, {0.0})).item() == 0.5);
}

TEST_CASE("identity matmul returns the operand") {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({3, 4}, rng, -1, 1, false);
  const Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor out = matmul(eye, a);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(out.data()[i] == a.data()[i]);
}

TEST_CASE("shape mismatch names the op and both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({4, 5});
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("matmul") != std::string::npos);
    CHECK(what.find("2") != std::string::npos);
    CHECK(what.find("5") != std::string::npos);
  }
  CHECK_THROWS_AS((void)add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("square has derivative 2x") {
  Tensor x = Tensor::scalar(3.0, true);
  backward(square(x));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tensor x = Tensor::zeros({2}, true);
  CHECK_THROWS((void)backward(scale(x, 2.0)));
}

TEST_CASE("sum of sigmoid(Wx) matches finite differences") {
  std::mt19937_64 rng(11);
  const Fn loss = [](const std::vector<Tensor>& in) { return sum(sigmoid(matmul(in[0], in[1]))); };
  CHECK(gradient_error(loss, {random_tensor({4, 4}, rng), random_tensor({4, 1}, rng)}) < 1e-4);
}

TEST_CASE("layer_norm(v) . u matches finite differences") {
  std::mt19937_64 rng(12);
  const Tensor u = random_tensor({8}, rng, -1, 1, false);
  const Fn loss = [u](const std::vector<Tensor>& in) { return sum(mul(layer_norm(in[0]), u)); };
  CHECK(gradient_error(loss, {random_tensor({8}, rng, -2, 2)}) < 1e-4);
}

TEST_CASE("100 random ops pass the finite-difference check") {
  const auto ops = op_catalogue();
  std::mt19937_64 rng(2024);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const RandomOp& op = ops[i % ops.size()];
    auto [fn, inputs] = op.build(rng);
    const double err = gradient_error(weighted_loss(fn, i), inputs);
    INFO("op " << op.name << " trial " << i << " error " << err);
    CHECK(err < 1e-4);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("gradients accumulate through shared subexpressions") {
  Tensor x = Tensor::scalar(2.0, true);
  const Tensor y = mul(x, x);
  backward(add(y, y));
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("no-grad mode records no history") {
  Tensor x = Tensor::scalar(1.0, true);
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = exp(x);
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("identical seeds and op sequences give bit-identical outputs") {
  auto run = [] {
    std::mt19937_64 rng(5);
    const Tensor a = random_tensor({6, 5}, rng);
    const Tensor b = random_tensor({5, 3}, rng);
    const Tensor out = softmax(matmul(a, b));
    return std::vector<double>(out.data().begin(), out.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("segment_sum leaves empty groups at zero") {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const std::vector<std::size_t> group{0, 2};
  const Tensor out = segment_sum(a, group, 3);
  CHECK(out.shape() == Shape{3, 2});
  CHECK(out.at(1, 0) == 0.0);
  CHECK(out.at(2, 1) == 4.0);
}
