#pragma once

// Dense 64-bit tensors with define-by-run reverse-mode differentiation.
//
// Every op builds a fresh node that remembers its inputs and how to push its
// gradient back into them. Tensors are cheap handles; copying one shares the
// underlying node. Ops work on rank <= 2 data: a rank-1 tensor of length m is
// read as a 1 x m row and a scalar as 1 x 1.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphmask {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Raised when operand shapes do not conform. The message names the op and
/// every offending shape.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const std::vector<Shape>& shapes,
             const std::string& detail = {});
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  // Pushes this node's grad into its inputs' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return inputs.empty(); }
  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rank() const { return shape().size(); }
  // Matrix view of the shape (see header comment).
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Same values, fresh leaf with no history.
  Tensor detach() const;
  // Deep copy of values into a new leaf.
  Tensor clone(bool requires_grad) const;

  std::uint64_t id() const;
  const std::string& op() const;

  // Used by op implementations.
  static Tensor make_result(Shape shape, std::vector<double> value, std::string op,
                            std::vector<Tensor> inputs,
                            std::function<void(Node&)> backward_fn);
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// Disables recording of backward history on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Accumulates d(loss)/d(leaf) into every leaf that requires grad.
/// Intermediate grads are recomputed from scratch on every call.
void backward(const Tensor& loss);

// ---- elementwise with 2-D broadcasting (each dim equal or 1) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
/// Gradient passes where lo < a < hi, zero elsewhere.
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- linear algebra and structure ----
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materialising the transpose.
Tensor matmul_transposed(const Tensor& a, const Tensor& b);
/// axis 0 stacks rows, axis 1 joins columns.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
/// out[g] = sum of rows i with group[i] == g. Empty groups give zero rows.
Tensor segment_sum(const Tensor& a, std::span<const std::size_t> group,
                   std::size_t num_groups);
/// Columnwise max per group. Empty groups give zero rows and no gradient.
Tensor segment_max(const Tensor& a, std::span<const std::size_t> group,
                   std::size_t num_groups);

// ---- row-wise normalisations ----
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
/// Normalises each row to zero mean / unit variance (eps inside the sqrt),
/// then applies gain and shift broadcast over rows.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& shift,
                  double eps = 1e-5);
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sums across columns: [n x m] -> [n x 1].
Tensor row_sum(const Tensor& a);

}  // namespace graphmask
