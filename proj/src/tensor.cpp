#include "graphmask/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace graphmask {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool grad_mode_enabled = true;

struct MatrixDims {
  std::size_t rows;
  std::size_t cols;
};

MatrixDims dims_of(const Shape& shape) {
  switch (shape.size()) {
    case 0:
      return {1, 1};
    case 1:
      return {1, shape[0]};
    case 2:
      return {shape[0], shape[1]};
    default:
      throw ShapeError("matrix-view", {shape}, "rank > 2 is not supported");
  }
}

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> value) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

double stable_log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Elementwise unary op whose derivative is expressed through input and output.
template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, const char* name, Forward forward, Derivative derivative) {
  const auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return Tensor::make_result(a.shape(), std::move(out), name, {a},
                             [derivative](Node& self) {
                               Node& x = *self.inputs[0];
                               if (!x.requires_grad) return;
                               x.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                 x.grad[i] += self.grad[i] * derivative(x.value[i], self.value[i]);
                               }
                             });
}

struct Broadcast {
  MatrixDims a;
  MatrixDims b;
  MatrixDims out;
  Shape shape;
};

Broadcast broadcast_dims(const Tensor& a, const Tensor& b, const char* op) {
  const MatrixDims da = dims_of(a.shape());
  const MatrixDims db = dims_of(b.shape());
  const std::size_t rows = std::max(da.rows, db.rows);
  const std::size_t cols = std::max(da.cols, db.cols);
  const bool rows_ok = (da.rows == rows || da.rows == 1) && (db.rows == rows || db.rows == 1);
  const bool cols_ok = (da.cols == cols || da.cols == 1) && (db.cols == cols || db.cols == 1);
  if (!rows_ok || !cols_ok) throw ShapeError(op, {a.shape(), b.shape()}, "not broadcastable");
  Shape shape;
  if (a.numel() == rows * cols && a.rank() >= b.rank()) {
    shape = a.shape();
  } else if (b.numel() == rows * cols) {
    shape = b.shape();
  } else {
    shape = {rows, cols};
  }
  return {da, db, {rows, cols}, std::move(shape)};
}

// Elementwise binary op with broadcasting. `partials` returns (d/da, d/db).
template <typename Forward, typename Partials>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Forward forward,
              Partials partials) {
  const Broadcast bc = broadcast_dims(a, b, name);
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t rows = bc.out.rows;
  const std::size_t cols = bc.out.cols;
  std::vector<double> out(rows * cols);
  const bool same = bc.a.rows == rows && bc.a.cols == cols && bc.b.rows == rows && bc.b.cols == cols;
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(av[i], bv[i]);
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t ra = bc.a.rows == 1 ? 0 : r;
      const std::size_t rb = bc.b.rows == 1 ? 0 : r;
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t ca = bc.a.cols == 1 ? 0 : c;
        const std::size_t cb = bc.b.cols == 1 ? 0 : c;
        out[r * cols + c] = forward(av[ra * bc.a.cols + ca], bv[rb * bc.b.cols + cb]);
      }
    }
  }
  return Tensor::make_result(
      bc.shape, std::move(out), name, {a, b}, [bc, partials](Node& self) {
        Node& x = *self.inputs[0];
        Node& y = *self.inputs[1];
        if (x.requires_grad) x.ensure_grad();
        if (y.requires_grad) y.ensure_grad();
        const std::size_t cols = bc.out.cols;
        for (std::size_t r = 0; r < bc.out.rows; ++r) {
          const std::size_t ra = bc.a.rows == 1 ? 0 : r;
          const std::size_t rb = bc.b.rows == 1 ? 0 : r;
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t ia = ra * bc.a.cols + (bc.a.cols == 1 ? 0 : c);
            const std::size_t ib = rb * bc.b.cols + (bc.b.cols == 1 ? 0 : c);
            const double g = self.grad[r * cols + c];
            const auto [da, db] = partials(x.value[ia], y.value[ib], self.value[r * cols + c]);
            if (x.requires_grad) x.grad[ia] += g * da;
            if (y.requires_grad) y.grad[ib] += g * db;
          }
        }
      });
}

void check_group_indices(const char* op, const Tensor& a, std::span<const std::size_t> group,
                         std::size_t num_groups) {
  if (group.size() != a.rows()) {
    throw ShapeError(op, {a.shape(), Shape{group.size()}}, "one group index per row required");
  }
  for (std::size_t g : group) {
    if (g >= num_groups) {
      throw ShapeError(op, {a.shape()}, "group index " + std::to_string(g) +
                                            " out of range for " + std::to_string(num_groups) +
                                            " groups");
    }
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

ShapeError::ShapeError(const std::string& op, const std::vector<Shape>& shapes,
                       const std::string& detail)
    : std::invalid_argument([&] {
        std::ostringstream msg;
        msg << op << ": shape mismatch";
        for (const auto& s : shapes) msg << ' ' << shape_string(s);
        if (!detail.empty()) msg << " (" << detail << ')';
        return msg.str();
      }()) {}

void Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

// ---- Tensor ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  auto node = new_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("from", {shape, Shape{data.size()}}, "element count differs from shape");
  }
  auto node = new_node(std::move(shape), std::move(data));
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return dims_of(shape()).rows; }
std::size_t Tensor::cols() const { return dims_of(shape()).cols; }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }
double Tensor::at(std::size_t row, std::size_t col) const {
  return node_->value.at(row * cols() + col);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item", {shape()}, "tensor is not a scalar");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  auto node = new_node(shape(), node_->value);
  node->op = "leaf";
  return Tensor(std::move(node));
}

Tensor Tensor::clone(bool requires_grad) const {
  Tensor copy = detach();
  copy.set_requires_grad(requires_grad);
  return copy;
}

std::uint64_t Tensor::id() const { return node_->id; }
const std::string& Tensor::op() const { return node_->op; }

Tensor Tensor::make_result(Shape shape, std::vector<double> value, std::string op,
                           std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn) {
  auto node = new_node(std::move(shape), std::move(value));
  node->op = std::move(op);
  if (grad_mode_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(t.node_);
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(grad_mode_enabled) { grad_mode_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_mode_enabled = previous_; }
bool grad_enabled() { return grad_mode_enabled; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward", {loss.defined() ? loss.shape() : Shape{0}},
                     "loss must be a scalar");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->value.size(), 0.0);
  }
  Node* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; },
                [](double, double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; },
                [](double, double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; },
                [](double x, double y, double) { return std::pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(a, b, "div", [](double x, double y) { return x / y; },
                [](double x, double y, double) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, "scale", [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, "add_scalar", [value](double x) { return x + value; },
               [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(a, "log_sigmoid", stable_log_sigmoid,
               [](double x, double) { return stable_sigmoid(-x); });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, "log", [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, "square", [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul", {a.shape(), b.shape()});
  }
  const std::size_t n = a.rows();
  const std::size_t k = a.cols();
  const std::size_t m = b.cols();
  std::vector<double> out(n * m);
  MatrixMap(out.data(), n, m).noalias() =
      ConstMatrixMap(a.data().data(), n, k) * ConstMatrixMap(b.data().data(), k, m);
  return Tensor::make_result({n, m}, std::move(out), "matmul", {a, b}, [n, k, m](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    ConstMatrixMap g(self.grad.data(), n, m);
    if (x.requires_grad) {
      x.ensure_grad();
      MatrixMap(x.grad.data(), n, k).noalias() += g * ConstMatrixMap(y.value.data(), k, m).transpose();
    }
    if (y.requires_grad) {
      y.ensure_grad();
      MatrixMap(y.grad.data(), k, m).noalias() += ConstMatrixMap(x.value.data(), n, k).transpose() * g;
    }
  });
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed", {a.shape(), b.shape()});
  }
  const std::size_t n = a.rows();
  const std::size_t k = a.cols();
  const std::size_t m = b.rows();
  std::vector<double> out(n * m);
  MatrixMap(out.data(), n, m).noalias() =
      ConstMatrixMap(a.data().data(), n, k) * ConstMatrixMap(b.data().data(), m, k).transpose();
  return Tensor::make_result(
      {n, m}, std::move(out), "matmul_transposed", {a, b}, [n, k, m](Node& self) {
        Node& x = *self.inputs[0];
        Node& y = *self.inputs[1];
        ConstMatrixMap g(self.grad.data(), n, m);
        if (x.requires_grad) {
          x.ensure_grad();
          MatrixMap(x.grad.data(), n, k).noalias() += g * ConstMatrixMap(y.value.data(), m, k);
        }
        if (y.requires_grad) {
          y.ensure_grad();
          MatrixMap(y.grad.data(), m, k).noalias() +=
              g.transpose() * ConstMatrixMap(x.value.data(), n, k);
        }
      });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", {}, "no inputs");
  if (axis > 1) throw ShapeError("concat", {parts[0].shape()}, "axis must be 0 or 1");
  std::vector<Shape> shapes;
  for (const auto& p : parts) shapes.push_back(p.shape());
  std::vector<MatrixDims> dims;
  for (const auto& p : parts) dims.push_back({p.rows(), p.cols()});

  if (axis == 0) {
    const std::size_t cols = dims[0].cols;
    std::size_t rows = 0;
    for (const auto& d : dims) {
      if (d.cols != cols) throw ShapeError("concat", shapes, "column counts differ");
      rows += d.rows;
    }
    std::vector<double> out;
    out.reserve(rows * cols);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return Tensor::make_result({rows, cols}, std::move(out), "concat", parts, [](Node& self) {
      std::size_t offset = 0;
      for (auto& input : self.inputs) {
        const std::size_t n = input->value.size();
        if (input->requires_grad) {
          input->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) input->grad[i] += self.grad[offset + i];
        }
        offset += n;
      }
    });
  }

  const std::size_t rows = dims[0].rows;
  std::size_t cols = 0;
  for (const auto& d : dims) {
    if (d.rows != rows) throw ShapeError("concat", shapes, "row counts differ");
    cols += d.cols;
  }
  std::vector<double> out(rows * cols);
  std::size_t col_offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto src = parts[p].data();
    const std::size_t pc = dims[p].cols;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * pc), pc,
                  out.begin() + static_cast<std::ptrdiff_t>(r * cols + col_offset));
    }
    col_offset += pc;
  }
  std::vector<std::size_t> widths;
  for (const auto& d : dims) widths.push_back(d.cols);
  return Tensor::make_result({rows, cols}, std::move(out), "concat", parts,
                             [rows, cols, widths](Node& self) {
                               std::size_t col_offset = 0;
                               for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                                 Node& input = *self.inputs[p];
                                 const std::size_t pc = widths[p];
                                 if (input.requires_grad) {
                                   input.ensure_grad();
                                   for (std::size_t r = 0; r < rows; ++r) {
                                     for (std::size_t c = 0; c < pc; ++c) {
                                       input.grad[r * pc + c] += self.grad[r * cols + col_offset + c];
                                     }
                                   }
                                 }
                                 col_offset += pc;
                               }
                             });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const std::size_t n = a.rows();
  const std::size_t cols = a.cols();
  for (std::size_t r : rows) {
    if (r >= n) {
      throw ShapeError("gather_rows", {a.shape()},
                       "row index " + std::to_string(r) + " out of range");
    }
  }
  std::vector<double> out(rows.size() * cols);
  const auto src = a.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return Tensor::make_result({rows.size(), cols}, std::move(out), "gather_rows", {a},
                             [index = std::move(index), cols](Node& self) {
                               Node& x = *self.inputs[0];
                               if (!x.requires_grad) return;
                               x.ensure_grad();
                               for (std::size_t i = 0; i < index.size(); ++i) {
                                 for (std::size_t c = 0; c < cols; ++c) {
                                   x.grad[index[i] * cols + c] += self.grad[i * cols + c];
                                 }
                               }
                             });
}

Tensor segment_sum(const Tensor& a, std::span<const std::size_t> group,
                   std::size_t num_groups) {
  check_group_indices("segment_sum", a, group, num_groups);
  const std::size_t cols = a.cols();
  std::vector<double> out(num_groups * cols, 0.0);
  const auto src = a.data();
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t c = 0; c < cols; ++c) out[group[i] * cols + c] += src[i * cols + c];
  }
  std::vector<std::size_t> index(group.begin(), group.end());
  return Tensor::make_result({num_groups, cols}, std::move(out), "segment_sum", {a},
                             [index = std::move(index), cols](Node& self) {
                               Node& x = *self.inputs[0];
                               if (!x.requires_grad) return;
                               x.ensure_grad();
                               for (std::size_t i = 0; i < index.size(); ++i) {
                                 for (std::size_t c = 0; c < cols; ++c) {
                                   x.grad[i * cols + c] += self.grad[index[i] * cols + c];
                                 }
                               }
                             });
}

Tensor segment_max(const Tensor& a, std::span<const std::size_t> group,
                   std::size_t num_groups) {
  check_group_indices("segment_max", a, group, num_groups);
  const std::size_t cols = a.cols();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> argmax(num_groups * cols, kNone);
  const auto src = a.data();
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t& best = argmax[group[i] * cols + c];
      if (best == kNone || src[i * cols + c] > src[best * cols + c]) best = i;
    }
  }
  std::vector<double> out(num_groups * cols, 0.0);
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (argmax[j] != kNone) out[j] = src[argmax[j] * cols + j % cols];
  }
  return Tensor::make_result({num_groups, cols}, std::move(out), "segment_max", {a},
                             [argmax = std::move(argmax), cols](Node& self) {
                               Node& x = *self.inputs[0];
                               if (!x.requires_grad) return;
                               x.ensure_grad();
                               for (std::size_t j = 0; j < argmax.size(); ++j) {
                                 if (argmax[j] != kNone) {
                                   x.grad[argmax[j] * cols + j % cols] += self.grad[j];
                                 }
                               }
                             });
}

// ---- row-wise ----

Tensor softmax(const Tensor& a) {
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  const auto src = a.data();
  std::vector<double> out(src.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = src.data() + r * cols;
    double* y = out.data() + r * cols;
    const double top = *std::max_element(x, x + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (y[c] = std::exp(x[c] - top));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return Tensor::make_result(a.shape(), std::move(out), "softmax", {a}, [rows, cols](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    x.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) x.grad[r * cols + c] += y[c] * (g[c] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& a) {
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  const auto src = a.data();
  std::vector<double> out(src.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = src.data() + r * cols;
    const double top = *std::max_element(x, x + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(x[c] - top);
    const double lse = top + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] - lse;
  }
  return Tensor::make_result(a.shape(), std::move(out), "log_softmax", {a},
                             [rows, cols](Node& self) {
                               Node& x = *self.inputs[0];
                               if (!x.requires_grad) return;
                               x.ensure_grad();
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double* y = self.value.data() + r * cols;
                                 const double* g = self.grad.data() + r * cols;
                                 double gsum = 0.0;
                                 for (std::size_t c = 0; c < cols; ++c) gsum += g[c];
                                 for (std::size_t c = 0; c < cols; ++c) {
                                   x.grad[r * cols + c] += g[c] - std::exp(y[c]) * gsum;
                                 }
                               }
                             });
}

Tensor layer_norm(const Tensor& a, double eps) {
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  const auto src = a.data();
  std::vector<double> out(src.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = src.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += x[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (x[c] - mu) * inv_std[r];
  }
  return Tensor::make_result(
      a.shape(), std::move(out), "layer_norm", {a},
      [rows, cols, inv_std = std::move(inv_std)](Node& self) {
        Node& x = *self.inputs[0];
        if (!x.requires_grad) return;
        x.ensure_grad();
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = self.value.data() + r * cols;
          const double* g = self.grad.data() + r * cols;
          double gsum = 0.0;
          double gy = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            gsum += g[c];
            gy += g[c] * y[c];
          }
          for (std::size_t c = 0; c < cols; ++c) {
            x.grad[r * cols + c] += inv_std[r] * (g[c] - gsum / n - y[c] * gy / n);
          }
        }
      });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& shift, double eps) {
  return add(mul(layer_norm(a, eps), gain), shift);
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tensor::make_result({}, {total}, "sum", {a}, [](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    x.ensure_grad();
    for (double& g : x.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean", {a.shape()}, "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor row_sum(const Tensor& a) {
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  std::vector<double> out(rows, 0.0);
  const auto src = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r] += src[r * cols + c];
  }
  return Tensor::make_result({rows, 1}, std::move(out), "row_sum", {a}, [cols](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    x.ensure_grad();
    for (std::size_t i = 0; i < x.grad.size(); ++i) x.grad[i] += self.grad[i / cols];
  });
}

}  // namespace graphmask
