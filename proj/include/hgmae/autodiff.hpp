#pragma once

// Minimal reverse-mode automatic differentiation over dense 2-D matrices.
//
// A Tensor is a shared handle to a node in a computation trace. Every
// operation below returns a new node that records its inputs and a local
// gradient rule; backward() walks the trace in reverse topological order and
// accumulates gradients into every node that requires them. Nodes that do not
// depend on any parameter keep no inputs, so constant subexpressions carry no
// trace.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace hgmae::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Matrix& ensure_grad() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;

  /// Leaf that never receives a gradient.
  static Tensor constant(Matrix value);
  /// Leaf that accumulates a gradient on backward().
  static Tensor parameter(Matrix value);
  /// Internal: wraps an operation result.
  static Tensor from_op(Matrix value, std::vector<Tensor> inputs,
                        std::function<void(Node&)> rule);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  /// Direct write access, for optimizers and finite-difference probes.
  Matrix& mutable_value() { return node_->value; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  /// Accumulated gradient; a zero matrix if nothing has flowed in yet.
  Matrix grad() const;
  void zero_grad();

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T, used for row Gram matrices.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Adds a 1 x cols row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
/// out(i, j) = col(i) + row(j) for an N x 1 column and 1 x M row.
Tensor outer_sum(const Tensor& col, const Tensor& row);
/// s * a for a 1 x 1 tensor s.
Tensor scalar_mul(const Tensor& s, const Tensor& a);

// ---- activations ----
Tensor elu(const Tensor& x, double alpha = 1.0);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Softmax along each row. When a mask is given, entries where mask == 0 are
/// exactly zero and each row normalises over its unmasked entries only.
/// Throws DegenerateError for a fully masked row.
Tensor rowwise_softmax(const Tensor& x, const Matrix* mask = nullptr);

// ---- reductions and reshaping ----
Tensor sum(const Tensor& a);
/// Mean over rows: N x c -> 1 x c.
Tensor mean_rows(const Tensor& a);
Tensor add_all(std::span<const Tensor> terms);
/// Concatenates tensors with equal row count side by side.
Tensor hstack(std::span<const Tensor> parts);
Tensor element(const Tensor& a, Index row, Index col);
/// out.row(i) = a.row(index[i]).
Tensor gather_rows(const Tensor& a, std::span<const Index> index);
/// Copy of a with the listed rows overwritten by a 1 x cols token.
Tensor replace_rows(const Tensor& a, std::span<const Index> rows,
                    const Tensor& token);

/// Scaled cosine error: mean over `rows` of (1 - cos(x_v, y_v))^gamma.
/// Rows where either side has zero norm are dropped from the mean and counted
/// in `excluded`. Throws DegenerateError if nothing is left.
Tensor sce_rows(const Tensor& x, const Tensor& y, double gamma,
                std::span<const Index> rows, std::size_t* excluded = nullptr);
/// Same, over every row.
Tensor sce_rows(const Tensor& x, const Tensor& y, double gamma,
                std::size_t* excluded = nullptr);

/// Runs reverse accumulation from a 1 x 1 loss.
void backward(const Tensor& loss);

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  Index coordinates = 0;
  bool passed = false;
};

/// Compares backward() gradients of a scalar function with respect to `x`
/// against central differences of step h. Relative error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
GradCheckReport grad_check(const std::function<Tensor()>& f, Tensor x,
                           double h = 1e-5, double tol = 1e-4);

inline constexpr double kGradCheckFloor = 1e-6;
inline constexpr double kSceEpsilon = 1e-12;

}  // namespace hgmae::ad
