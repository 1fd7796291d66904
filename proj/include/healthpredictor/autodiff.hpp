#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// A Var is a handle to a node in a dynamically built graph. Leaves are made
// with variable() (gradient tracked) or constant(). Calling backward() on a
// 1x1 result accumulates d(result)/d(leaf) into every tracked leaf's grad().
// Gradients accumulate across calls until zero_grad() is called on the leaf.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace hp::ad {

using Matrix = Eigen::MatrixXd;

struct Node {
  Matrix value;
  Matrix grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  // Zero matrix of the value's shape when nothing has been accumulated.
  Matrix grad() const;
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  double scalar() const { return node_->value(0, 0); }

  void zero_grad() { node_->grad.resize(0, 0); }
  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  bool valid() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var variable(Matrix value);
Var constant(Matrix value);
Var scalar_constant(double value);

void backward(const Var& root);

// Shape-checked elementwise and linear-algebra operations.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(double s, const Var& a);
Var matmul(const Var& a, const Var& b);
Var cwise_mul(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // row (1 x n) broadcast over a's rows
Var transpose(const Var& a);

Var tanh(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);
Var softplus(const Var& a);
Var square(const Var& a);
// log(max(a, floor)); entries at or below the floor get zero gradient.
Var log_clamped(const Var& a, double floor);

Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_cols(const std::vector<Var>& parts);
// Row-major reinterpretation of a's entries as rows x cols.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);

Var sum(const Var& a);             // 1x1
Var squared_norm(const Var& a);    // 1x1, sum of squares

// Central-difference check of a scalar function's gradient at x. Returns the
// max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double grad_check(const std::function<Var(const Var&)>& f, const Matrix& x, double eps = 1e-5);

// Plain-double helpers matching the Var versions.
double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

}  // namespace hp::ad
