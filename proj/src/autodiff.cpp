#include "healthpredictor/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>
#include <utility>

#include "healthpredictor/errors.hpp"

namespace hp::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Var make(Matrix value, std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) node->requires_grad = node->requires_grad || p->requires_grad;
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                                              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                              std::to_string(b.cols()));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

Var variable(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var scalar_constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1)
    throw Error(ErrorCode::ShapeMismatch, "backward() needs a 1x1 result");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root.node(), 0}};
  visited.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch; only leaves keep accumulating.
  for (Node* n : order)
    if (n->backward_fn) n->grad.resize(0, 0);
  root.node().accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  for (Node* n : order)
    if (n->backward_fn) n->grad.resize(0, 0);
}

Var operator+(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a.ptr(), b.ptr()}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    parent(self, 1).accumulate(self.grad);
  });
}

Var operator-(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a.ptr(), b.ptr()}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    parent(self, 1).accumulate(-self.grad);
  });
}

Var operator*(double s, const Var& a) {
  return make(s * a.value(), {a.ptr()}, [s](Node& self) { parent(self, 0).accumulate(s * self.grad); });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw Error(ErrorCode::ShapeMismatch, "matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                                              std::to_string(b.rows()));
  return make(a.value() * b.value(), {a.ptr(), b.ptr()}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Var cwise_mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "cwise_mul");
  return make(a.value().cwiseProduct(b.value()), {a.ptr(), b.ptr()}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw Error(ErrorCode::ShapeMismatch, "add_row: row must be 1x" + std::to_string(a.cols()));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make(std::move(out), {a.ptr(), row.ptr()}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(self.grad.colwise().sum());
  });
}

Var transpose(const Var& a) {
  return make(a.value().transpose(), {a.ptr()}, [](Node& self) { parent(self, 0).accumulate(self.grad.transpose()); });
}

Var tanh(const Var& a) {
  Matrix y = a.value().array().tanh().matrix();
  return make(y, {a.ptr()}, [](Node& self) {
    parent(self, 0).accumulate((self.grad.array() * (1.0 - self.value.array().square())).matrix());
  });
}

Var relu(const Var& a) {
  return make(a.value().cwiseMax(0.0), {a.ptr()}, [](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate((self.grad.array() * (p.value.array() > 0.0).cast<double>()).matrix());
  });
}

Var gelu(const Var& a) {
  static constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double c = 0.044715;
  const auto& x = a.value();
  Matrix y = (0.5 * x.array() * (1.0 + (k * (x.array() + c * x.array().cube())).tanh())).matrix();
  return make(std::move(y), {a.ptr()}, [](Node& self) {
    Node& p = parent(self, 0);
    const auto x = p.value.array();
    const Eigen::ArrayXXd t = (k * (x + c * x.cube())).tanh();
    const Eigen::ArrayXXd dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t.square()) * k * (1.0 + 3.0 * c * x.square());
    p.accumulate((self.grad.array() * dy).matrix());
  });
}

Var softplus(const Var& a) {
  Matrix y = a.value().unaryExpr([](double v) { return softplus(v); });
  return make(std::move(y), {a.ptr()}, [](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate(self.grad.cwiseProduct(p.value.unaryExpr([](double v) { return sigmoid(v); })));
  });
}

Var square(const Var& a) {
  return make(a.value().array().square().matrix(), {a.ptr()}, [](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate(2.0 * self.grad.cwiseProduct(p.value));
  });
}

Var log_clamped(const Var& a, double floor) {
  Matrix y = a.value().cwiseMax(floor).array().log().matrix();
  return make(std::move(y), {a.ptr()}, [floor](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate(p.value.binaryExpr(self.grad, [floor](double x, double g) { return x > floor ? g / x : 0.0; }));
  });
}

Var softmax_rows(const Var& a) {
  Matrix y = a.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    y.row(r).array() -= y.row(r).maxCoeff();
    y.row(r) = y.row(r).array().exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return make(std::move(y), {a.ptr()}, [](Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd dot = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.cwiseProduct(self.grad.colwise() - dot);
    parent(self, 0).accumulate(g);
  });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = a.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n)
    throw Error(ErrorCode::ShapeMismatch, "layer_norm_rows: gamma/beta must be 1x" + std::to_string(n));
  const Matrix& x = a.value();
  Eigen::VectorXd mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt().matrix();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return make(std::move(y), {a.ptr(), gamma.ptr(), beta.ptr()},
              [xhat = std::move(xhat), inv_std = std::move(inv_std), n](Node& self) {
                Node& px = parent(self, 0);
                Node& pg = parent(self, 1);
                Node& pb = parent(self, 2);
                if (pg.requires_grad) pg.accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
                if (pb.requires_grad) pb.accumulate(self.grad.colwise().sum());
                if (px.requires_grad) {
                  Matrix dxhat = self.grad.array().rowwise() * pg.value.row(0).array();
                  Eigen::VectorXd m1 = dxhat.rowwise().mean();
                  Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / static_cast<double>(n);
                  Matrix dx = (dxhat.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
                  px.accumulate((dx.array().colwise() * inv_std.array()).matrix());
                }
              });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw Error(ErrorCode::ShapeMismatch, "slice_cols out of range");
  return make(a.value().middleCols(start, count), {a.ptr()}, [start, count](Node& self) {
    Node& p = parent(self, 0);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(start, count) = self.grad;
    p.accumulate(g);
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw Error(ErrorCode::ShapeMismatch, "slice_rows out of range");
  return make(a.value().middleRows(start, count), {a.ptr()}, [start, count](Node& self) {
    Node& p = parent(self, 0);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleRows(start, count) = self.grad;
    p.accumulate(g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat_cols of nothing");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) throw Error(ErrorCode::ShapeMismatch, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(parts.front().rows(), cols);
  std::vector<std::shared_ptr<Node>> parents;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    parents.push_back(p.ptr());
  }
  return make(std::move(out), std::move(parents), [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index c = p->value.cols();
      if (p->requires_grad) p->accumulate(self.grad.middleCols(at, c));
      at += c;
    }
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw Error(ErrorCode::ShapeMismatch, "reshape changes element count");
  RowMajor src = a.value();
  Matrix out = Eigen::Map<const RowMajor>(src.data(), rows, cols);
  return make(std::move(out), {a.ptr()}, [](Node& self) {
    Node& p = parent(self, 0);
    RowMajor g = self.grad;
    p.accumulate(Eigen::Map<const RowMajor>(g.data(), p.value.rows(), p.value.cols()));
  });
}

Var sum(const Var& a) {
  return make(Matrix::Constant(1, 1, a.value().sum()), {a.ptr()}, [](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Var squared_norm(const Var& a) {
  return make(Matrix::Constant(1, 1, a.value().squaredNorm()), {a.ptr()}, [](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate(2.0 * self.grad(0, 0) * p.value);
  });
}

double grad_check(const std::function<Var(const Var&)>& f, const Matrix& x, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidParams, "grad_check eps must be positive");
  Var input = variable(x);
  Var y = f(input);
  if (y.rows() != 1 || y.cols() != 1) throw Error(ErrorCode::ShapeMismatch, "grad_check needs a scalar function");
  if (!std::isfinite(y.scalar())) throw Error(ErrorCode::NonFiniteValue, "function value is not finite");
  backward(y);
  const Matrix analytic = input.grad();

  double worst = 0.0;
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe(i);
    probe(i) = orig + eps;
    const double up = f(constant(probe)).scalar();
    probe(i) = orig - eps;
    const double down = f(constant(probe)).scalar();
    probe(i) = orig;
    const double numeric = (up - down) / (2.0 * eps);
    if (!std::isfinite(numeric) || !std::isfinite(analytic(i)))
      throw Error(ErrorCode::NonFiniteValue, "non-finite gradient at coordinate " + std::to_string(i));
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
  }
  return worst;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw Error(ErrorCode::InvalidParams, "inverse_softplus needs a positive argument");
  // log(exp(y) - 1), written to stay accurate for large and small y.
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace hp::ad
