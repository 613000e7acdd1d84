#include "hgmae/autodiff.hpp"

#include "hgmae/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

namespace hgmae::ad {

namespace {

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
}

// Accumulates into an input only if it takes part in differentiation.
template <typename Expr>
void accumulate(Node* input, const Expr& delta) {
  if (input->requires_grad) input->ensure_grad() += delta;
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->ensure_grad();
  return Tensor(std::move(node));
}

Tensor Tensor::from_op(Matrix value, std::vector<Tensor> inputs,
                       std::function<void(Node&)> rule) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.shared());
    node->backward = std::move(rule);
  }
  return Tensor(std::move(node));
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw ShapeError("item: expected 1x1, got " + shape_str(value()));
  }
  return value()(0, 0);
}

Matrix Tensor::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->requires_grad) {
    node_->grad.setZero(rows(), cols());
  } else {
    node_->grad.resize(0, 0);
  }
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.value()) + " * " +
                     shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  return Tensor::from_op(std::move(out), {a, b}, [](Node& self) {
    Node* na = self.inputs[0].get();
    Node* nb = self.inputs[1].get();
    if (na->requires_grad) na->ensure_grad().noalias() += self.grad * nb->value.transpose();
    if (nb->requires_grad) nb->ensure_grad().noalias() += na->value.transpose() * self.grad;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: shape mismatch " + shape_str(a.value()) +
                     " * T" + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value().transpose();
  return Tensor::from_op(std::move(out), {a, b}, [](Node& self) {
    Node* na = self.inputs[0].get();
    Node* nb = self.inputs[1].get();
    if (na->requires_grad) na->ensure_grad().noalias() += self.grad * nb->value;
    if (nb->requires_grad) nb->ensure_grad().noalias() += self.grad.transpose() * na->value;
  });
}

Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return Tensor::from_op(std::move(out), {a}, [](Node& self) {
    accumulate(self.inputs[0].get(), self.grad.transpose());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Matrix out = a.value() + b.value();
  return Tensor::from_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(self.inputs[0].get(), self.grad);
    accumulate(self.inputs[1].get(), self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Matrix out = a.value() - b.value();
  return Tensor::from_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(self.inputs[0].get(), self.grad);
    accumulate(self.inputs[1].get(), -self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return Tensor::from_op(std::move(out), {a, b}, [](Node& self) {
    Node* na = self.inputs[0].get();
    Node* nb = self.inputs[1].get();
    accumulate(na, self.grad.cwiseProduct(nb->value));
    accumulate(nb, self.grad.cwiseProduct(na->value));
  });
}

Tensor scale(const Tensor& a, double factor) {
  Matrix out = a.value() * factor;
  return Tensor::from_op(std::move(out), {a}, [factor](Node& self) {
    accumulate(self.inputs[0].get(), self.grad * factor);
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: shape mismatch " + shape_str(a.value()) + " + row" +
                     shape_str(row.value()));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return Tensor::from_op(std::move(out), {a, row}, [](Node& self) {
    accumulate(self.inputs[0].get(), self.grad);
    accumulate(self.inputs[1].get(), self.grad.colwise().sum());
  });
}

Tensor outer_sum(const Tensor& col, const Tensor& row) {
  if (col.cols() != 1 || row.rows() != 1) {
    throw ShapeError("outer_sum: expected column and row, got " +
                     shape_str(col.value()) + " and " + shape_str(row.value()));
  }
  Matrix out = col.value().replicate(1, row.cols());
  out.rowwise() += row.value().row(0);
  return Tensor::from_op(std::move(out), {col, row}, [](Node& self) {
    accumulate(self.inputs[0].get(), self.grad.rowwise().sum());
    accumulate(self.inputs[1].get(), self.grad.colwise().sum());
  });
}

Tensor scalar_mul(const Tensor& s, const Tensor& a) {
  const double factor = s.item();
  Matrix out = a.value() * factor;
  return Tensor::from_op(std::move(out), {s, a}, [](Node& self) {
    Node* ns = self.inputs[0].get();
    Node* na = self.inputs[1].get();
    if (ns->requires_grad) ns->ensure_grad()(0, 0) += self.grad.cwiseProduct(na->value).sum();
    accumulate(na, self.grad * ns->value(0, 0));
  });
}

// ---------------------------------------------------------------------------

Tensor elu(const Tensor& x, double alpha) {
  Matrix out = x.value().unaryExpr(
      [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); });
  return Tensor::from_op(std::move(out), {x}, [alpha](Node& self) {
    Node* nx = self.inputs[0].get();
    const Matrix local = nx->value.binaryExpr(self.value, [alpha](double in, double out) {
      return in > 0.0 ? 1.0 : out + alpha;
    });
    accumulate(nx, self.grad.cwiseProduct(local));
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Matrix out = x.value().unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return Tensor::from_op(std::move(out), {x}, [slope](Node& self) {
    Node* nx = self.inputs[0].get();
    const Matrix local =
        nx->value.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    accumulate(nx, self.grad.cwiseProduct(local));
  });
}

Tensor tanh(const Tensor& x) {
  Matrix out = x.value().array().tanh().matrix();
  return Tensor::from_op(std::move(out), {x}, [](Node& self) {
    const Matrix local = (1.0 - self.value.array().square()).matrix();
    accumulate(self.inputs[0].get(), self.grad.cwiseProduct(local));
  });
}

Tensor sigmoid(const Tensor& x) {
  Matrix out = x.value().unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return Tensor::from_op(std::move(out), {x}, [](Node& self) {
    const Matrix local = (self.value.array() * (1.0 - self.value.array())).matrix();
    accumulate(self.inputs[0].get(), self.grad.cwiseProduct(local));
  });
}

Tensor rowwise_softmax(const Tensor& x, const Matrix* mask) {
  if (mask && (mask->rows() != x.rows() || mask->cols() != x.cols())) {
    throw ShapeError("rowwise_softmax: mask shape " + shape_str(*mask) +
                     " does not match " + shape_str(x.value()));
  }
  const Matrix& in = x.value();
  Matrix out(in.rows(), in.cols());
  for (Index i = 0; i < in.rows(); ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < in.cols(); ++j) {
      if (!mask || (*mask)(i, j) != 0.0) row_max = std::max(row_max, in(i, j));
    }
    if (row_max == -std::numeric_limits<double>::infinity()) {
      throw DegenerateError("rowwise_softmax: row " + std::to_string(i) +
                            " is fully masked");
    }
    double total = 0.0;
    for (Index j = 0; j < in.cols(); ++j) {
      const double e = (!mask || (*mask)(i, j) != 0.0) ? std::exp(in(i, j) - row_max) : 0.0;
      out(i, j) = e;
      total += e;
    }
    out.row(i) /= total;
  }
  return Tensor::from_op(std::move(out), {x}, [](Node& self) {
    // d x = y * (g - rowsum(g * y)); masked entries have y == 0.
    const Matrix gy = self.grad.cwiseProduct(self.value);
    const Eigen::VectorXd dots = gy.rowwise().sum();
    Matrix delta = gy;
    delta -= (self.value.array().colwise() * dots.array()).matrix();
    accumulate(self.inputs[0].get(), delta);
  });
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor::from_op(std::move(out), {a}, [](Node& self) {
    Node* na = self.inputs[0].get();
    if (na->requires_grad) na->ensure_grad().array() += self.grad(0, 0);
  });
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows: empty input");
  Matrix out = a.value().colwise().mean();
  return Tensor::from_op(std::move(out), {a}, [](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    const double inv = 1.0 / static_cast<double>(na->value.rows());
    na->ensure_grad().rowwise() += self.grad.row(0) * inv;
  });
}

Tensor add_all(std::span<const Tensor> terms) {
  if (terms.empty()) throw ShapeError("add_all: no terms");
  Matrix out = terms[0].value();
  for (std::size_t k = 1; k < terms.size(); ++k) {
    require_same_shape("add_all", terms[0], terms[k]);
    out += terms[k].value();
  }
  return Tensor::from_op(std::move(out), std::vector<Tensor>(terms.begin(), terms.end()),
                         [](Node& self) {
                           for (auto& in : self.inputs) accumulate(in.get(), self.grad);
                         });
}

Tensor hstack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("hstack: no parts");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("hstack: row mismatch " + shape_str(parts[0].value()) + " vs " +
                       shape_str(p.value()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return Tensor::from_op(std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                         [](Node& self) {
                           Index off = 0;
                           for (auto& in : self.inputs) {
                             const Index c = in->value.cols();
                             accumulate(in.get(), self.grad.middleCols(off, c));
                             off += c;
                           }
                         });
}

Tensor element(const Tensor& a, Index row, Index col) {
  if (row < 0 || row >= a.rows() || col < 0 || col >= a.cols()) {
    throw ShapeError("element: index (" + std::to_string(row) + "," + std::to_string(col) +
                     ") outside " + shape_str(a.value()));
  }
  Matrix out(1, 1);
  out(0, 0) = a.value()(row, col);
  return Tensor::from_op(std::move(out), {a}, [row, col](Node& self) {
    Node* na = self.inputs[0].get();
    if (na->requires_grad) na->ensure_grad()(row, col) += self.grad(0, 0);
  });
}

Tensor gather_rows(const Tensor& a, std::span<const Index> index) {
  Matrix out(static_cast<Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(index[i]) + " outside " +
                       shape_str(a.value()));
    }
    out.row(static_cast<Index>(i)) = a.value().row(index[i]);
  }
  std::vector<Index> idx(index.begin(), index.end());
  return Tensor::from_op(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    Matrix& g = na->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
  });
}

Tensor replace_rows(const Tensor& a, std::span<const Index> rows, const Tensor& token) {
  if (token.rows() != 1 || token.cols() != a.cols()) {
    throw ShapeError("replace_rows: token " + shape_str(token.value()) +
                     " does not fit rows of " + shape_str(a.value()));
  }
  Matrix out = a.value();
  std::vector<Index> idx(rows.begin(), rows.end());
  for (Index r : idx) {
    if (r < 0 || r >= a.rows()) {
      throw ShapeError("replace_rows: row " + std::to_string(r) + " outside " +
                       shape_str(a.value()));
    }
    out.row(r) = token.value().row(0);
  }
  return Tensor::from_op(std::move(out), {a, token}, [idx = std::move(idx)](Node& self) {
    Node* na = self.inputs[0].get();
    Node* nt = self.inputs[1].get();
    if (na->requires_grad) {
      Matrix g = self.grad;
      for (Index r : idx) g.row(r).setZero();
      na->ensure_grad() += g;
    }
    if (nt->requires_grad) {
      Matrix& gt = nt->ensure_grad();
      for (Index r : idx) gt.row(0) += self.grad.row(r);
    }
  });
}

// ---------------------------------------------------------------------------

namespace {

// Rounding can push the cosine slightly above 1; NaN passes through.
double one_minus_cos(double c) {
  const double d = 1.0 - c;
  return d < 0.0 ? 0.0 : d;
}

}  // namespace

Tensor sce_rows(const Tensor& x, const Tensor& y, double gamma, std::span<const Index> rows,
                std::size_t* excluded) {
  require_same_shape("sce_rows", x, y);
  if (!(gamma >= 1.0)) throw ParameterError("sce_rows: gamma must be >= 1");

  const Matrix& xv = x.value();
  const Matrix& yv = y.value();
  struct RowTerm {
    Index row;
    double nx, ny, cos;
  };
  std::vector<RowTerm> terms;
  terms.reserve(rows.size());
  std::size_t dropped = 0;
  for (Index r : rows) {
    if (r < 0 || r >= xv.rows()) {
      throw ShapeError("sce_rows: row " + std::to_string(r) + " outside " + shape_str(xv));
    }
    double dot = 0.0, sx = 0.0, sy = 0.0;
    for (Index k = 0; k < xv.cols(); ++k) {
      dot += xv(r, k) * yv(r, k);
      sx += xv(r, k) * xv(r, k);
      sy += yv(r, k) * yv(r, k);
    }
    const double nx = std::sqrt(sx);
    const double ny = std::sqrt(sy);
    if (nx == 0.0 || ny == 0.0) {
      ++dropped;
      continue;
    }
    // sqrt(sx * sy) keeps identical rows at a cosine of exactly 1.
    const double sxy = sx * sy;
    const double denom = std::isfinite(sxy) && sxy > 0.0 ? std::sqrt(sxy) : nx * ny;
    const double c = dot / std::max(denom, kSceEpsilon);
    terms.push_back({r, nx, ny, c});
  }
  if (excluded) *excluded = dropped;
  if (terms.empty()) {
    throw DegenerateError("sce_rows: every row has zero norm (" + std::to_string(dropped) +
                          " excluded)");
  }

  const double inv_n = 1.0 / static_cast<double>(terms.size());
  double total = 0.0;
  for (const auto& t : terms) total += std::pow(one_minus_cos(t.cos), gamma);
  Matrix out(1, 1);
  out(0, 0) = total * inv_n;

  return Tensor::from_op(std::move(out), {x, y},
                         [terms = std::move(terms), gamma, inv_n](Node& self) {
    Node* nx = self.inputs[0].get();
    Node* ny = self.inputs[1].get();
    const double g = self.grad(0, 0);
    for (const auto& t : terms) {
      const double base = one_minus_cos(t.cos);
      const double dcos = -g * inv_n * gamma * std::pow(base, gamma - 1.0);
      const auto xr = nx->value.row(t.row);
      const auto yr = ny->value.row(t.row);
      const double prod = t.nx * t.ny;
      if (nx->requires_grad) {
        nx->ensure_grad().row(t.row) +=
            dcos * (yr / prod - t.cos * xr / (t.nx * t.nx));
      }
      if (ny->requires_grad) {
        ny->ensure_grad().row(t.row) +=
            dcos * (xr / prod - t.cos * yr / (t.ny * t.ny));
      }
    }
  });
}

Tensor sce_rows(const Tensor& x, const Tensor& y, double gamma, std::size_t* excluded) {
  std::vector<Index> all(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) all[static_cast<std::size_t>(i)] = i;
  return sce_rows(x, y, gamma, all, excluded);
}

// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("backward: loss must be 1x1, got " +
                     (loss.defined() ? shape_str(loss.value()) : std::string("undefined")));
  }
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
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

  root->ensure_grad()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

GradCheckReport grad_check(const std::function<Tensor()>& f, Tensor x, double h, double tol) {
  if (!(h > 0.0)) throw ParameterError("grad_check: step h must be positive");
  if (!x.requires_grad()) throw ParameterError("grad_check: x does not require grad");

  x.zero_grad();
  backward(f());
  const Matrix analytic = x.grad();

  GradCheckReport report;
  Matrix& value = x.mutable_value();
  for (Index j = 0; j < value.cols(); ++j) {
    for (Index i = 0; i < value.rows(); ++i) {
      const double saved = value(i, j);
      value(i, j) = saved + h;
      const double plus = f().item();
      value(i, j) = saved - h;
      const double minus = f().item();
      value(i, j) = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic(i, j);
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
      ++report.coordinates;
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace hgmae::ad
