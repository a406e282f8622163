#include "dualmap/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace dualmap::ad {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

bool any_requires_grad(std::initializer_list<const Var*> vars) {
  for (const Var* v : vars)
    if (v->requires_grad()) return true;
  return false;
}

// Creates a result node; history is only recorded when some input needs it.
Var make_result(Matrix value, std::initializer_list<const Var*> inputs,
                std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled && any_requires_grad(inputs)) {
    node->requires_grad = true;
    for (const Var* v : inputs) node->parents.push_back(v->node());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

Var make_result_n(Matrix value, std::span<const Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  for (const Var& v : inputs) needs = needs || v.requires_grad();
  if (g_grad_enabled && needs) {
    node->requires_grad = true;
    for (const Var& v : inputs) node->parents.push_back(v.node());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

inline void push(Node* n, const Matrix& g) {
  if (n->requires_grad) n->accumulate(g);
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

double Var::scalar() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("Var::scalar on non-1x1 value");
  return value()(0, 0);
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& output) {
  require(output.rows() == 1 && output.cols() == 1, "backward expects a 1x1 output");
  if (!output.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  seen.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  output.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result(a.value() * b.value(), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad * pb->value.transpose());
    if (pb->requires_grad) pb->accumulate(pa->value.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result(a.value() + b.value(), {&a, &b}, [pa, pb](Node& self) {
    push(pa, self.grad);
    push(pb, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result(a.value() - b.value(), {&a, &b}, [pa, pb](Node& self) {
    push(pa, self.grad);
    if (pb->requires_grad) pb->accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result(a.value().cwiseProduct(b.value()), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad.cwiseProduct(pb->value));
    if (pb->requires_grad) pb->accumulate(self.grad.cwiseProduct(pa->value));
  });
}

Var add_row(const Var& x, const Var& row) {
  require(row.rows() == 1 && row.cols() == x.cols(), "add_row: row shape mismatch");
  Node* px = x.node().get();
  Node* pr = row.node().get();
  Matrix out = x.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {&x, &row}, [px, pr](Node& self) {
    push(px, self.grad);
    if (pr->requires_grad) pr->accumulate(self.grad.colwise().sum());
  });
}

Var mul_row(const Var& x, const Var& row) {
  require(row.rows() == 1 && row.cols() == x.cols(), "mul_row: row shape mismatch");
  Node* px = x.node().get();
  Node* pr = row.node().get();
  Matrix out = x.value().array().rowwise() * row.value().row(0).array();
  return make_result(std::move(out), {&x, &row}, [px, pr](Node& self) {
    if (px->requires_grad) {
      Matrix g = self.grad.array().rowwise() * pr->value.row(0).array();
      px->accumulate(g);
    }
    if (pr->requires_grad) pr->accumulate(self.grad.cwiseProduct(px->value).colwise().sum());
  });
}

Var scale(const Var& x, double factor) {
  Node* px = x.node().get();
  return make_result(x.value() * factor, {&x},
                     [px, factor](Node& self) { push(px, self.grad * factor); });
}

Var transpose(const Var& x) {
  Node* px = x.node().get();
  return make_result(x.value().transpose(), {&x},
                     [px](Node& self) { push(px, self.grad.transpose()); });
}

Var sum(const Var& x) {
  Node* px = x.node().get();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make_result(std::move(out), {&x}, [px](Node& self) {
    push(px, Matrix::Constant(px->value.rows(), px->value.cols(), self.grad(0, 0)));
  });
}

Var mean_rows(const Var& x) {
  require(x.rows() > 0, "mean_rows: empty input");
  Node* px = x.node().get();
  const double inv = 1.0 / static_cast<double>(x.rows());
  Matrix out = x.value().colwise().sum() * inv;
  return make_result(std::move(out), {&x}, [px, inv](Node& self) {
    Matrix g = self.grad.replicate(px->value.rows(), 1) * inv;
    push(px, g);
  });
}

Var relu(const Var& x) {
  Node* px = x.node().get();
  return make_result(x.value().cwiseMax(0.0), {&x}, [px](Node& self) {
    Matrix g = (px->value.array() > 0.0).select(self.grad, 0.0);
    push(px, g);
  });
}

Var sigmoid(const Var& x) {
  Node* px = x.node().get();
  Matrix out = x.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return make_result(std::move(out), {&x}, [px](Node& self) {
    Matrix g = self.grad.array() * self.value.array() * (1.0 - self.value.array());
    push(px, g);
  });
}

Var dropout(const Var& x, const Matrix& keep_mask, double rate) {
  require(keep_mask.rows() == x.rows() && keep_mask.cols() == x.cols(), "dropout: mask shape");
  require(rate >= 0.0 && rate < 1.0, "dropout: rate outside [0,1)");
  Node* px = x.node().get();
  Matrix factor = keep_mask * (1.0 / (1.0 - rate));
  Matrix out = x.value().cwiseProduct(factor);
  return make_result(std::move(out), {&x}, [px, factor](Node& self) {
    push(px, self.grad.cwiseProduct(factor));
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Index r = x.rows(), c = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == c, "layer_norm_rows: gamma shape");
  require(beta.rows() == 1 && beta.cols() == c, "layer_norm_rows: beta shape");
  Matrix xhat(r, c);
  Eigen::VectorXd inv_std(r);
  for (Index i = 0; i < r; ++i) {
    const double mu = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  Node* px = x.node().get();
  Node* pg = gamma.node().get();
  Node* pb = beta.node().get();
  return make_result(std::move(out), {&x, &gamma, &beta},
                     [px, pg, pb, xhat, inv_std](Node& self) {
                       const Matrix& g = self.grad;
                       if (pg->requires_grad) pg->accumulate(g.cwiseProduct(xhat).colwise().sum());
                       if (pb->requires_grad) pb->accumulate(g.colwise().sum());
                       if (px->requires_grad) {
                         Matrix gx(g.rows(), g.cols());
                         for (Index i = 0; i < g.rows(); ++i) {
                           Eigen::RowVectorXd gh = g.row(i).array() * pg->value.row(0).array();
                           const double m1 = gh.mean();
                           const double m2 = gh.cwiseProduct(xhat.row(i)).mean();
                           gx.row(i) = inv_std(i) * (gh.array() - m1 - xhat.row(i).array() * m2);
                         }
                         px->accumulate(gx);
                       }
                     });
}

Var softmax_rows(const Var& x) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.value().row(i).maxCoeff();
    Eigen::RowVectorXd e = (x.value().row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  Node* px = x.node().get();
  return make_result(std::move(out), {&x}, [px](Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd dot = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.array() * (self.grad.colwise() - dot).array();
    push(px, g);
  });
}

Var l2_normalize_rows(const Var& x) {
  Eigen::VectorXd norms = x.value().rowwise().norm();
  for (Index i = 0; i < norms.size(); ++i)
    if (!(norms(i) > 0.0) || !std::isfinite(norms(i)))
      throw std::domain_error("l2_normalize_rows: row " + std::to_string(i) +
                              " has zero or non-finite norm");
  Matrix out = x.value().array().colwise() / norms.array();
  Node* px = x.node().get();
  return make_result(std::move(out), {&x}, [px, norms](Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd dot = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = (self.grad - (y.array().colwise() * dot.array()).matrix()).array().colwise() /
               norms.array();
    push(px, g);
  });
}

Var slice_rows(const Var& x, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= x.rows(), "slice_rows: out of range");
  Node* px = x.node().get();
  return make_result(x.value().middleRows(begin, count), {&x}, [px, begin](Node& self) {
    if (!px->requires_grad) return;
    Matrix g = Matrix::Zero(px->value.rows(), px->value.cols());
    g.middleRows(begin, self.grad.rows()) = self.grad;
    px->accumulate(g);
  });
}

Var slice_cols(const Var& x, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= x.cols(), "slice_cols: out of range");
  Node* px = x.node().get();
  return make_result(x.value().middleCols(begin, count), {&x}, [px, begin](Node& self) {
    if (!px->requires_grad) return;
    Matrix g = Matrix::Zero(px->value.rows(), px->value.cols());
    g.middleCols(begin, self.grad.cols()) = self.grad;
    px->accumulate(g);
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const Index c = parts.front().cols();
  Index r = 0;
  for (const Var& p : parts) {
    require(p.cols() == c, "concat_rows: column mismatch");
    r += p.rows();
  }
  Matrix out(r, c);
  std::vector<Node*> nodes;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    nodes.push_back(p.node().get());
    offsets.push_back(off);
    off += p.rows();
  }
  return make_result_n(std::move(out), parts, [nodes, offsets](Node& self) {
    for (std::size_t k = 0; k < nodes.size(); ++k)
      if (nodes[k]->requires_grad && nodes[k]->value.rows() > 0)
        nodes[k]->accumulate(self.grad.middleRows(offsets[k], nodes[k]->value.rows()));
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index r = parts.front().rows();
  Index c = 0;
  for (const Var& p : parts) {
    require(p.rows() == r, "concat_cols: row mismatch");
    c += p.cols();
  }
  Matrix out(r, c);
  std::vector<Node*> nodes;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    nodes.push_back(p.node().get());
    offsets.push_back(off);
    off += p.cols();
  }
  return make_result_n(std::move(out), parts, [nodes, offsets](Node& self) {
    for (std::size_t k = 0; k < nodes.size(); ++k)
      if (nodes[k]->requires_grad && nodes[k]->value.cols() > 0)
        nodes[k]->accumulate(self.grad.middleCols(offsets[k], nodes[k]->value.cols()));
  });
}

Var gather_rows(const Var& x, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < x.rows(), "gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = x.value().row(rows[i]);
  }
  Node* px = x.node().get();
  std::vector<Index> idx(rows.begin(), rows.end());
  return make_result(std::move(out), {&x}, [px, idx](Node& self) {
    if (!px->requires_grad) return;
    Matrix g = Matrix::Zero(px->value.rows(), px->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    px->accumulate(g);
  });
}

Var mask_rows(const Var& x, std::span<const std::uint8_t> keep) {
  require(static_cast<Index>(keep.size()) == x.rows(), "mask_rows: mask length mismatch");
  Matrix out = x.value();
  for (Index i = 0; i < out.rows(); ++i)
    if (!keep[static_cast<std::size_t>(i)]) out.row(i).setZero();
  Node* px = x.node().get();
  std::vector<std::uint8_t> k(keep.begin(), keep.end());
  return make_result(std::move(out), {&x}, [px, k](Node& self) {
    Matrix g = self.grad;
    for (Index i = 0; i < g.rows(); ++i)
      if (!k[static_cast<std::size_t>(i)]) g.row(i).setZero();
    push(px, g);
  });
}

namespace {

Index side_of(std::span<const std::uint8_t> keep) {
  const auto s = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(keep.size()))));
  require(s * s == static_cast<Index>(keep.size()), "map mask is not square");
  return s;
}

}  // namespace

Var outer_product_map(const Var& x, std::span<const std::uint8_t> keep) {
  const Index n = x.rows(), c = x.cols();
  require(side_of(keep) == n, "outer_product_map: mask side differs from clip count");
  Matrix out = Matrix::Zero(n * n, c);
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b)
      if (keep[static_cast<std::size_t>(a * n + b)])
        out.row(a * n + b) = x.value().row(a).cwiseProduct(x.value().row(b));
  Node* px = x.node().get();
  std::vector<std::uint8_t> k(keep.begin(), keep.end());
  return make_result(std::move(out), {&x}, [px, k, n](Node& self) {
    Matrix g = Matrix::Zero(px->value.rows(), px->value.cols());
    for (Index a = 0; a < n; ++a)
      for (Index b = 0; b < n; ++b)
        if (k[static_cast<std::size_t>(a * n + b)]) {
          const auto go = self.grad.row(a * n + b);
          g.row(a) += go.cwiseProduct(px->value.row(b));
          g.row(b) += go.cwiseProduct(px->value.row(a));
        }
    push(px, g);
  });
}

Var max_pool_map(const Var& x, std::span<const std::uint8_t> keep) {
  const Index n = x.rows(), c = x.cols();
  require(side_of(keep) == n, "max_pool_map: mask side differs from clip count");
  Matrix out = Matrix::Zero(n * n, c);
  // argmax row per (cell, channel) for the backward pass
  std::vector<Index> arg(static_cast<std::size_t>(n * n * c), -1);
  for (Index a = 0; a < n; ++a) {
    Eigen::RowVectorXd running = x.value().row(a);
    std::vector<Index> running_arg(static_cast<std::size_t>(c), a);
    for (Index b = a; b < n; ++b) {
      if (b > a)
        for (Index k = 0; k < c; ++k)
          if (x.value()(b, k) > running(k)) {
            running(k) = x.value()(b, k);
            running_arg[static_cast<std::size_t>(k)] = b;
          }
      if (keep[static_cast<std::size_t>(a * n + b)]) {
        out.row(a * n + b) = running;
        for (Index k = 0; k < c; ++k)
          arg[static_cast<std::size_t>((a * n + b) * c + k)] = running_arg[static_cast<std::size_t>(k)];
      }
    }
  }
  Node* px = x.node().get();
  return make_result(std::move(out), {&x}, [px, arg, n, c](Node& self) {
    Matrix g = Matrix::Zero(px->value.rows(), px->value.cols());
    for (Index cell = 0; cell < n * n; ++cell)
      for (Index k = 0; k < c; ++k) {
        const Index src = arg[static_cast<std::size_t>(cell * c + k)];
        if (src >= 0) g(src, k) += self.grad(cell, k);
      }
    push(px, g);
  });
}

Var conv2d_same(const Var& x, const Var& weight, const Var& bias, Index side, Index kernel,
                std::span<const std::uint8_t> keep) {
  require(kernel > 0 && kernel % 2 == 1, "conv2d_same: kernel size must be odd");
  require(x.rows() == side * side, "conv2d_same: input is not side*side rows");
  require(static_cast<Index>(keep.size()) == side * side, "conv2d_same: mask size");
  const Index cin = x.cols();
  const Index cout = weight.cols();
  require(weight.rows() == kernel * kernel * cin, "conv2d_same: weight rows != K*K*Cin");
  require(bias.rows() == 1 && bias.cols() == cout, "conv2d_same: bias shape");

  std::vector<Index> cells;
  for (Index i = 0; i < side * side; ++i)
    if (keep[static_cast<std::size_t>(i)]) cells.push_back(i);
  const Index m = static_cast<Index>(cells.size());
  const Index half = kernel / 2;

  // im2col over kept output cells only
  Matrix cols = Matrix::Zero(m, kernel * kernel * cin);
  for (Index r = 0; r < m; ++r) {
    const Index a = cells[static_cast<std::size_t>(r)] / side;
    const Index b = cells[static_cast<std::size_t>(r)] % side;
    for (Index dy = 0; dy < kernel; ++dy) {
      const Index ya = a + dy - half;
      if (ya < 0 || ya >= side) continue;
      for (Index dx = 0; dx < kernel; ++dx) {
        const Index xb = b + dx - half;
        if (xb < 0 || xb >= side) continue;
        cols.block(r, (dy * kernel + dx) * cin, 1, cin) = x.value().row(ya * side + xb);
      }
    }
  }
  Matrix y = cols * weight.value();
  y.rowwise() += bias.value().row(0);
  Matrix out = Matrix::Zero(side * side, cout);
  for (Index r = 0; r < m; ++r) out.row(cells[static_cast<std::size_t>(r)]) = y.row(r);

  Node* px = x.node().get();
  Node* pw = weight.node().get();
  Node* pb = bias.node().get();
  return make_result(
      std::move(out), {&x, &weight, &bias},
      [px, pw, pb, cells, cols = std::move(cols), side, kernel, cin, half](Node& self) {
        const Index m = static_cast<Index>(cells.size());
        Matrix gy(m, self.grad.cols());
        for (Index r = 0; r < m; ++r) gy.row(r) = self.grad.row(cells[static_cast<std::size_t>(r)]);
        if (pw->requires_grad) pw->accumulate(cols.transpose() * gy);
        if (pb->requires_grad) pb->accumulate(gy.colwise().sum());
        if (px->requires_grad) {
          Matrix gcols = gy * pw->value.transpose();
          Matrix gx = Matrix::Zero(side * side, cin);
          for (Index r = 0; r < m; ++r) {
            const Index a = cells[static_cast<std::size_t>(r)] / side;
            const Index b = cells[static_cast<std::size_t>(r)] % side;
            for (Index dy = 0; dy < kernel; ++dy) {
              const Index ya = a + dy - half;
              if (ya < 0 || ya >= side) continue;
              for (Index dx = 0; dx < kernel; ++dx) {
                const Index xb = b + dx - half;
                if (xb < 0 || xb >= side) continue;
                gx.row(ya * side + xb) += gcols.block(r, (dy * kernel + dx) * cin, 1, cin);
              }
            }
          }
          px->accumulate(gx);
        }
      });
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
          "bce_with_logits: target shape mismatch");
  require(logits.value().size() > 0, "bce_with_logits: empty input");
  const double inv = 1.0 / static_cast<double>(logits.value().size());
  double total = 0.0;
  const Matrix& z = logits.value();
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = 0; j < z.cols(); ++j) {
      const double v = z(i, j), y = targets(i, j);
      // log(1+exp(-|v|)) + max(v,0) - v*y
      total += std::max(v, 0.0) - v * y + std::log1p(std::exp(-std::abs(v)));
    }
  Matrix out(1, 1);
  out(0, 0) = total * inv;
  Node* pz = logits.node().get();
  return make_result(std::move(out), {&logits}, [pz, targets, inv](Node& self) {
    Matrix p = pz->value.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    push(pz, (p - targets) * (inv * self.grad(0, 0)));
  });
}

Var margin_softmax_nll(const Var& x, double margin, double tau) {
  require(x.cols() == 1 && x.rows() >= 1, "margin_softmax_nll: expects a non-empty column");
  require(tau > 0.0, "margin_softmax_nll: temperature must be positive");
  const Index k = x.rows();
  Eigen::VectorXd l = x.value().col(0) / tau;
  l(0) = (x.value()(0, 0) - margin) / tau;
  const double mx = l.maxCoeff();
  Eigen::VectorXd e = (l.array() - mx).exp();
  const double z = e.sum();
  Eigen::VectorXd soft = e / z;
  Matrix out(1, 1);
  out(0, 0) = k == 1 ? 0.0 : -(l(0) - mx - std::log(z));
  Node* px = x.node().get();
  return make_result(std::move(out), {&x}, [px, soft, tau, k](Node& self) {
    if (k == 1) return;
    Matrix g(k, 1);
    g.col(0) = soft / tau;
    g(0, 0) -= 1.0 / tau;
    push(px, g * self.grad(0, 0));
  });
}

}  // namespace dualmap::ad
