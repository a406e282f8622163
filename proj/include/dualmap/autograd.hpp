#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every trainable component (encoders, map convolutions, heads,
// losses) is expressed through the operations declared here.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace dualmap::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows back
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
  // Only the optimizer and checkpoint loader mutate leaf values.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() > 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double scalar() const;
  bool defined() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var parameter(Matrix value);

// Runs backpropagation from a 1x1 output. Gradients accumulate into every
// reachable node that requires them.
void backward(const Var& output);

// While alive on a thread, new nodes record no history.
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

// --- dense algebra ---
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_row(const Var& x, const Var& row);  // broadcast 1xC over rows
Var mul_row(const Var& x, const Var& row);
Var scale(const Var& x, double factor);
Var transpose(const Var& x);
Var sum(const Var& x);
Var mean_rows(const Var& x);  // RxC -> 1xC

// --- elementwise nonlinearities ---
Var relu(const Var& x);
Var sigmoid(const Var& x);

// Inverted dropout with an externally drawn keep mask (1 = keep).
Var dropout(const Var& x, const Matrix& keep_mask, double rate);

// --- row-wise normalization ---
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var softmax_rows(const Var& x);
// Throws std::domain_error for a row with zero norm.
Var l2_normalize_rows(const Var& x);

// --- structural ---
Var slice_rows(const Var& x, Index begin, Index count);
Var slice_cols(const Var& x, Index begin, Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(const Var& x, std::span<const Index> rows);
// Zeroes every row whose flag is 0.
Var mask_rows(const Var& x, std::span<const std::uint8_t> keep);

// --- 2D temporal map kernels; a map is stored as (side*side) x C ---
// cell (a,b) <- x[a] .* x[b] on kept cells, zero elsewhere.
Var outer_product_map(const Var& x, std::span<const std::uint8_t> keep);
// cell (a,b) <- max over x[a..b] on kept cells, zero elsewhere.
Var max_pool_map(const Var& x, std::span<const std::uint8_t> keep);
// Same-shape KxK convolution with zero padding. Weight is (K*K*Cin) x Cout
// laid out as [(dy*K + dx)*Cin + cin]. Only kept output cells are computed,
// the rest are exact zeros.
Var conv2d_same(const Var& x, const Var& weight, const Var& bias, Index side, Index kernel,
                std::span<const std::uint8_t> keep);

// --- losses ---
// Mean binary cross-entropy of sigmoid(logits) against targets, numerically
// stable in the logits.
Var bce_with_logits(const Var& logits, const Matrix& targets);
// -log softmax(l)[0] where l0 = (x0 - margin)/tau and lj = xj/tau for j>0.
// x is a column; a single entry gives exactly zero.
Var margin_softmax_nll(const Var& x, double margin, double tau);

}  // namespace dualmap::ad
