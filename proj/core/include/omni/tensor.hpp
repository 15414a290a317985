#pragma once

// Dense row-major float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared node. Operations record their inputs
// and a backward closure only when at least one input requires a gradient, so
// inference code pays nothing for the tape.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace omni {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                       bool requires_grad = false);
  static Tensor vector(std::vector<double> data, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size() const;
  // Row/column counts of a 2-D tensor. A 1-D tensor reads as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Writable view for parameter updates and test perturbation. Values of
  // derived tensors are snapshots, so writing to them does not re-run the graph.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;
  std::span<const double> row(std::size_t r) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Seeds d(sum of this)/d(this) = 1 and propagates to every reachable tensor
  // that requires a gradient. Leaf gradients accumulate across calls.
  void backward();

  // Same values, no history.
  Tensor detach() const;

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  // Context handed to a backward closure.
  struct BackwardContext {
    std::span<const double> grad_out;
    std::span<const double> out;
    std::vector<std::span<const double>> in;
    // One entry per input; empty span when that input needs no gradient.
    std::vector<std::span<double>> in_grad;
  };
  using BackwardFn = std::function<void(BackwardContext&)>;

  // Builds a result node. The backward closure is kept only if some input
  // requires a gradient. This is also the extension point for custom ops.
  static Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                        BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// --- elementwise & linear algebra -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// a[m x n] + bias[n] on every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);
// x * w + b, with w stored [in x out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);

// --- reductions & normalisation -------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x);  // over the last axis
Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps);

// --- structural -----------------------------------------------------------------------

Tensor concat_last_dim(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// Row i of the result is row i / times of x.
Tensor repeat_rows(const Tensor& x, std::size_t times);
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids);

// --- sequence helpers -----------------------------------------------------------------

// scores[i][j] = -inf wherever j > i + offset.
Tensor causal_mask(const Tensor& scores, std::size_t offset);
// Rotary position embedding over each head's (2p, 2p+1) feature pairs; row i is
// at absolute position offset + i.
Tensor rope(const Tensor& x, std::size_t heads, std::size_t offset, double theta);

// --- losses ---------------------------------------------------------------------------

// Sum over rows of -log softmax(logits[r])[targets[r]].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);
Tensor cross_entropy(const Tensor& logits, std::size_t target);

}  // namespace omni
