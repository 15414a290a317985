#include "omni/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "omni/error.hpp"

namespace omni {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  Tensor::BackwardFn backward;
  bool grad_ready = false;

  bool is_leaf() const { return parents.empty(); }
};

}  // namespace detail

namespace {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_2d(const Tensor& t, const char* op) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// out[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const double* g, const double* b, double* out, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* orow = out + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      orow[p] += acc;
    }
  }
}

// out[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const double* a, const double* g, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// --- Tensor ---------------------------------------------------------------------------

Tensor::Tensor() : Tensor(Shape{0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape_size(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(data), requires_grad);
}

Tensor Tensor::vector(std::vector<double> data, bool requires_grad) {
  const std::size_t n = data.size();
  return Tensor(Shape{n}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  if (s.size() == 2) return s[0];
  if (s.size() == 1) return 1;
  throw DimensionError("rows(): tensor of shape " + shape_str(s) + " is not a matrix");
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  throw DimensionError("cols(): tensor of shape " + shape_str(s) + " is not a matrix");
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item(): tensor has " + std::to_string(size()) + " values");
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const std::size_t n = cols();
  if (r >= rows() || c >= n) throw IndexError("at(): index out of range");
  return node_->data[r * n + c];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t n = cols();
  if (r >= rows()) throw IndexError("row(): index out of range");
  return std::span<const double>(node_->data).subspan(r * n, n);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
bool Tensor::has_grad() const { return node_->grad_ready; }
std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

Tensor Tensor::make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                       BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data), false);
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
  }
  return out;
}

void Tensor::backward() {
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients describe this pass only; leaves accumulate.
  for (detail::Node* n : order) {
    if (!n->grad_ready) {
      n->grad.assign(n->data.size(), 0.0);
      n->grad_ready = true;
    } else if (!n->is_leaf()) {
      std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
  }
  for (double& g : node_->grad) g += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->is_leaf() || !n->backward) continue;
    BackwardContext ctx;
    ctx.grad_out = n->grad;
    ctx.out = n->data;
    ctx.in.reserve(n->parents.size());
    ctx.in_grad.reserve(n->parents.size());
    for (auto& p : n->parents) {
      ctx.in.emplace_back(p->data);
      if (p->requires_grad) {
        ctx.in_grad.emplace_back(p->grad);
      } else {
        ctx.in_grad.emplace_back();
      }
    }
    n->backward(ctx);
  }
}

// --- linear algebra -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::make_op({m, n}, std::move(out), {a, b}, [m, k, n](Tensor::BackwardContext& c) {
    if (!c.in_grad[0].empty()) gemm_nt(c.grad_out.data(), c.in[1].data(), c.in_grad[0].data(), m, n, k);
    if (!c.in_grad[1].empty()) gemm_tn(c.in[0].data(), c.grad_out.data(), c.in_grad[1].data(), m, k, n);
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto d = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = d[i * n + j];
  return Tensor::make_op({n, m}, std::move(out), {a}, [m, n](Tensor::BackwardContext& c) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c.in_grad[0][i * n + j] += c.grad_out[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](Tensor::BackwardContext& c) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (c.in_grad[k].empty()) continue;
      for (std::size_t i = 0; i < c.grad_out.size(); ++i) c.in_grad[k][i] += c.grad_out[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](Tensor::BackwardContext& c) {
    if (!c.in_grad[0].empty())
      for (std::size_t i = 0; i < c.grad_out.size(); ++i) c.in_grad[0][i] += c.grad_out[i];
    if (!c.in_grad[1].empty())
      for (std::size_t i = 0; i < c.grad_out.size(); ++i) c.in_grad[1][i] -= c.grad_out[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](Tensor::BackwardContext& c) {
    if (!c.in_grad[0].empty())
      for (std::size_t i = 0; i < c.grad_out.size(); ++i) c.in_grad[0][i] += c.grad_out[i] * c.in[1][i];
    if (!c.in_grad[1].empty())
      for (std::size_t i = 0; i < c.grad_out.size(); ++i) c.in_grad[1][i] += c.grad_out[i] * c.in[0][i];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= s;
  return Tensor::make_op(a.shape(), std::move(out), {a}, [s](Tensor::BackwardContext& c) {
    for (std::size_t i = 0; i < c.grad_out.size(); ++i) c.in_grad[0][i] += s * c.grad_out[i];
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.size() != n) {
    throw DimensionError("add_bias: bias of " + std::to_string(bias.size()) + " values for " +
                         std::to_string(n) + " columns");
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return Tensor::make_op(a.shape(), std::move(out), {a, bias}, [m, n](Tensor::BackwardContext& c) {
    if (!c.in_grad[0].empty())
      for (std::size_t i = 0; i < c.grad_out.size(); ++i) c.in_grad[0][i] += c.grad_out[i];
    if (!c.in_grad[1].empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) c.in_grad[1][j] += c.grad_out[i * n + j];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_bias(matmul(x, w), b); }
Tensor linear(const Tensor& x, const Tensor& w) { return matmul(x, w); }

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::make_op(x.shape(), std::move(out), {x}, [](Tensor::BackwardContext& c) {
    for (std::size_t i = 0; i < c.grad_out.size(); ++i)
      if (c.in[0][i] > 0.0) c.in_grad[0][i] += c.grad_out[i];
  });
}

Tensor silu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] / (1.0 + std::exp(-d[i]));
  return Tensor::make_op(x.shape(), std::move(out), {x}, [](Tensor::BackwardContext& c) {
    for (std::size_t i = 0; i < c.grad_out.size(); ++i) {
      const double v = c.in[0][i];
      const double s = 1.0 / (1.0 + std::exp(-v));
      c.in_grad[0][i] += c.grad_out[i] * (s * (1.0 + v * (1.0 - s)));
    }
  });
}

// --- reductions -----------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  const auto d = x.data();
  const double s = std::accumulate(d.begin(), d.end(), 0.0);
  return Tensor::make_op({}, {s}, {x}, [](Tensor::BackwardContext& c) {
    for (double& g : c.in_grad[0]) g += c.grad_out[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];

  const auto d = x.data();
  std::vector<double> out(d.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, d[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(d[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  }
  return Tensor::make_op(s, std::move(out), {x}, [outer, inner, len](Tensor::BackwardContext& c) {
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += c.grad_out[base + k * inner] * c.out[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          c.in_grad[0][i] += c.out[i] * (c.grad_out[i] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("log_softmax: scalar input");
  const std::size_t len = s.back();
  const std::size_t outer = len == 0 ? 0 : x.size() / len;
  const auto d = x.data();
  std::vector<double> out(d.size());
  for (std::size_t o = 0; o < outer; ++o) {
    const double* row = d.data() + o * len;
    const double mx = *std::max_element(row, row + len);
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) z += std::exp(row[k] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t k = 0; k < len; ++k) out[o * len + k] = row[k] - lse;
  }
  return Tensor::make_op(s, std::move(out), {x}, [outer, len](Tensor::BackwardContext& c) {
    for (std::size_t o = 0; o < outer; ++o) {
      double gs = 0.0;
      for (std::size_t k = 0; k < len; ++k) gs += c.grad_out[o * len + k];
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t i = o * len + k;
        c.in_grad[0][i] += c.grad_out[i] - std::exp(c.out[i]) * gs;
      }
    }
  });
}

Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (weight.size() != n) throw DimensionError("rms_norm: weight width mismatch");
  const auto d = x.data();
  const auto w = weight.data();
  std::vector<double> out(d.size());
  std::vector<double> inv(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += d[i * n + j] * d[i * n + j];
    inv[i] = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = d[i * n + j] * inv[i] * w[j];
  }
  return Tensor::make_op(x.shape(), std::move(out), {x, weight},
                         [m, n, inv = std::move(inv)](Tensor::BackwardContext& c) {
    const auto xs = c.in[0];
    const auto w = c.in[1];
    for (std::size_t i = 0; i < m; ++i) {
      const double r = inv[i];
      if (!c.in_grad[1].empty()) {
        for (std::size_t j = 0; j < n; ++j) c.in_grad[1][j] += c.grad_out[i * n + j] * xs[i * n + j] * r;
      }
      if (!c.in_grad[0].empty()) {
        // y_j = x_j * r * w_j, r = (mean(x^2) + eps)^(-1/2)
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += c.grad_out[i * n + j] * w[j] * xs[i * n + j];
        const double coef = r * r * r * dot / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          c.in_grad[0][i * n + j] += c.grad_out[i * n + j] * w[j] * r - xs[i * n + j] * coef;
        }
      }
    }
  });
}

// --- structural -----------------------------------------------------------------------

Tensor concat_last_dim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_last_dim: no inputs");
  const bool one_d = parts.front().dim() == 1;
  const std::size_t m = one_d ? 1 : parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim() != parts.front().dim() || (!one_d && p.rows() != m)) {
      throw DimensionError("concat_last_dim: incompatible shapes " + shape_str(parts.front().shape()) +
                           " and " + shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto d = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(d.data() + i * widths[k], widths[k], out.data() + i * total + off);
    off += widths[k];
  }
  Shape shape = one_d ? Shape{total} : Shape{m, total};
  return Tensor::make_op(std::move(shape), std::move(out), parts,
                         [m, total, widths](Tensor::BackwardContext& c) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (!c.in_grad[k].empty()) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j)
            c.in_grad[k][i * widths[k] + j] += c.grad_out[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  std::vector<double> out;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    if (p.dim() != 2 || p.cols() != n) {
      throw DimensionError("concat_rows: incompatible shapes " + shape_str(parts.front().shape()) +
                           " and " + shape_str(p.shape()));
    }
    m += p.rows();
    sizes.push_back(p.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return Tensor::make_op({m, n}, std::move(out), parts, [sizes](Tensor::BackwardContext& c) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (!c.in_grad[k].empty())
        for (std::size_t i = 0; i < sizes[k]; ++i) c.in_grad[k][i] += c.grad_out[off + i];
      off += sizes[k];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_2d(x, "slice_rows");
  const std::size_t n = x.cols();
  if (begin > end || end > x.rows()) throw IndexError("slice_rows: range out of bounds");
  std::vector<double> out(x.data().begin() + begin * n, x.data().begin() + end * n);
  return Tensor::make_op({end - begin, n}, std::move(out), {x}, [begin, n](Tensor::BackwardContext& c) {
    for (std::size_t i = 0; i < c.grad_out.size(); ++i) c.in_grad[0][begin * n + i] += c.grad_out[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_2d(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols(), w = end - begin;
  if (begin > end || end > n) throw IndexError("slice_cols: range out of bounds");
  std::vector<double> out(m * w);
  const auto d = x.data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(d.data() + i * n + begin, w, out.data() + i * w);
  return Tensor::make_op({m, w}, std::move(out), {x}, [m, n, w, begin](Tensor::BackwardContext& c) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) c.in_grad[0][i * n + begin + j] += c.grad_out[i * w + j];
  });
}

Tensor repeat_rows(const Tensor& x, std::size_t times) {
  require_2d(x, "repeat_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out;
  out.reserve(m * times * n);
  const auto d = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t r = 0; r < times; ++r) out.insert(out.end(), d.begin() + i * n, d.begin() + (i + 1) * n);
  return Tensor::make_op({m * times, n}, std::move(out), {x}, [m, n, times](Tensor::BackwardContext& c) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t r = 0; r < times; ++r)
        for (std::size_t j = 0; j < n; ++j) c.in_grad[0][i * n + j] += c.grad_out[(i * times + r) * n + j];
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  require_2d(table, "embedding_lookup");
  const std::size_t vocab = table.rows(), n = table.cols();
  std::vector<double> out(ids.size() * n);
  const auto d = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    std::copy_n(d.data() + ids[i] * n, n, out.data() + i * n);
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return Tensor::make_op({ids.size(), n}, std::move(out), {table},
                         [n, idv = std::move(idv)](Tensor::BackwardContext& c) {
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) c.in_grad[0][idv[i] * n + j] += c.grad_out[i * n + j];
  });
}

Tensor causal_mask(const Tensor& scores, std::size_t offset) {
  require_2d(scores, "causal_mask");
  const std::size_t m = scores.rows(), n = scores.cols();
  std::vector<double> out(scores.data().begin(), scores.data().end());
  const double ninf = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + offset + 1; j < n; ++j) out[i * n + j] = ninf;
  return Tensor::make_op(scores.shape(), std::move(out), {scores}, [m, n, offset](Tensor::BackwardContext& c) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n && j <= i + offset; ++j) c.in_grad[0][i * n + j] += c.grad_out[i * n + j];
  });
}

Tensor rope(const Tensor& x, std::size_t heads, std::size_t offset, double theta) {
  require_2d(x, "rope");
  const std::size_t m = x.rows(), n = x.cols();
  if (heads == 0 || n % heads != 0 || (n / heads) % 2 != 0) {
    throw DimensionError("rope: width " + std::to_string(n) + " not splittable into " +
                         std::to_string(heads) + " even-width heads");
  }
  const std::size_t hd = n / heads;
  std::vector<double> cosv(m * hd / 2), sinv(m * hd / 2);
  for (std::size_t i = 0; i < m; ++i) {
    const double pos = static_cast<double>(offset + i);
    for (std::size_t p = 0; p < hd / 2; ++p) {
      const double freq = std::pow(theta, -2.0 * static_cast<double>(p) / static_cast<double>(hd));
      cosv[i * hd / 2 + p] = std::cos(pos * freq);
      sinv[i * hd / 2 + p] = std::sin(pos * freq);
    }
  }
  const auto d = x.data();
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t p = 0; p < hd / 2; ++p) {
        const std::size_t a = i * n + h * hd + 2 * p;
        const double cs = cosv[i * hd / 2 + p], sn = sinv[i * hd / 2 + p];
        out[a] = d[a] * cs - d[a + 1] * sn;
        out[a + 1] = d[a] * sn + d[a + 1] * cs;
      }
  return Tensor::make_op(x.shape(), std::move(out), {x},
                         [m, n, heads, hd, cosv = std::move(cosv), sinv = std::move(sinv)](Tensor::BackwardContext& c) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t p = 0; p < hd / 2; ++p) {
          const std::size_t a = i * n + h * hd + 2 * p;
          const double cs = cosv[i * hd / 2 + p], sn = sinv[i * hd / 2 + p];
          c.in_grad[0][a] += c.grad_out[a] * cs + c.grad_out[a + 1] * sn;
          c.in_grad[0][a + 1] += -c.grad_out[a] * sn + c.grad_out[a + 1] * cs;
        }
  });
}

// --- losses ---------------------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  const std::size_t m = logits.dim() == 1 ? 1 : logits.rows();
  const std::size_t vocab = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(m) + " rows");
  }
  for (std::size_t t : targets) {
    if (t >= vocab) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  }
  const auto d = logits.data();
  std::vector<double> probs(d.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = d.data() + i * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t k = 0; k < vocab; ++k) z += std::exp(row[k] - mx);
    const double lse = mx + std::log(z);
    loss += lse - row[targets[i]];
    for (std::size_t k = 0; k < vocab; ++k) probs[i * vocab + k] = std::exp(row[k] - lse);
  }
  std::vector<std::size_t> tv(targets.begin(), targets.end());
  return Tensor::make_op({}, {loss}, {logits},
                         [vocab, probs = std::move(probs), tv = std::move(tv)](Tensor::BackwardContext& c) {
    const double g = c.grad_out[0];
    for (std::size_t i = 0; i < tv.size(); ++i) {
      for (std::size_t k = 0; k < vocab; ++k) c.in_grad[0][i * vocab + k] += g * probs[i * vocab + k];
      c.in_grad[0][i * vocab + tv[i]] -= g;
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  const std::size_t t[1] = {target};
  return cross_entropy(logits, std::span<const std::size_t>(t, 1));
}

}  // namespace omni
