#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ttd/tensor.hpp"

namespace ttd {

class Node;

namespace detail {

using Vjp = std::function<std::vector<Node>(const Node& out, const Node& grad)>;

struct NodeImpl {
  Tensor value;
  std::vector<Node> parents;
  Vjp vjp;                   // parallel to parents; empty for leaves/constants
  bool requires_grad = false;
  std::uint64_t gen = 0;     // strictly increases parent -> child
  const char* op = "leaf";
};

}  // namespace detail

// Handle to an immutable value in a differentiable computation graph.
// Values are computed eagerly at construction; evaluate() returns the cache.
class Node {
 public:
  Node() = default;
  explicit Node(std::shared_ptr<detail::NodeImpl> impl) : impl_(std::move(impl)) {}

  bool valid() const { return impl_ != nullptr; }
  const Tensor& value() const { return impl_->value; }
  const std::vector<std::int64_t>& shape() const { return impl_->value.shape(); }
  bool requires_grad() const { return impl_->requires_grad; }
  std::uint64_t gen() const { return impl_->gen; }
  const char* op() const { return impl_->op; }
  detail::NodeImpl* get() const { return impl_.get(); }

 private:
  std::shared_ptr<detail::NodeImpl> impl_;
};

// Thread-local graph-recording switch; when off, new ops carry no parents.
bool grad_mode();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};

// Leaves.
Node constant(Tensor value);
Node constant(double value);
Node leaf(Tensor value);  // requires_grad = true

// Arithmetic (same shape, or either operand scalar-like).
Node add(const Node& a, const Node& b);
Node sub(const Node& a, const Node& b);
Node mul(const Node& a, const Node& b);
Node div(const Node& a, const Node& b);
Node neg(const Node& a);
Node add_scalar(const Node& a, double c);
Node mul_scalar(const Node& a, double c);

inline Node operator+(const Node& a, const Node& b) { return add(a, b); }
inline Node operator-(const Node& a, const Node& b) { return sub(a, b); }
inline Node operator*(const Node& a, const Node& b) { return mul(a, b); }
inline Node operator/(const Node& a, const Node& b) { return div(a, b); }
inline Node operator-(const Node& a) { return neg(a); }

// Linear algebra (rank-2 operands).
Node matmul(const Node& a, const Node& b);
// a * b^T and a^T * b without materializing the transpose (backbone of the
// backward passes through large weight matrices).
Node matmul_nt(const Node& a, const Node& b);
Node matmul_tn(const Node& a, const Node& b);
Node transpose(const Node& a);
Node reshape(const Node& a, std::vector<std::int64_t> shape);

// Reductions and broadcasts.
Node sum(const Node& a);
Node mean(const Node& a);
Node rowwise_sum(const Node& a);                   // m x n -> m x 1
Node colwise_sum(const Node& a);                   // m x n -> 1 x n
Node broadcast_rows(const Node& row, std::int64_t m);  // 1 x n -> m x n
Node broadcast_cols(const Node& col, std::int64_t n);  // m x 1 -> m x n
Node expand_scalar(const Node& s, std::vector<std::int64_t> shape);

// Nonlinearities.
Node relu(const Node& a);
Node tanh_(const Node& a);
Node sigmoid(const Node& a);
Node softplus(const Node& a);
Node exp_(const Node& a);
Node log_(const Node& a);
Node sqrt_(const Node& a);
Node square(const Node& a);
Node sin_(const Node& a);
Node cos_(const Node& a);

// Piecewise ops; subgradients use the convention documented at each site.
Node maximum_scalar(const Node& a, double c);
Node minimum(const Node& a, const Node& b);
Node clip(const Node& a, double lo, double hi);
// ((x + pi) mod 2pi) - pi with derivative 1 everywhere (one-sided at wraps).
Node wrap_angle(const Node& a);

// Structure.
Node concat_cols(const Node& a, const Node& b);
Node slice_cols(const Node& a, std::int64_t lo, std::int64_t hi);
Node pad_cols(const Node& a, std::int64_t total, std::int64_t offset);
Node stopgrad(const Node& a);

// Composites.
Node dot(const Node& u, const Node& v);
Node norm(const Node& u);
Node cosine_similarity(const Node& u, const Node& v, double eps = 1e-8);
// Rowwise cosine over matching m x n matrices -> m x 1 column.
Node rowwise_cosine(const Node& u, const Node& v, double eps = 1e-8);

// Forward value of an expression (cached, idempotent).
const Tensor& evaluate(const Node& expr);

// d(scalar)/d(wrt).  Unreachable targets get zero gradients.
std::vector<Tensor> gradient(const Node& scalar_root, const std::vector<Node>& wrt);
// Same, but results are graph nodes supporting further differentiation.
std::vector<Node> gradient_nodes(const Node& scalar_root, const std::vector<Node>& wrt);

// Central-difference oracle: (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& point, double epsilon);

}  // namespace ttd
