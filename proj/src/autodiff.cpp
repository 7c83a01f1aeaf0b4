#include "ttd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "ttd/kernels.hpp"

namespace ttd {

namespace {

thread_local bool g_grad_mode = true;
thread_local std::uint64_t g_gen_counter = 0;

using detail::NodeImpl;
using detail::Vjp;

Node make_node(const char* op, Tensor value, std::vector<Node> parents, Vjp vjp) {
  auto impl = std::make_shared<NodeImpl>();
  impl->op = op;
  if (checked_mode()) value.check_finite(op);
  impl->value = std::move(value);
  if (g_grad_mode) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    if (rg) {
      impl->requires_grad = true;
      impl->parents = std::move(parents);
      impl->vjp = std::move(vjp);
    }
  }
  impl->gen = ++g_gen_counter;
  return Node(std::move(impl));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                              " and " + b.shape_str());
}

// Sum g down to a size-1 tensor of the given shape (scalar-broadcast vjp).
Node reduce_to(const Node& g, const std::vector<std::int64_t>& shape) {
  if (g.shape() == shape) return g;
  return reshape(sum(g), shape);
}

// Elementwise binary with scalar-like broadcast on either side.
template <class F>
Tensor ew_binary(const char* op, const Tensor& a, const Tensor& b, F f) {
  if (a.same_shape(b)) {
    Tensor out = Tensor::zeros(a.shape());
    f(a.ptr(), b.ptr(), out.ptr(), static_cast<std::size_t>(a.size()), false, false);
    return out;
  }
  if (b.is_scalar_like()) {
    Tensor out = Tensor::zeros(a.shape());
    f(a.ptr(), b.ptr(), out.ptr(), static_cast<std::size_t>(a.size()), false, true);
    return out;
  }
  if (a.is_scalar_like()) {
    Tensor out = Tensor::zeros(b.shape());
    f(a.ptr(), b.ptr(), out.ptr(), static_cast<std::size_t>(b.size()), true, false);
    return out;
  }
  shape_error(op, a, b);
}

Tensor map_unary(const Tensor& a, double (*f)(double)) {
  Tensor out = Tensor::zeros(a.shape());
  const double* src = a.ptr();
  double* dst = out.ptr();
  for (std::int64_t i = 0; i < a.size(); ++i) dst[i] = f(src[i]);
  return out;
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

bool grad_mode() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : prev(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = prev; }

Node constant(Tensor value) {
  NoGradGuard ng;
  return make_node("constant", std::move(value), {}, {});
}

Node constant(double value) { return constant(Tensor::scalar(value)); }

Node leaf(Tensor value) {
  auto impl = std::make_shared<NodeImpl>();
  impl->op = "leaf";
  if (checked_mode()) value.check_finite("leaf");
  impl->value = std::move(value);
  impl->requires_grad = true;
  impl->gen = ++g_gen_counter;
  return Node(std::move(impl));
}

// ---------------------------------------------------------------------------
// Arithmetic

Node add(const Node& a, const Node& b) {
  Tensor v = ew_binary("add", a.value(), b.value(),
                       [](const double* x, const double* y, double* o, std::size_t n,
                          bool sx, bool sy) {
                         if (!sx && !sy) { kernels::add(x, y, o, n); return; }
                         if (sy) for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + y[0];
                         else for (std::size_t i = 0; i < n; ++i) o[i] = x[0] + y[i];
                       });
  return make_node("add", std::move(v), {a, b},
                   [a, b](const Node&, const Node& g) -> std::vector<Node> {
                     return {a.requires_grad() ? reduce_to(g, a.shape()) : Node{},
                             b.requires_grad() ? reduce_to(g, b.shape()) : Node{}};
                   });
}

Node sub(const Node& a, const Node& b) {
  Tensor v = ew_binary("sub", a.value(), b.value(),
                       [](const double* x, const double* y, double* o, std::size_t n,
                          bool sx, bool sy) {
                         if (!sx && !sy) { kernels::sub(x, y, o, n); return; }
                         if (sy) for (std::size_t i = 0; i < n; ++i) o[i] = x[i] - y[0];
                         else for (std::size_t i = 0; i < n; ++i) o[i] = x[0] - y[i];
                       });
  return make_node("sub", std::move(v), {a, b},
                   [a, b](const Node&, const Node& g) -> std::vector<Node> {
                     return {a.requires_grad() ? reduce_to(g, a.shape()) : Node{},
                             b.requires_grad() ? reduce_to(neg(g), b.shape()) : Node{}};
                   });
}

Node mul(const Node& a, const Node& b) {
  Tensor v = ew_binary("mul", a.value(), b.value(),
                       [](const double* x, const double* y, double* o, std::size_t n,
                          bool sx, bool sy) {
                         if (!sx && !sy) { kernels::mul(x, y, o, n); return; }
                         if (sy) kernels::scale(x, y[0], o, n);
                         else kernels::scale(y, x[0], o, n);
                       });
  return make_node("mul", std::move(v), {a, b},
                   [a, b](const Node&, const Node& g) -> std::vector<Node> {
                     return {a.requires_grad() ? reduce_to(mul(g, b), a.shape()) : Node{},
                             b.requires_grad() ? reduce_to(mul(g, a), b.shape()) : Node{}};
                   });
}

Node div(const Node& a, const Node& b) {
  Tensor v = ew_binary("div", a.value(), b.value(),
                       [](const double* x, const double* y, double* o, std::size_t n,
                          bool sx, bool sy) {
                         if (!sx && !sy) { kernels::div(x, y, o, n); return; }
                         if (sy) kernels::scale(x, 1.0 / y[0], o, n);
                         else for (std::size_t i = 0; i < n; ++i) o[i] = x[0] / y[i];
                       });
  return make_node("div", std::move(v), {a, b},
                   [a, b](const Node&, const Node& g) -> std::vector<Node> {
                     return {a.requires_grad() ? reduce_to(div(g, b), a.shape()) : Node{},
                             b.requires_grad()
                                 ? reduce_to(neg(mul(g, div(a, square(b)))), b.shape())
                                 : Node{}};
                   });
}

Node neg(const Node& a) { return mul_scalar(a, -1.0); }

Node add_scalar(const Node& a, double c) {
  Tensor v = Tensor::zeros(a.shape());
  for (std::int64_t i = 0; i < v.size(); ++i) v.at(i) = a.value()(i) + c;
  return make_node("add_scalar", std::move(v), {a},
                   [](const Node&, const Node& g) -> std::vector<Node> { return {g}; });
}

Node mul_scalar(const Node& a, double c) {
  Tensor v = Tensor::zeros(a.shape());
  kernels::scale(a.value().ptr(), c, v.ptr(), static_cast<std::size_t>(v.size()));
  return make_node("mul_scalar", std::move(v), {a},
                   [c](const Node&, const Node& g) -> std::vector<Node> {
                     return {mul_scalar(g, c)};
                   });
}

// ---------------------------------------------------------------------------
// Linear algebra

Node matmul(const Node& a, const Node& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    shape_error("matmul", av, bv);
  Tensor v = Tensor::zeros({av.rows(), bv.cols()});
  kernels::matmul(av.ptr(), bv.ptr(), v.ptr(), static_cast<std::size_t>(av.rows()),
                  static_cast<std::size_t>(av.cols()), static_cast<std::size_t>(bv.cols()));
  return make_node("matmul", std::move(v), {a, b},
                   [a, b](const Node&, const Node& g) -> std::vector<Node> {
                     return {a.requires_grad() ? matmul_nt(g, b) : Node{},
                             b.requires_grad() ? matmul_tn(a, g) : Node{}};
                   });
}

Node matmul_nt(const Node& a, const Node& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols())
    shape_error("matmul_nt", av, bv);
  Tensor v = Tensor::zeros({av.rows(), bv.rows()});
  kernels::matmul_nt(av.ptr(), bv.ptr(), v.ptr(), static_cast<std::size_t>(av.rows()),
                     static_cast<std::size_t>(av.cols()), static_cast<std::size_t>(bv.rows()));
  return make_node("matmul_nt", std::move(v), {a, b},
                   [a, b](const Node&, const Node& g) -> std::vector<Node> {
                     return {a.requires_grad() ? matmul(g, b) : Node{},
                             b.requires_grad() ? matmul_tn(g, a) : Node{}};
                   });
}

Node matmul_tn(const Node& a, const Node& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows())
    shape_error("matmul_tn", av, bv);
  Tensor v = Tensor::zeros({av.cols(), bv.cols()});
  kernels::matmul_tn(av.ptr(), bv.ptr(), v.ptr(), static_cast<std::size_t>(av.cols()),
                     static_cast<std::size_t>(av.rows()), static_cast<std::size_t>(bv.cols()));
  return make_node("matmul_tn", std::move(v), {a, b},
                   [a, b](const Node&, const Node& g) -> std::vector<Node> {
                     return {a.requires_grad() ? matmul_nt(b, g) : Node{},
                             b.requires_grad() ? matmul(a, g) : Node{}};
                   });
}

Node transpose(const Node& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw std::invalid_argument("transpose: rank-2 required, got " + av.shape_str());
  Tensor v = Tensor::zeros({av.cols(), av.rows()});
  for (std::int64_t i = 0; i < av.rows(); ++i)
    for (std::int64_t j = 0; j < av.cols(); ++j) v.at(j, i) = av(i, j);
  return make_node("transpose", std::move(v), {a},
                   [](const Node&, const Node& g) -> std::vector<Node> {
                     return {transpose(g)};
                   });
}

Node reshape(const Node& a, std::vector<std::int64_t> shape) {
  if (shape_product(shape) != a.value().size())
    throw std::invalid_argument("reshape: size mismatch from " + a.value().shape_str());
  auto old_shape = a.shape();
  Tensor v(shape, a.value().data());
  return make_node("reshape", std::move(v), {a},
                   [old_shape](const Node&, const Node& g) -> std::vector<Node> {
                     return {reshape(g, old_shape)};
                   });
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts

Node sum(const Node& a) {
  Tensor v = Tensor::scalar(kernels::sum(a.value().ptr(), static_cast<std::size_t>(a.value().size())));
  auto shape = a.shape();
  return make_node("sum", std::move(v), {a},
                   [shape](const Node&, const Node& g) -> std::vector<Node> {
                     return {expand_scalar(g, shape)};
                   });
}

Node mean(const Node& a) {
  const double n = static_cast<double>(a.value().size());
  Tensor v = Tensor::scalar(kernels::sum(a.value().ptr(), static_cast<std::size_t>(a.value().size())) / n);
  auto shape = a.shape();
  return make_node("mean", std::move(v), {a},
                   [shape, n](const Node&, const Node& g) -> std::vector<Node> {
                     return {expand_scalar(mul_scalar(g, 1.0 / n), shape)};
                   });
}

Node rowwise_sum(const Node& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw std::invalid_argument("rowwise_sum: rank-2 required");
  Tensor v = Tensor::zeros({av.rows(), 1});
  for (std::int64_t i = 0; i < av.rows(); ++i)
    v.at(i, 0) = kernels::sum(av.ptr() + i * av.cols(), static_cast<std::size_t>(av.cols()));
  const std::int64_t n = av.cols();
  return make_node("rowwise_sum", std::move(v), {a},
                   [n](const Node&, const Node& g) -> std::vector<Node> {
                     return {broadcast_cols(g, n)};
                   });
}

Node colwise_sum(const Node& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw std::invalid_argument("colwise_sum: rank-2 required");
  Tensor v = Tensor::zeros({1, av.cols()});
  for (std::int64_t i = 0; i < av.rows(); ++i)
    kernels::axpy(1.0, av.ptr() + i * av.cols(), v.ptr(), static_cast<std::size_t>(av.cols()));
  const std::int64_t m = av.rows();
  return make_node("colwise_sum", std::move(v), {a},
                   [m](const Node&, const Node& g) -> std::vector<Node> {
                     return {broadcast_rows(g, m)};
                   });
}

Node broadcast_rows(const Node& row, std::int64_t m) {
  const Tensor& rv = row.value();
  if (rv.rank() != 2 || rv.rows() != 1)
    throw std::invalid_argument("broadcast_rows: 1 x n required, got " + rv.shape_str());
  Tensor v = Tensor::zeros({m, rv.cols()});
  for (std::int64_t i = 0; i < m; ++i)
    std::copy(rv.ptr(), rv.ptr() + rv.cols(), v.ptr() + i * rv.cols());
  return make_node("broadcast_rows", std::move(v), {row},
                   [](const Node&, const Node& g) -> std::vector<Node> {
                     return {colwise_sum(g)};
                   });
}

Node broadcast_cols(const Node& col, std::int64_t n) {
  const Tensor& cv = col.value();
  if (cv.rank() != 2 || cv.cols() != 1)
    throw std::invalid_argument("broadcast_cols: m x 1 required, got " + cv.shape_str());
  Tensor v = Tensor::zeros({cv.rows(), n});
  for (std::int64_t i = 0; i < cv.rows(); ++i)
    for (std::int64_t j = 0; j < n; ++j) v.at(i, j) = cv(i, 0);
  return make_node("broadcast_cols", std::move(v), {col},
                   [](const Node&, const Node& g) -> std::vector<Node> {
                     return {rowwise_sum(g)};
                   });
}

Node expand_scalar(const Node& s, std::vector<std::int64_t> shape) {
  if (!s.value().is_scalar_like())
    throw std::invalid_argument("expand_scalar: scalar required, got " + s.value().shape_str());
  Tensor v = Tensor::full(shape, s.value().item());
  auto sshape = s.shape();
  return make_node("expand_scalar", std::move(v), {s},
                   [sshape](const Node&, const Node& g) -> std::vector<Node> {
                     return {reshape(sum(g), sshape)};
                   });
}

// ---------------------------------------------------------------------------
// Nonlinearities

Node relu(const Node& a) {
  Tensor v = Tensor::zeros(a.shape());
  kernels::relu(a.value().ptr(), v.ptr(), static_cast<std::size_t>(v.size()));
  Tensor mask = Tensor::zeros(a.shape());
  for (std::int64_t i = 0; i < mask.size(); ++i) mask.at(i) = a.value()(i) > 0.0 ? 1.0 : 0.0;
  Node mask_n = constant(std::move(mask));
  return make_node("relu", std::move(v), {a},
                   [mask_n](const Node&, const Node& g) -> std::vector<Node> {
                     return {mul(g, mask_n)};
                   });
}

Node tanh_(const Node& a) {
  Tensor v = map_unary(a.value(), [](double x) { return std::tanh(x); });
  return make_node("tanh", std::move(v), {a},
                   [](const Node& out, const Node& g) -> std::vector<Node> {
                     return {mul(g, add_scalar(neg(square(out)), 1.0))};
                   });
}

Node sigmoid(const Node& a) {
  Tensor v = map_unary(a.value(), [](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return make_node("sigmoid", std::move(v), {a},
                   [](const Node& out, const Node& g) -> std::vector<Node> {
                     return {mul(g, mul(out, add_scalar(neg(out), 1.0)))};
                   });
}

Node softplus(const Node& a) {
  Tensor v = map_unary(a.value(), [](double x) {
    return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
  });
  return make_node("softplus", std::move(v), {a},
                   [a](const Node&, const Node& g) -> std::vector<Node> {
                     return {mul(g, sigmoid(a))};
                   });
}

Node exp_(const Node& a) {
  Tensor v = map_unary(a.value(), [](double x) { return std::exp(x); });
  return make_node("exp", std::move(v), {a},
                   [](const Node& out, const Node& g) -> std::vector<Node> {
                     return {mul(g, out)};
                   });
}

Node log_(const Node& a) {
  Tensor v = map_unary(a.value(), [](double x) { return std::log(x); });
  return make_node("log", std::move(v), {a},
                   [a](const Node&, const Node& g) -> std::vector<Node> {
                     return {div(g, a)};
                   });
}

Node sqrt_(const Node& a) {
  Tensor v = map_unary(a.value(), [](double x) { return std::sqrt(x); });
  return make_node("sqrt", std::move(v), {a},
                   [](const Node& out, const Node& g) -> std::vector<Node> {
                     return {div(g, mul_scalar(out, 2.0))};
                   });
}

Node square(const Node& a) {
  Tensor v = Tensor::zeros(a.shape());
  kernels::mul(a.value().ptr(), a.value().ptr(), v.ptr(), static_cast<std::size_t>(v.size()));
  return make_node("square", std::move(v), {a},
                   [a](const Node&, const Node& g) -> std::vector<Node> {
                     return {mul(g, mul_scalar(a, 2.0))};
                   });
}

Node sin_(const Node& a) {
  Tensor v = map_unary(a.value(), [](double x) { return std::sin(x); });
  return make_node("sin", std::move(v), {a},
                   [a](const Node&, const Node& g) -> std::vector<Node> {
                     return {mul(g, cos_(a))};
                   });
}

Node cos_(const Node& a) {
  Tensor v = map_unary(a.value(), [](double x) { return std::cos(x); });
  return make_node("cos", std::move(v), {a},
                   [a](const Node&, const Node& g) -> std::vector<Node> {
                     return {neg(mul(g, sin_(a)))};
                   });
}

// ---------------------------------------------------------------------------
// Piecewise

Node maximum_scalar(const Node& a, double c) {
  Tensor v = Tensor::zeros(a.shape());
  Tensor mask = Tensor::zeros(a.shape());
  for (std::int64_t i = 0; i < v.size(); ++i) {
    const double x = a.value()(i);
    v.at(i) = x >= c ? x : c;        // ties take the input branch
    mask.at(i) = x >= c ? 1.0 : 0.0;
  }
  Node mask_n = constant(std::move(mask));
  return make_node("maximum_scalar", std::move(v), {a},
                   [mask_n](const Node&, const Node& g) -> std::vector<Node> {
                     return {mul(g, mask_n)};
                   });
}

Node minimum(const Node& a, const Node& b) {
  if (!a.value().same_shape(b.value())) shape_error("minimum", a.value(), b.value());
  Tensor v = Tensor::zeros(a.shape());
  Tensor mask = Tensor::zeros(a.shape());  // 1 where a is taken
  for (std::int64_t i = 0; i < v.size(); ++i) {
    const double x = a.value()(i), y = b.value()(i);
    v.at(i) = x <= y ? x : y;
    mask.at(i) = x <= y ? 1.0 : 0.0;
  }
  Node mask_n = constant(std::move(mask));
  return make_node("minimum", std::move(v), {a, b},
                   [a, b, mask_n](const Node&, const Node& g) -> std::vector<Node> {
                     return {a.requires_grad() ? mul(g, mask_n) : Node{},
                             b.requires_grad() ? mul(g, add_scalar(neg(mask_n), 1.0)) : Node{}};
                   });
}

Node clip(const Node& a, double lo, double hi) {
  Tensor v = Tensor::zeros(a.shape());
  Tensor mask = Tensor::zeros(a.shape());
  for (std::int64_t i = 0; i < v.size(); ++i) {
    const double x = a.value()(i);
    v.at(i) = std::clamp(x, lo, hi);
    mask.at(i) = (x >= lo && x <= hi) ? 1.0 : 0.0;
  }
  Node mask_n = constant(std::move(mask));
  return make_node("clip", std::move(v), {a},
                   [mask_n](const Node&, const Node& g) -> std::vector<Node> {
                     return {mul(g, mask_n)};
                   });
}

Node wrap_angle(const Node& a) {
  Tensor v = map_unary(a.value(), [](double x) {
    double w = std::fmod(x + kPi, 2.0 * kPi);
    if (w < 0.0) w += 2.0 * kPi;
    return w - kPi;
  });
  return make_node("wrap_angle", std::move(v), {a},
                   [](const Node&, const Node& g) -> std::vector<Node> { return {g}; });
}

// ---------------------------------------------------------------------------
// Structure

Node concat_cols(const Node& a, const Node& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor v;
  if (av.rank() == 1 && bv.rank() == 1) {
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(av.size() + bv.size()));
    d.insert(d.end(), av.data().begin(), av.data().end());
    d.insert(d.end(), bv.data().begin(), bv.data().end());
    v = Tensor::vector(std::move(d));
  } else if (av.rank() == 2 && bv.rank() == 2 && av.rows() == bv.rows()) {
    v = Tensor::zeros({av.rows(), av.cols() + bv.cols()});
    for (std::int64_t i = 0; i < av.rows(); ++i) {
      std::copy(av.ptr() + i * av.cols(), av.ptr() + (i + 1) * av.cols(),
                v.ptr() + i * v.cols());
      std::copy(bv.ptr() + i * bv.cols(), bv.ptr() + (i + 1) * bv.cols(),
                v.ptr() + i * v.cols() + av.cols());
    }
  } else {
    shape_error("concat_cols", av, bv);
  }
  const std::int64_t na = av.cols(), nb = bv.cols();
  return make_node("concat_cols", std::move(v), {a, b},
                   [a, b, na, nb](const Node& out, const Node& g) -> std::vector<Node> {
                     (void)out;
                     return {a.requires_grad() ? slice_cols(g, 0, na) : Node{},
                             b.requires_grad() ? slice_cols(g, na, na + nb) : Node{}};
                   });
}

Node slice_cols(const Node& a, std::int64_t lo, std::int64_t hi) {
  const Tensor& av = a.value();
  if (lo < 0 || hi < lo || hi > av.cols())
    throw std::invalid_argument("slice_cols: range out of bounds for " + av.shape_str());
  Tensor v;
  if (av.rank() == 1) {
    v = Tensor::vector({av.data().begin() + lo, av.data().begin() + hi});
  } else {
    v = Tensor::zeros({av.rows(), hi - lo});
    for (std::int64_t i = 0; i < av.rows(); ++i)
      std::copy(av.ptr() + i * av.cols() + lo, av.ptr() + i * av.cols() + hi,
                v.ptr() + i * v.cols());
  }
  const std::int64_t total = av.cols();
  return make_node("slice_cols", std::move(v), {a},
                   [total, lo](const Node&, const Node& g) -> std::vector<Node> {
                     return {pad_cols(g, total, lo)};
                   });
}

Node pad_cols(const Node& a, std::int64_t total, std::int64_t offset) {
  const Tensor& av = a.value();
  if (offset < 0 || offset + av.cols() > total)
    throw std::invalid_argument("pad_cols: range out of bounds");
  Tensor v;
  if (av.rank() == 1) {
    v = Tensor::zeros({total});
    std::copy(av.ptr(), av.ptr() + av.size(), v.ptr() + offset);
  } else {
    v = Tensor::zeros({av.rows(), total});
    for (std::int64_t i = 0; i < av.rows(); ++i)
      std::copy(av.ptr() + i * av.cols(), av.ptr() + (i + 1) * av.cols(),
                v.ptr() + i * total + offset);
  }
  const std::int64_t lo = offset, hi = offset + av.cols();
  return make_node("pad_cols", std::move(v), {a},
                   [lo, hi](const Node&, const Node& g) -> std::vector<Node> {
                     return {slice_cols(g, lo, hi)};
                   });
}

Node stopgrad(const Node& a) {
  NoGradGuard ng;
  return make_node("stopgrad", a.value(), {}, {});
}

// ---------------------------------------------------------------------------
// Composites

Node dot(const Node& u, const Node& v) { return sum(mul(u, v)); }

Node norm(const Node& u) { return sqrt_(sum(square(u))); }

Node cosine_similarity(const Node& u, const Node& v, double eps) {
  return div(dot(u, v), maximum_scalar(mul(norm(u), norm(v)), eps));
}

Node rowwise_cosine(const Node& u, const Node& v, double eps) {
  Node num = rowwise_sum(mul(u, v));
  Node nu = sqrt_(rowwise_sum(square(u)));
  Node nv = sqrt_(rowwise_sum(square(v)));
  return div(num, maximum_scalar(mul(nu, nv), eps));
}

const Tensor& evaluate(const Node& expr) { return expr.value(); }

// ---------------------------------------------------------------------------
// Reverse pass

namespace {

std::vector<Node> backward(const Node& root, const std::vector<Node>& wrt) {
  if (!root.value().is_scalar_like())
    throw std::invalid_argument("gradient: root must be scalar, got " +
                                root.value().shape_str());

  std::unordered_map<NodeImpl*, Node> adjoint;
  std::unordered_map<NodeImpl*, Node> handle;
  // Max-heap on generation: every consumer has a strictly larger generation
  // than its producers, so popping in decreasing order guarantees each
  // node's adjoint is complete before its vjp runs.
  std::priority_queue<std::pair<std::uint64_t, NodeImpl*>> heap;
  std::unordered_set<NodeImpl*> queued;

  auto push = [&](const Node& n, Node g) {
    NodeImpl* key = n.get();
    auto it = adjoint.find(key);
    if (it == adjoint.end()) {
      adjoint.emplace(key, std::move(g));
      handle.emplace(key, n);
    } else {
      it->second = add(it->second, g);
    }
    if (queued.insert(key).second) heap.emplace(n.gen(), key);
  };

  push(root, constant(Tensor::full(root.shape(), 1.0)));

  while (!heap.empty()) {
    NodeImpl* cur = heap.top().second;
    heap.pop();
    if (!cur->vjp) continue;
    const Node self = handle.at(cur);
    const Node g = adjoint.at(cur);
    std::vector<Node> pgrads = cur->vjp(self, g);
    for (std::size_t i = 0; i < cur->parents.size(); ++i) {
      const Node& p = cur->parents[i];
      if (!p.requires_grad() || !pgrads[i].valid()) continue;
      push(p, pgrads[i]);
    }
  }

  std::vector<Node> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = adjoint.find(w.get());
    if (it != adjoint.end()) out.push_back(it->second);
    else out.push_back(constant(Tensor::zeros(w.shape())));
  }
  return out;
}

}  // namespace

std::vector<Node> gradient_nodes(const Node& scalar_root, const std::vector<Node>& wrt) {
  return backward(scalar_root, wrt);
}

std::vector<Tensor> gradient(const Node& scalar_root, const std::vector<Node>& wrt) {
  NoGradGuard ng;  // adjoint expressions become plain values
  auto nodes = backward(scalar_root, wrt);
  std::vector<Tensor> out;
  out.reserve(nodes.size());
  for (auto& n : nodes) out.push_back(n.value());
  return out;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& point, double epsilon) {
  Tensor grad = Tensor::zeros(point.shape());
  Tensor x = point;
  for (std::int64_t i = 0; i < point.size(); ++i) {
    const double orig = x(i);
    x.at(i) = orig + epsilon;
    const double hi = f(x);
    x.at(i) = orig - epsilon;
    const double lo = f(x);
    x.at(i) = orig;
    if (!std::isfinite(hi) || !std::isfinite(lo))
      throw std::runtime_error("finite_difference_gradient: non-finite function value");
    grad.at(i) = (hi - lo) / (2.0 * epsilon);
  }
  return grad;
}

}  // namespace ttd
