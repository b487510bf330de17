#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

// Dense row-major tensors with reverse-mode autodiff. Ops evaluate eagerly
// and record a backward closure on the output node whenever an input requires
// gradients; backward(loss) replays the recorded graph in reverse topological
// order and consumes it. All computation is in 64-bit reals.

namespace mmnet {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline void check_shape_valid(const Shape& shape) {
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
  }
}

// Uniform double in [0,1) built from the raw engine output so the stream is
// identical on every platform.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::size_t size() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }

  void accumulate(const double* g, std::size_t n) {
    ensure_grad();
    for (std::size_t i = 0; i < n; ++i) grad[i] += g[i];
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false) {
    check_shape_valid(shape);
    if (numel(shape) != values.size()) {
      throw std::invalid_argument("data length " + std::to_string(values.size()) +
                                  " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    check_shape_valid(shape);
    std::size_t n = numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    check_shape_valid(shape);
    std::size_t n = numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                        bool requires_grad = false) {
    check_shape_valid(shape);
    std::vector<double> v(numel(shape));
    for (double& x : v) x = uniform_in(rng, lo, hi);
    return from_data(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor identity(int n) {
    Tensor t = zeros({n, n});
    for (int i = 0; i < n; ++i) t.data()[static_cast<std::size_t>(i) * n + i] = 1.0;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int extent(int axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
  std::size_t size() const { return node_->size(); }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double item() const {
    if (size() != 1) throw std::invalid_argument("item() requires a scalar tensor, got " + shape_str(shape()));
    return node_->value[0];
  }

  double at(int i) const { return node_->value[static_cast<std::size_t>(i)]; }
  double at(int i, int j) const { return node_->value[flat({i, j})]; }
  double at(int i, int j, int k) const { return node_->value[flat({i, j, k})]; }
  double at(int i, int j, int k, int l) const { return node_->value[flat({i, j, k, l})]; }

  bool all_finite() const {
    for (double v : node_->value) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Low-level node construction for new ops. The closure receives the output
  // node and must accumulate into the parents' grad buffers.
  static Tensor make_node(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                          std::function<void(detail::Node&)> backward) {
    Tensor out = from_data(std::move(shape), std::move(values));
    bool needs = false;
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
    if (needs) {
      out.node_->requires_grad = true;
      out.node_->parents.reserve(parents.size());
      for (Tensor& p : parents) out.node_->parents.push_back(p.node_);
      out.node_->backward = std::move(backward);
    }
    return out;
  }

  detail::Node* raw() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& handle() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::size_t flat(std::initializer_list<int> idx) const {
    const Shape& s = node_->shape;
    if (idx.size() != s.size()) throw std::invalid_argument("index rank mismatch");
    std::size_t off = 0;
    std::size_t a = 0;
    for (int i : idx) {
      off = off * static_cast<std::size_t>(s[a]) + static_cast<std::size_t>(i);
      ++a;
    }
    return off;
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Broadcast over equal-rank shapes where one operand may have extent 1 on an
// axis. Anything else requires an explicit reshape by the caller.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool trivial = false;  // both shapes equal
};

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* opname) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(opname) + ": rank mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
  }
  BroadcastPlan plan;
  plan.out.resize(a.size());
  plan.trivial = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) {
      plan.out[i] = a[i];
    } else if (a[i] == 1 || b[i] == 1) {
      plan.out[i] = std::max(a[i], b[i]);
      plan.trivial = false;
    } else {
      throw std::invalid_argument(std::string(opname) + ": shapes " + shape_str(a) + " and " +
                                  shape_str(b) + " do not broadcast");
    }
  }
  auto strides_of = [&](const Shape& s) {
    std::vector<std::size_t> st(s.size(), 0);
    std::size_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
      st[static_cast<std::size_t>(i)] = (s[static_cast<std::size_t>(i)] == 1 && plan.out[static_cast<std::size_t>(i)] != 1)
                                            ? 0
                                            : acc;
      acc *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    }
    return st;
  };
  plan.stride_a = strides_of(a);
  plan.stride_b = strides_of(b);
  return plan;
}

// Walks every output index of the plan, handing (out_linear, a_linear, b_linear)
// to fn. Used by both the forward loop and the broadcast-aware grad reduction.
template <typename Fn>
inline void for_broadcast(const BroadcastPlan& plan, Fn&& fn) {
  const std::size_t rank = plan.out.size();
  std::vector<int> idx(rank, 0);
  std::size_t total = numel(plan.out);
  std::size_t ia = 0, ib = 0;
  for (std::size_t lin = 0; lin < total; ++lin) {
    fn(lin, ia, ib);
    for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
      std::size_t ud = static_cast<std::size_t>(d);
      ++idx[ud];
      ia += plan.stride_a[ud];
      ib += plan.stride_b[ud];
      if (idx[ud] < plan.out[ud]) break;
      ia -= plan.stride_a[ud] * static_cast<std::size_t>(plan.out[ud]);
      ib -= plan.stride_b[ud] * static_cast<std::size_t>(plan.out[ud]);
      idx[ud] = 0;
    }
  }
}

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<MatRM>;
using MapConst = Eigen::Map<const MatRM>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops (equal shapes or extent-1 broadcast).

namespace detail {

template <typename Fwd, typename Bwd>
inline Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  BroadcastPlan plan = plan_broadcast(a.shape(), b.shape(), name);
  std::vector<double> out(numel(plan.out));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  if (plan.trivial) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(pa[i], pb[i]);
  } else {
    for_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = fwd(pa[ia], pb[ib]); });
  }
  auto an = a.handle();
  auto bn = b.handle();
  return Tensor::make_node(plan.out, std::move(out), {a, b}, [an, bn, plan, bwd](detail::Node& n) {
    const bool need_a = an->requires_grad;
    const bool need_b = bn->requires_grad;
    if (need_a) an->ensure_grad();
    if (need_b) bn->ensure_grad();
    const double* pa = an->value.data();
    const double* pb = bn->value.data();
    const double* g = n.grad.data();
    if (plan.trivial) {
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        auto [da, db] = bwd(pa[i], pb[i], n.value[i]);
        if (need_a) an->grad[i] += g[i] * da;
        if (need_b) bn->grad[i] += g[i] * db;
      }
    } else {
      for_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        auto [da, db] = bwd(pa[ia], pb[ib], n.value[o]);
        if (need_a) an->grad[ia] += g[o] * da;
        if (need_b) bn->grad[ib] += g[o] * db;
      });
    }
  });
}

template <typename Fwd, typename Bwd>
inline Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
  std::vector<double> out(x.size());
  const double* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(px[i]);
  auto xn = x.handle();
  return Tensor::make_node(x.shape(), std::move(out), {x}, [xn, bwd](detail::Node& n) {
    xn->ensure_grad();
    const double* g = n.grad.data();
    const double* px = xn->value.data();
    for (std::size_t i = 0; i < n.value.size(); ++i) xn->grad[i] += g[i] * bwd(px[i], n.value[i]);
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, "add", [](double x, double y) { return x + y; },
                           [](double, double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, "sub", [](double x, double y) { return x - y; },
                           [](double, double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, "mul", [](double x, double y) { return x * y; },
                           [](double x, double y, double) { return std::pair<double, double>{y, x}; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, "div", [](double x, double y) { return x / y; },
                           [](double x, double y, double) {
                             return std::pair<double, double>{1.0 / y, -x / (y * y)};
                           });
}

inline Tensor add(const Tensor& a, double c) {
  return detail::unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Tensor mul(const Tensor& a, double c) {
  return detail::unary_op(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

inline Tensor neg(const Tensor& a) { return mul(a, -1.0); }

// Stable logistic: never evaluates exp on a positive argument.
inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(x, [](double v) { return sigmoid_value(v); },
                          [](double, double y) { return y * (1.0 - y); });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; },
                          [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_op(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw std::invalid_argument("log of non-positive value");
  }
  return detail::unary_op(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

// sqrt uses a zero subgradient at 0 so guarded norms of all-zero vectors do
// not poison the backward pass.
inline Tensor sqrt(const Tensor& x) {
  for (double v : x.data()) {
    if (v < 0.0) throw std::invalid_argument("sqrt of negative value");
  }
  return detail::unary_op(x, [](double v) { return std::sqrt(v); },
                          [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

// ---------------------------------------------------------------------------
// Matrix multiply (2-D), Eigen-backed.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul requires rank-2 operands, got " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  const int m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
  if (k != k2) {
    throw std::invalid_argument("matmul inner extents disagree: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  {
    detail::MapConst A(a.data().data(), m, k);
    detail::MapConst B(b.data().data(), k, n);
    detail::MapMat C(out.data(), m, n);
    C.noalias() = A * B;
  }
  auto an = a.handle();
  auto bn = b.handle();
  return Tensor::make_node({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](detail::Node& node) {
    detail::MapConst G(node.grad.data(), m, n);
    if (an->requires_grad) {
      an->ensure_grad();
      detail::MapConst B(bn->value.data(), k, n);
      detail::MapMat GA(an->grad.data(), m, k);
      GA.noalias() += G * B.transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      detail::MapConst A(an->value.data(), m, k);
      detail::MapMat GB(bn->grad.data(), k, n);
      GB.noalias() += A.transpose() * G;
    }
  });
}

// ---------------------------------------------------------------------------
// 2-D convolution (cross-correlation) on [C,H,W] with kernel [O,C,k,k].

namespace detail {

inline void im2col(const double* x, int C, int H, int W, int k, int pad, int stride, int Ho, int Wo,
                   double* cols) {
  // cols is (C*k*k) x (Ho*Wo), row-major
  const std::size_t span = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * span;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            std::fill(row + static_cast<std::size_t>(oy) * Wo, row + (static_cast<std::size_t>(oy) + 1) * Wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
          double* dst = row + static_cast<std::size_t>(oy) * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

inline void col2im(const double* cols, int C, int H, int W, int k, int pad, int stride, int Ho, int Wo,
                   double* gx) {
  const std::size_t span = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * span;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          double* dst = gx + (static_cast<std::size_t>(c) * H + iy) * W;
          const double* src = row + static_cast<std::size_t>(oy) * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

inline Tensor conv2d(const Tensor& x, const Tensor& kernel, int padding, int stride = 1) {
  if (x.rank() != 3 || kernel.rank() != 4) {
    throw std::invalid_argument("conv2d expects input [C,H,W] and kernel [O,C,k,k]");
  }
  const int C = x.extent(0), H = x.extent(1), W = x.extent(2);
  const int O = kernel.extent(0), Ck = kernel.extent(1), kh = kernel.extent(2), kw = kernel.extent(3);
  if (Ck != C) throw std::invalid_argument("conv2d channel mismatch: input has " + std::to_string(C) +
                                           ", kernel expects " + std::to_string(Ck));
  if (kh != kw) throw std::invalid_argument("conv2d kernel must be square");
  if (kh % 2 == 0) throw std::invalid_argument("conv2d kernel extent must be odd");
  if (padding < 0 || stride < 1) throw std::invalid_argument("conv2d: bad padding/stride");
  if (H + 2 * padding < kh || W + 2 * padding < kw) {
    throw std::invalid_argument("conv2d kernel larger than padded input");
  }
  const int Ho = (H + 2 * padding - kh) / stride + 1;
  const int Wo = (W + 2 * padding - kw) / stride + 1;
  const int ckk = C * kh * kw;
  const std::size_t span = static_cast<std::size_t>(Ho) * Wo;

  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(ckk) * span);
  detail::im2col(x.data().data(), C, H, W, kh, padding, stride, Ho, Wo, cols->data());

  std::vector<double> out(static_cast<std::size_t>(O) * span);
  {
    detail::MapConst K(kernel.data().data(), O, ckk);
    detail::MapConst Cm(cols->data(), ckk, static_cast<int>(span));
    detail::MapMat Om(out.data(), O, static_cast<int>(span));
    Om.noalias() = K * Cm;
  }
  auto xn = x.handle();
  auto kn = kernel.handle();
  return Tensor::make_node({O, Ho, Wo}, std::move(out), {x, kernel},
                           [xn, kn, cols, C, H, W, kh, padding, stride, Ho, Wo, O, ckk, span](detail::Node& node) {
                             detail::MapConst G(node.grad.data(), O, static_cast<int>(span));
                             if (kn->requires_grad) {
                               kn->ensure_grad();
                               detail::MapConst Cm(cols->data(), ckk, static_cast<int>(span));
                               detail::MapMat GK(kn->grad.data(), O, ckk);
                               GK.noalias() += G * Cm.transpose();
                             }
                             if (xn->requires_grad) {
                               xn->ensure_grad();
                               std::vector<double> gcols(static_cast<std::size_t>(ckk) * span);
                               detail::MapConst K(kn->value.data(), O, ckk);
                               detail::MapMat GC(gcols.data(), ckk, static_cast<int>(span));
                               GC.noalias() = K.transpose() * G;
                               detail::col2im(gcols.data(), C, H, W, kh, padding, stride, Ho, Wo,
                                              xn->grad.data());
                             }
                           });
}

// ---------------------------------------------------------------------------
// Axis reductions and softmax. Axis handling decomposes the shape into
// (outer, axis, inner) blocks.

namespace detail {

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, int axis, const char* opname) {
  if (axis < 0 || axis >= static_cast<int>(shape.size())) {
    throw std::invalid_argument(std::string(opname) + ": axis " + std::to_string(axis) +
                                " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(i)]);
  s.extent = static_cast<std::size_t>(shape[static_cast<std::size_t>(axis)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= static_cast<std::size_t>(shape[i]);
  return s;
}

inline Shape reduced_shape(const Shape& shape, int axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[static_cast<std::size_t>(axis)] = 1;
  } else {
    out.erase(out.begin() + axis);
    if (out.empty()) out = {1};
  }
  return out;
}

}  // namespace detail

inline Tensor softmax(const Tensor& x, int axis) {
  auto sp = detail::split_axis(x.shape(), axis, "softmax");
  std::vector<double> out(x.size());
  const double* px = x.data().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < sp.extent; ++a) mx = std::max(mx, px[base + a * sp.inner]);
      double denom = 0.0;
      for (std::size_t a = 0; a < sp.extent; ++a) {
        const std::size_t i = base + a * sp.inner;
        out[i] = std::exp(px[i] - mx);
        denom += out[i];
      }
      for (std::size_t a = 0; a < sp.extent; ++a) out[base + a * sp.inner] /= denom;
    }
  }
  auto xn = x.handle();
  return Tensor::make_node(x.shape(), std::move(out), {x}, [xn, sp](detail::Node& n) {
    xn->ensure_grad();
    const double* y = n.value.data();
    const double* g = n.grad.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.extent * sp.inner + in;
        double dot = 0.0;
        for (std::size_t a = 0; a < sp.extent; ++a) {
          const std::size_t i = base + a * sp.inner;
          dot += g[i] * y[i];
        }
        for (std::size_t a = 0; a < sp.extent; ++a) {
          const std::size_t i = base + a * sp.inner;
          xn->grad[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

inline Tensor log_softmax(const Tensor& x, int axis) {
  auto sp = detail::split_axis(x.shape(), axis, "log_softmax");
  std::vector<double> out(x.size());
  const double* px = x.data().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < sp.extent; ++a) mx = std::max(mx, px[base + a * sp.inner]);
      double denom = 0.0;
      for (std::size_t a = 0; a < sp.extent; ++a) denom += std::exp(px[base + a * sp.inner] - mx);
      const double lse = mx + std::log(denom);
      for (std::size_t a = 0; a < sp.extent; ++a) {
        const std::size_t i = base + a * sp.inner;
        out[i] = px[i] - lse;
      }
    }
  }
  auto xn = x.handle();
  return Tensor::make_node(x.shape(), std::move(out), {x}, [xn, sp](detail::Node& n) {
    xn->ensure_grad();
    const double* y = n.value.data();
    const double* g = n.grad.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.extent * sp.inner + in;
        double gsum = 0.0;
        for (std::size_t a = 0; a < sp.extent; ++a) gsum += g[base + a * sp.inner];
        for (std::size_t a = 0; a < sp.extent; ++a) {
          const std::size_t i = base + a * sp.inner;
          xn->grad[i] += g[i] - std::exp(y[i]) * gsum;
        }
      }
    }
  });
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto xn = x.handle();
  return Tensor::make_node({1}, {s}, {x}, [xn](detail::Node& n) {
    xn->ensure_grad();
    const double g = n.grad[0];
    for (double& gv : xn->grad) gv += g;
  });
}

inline Tensor mean(const Tensor& x) { return mul(sum(x), 1.0 / static_cast<double>(x.size())); }

inline Tensor sum_axis(const Tensor& x, int axis, bool keepdim = false) {
  auto sp = detail::split_axis(x.shape(), axis, "sum_axis");
  Shape oshape = detail::reduced_shape(x.shape(), axis, keepdim);
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const double* px = x.data().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t a = 0; a < sp.extent; ++a) {
      const std::size_t base = (o * sp.extent + a) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t in = 0; in < sp.inner; ++in) dst[in] += px[base + in];
    }
  }
  auto xn = x.handle();
  return Tensor::make_node(std::move(oshape), std::move(out), {x}, [xn, sp](detail::Node& n) {
    xn->ensure_grad();
    const double* g = n.grad.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t a = 0; a < sp.extent; ++a) {
        const std::size_t base = (o * sp.extent + a) * sp.inner;
        const double* src = g + o * sp.inner;
        for (std::size_t in = 0; in < sp.inner; ++in) xn->grad[base + in] += src[in];
      }
    }
  });
}

// Max along an axis; the gradient routes to the first maximal element.
inline Tensor max_axis(const Tensor& x, int axis, bool keepdim = false) {
  auto sp = detail::split_axis(x.shape(), axis, "max_axis");
  Shape oshape = detail::reduced_shape(x.shape(), axis, keepdim);
  std::vector<double> out(sp.outer * sp.inner);
  auto argmax = std::make_shared<std::vector<std::size_t>>(sp.outer * sp.inner);
  const double* px = x.data().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      std::size_t best = o * sp.extent * sp.inner + in;
      double bv = px[best];
      for (std::size_t a = 1; a < sp.extent; ++a) {
        const std::size_t i = (o * sp.extent + a) * sp.inner + in;
        if (px[i] > bv) {
          bv = px[i];
          best = i;
        }
      }
      out[o * sp.inner + in] = bv;
      (*argmax)[o * sp.inner + in] = best;
    }
  }
  auto xn = x.handle();
  return Tensor::make_node(std::move(oshape), std::move(out), {x}, [xn, argmax](detail::Node& n) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) xn->grad[(*argmax)[i]] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Shape ops.

inline Tensor reshape(const Tensor& x, Shape shape) {
  check_shape_valid(shape);
  if (numel(shape) != x.size()) {
    throw std::invalid_argument("reshape from " + shape_str(x.shape()) + " to " + shape_str(shape) +
                                " changes element count");
  }
  auto xn = x.handle();
  return Tensor::make_node(std::move(shape), x.data(), {x}, [xn](detail::Node& n) {
    xn->accumulate(n.grad.data(), n.grad.size());
  });
}

inline Tensor transpose2d(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose2d requires rank 2");
  const int m = x.extent(0), n = x.extent(1);
  std::vector<double> out(x.size());
  const double* px = x.data().data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = px[static_cast<std::size_t>(i) * n + j];
  auto xn = x.handle();
  return Tensor::make_node({n, m}, std::move(out), {x}, [xn, m, n](detail::Node& node) {
    xn->ensure_grad();
    const double* g = node.grad.data();
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) xn->grad[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
  });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat of empty sequence");
  const Shape& first = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(first.size())) throw std::invalid_argument("concat axis out of range");
  Shape oshape = first;
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != static_cast<int>(first.size())) throw std::invalid_argument("concat rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (static_cast<int>(i) != axis && p.shape()[i] != first[i]) {
        throw std::invalid_argument("concat extents disagree off-axis");
      }
    }
    total += p.extent(axis);
  }
  oshape[static_cast<std::size_t>(axis)] = total;

  auto sp_out = detail::split_axis(oshape, axis, "concat");
  std::vector<double> out(numel(oshape));
  std::size_t offset = 0;  // in axis units
  for (const Tensor& p : parts) {
    const std::size_t pe = static_cast<std::size_t>(p.extent(axis));
    const double* src = p.data().data();
    for (std::size_t o = 0; o < sp_out.outer; ++o) {
      double* dst = out.data() + (o * sp_out.extent + offset) * sp_out.inner;
      const double* s = src + o * pe * sp_out.inner;
      std::copy(s, s + pe * sp_out.inner, dst);
    }
    offset += pe;
  }
  std::vector<std::size_t> extents;
  for (const Tensor& p : parts) extents.push_back(static_cast<std::size_t>(p.extent(axis)));

  std::vector<std::shared_ptr<detail::Node>> handles;
  for (const Tensor& p : parts) handles.push_back(p.handle());
  return Tensor::make_node(std::move(oshape), std::move(out), parts,
                           [handles, extents, sp_out](detail::Node& n) {
                             const double* g = n.grad.data();
                             std::size_t offset = 0;
                             for (std::size_t pi = 0; pi < handles.size(); ++pi) {
                               auto& h = handles[pi];
                               const std::size_t pe = extents[pi];
                               if (h->requires_grad) {
                                 h->ensure_grad();
                                 for (std::size_t o = 0; o < sp_out.outer; ++o) {
                                   const double* src = g + (o * sp_out.extent + offset) * sp_out.inner;
                                   double* dst = h->grad.data() + o * pe * sp_out.inner;
                                   for (std::size_t i = 0; i < pe * sp_out.inner; ++i) dst[i] += src[i];
                                 }
                               }
                               offset += pe;
                             }
                           });
}

// ---------------------------------------------------------------------------
// Bilinear resize on [C,H,W] (half-pixel centers, clamped borders).

inline Tensor resize_bilinear(const Tensor& x, int Ho, int Wo) {
  if (x.rank() != 3) throw std::invalid_argument("resize_bilinear expects [C,H,W]");
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("resize_bilinear: bad target extents");
  const int C = x.extent(0), H = x.extent(1), W = x.extent(2);
  if (Ho == H && Wo == W) return reshape(x, x.shape());

  struct Tap {
    int lo, hi;
    double w_hi;
  };
  auto taps_for = [](int in, int out) {
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      src = std::max(0.0, std::min(src, static_cast<double>(in - 1)));
      int lo = static_cast<int>(std::floor(src));
      int hi = std::min(lo + 1, in - 1);
      taps[static_cast<std::size_t>(o)] = {lo, hi, src - lo};
    }
    return taps;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps_for(H, Ho));
  auto tx = std::make_shared<std::vector<Tap>>(taps_for(W, Wo));

  std::vector<double> out(static_cast<std::size_t>(C) * Ho * Wo);
  const double* px = x.data().data();
  for (int c = 0; c < C; ++c) {
    const double* plane = px + static_cast<std::size_t>(c) * H * W;
    double* dst = out.data() + static_cast<std::size_t>(c) * Ho * Wo;
    for (int oy = 0; oy < Ho; ++oy) {
      const Tap& t_y = (*ty)[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < Wo; ++ox) {
        const Tap& t_x = (*tx)[static_cast<std::size_t>(ox)];
        const double v00 = plane[static_cast<std::size_t>(t_y.lo) * W + t_x.lo];
        const double v01 = plane[static_cast<std::size_t>(t_y.lo) * W + t_x.hi];
        const double v10 = plane[static_cast<std::size_t>(t_y.hi) * W + t_x.lo];
        const double v11 = plane[static_cast<std::size_t>(t_y.hi) * W + t_x.hi];
        const double top = v00 + (v01 - v00) * t_x.w_hi;
        const double bot = v10 + (v11 - v10) * t_x.w_hi;
        dst[static_cast<std::size_t>(oy) * Wo + ox] = top + (bot - top) * t_y.w_hi;
      }
    }
  }
  auto xn = x.handle();
  return Tensor::make_node({C, Ho, Wo}, std::move(out), {x}, [xn, ty, tx, C, H, W, Ho, Wo](detail::Node& n) {
    xn->ensure_grad();
    const double* g = n.grad.data();
    for (int c = 0; c < C; ++c) {
      double* gplane = xn->grad.data() + static_cast<std::size_t>(c) * H * W;
      const double* gsrc = g + static_cast<std::size_t>(c) * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy) {
        const Tap& t_y = (*ty)[static_cast<std::size_t>(oy)];
        for (int ox = 0; ox < Wo; ++ox) {
          const Tap& t_x = (*tx)[static_cast<std::size_t>(ox)];
          const double gv = gsrc[static_cast<std::size_t>(oy) * Wo + ox];
          const double wy1 = t_y.w_hi, wy0 = 1.0 - wy1;
          const double wx1 = t_x.w_hi, wx0 = 1.0 - wx1;
          gplane[static_cast<std::size_t>(t_y.lo) * W + t_x.lo] += gv * wy0 * wx0;
          gplane[static_cast<std::size_t>(t_y.lo) * W + t_x.hi] += gv * wy0 * wx1;
          gplane[static_cast<std::size_t>(t_y.hi) * W + t_x.lo] += gv * wy1 * wx0;
          gplane[static_cast<std::size_t>(t_y.hi) * W + t_x.hi] += gv * wy1 * wx1;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reverse pass. Visits each recorded node exactly once in reverse topological
// order, then consumes the graph (edges and closures are dropped).

inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw std::invalid_argument("backward requires a scalar loss, got " + shape_str(loss.shape()));
  detail::Node* root = loss.raw();
  if (!root->backward && root->parents.empty()) {
    throw std::runtime_error("backward on an empty graph (no recorded operations reach this loss)");
  }

  // Intermediate nodes are owned only by graph edges; keep them alive until
  // the whole pass is done, since consuming a node drops its edges.
  std::vector<std::shared_ptr<detail::Node>> owned;
  std::vector<detail::Node*> order;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  std::unordered_set<detail::Node*> seen;
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      std::shared_ptr<detail::Node> p = node->parents[next];
      ++next;
      if (p->backward && seen.insert(p.get()).second) {
        detail::Node* raw = p.get();
        owned.push_back(std::move(p));
        stack.emplace_back(raw, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward) node->backward(*node);
    node->backward = nullptr;
    node->parents.clear();
  }
}

}  // namespace mmnet
