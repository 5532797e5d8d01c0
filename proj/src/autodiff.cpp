#include "sparsepose/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "sparsepose/errors.hpp"
#include "sparsepose/kernels.hpp"

namespace sparsepose::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;

using ImplPtr = std::shared_ptr<TensorImpl>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make_output(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(numel(shape), Real(0));
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

std::size_t resolve_axis(int axis, std::size_t ndim, const char* op) {
  const long resolved = axis < 0 ? static_cast<long>(ndim) + axis : axis;
  if (resolved < 0 || resolved >= static_cast<long>(ndim))
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(ndim));
  return static_cast<std::size_t>(resolved);
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " and " + shape_str(b));
}

// Row-major strides.
std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;  // per output dim, 0 where broadcast
  std::vector<std::size_t> stride_b;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  const std::size_t nd = std::max(a.size(), b.size());
  p.out.assign(nd, 1);
  Shape pa(nd, 1), pb(nd, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<long>(nd - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<long>(nd - b.size()));
  for (std::size_t i = 0; i < nd; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) shape_mismatch(op, a, b);
    p.out[i] = std::max(pa[i], pb[i]);
  }
  const auto sa = strides_of(pa);
  const auto sb = strides_of(pb);
  p.stride_a.resize(nd);
  p.stride_b.resize(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    p.stride_a[i] = pa[i] == 1 ? 0 : sa[i];
    p.stride_b[i] = pb[i] == 1 ? 0 : sb[i];
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t nd = p.out.size();
  const std::size_t n = numel(p.out);
  std::vector<std::size_t> counter(nd, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t d = nd; d-- > 0;) {
      ++counter[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (counter[d] < p.out[d]) break;
      ia -= p.stride_a[d] * counter[d];
      ib -= p.stride_b[d] * counter[d];
      counter[d] = 0;
    }
  }
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  const bool rg = tracking({&a, &b});
  ImplPtr ai = a.handle(), bi = b.handle();

  // Fast path: identical shapes.
  if (a.shape() == b.shape()) {
    Tensor out = make_output(a.shape(), rg);
    const std::size_t n = out.numel();
    Real* o = out.data().data();
    switch (kind) {
      case BinaryKind::kAdd:
        kernels::add(ai->data.data(), bi->data.data(), o, n);
        break;
      case BinaryKind::kSub:
        for (std::size_t i = 0; i < n; ++i) o[i] = ai->data[i] - bi->data[i];
        break;
      case BinaryKind::kMul:
        kernels::mul(ai->data.data(), bi->data.data(), o, n);
        break;
    }
    if (rg) {
      ImplPtr oi = out.handle();
      g_active_tape->record([ai, bi, oi, kind, n] {
        if (oi->grad.empty()) return;
        const Real* g = oi->grad.data();
        if (ai->requires_grad) {
          if (kind == BinaryKind::kMul)
            kernels::mul_acc(g, bi->data.data(), ai->grad_data(), n);
          else
            kernels::axpy(Real(1), g, ai->grad_data(), n);
        }
        if (bi->requires_grad) {
          if (kind == BinaryKind::kMul)
            kernels::mul_acc(g, ai->data.data(), bi->grad_data(), n);
          else
            kernels::axpy(kind == BinaryKind::kSub ? Real(-1) : Real(1), g,
                          bi->grad_data(), n);
        }
      });
    }
    return out;
  }

  // Fast path: b is a trailing block repeated over a (bias-style).
  if (kind != BinaryKind::kMul && is_suffix(b.shape(), a.shape()) && b.numel() > 0) {
    Tensor out = make_output(a.shape(), rg);
    const std::size_t inner = b.numel();
    const std::size_t rows = a.numel() / inner;
    Real* o = out.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* arow = ai->data.data() + r * inner;
      if (kind == BinaryKind::kAdd) {
        kernels::add(arow, bi->data.data(), o + r * inner, inner);
      } else {
        for (std::size_t j = 0; j < inner; ++j) o[r * inner + j] = arow[j] - bi->data[j];
      }
    }
    if (rg) {
      ImplPtr oi = out.handle();
      g_active_tape->record([ai, bi, oi, kind, inner, rows] {
        if (oi->grad.empty()) return;
        const Real* g = oi->grad.data();
        if (ai->requires_grad) kernels::axpy(Real(1), g, ai->grad_data(), rows * inner);
        if (bi->requires_grad) {
          const Real sign = kind == BinaryKind::kSub ? Real(-1) : Real(1);
          Real* gb = bi->grad_data();
          for (std::size_t r = 0; r < rows; ++r) kernels::axpy(sign, g + r * inner, gb, inner);
        }
      });
    }
    return out;
  }

  // General broadcast.
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), op));
  Tensor out = make_output(plan->out, rg);
  Real* o = out.data().data();
  const Real* ad = ai->data.data();
  const Real* bd = bi->data.data();
  for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    switch (kind) {
      case BinaryKind::kAdd:
        o[i] = ad[ia] + bd[ib];
        break;
      case BinaryKind::kSub:
        o[i] = ad[ia] - bd[ib];
        break;
      case BinaryKind::kMul:
        o[i] = ad[ia] * bd[ib];
        break;
    }
  });
  if (rg) {
    ImplPtr oi = out.handle();
    g_active_tape->record([ai, bi, oi, kind, plan] {
      if (oi->grad.empty()) return;
      const Real* g = oi->grad.data();
      Real* ga = ai->requires_grad ? ai->grad_data() : nullptr;
      Real* gb = bi->requires_grad ? bi->grad_data() : nullptr;
      const Real* ad = ai->data.data();
      const Real* bd = bi->data.data();
      for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        switch (kind) {
          case BinaryKind::kAdd:
            if (ga) ga[ia] += g[i];
            if (gb) gb[ib] += g[i];
            break;
          case BinaryKind::kSub:
            if (ga) ga[ia] += g[i];
            if (gb) gb[ib] -= g[i];
            break;
          case BinaryKind::kMul:
            if (ga) ga[ia] += g[i] * bd[ib];
            if (gb) gb[ib] += g[i] * ad[ia];
            break;
        }
      });
    });
  }
  return out;
}

// Unary elementwise op with derivative computed from (x, y).
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  require_defined(a, op);
  const bool rg = tracking({&a});
  Tensor out = make_output(a.shape(), rg);
  const auto& x = a.impl()->data;
  auto& y = out.impl()->data;
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (rg) {
    ImplPtr ai = a.handle(), oi = out.handle();
    g_active_tape->record([ai, oi, deriv] {
      if (oi->grad.empty()) return;
      Real* ga = ai->grad_data();
      for (std::size_t i = 0; i < ai->data.size(); ++i)
        ga[i] += oi->grad[i] * deriv(ai->data[i], oi->data[i]);
    });
  }
  return out;
}

// Copies `src` laid out as `shape` into `dst` with axes `ax0`/`ax1` swapped.
// With `accumulate`, adds instead of overwriting.
void swap_axes_copy(const Real* src, const Shape& shape, std::size_t ax0, std::size_t ax1,
                    Real* dst, bool accumulate) {
  Shape out_shape = shape;
  std::swap(out_shape[ax0], out_shape[ax1]);
  auto in_strides = strides_of(shape);
  std::swap(in_strides[ax0], in_strides[ax1]);
  // Iterate in output order; in_strides now maps output coordinates to input offsets.
  const std::size_t nd = shape.size();
  const std::size_t n = numel(shape);
  std::vector<std::size_t> counter(nd, 0);
  std::size_t in = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (accumulate)
      dst[i] += src[in];
    else
      dst[i] = src[in];
    for (std::size_t d = nd; d-- > 0;) {
      ++counter[d];
      in += in_strides[d];
      if (counter[d] < out_shape[d]) break;
      in -= in_strides[d] * counter[d];
      counter[d] = 0;
    }
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return make_output(std::move(shape), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<Real> values, bool requires_grad) {
  if (values.size() != ad::numel(shape))
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Real value) { return from({}, {value}); }

std::size_t Tensor::dim(int axis) const {
  return impl_->shape[resolve_axis(axis, impl_->shape.size(), "dim")];
}

Real Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

void Tape::record(std::function<void()> backward_rule) {
  entries_.push_back(std::move(backward_rule));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw InvalidArgument("backward: tape already consumed");
  if (!loss.defined() || loss.numel() != 1)
    throw InvalidArgument("backward: loss must be a scalar, got shape " +
                          (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad())
    throw InvalidArgument("backward: loss does not depend on any parameter");
  consumed_ = true;
  loss.impl()->grad_data()[0] += Real(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kMul, "mul"); }

Tensor scale(const Tensor& a, Real factor) {
  return unary(
      a, "scale", [factor](Real x) { return x * factor; },
      [factor](Real, Real) { return factor; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.ndim() < 2 || b.ndim() < 2) shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) shape_mismatch("matmul", a.shape(), b.shape());
  const bool rg = tracking({&a, &b});
  ImplPtr ai = a.handle(), bi = b.handle();

  Shape out_shape = a.shape();
  out_shape.back() = n;
  if (b.ndim() == 2) {
    // Batch dims of `a` fold into its rows.
    const std::size_t rows = a.numel() / k;
    Tensor out = make_output(out_shape, rg);
    kernels::gemm(false, false, rows, n, k, ai->data.data(), bi->data.data(),
                  out.data().data(), false);
    if (rg) {
      ImplPtr oi = out.handle();
      g_active_tape->record([ai, bi, oi, rows, n, k] {
        if (oi->grad.empty()) return;
        const Real* g = oi->grad.data();
        if (ai->requires_grad)
          kernels::gemm(false, true, rows, k, n, g, bi->data.data(), ai->grad_data(), true);
        if (bi->requires_grad)
          kernels::gemm(true, false, k, n, rows, ai->data.data(), g, bi->grad_data(), true);
      });
    }
    return out;
  }

  if (a.ndim() != b.ndim() ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()))
    shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t batch = a.numel() / (m * k);
  Tensor out = make_output(out_shape, rg);
  for (std::size_t i = 0; i < batch; ++i)
    kernels::gemm(false, false, m, n, k, ai->data.data() + i * m * k,
                  bi->data.data() + i * k * n, out.data().data() + i * m * n, false);
  if (rg) {
    ImplPtr oi = out.handle();
    g_active_tape->record([ai, bi, oi, batch, m, n, k] {
      if (oi->grad.empty()) return;
      const Real* g = oi->grad.data();
      Real* ga = ai->requires_grad ? ai->grad_data() : nullptr;
      Real* gb = bi->requires_grad ? bi->grad_data() : nullptr;
      for (std::size_t i = 0; i < batch; ++i) {
        if (ga)
          kernels::gemm(false, true, m, k, n, g + i * m * n, bi->data.data() + i * k * n,
                        ga + i * m * k, true);
        if (gb)
          kernels::gemm(true, false, k, n, m, ai->data.data() + i * m * k, g + i * m * n,
                        gb + i * k * n, true);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a, int axis0, int axis1) {
  require_defined(a, "transpose");
  const std::size_t ax0 = resolve_axis(axis0, a.ndim(), "transpose");
  const std::size_t ax1 = resolve_axis(axis1, a.ndim(), "transpose");
  const bool rg = tracking({&a});
  Shape out_shape = a.shape();
  std::swap(out_shape[ax0], out_shape[ax1]);
  Tensor out = make_output(out_shape, rg);
  swap_axes_copy(a.data().data(), a.shape(), ax0, ax1, out.data().data(), false);
  if (rg) {
    ImplPtr ai = a.handle(), oi = out.handle();
    g_active_tape->record([ai, oi, ax0, ax1] {
      if (oi->grad.empty()) return;
      swap_axes_copy(oi->grad.data(), oi->shape, ax0, ax1, ai->grad_data(), true);
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (numel(shape) != a.numel()) shape_mismatch("reshape", a.shape(), shape);
  const bool rg = tracking({&a});
  Tensor out = Tensor::from(std::move(shape), a.impl()->data, rg);
  if (rg) {
    ImplPtr ai = a.handle(), oi = out.handle();
    g_active_tape->record([ai, oi] {
      if (oi->grad.empty()) return;
      kernels::axpy(Real(1), oi->grad.data(), ai->grad_data(), oi->grad.size());
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& ref = parts.front().shape();
  const std::size_t ax = resolve_axis(axis, ref.size(), "concat");
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.ndim() != ref.size()) shape_mismatch("concat", ref, p.shape());
    for (std::size_t d = 0; d < ref.size(); ++d)
      if (d != ax && p.shape()[d] != ref[d]) shape_mismatch("concat", ref, p.shape());
    total += p.shape()[ax];
    rg = rg || tracking({&p});
  }
  Shape out_shape = ref;
  out_shape[ax] = total;
  const std::size_t outer = numel(Shape(ref.begin(), ref.begin() + static_cast<long>(ax)));
  const std::size_t inner = numel(Shape(ref.begin() + static_cast<long>(ax) + 1, ref.end()));
  Tensor out = make_output(out_shape, rg);
  Real* o = out.data().data();
  std::vector<ImplPtr> impls;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    impls.push_back(p.handle());
    widths.push_back(p.shape()[ax] * inner);
  }
  const std::size_t row = total * inner;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < impls.size(); ++i) {
    for (std::size_t r = 0; r < outer; ++r)
      std::copy_n(impls[i]->data.data() + r * widths[i], widths[i], o + r * row + offset);
    offset += widths[i];
  }
  if (rg) {
    ImplPtr oi = out.handle();
    g_active_tape->record([impls, widths, oi, outer, row] {
      if (oi->grad.empty()) return;
      std::size_t offset = 0;
      for (std::size_t i = 0; i < impls.size(); ++i) {
        if (impls[i]->requires_grad) {
          Real* g = impls[i]->grad_data();
          for (std::size_t r = 0; r < outer; ++r)
            kernels::axpy(Real(1), oi->grad.data() + r * row + offset, g + r * widths[i],
                          widths[i]);
        }
        offset += widths[i];
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  require_defined(a, "slice");
  const std::size_t ax = resolve_axis(axis, a.ndim(), "slice");
  if (begin >= end || end > a.shape()[ax])
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis of size " + std::to_string(a.shape()[ax]) +
                     " in shape " + shape_str(a.shape()));
  const bool rg = tracking({&a});
  const Shape& s = a.shape();
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + static_cast<long>(ax)));
  const std::size_t inner = numel(Shape(s.begin() + static_cast<long>(ax) + 1, s.end()));
  const std::size_t src_row = s[ax] * inner;
  const std::size_t width = (end - begin) * inner;
  const std::size_t offset = begin * inner;
  Shape out_shape = s;
  out_shape[ax] = end - begin;
  Tensor out = make_output(out_shape, rg);
  for (std::size_t r = 0; r < outer; ++r)
    std::copy_n(a.data().data() + r * src_row + offset, width, out.data().data() + r * width);
  if (rg) {
    ImplPtr ai = a.handle(), oi = out.handle();
    g_active_tape->record([ai, oi, outer, src_row, width, offset] {
      if (oi->grad.empty()) return;
      Real* g = ai->grad_data();
      for (std::size_t r = 0; r < outer; ++r)
        kernels::axpy(Real(1), oi->grad.data() + r * width, g + r * src_row + offset, width);
    });
  }
  return out;
}

Tensor softmax(const Tensor& a) {
  require_defined(a, "softmax");
  if (a.ndim() == 0) throw ShapeError("softmax: scalar input");
  const bool rg = tracking({&a});
  const std::size_t d = a.dim(-1);
  const std::size_t rows = a.numel() / d;
  Tensor out = make_output(a.shape(), rg);
  const Real* x = a.data().data();
  Real* y = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x + r * d;
    Real* yr = y + r * d;
    const Real mx = *std::max_element(xr, xr + d);
    Real total = 0;
    for (std::size_t j = 0; j < d; ++j) total += (yr[j] = std::exp(xr[j] - mx));
    const Real inv = Real(1) / total;
    for (std::size_t j = 0; j < d; ++j) yr[j] *= inv;
  }
  if (rg) {
    ImplPtr ai = a.handle(), oi = out.handle();
    g_active_tape->record([ai, oi, rows, d] {
      if (oi->grad.empty()) return;
      Real* ga = ai->grad_data();
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* yr = oi->data.data() + r * d;
        const Real* gr = oi->grad.data() + r * d;
        const Real inner = kernels::dot(gr, yr, d);
        for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += yr[j] * (gr[j] - inner);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  require_defined(x, "layer_norm");
  require_defined(gamma, "layer_norm");
  require_defined(beta, "layer_norm");
  if (x.ndim() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.dim(-1);
  if (gamma.numel() != d || beta.numel() != d)
    shape_mismatch("layer_norm", x.shape(), gamma.shape());
  const bool rg = tracking({&x, &gamma, &beta});
  const std::size_t rows = x.numel() / d;
  Tensor out = make_output(x.shape(), rg);
  auto xhat = std::make_shared<std::vector<Real>>(x.numel());
  auto rstd = std::make_shared<std::vector<Real>>(rows);
  const Real* xd = x.data().data();
  const Real* gd = gamma.data().data();
  const Real* bd = beta.data().data();
  Real* y = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = xd + r * d;
    const Real mu = kernels::sum(xr, d) / static_cast<Real>(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<Real>(d);
    const Real rs = Real(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const Real h = (xr[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      y[r * d + j] = h * gd[j] + bd[j];
    }
  }
  if (rg) {
    ImplPtr xi = x.handle(), gi = gamma.handle(), bi = beta.handle(), oi = out.handle();
    g_active_tape->record([xi, gi, bi, oi, xhat, rstd, rows, d] {
      if (oi->grad.empty()) return;
      const Real* g = oi->grad.data();
      Real* gg = gi->requires_grad ? gi->grad_data() : nullptr;
      Real* gb = bi->requires_grad ? bi->grad_data() : nullptr;
      Real* gx = xi->requires_grad ? xi->grad_data() : nullptr;
      std::vector<Real> dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* gr = g + r * d;
        const Real* hr = xhat->data() + r * d;
        if (gg) kernels::mul_acc(gr, hr, gg, d);
        if (gb) kernels::axpy(Real(1), gr, gb, d);
        if (!gx) continue;
        kernels::mul(gr, gi->data.data(), dxhat.data(), d);
        const Real mean_d = kernels::sum(dxhat.data(), d) / static_cast<Real>(d);
        const Real mean_dh = kernels::dot(dxhat.data(), hr, d) / static_cast<Real>(d);
        const Real rs = (*rstd)[r];
        for (std::size_t j = 0; j < d; ++j)
          gx[r * d + j] += rs * (dxhat[j] - mean_d - hr[j] * mean_dh);
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](Real x) { return x > 0 ? x : Real(0); },
      [](Real x, Real) { return x > 0 ? Real(1) : Real(0); });
}

Tensor gelu(const Tensor& a) {
  constexpr Real kInvSqrt2 = Real(0.70710678118654752440);
  constexpr Real kInvSqrt2Pi = Real(0.39894228040143267794);
  return unary(
      a, "gelu", [](Real x) { return Real(0.5) * x * (Real(1) + std::erf(x * kInvSqrt2)); },
      [](Real x, Real) {
        return Real(0.5) * (Real(1) + std::erf(x * kInvSqrt2)) +
               x * kInvSqrt2Pi * std::exp(Real(-0.5) * x * x);
      });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  const bool rg = tracking({&a});
  Tensor out = make_output({}, rg);
  out.data()[0] = kernels::sum(a.data().data(), a.numel());
  if (rg) {
    ImplPtr ai = a.handle(), oi = out.handle();
    g_active_tape->record([ai, oi] {
      if (oi->grad.empty()) return;
      const Real g = oi->grad[0];
      Real* ga = ai->grad_data();
      for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), Real(1) / static_cast<Real>(a.numel()));
}

Tensor sum_last(const Tensor& a) {
  require_defined(a, "sum_last");
  if (a.ndim() == 0) throw ShapeError("sum_last: scalar input");
  const bool rg = tracking({&a});
  const std::size_t d = a.dim(-1);
  const std::size_t rows = a.numel() / d;
  Shape out_shape = a.shape();
  out_shape.back() = 1;
  Tensor out = make_output(out_shape, rg);
  for (std::size_t r = 0; r < rows; ++r)
    out.data()[r] = kernels::sum(a.data().data() + r * d, d);
  if (rg) {
    ImplPtr ai = a.handle(), oi = out.handle();
    g_active_tape->record([ai, oi, rows, d] {
      if (oi->grad.empty()) return;
      Real* ga = ai->grad_data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += oi->grad[r];
    });
  }
  return out;
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  require_defined(a, "l1_loss");
  require_defined(b, "l1_loss");
  if (a.shape() != b.shape()) shape_mismatch("l1_loss", a.shape(), b.shape());
  if (a.numel() == 0) throw ShapeError("l1_loss: empty tensors");
  const bool rg = tracking({&a, &b});
  const std::size_t n = a.numel();
  Tensor out = make_output({}, rg);
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(a.data()[i] - b.data()[i]);
  out.data()[0] = total / static_cast<Real>(n);
  if (rg) {
    ImplPtr ai = a.handle(), bi = b.handle(), oi = out.handle();
    g_active_tape->record([ai, bi, oi, n] {
      if (oi->grad.empty()) return;
      const Real g = oi->grad[0] / static_cast<Real>(n);
      Real* ga = ai->requires_grad ? ai->grad_data() : nullptr;
      Real* gb = bi->requires_grad ? bi->grad_data() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const Real diff = ai->data[i] - bi->data[i];
        const Real s = diff > 0 ? g : (diff < 0 ? -g : Real(0));
        if (ga) ga[i] += s;
        if (gb) gb[i] -= s;
      }
    });
  }
  return out;
}

Tensor l2_loss(const Tensor& a, const Tensor& b) {
  require_defined(a, "l2_loss");
  require_defined(b, "l2_loss");
  if (a.shape() != b.shape()) shape_mismatch("l2_loss", a.shape(), b.shape());
  const bool rg = tracking({&a, &b});
  const std::size_t n = a.numel();
  Tensor out = make_output({}, rg);
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real diff = a.data()[i] - b.data()[i];
    total += diff * diff;
  }
  out.data()[0] = total;
  if (rg) {
    ImplPtr ai = a.handle(), bi = b.handle(), oi = out.handle();
    g_active_tape->record([ai, bi, oi, n] {
      if (oi->grad.empty()) return;
      const Real g = oi->grad[0];
      Real* ga = ai->requires_grad ? ai->grad_data() : nullptr;
      Real* gb = bi->requires_grad ? bi->grad_data() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const Real s = Real(2) * g * (ai->data[i] - bi->data[i]);
        if (ga) ga[i] += s;
        if (gb) gb[i] -= s;
      }
    });
  }
  return out;
}

Tensor cross(const Tensor& a, const Tensor& b) {
  require_defined(a, "cross");
  require_defined(b, "cross");
  if (a.shape() != b.shape() || a.ndim() == 0 || a.dim(-1) != 3)
    shape_mismatch("cross", a.shape(), b.shape());
  const bool rg = tracking({&a, &b});
  const std::size_t rows = a.numel() / 3;
  Tensor out = make_output(a.shape(), rg);
  auto cross3 = [](const Real* u, const Real* v, Real* w, bool acc) {
    const Real c0 = u[1] * v[2] - u[2] * v[1];
    const Real c1 = u[2] * v[0] - u[0] * v[2];
    const Real c2 = u[0] * v[1] - u[1] * v[0];
    if (acc) {
      w[0] += c0;
      w[1] += c1;
      w[2] += c2;
    } else {
      w[0] = c0;
      w[1] = c1;
      w[2] = c2;
    }
  };
  for (std::size_t r = 0; r < rows; ++r)
    cross3(a.data().data() + 3 * r, b.data().data() + 3 * r, out.data().data() + 3 * r, false);
  if (rg) {
    ImplPtr ai = a.handle(), bi = b.handle(), oi = out.handle();
    g_active_tape->record([ai, bi, oi, rows, cross3] {
      if (oi->grad.empty()) return;
      Real* ga = ai->requires_grad ? ai->grad_data() : nullptr;
      Real* gb = bi->requires_grad ? bi->grad_data() : nullptr;
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* g = oi->grad.data() + 3 * r;
        // d/da (a x b) . g = b x g ;  d/db = g x a
        if (ga) cross3(bi->data.data() + 3 * r, g, ga + 3 * r, true);
        if (gb) cross3(g, ai->data.data() + 3 * r, gb + 3 * r, true);
      }
    });
  }
  return out;
}

Tensor normalize(const Tensor& a, Real eps) {
  require_defined(a, "normalize");
  if (a.ndim() == 0) throw ShapeError("normalize: scalar input");
  const bool rg = tracking({&a});
  const std::size_t d = a.dim(-1);
  const std::size_t rows = a.numel() / d;
  Tensor out = make_output(a.shape(), rg);
  auto norms = std::make_shared<std::vector<Real>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* x = a.data().data() + r * d;
    const Real nrm = std::max(std::sqrt(kernels::dot(x, x, d)), eps);
    (*norms)[r] = nrm;
    for (std::size_t j = 0; j < d; ++j) out.data()[r * d + j] = x[j] / nrm;
  }
  if (rg) {
    ImplPtr ai = a.handle(), oi = out.handle();
    g_active_tape->record([ai, oi, norms, rows, d] {
      if (oi->grad.empty()) return;
      Real* ga = ai->grad_data();
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* y = oi->data.data() + r * d;
        const Real* g = oi->grad.data() + r * d;
        const Real nrm = (*norms)[r];
        const Real proj = kernels::dot(y, g, d);
        for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += (g[j] - y[j] * proj) / nrm;
      }
    });
  }
  return out;
}

}  // namespace sparsepose::ad
