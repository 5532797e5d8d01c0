#pragma once
// Minimal reverse-mode automatic differentiation.
//
// Tensors are reference-counted dense row-major arrays. Operations executed
// while a Tape is active (see TapeScope) and touching at least one tensor
// that requires a gradient are recorded together with their backward rule.
// Without an active tape every operation is a plain forward computation.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sparsepose/real.hpp"

namespace sparsepose::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // allocated on first accumulation
  bool requires_grad = false;

  Real* grad_data() {
    if (grad.empty()) grad.assign(data.size(), Real(0));
    return grad.data();
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  /// Size of dimension `axis`; negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<Real> data() { return impl_->data; }
  std::span<const Real> data() const { return impl_->data; }
  /// Empty until a backward pass reached this tensor.
  std::span<const Real> grad() const { return impl_->grad; }
  std::span<Real> mutable_grad() { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  /// Value of a single-element tensor.
  Real item() const;
  /// Same values, detached from any graph.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_rule);
  /// Seeds d(loss)/d(loss) = 1 and replays the recorded rules in reverse.
  /// Throws InvalidArgument for a non-scalar loss, a loss that does not
  /// depend on any gradient-requiring tensor, or a second call.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

/// Makes `tape` the calling thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on the calling thread for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Primitives. Binary elementwise ops broadcast numpy-style (right-aligned,
// size-1 or missing dimensions stretch).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real factor);
/// a [..., M, K] x b [K, N] or a [..., M, K] x b [..., K, N] with equal batch dims.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swap two axes.
Tensor transpose(const Tensor& a, int axis0, int axis1);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
/// Over the last axis.
Tensor softmax(const Tensor& a);
/// Over the last axis, with affine gamma/beta of that axis' size.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Real eps = Real(1e-5));
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
/// Sum of all elements (scalar).
Tensor sum(const Tensor& a);
/// Mean of all elements (scalar).
Tensor mean(const Tensor& a);
/// Sum over the last axis, keeping it with size 1.
Tensor sum_last(const Tensor& a);
/// mean |a - b| (scalar).
Tensor l1_loss(const Tensor& a, const Tensor& b);
/// sum (a - b)^2, unreduced by element count (scalar).
Tensor l2_loss(const Tensor& a, const Tensor& b);
/// Cross product over a last axis of size 3.
Tensor cross(const Tensor& a, const Tensor& b);
/// Unit vectors over the last axis; norms are clamped below by `eps`.
Tensor normalize(const Tensor& a, Real eps = Real(1e-12));

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace sparsepose::ad
