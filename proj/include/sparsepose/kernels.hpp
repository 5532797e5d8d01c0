#pragma once
// Dense arithmetic kernels behind the autodiff engine.
//
// Every kernel has a portable scalar reference implementation and, where
// the target supports it, an AVX2+FMA (x86-64) or NEON (aarch64) variant.
// The variant is chosen once at startup from CPU feature detection and can
// be overridden with set_backend() (the scalar path is always available).

#include <cstddef>
#include <string_view>

namespace sparsepose::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend b);
bool backend_available(Backend b);
Backend best_backend();
Backend active_backend();
/// Throws InvalidArgument if `b` is not supported on this CPU.
void set_backend(Backend b);
Backend parse_backend(std::string_view name);

template <class T>
T dot(const T* a, const T* b, std::size_t n);

/// y += alpha * x
template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n);

/// out = a + b
template <class T>
void add(const T* a, const T* b, T* out, std::size_t n);

/// out = a * b (elementwise)
template <class T>
void mul(const T* a, const T* b, T* out, std::size_t n);

/// out += a * b (elementwise)
template <class T>
void mul_acc(const T* a, const T* b, T* out, std::size_t n);

template <class T>
T sum(const T* a, std::size_t n);

/// C(m x n) = op(A) * op(B), or C += ... when `accumulate`.
/// All matrices are dense row-major. op(A) is m x k: A is stored m x k,
/// or k x m when `trans_a`. Likewise B is k x n, or n x k when `trans_b`.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, const T* b, T* c, bool accumulate);

// Fixed-backend entry points, used by the equivalence tests.
template <class T>
struct Table {
  T (*dot)(const T*, const T*, std::size_t);
  void (*axpy)(T, const T*, T*, std::size_t);
  void (*add)(const T*, const T*, T*, std::size_t);
  void (*mul)(const T*, const T*, T*, std::size_t);
  void (*mul_acc)(const T*, const T*, T*, std::size_t);
  T (*sum)(const T*, std::size_t);
  void (*gemm)(bool, bool, std::size_t, std::size_t, std::size_t, const T*,
               const T*, T*, bool);
};

/// Kernel table for a given backend; throws if unavailable.
template <class T>
const Table<T>& table(Backend b);

}  // namespace sparsepose::kernels
