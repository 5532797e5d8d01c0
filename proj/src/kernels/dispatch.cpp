#include <atomic>
#include <string>
#include <type_traits>

#include "scalar.hpp"
#include "sparsepose/errors.hpp"
#include "sparsepose/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define SPARSEPOSE_HAVE_AVX2_TU 1
#endif
#if defined(__aarch64__) && defined(__ARM_NEON)
#define SPARSEPOSE_HAVE_NEON_TU 1
#endif

namespace sparsepose::kernels {

#ifdef SPARSEPOSE_HAVE_AVX2_TU
namespace avx2 {
const Table<double>& table_f64();
const Table<float>& table_f32();
}  // namespace avx2
#endif
#ifdef SPARSEPOSE_HAVE_NEON_TU
namespace neon {
const Table<double>& table_f64();
const Table<float>& table_f32();
}  // namespace neon
#endif

namespace {

template <class T>
constexpr Table<T> scalar_table() {
  return Table<T>{&scalar::dot<T>,     &scalar::axpy<T>, &scalar::add<T>,
                  &scalar::mul<T>,     &scalar::mul_acc<T>, &scalar::sum<T>,
                  &scalar::gemm<T>};
}

constexpr Table<double> kScalarF64 = scalar_table<double>();
constexpr Table<float> kScalarF32 = scalar_table<float>();

bool cpu_has_avx2() {
#ifdef SPARSEPOSE_HAVE_AVX2_TU
  static const bool has = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return has;
#else
  return false;
#endif
}

std::atomic<Backend>& active() {
  static std::atomic<Backend> b{best_backend()};
  return b;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::kScalar;
  if (name == "avx2") return Backend::kAvx2;
  if (name == "neon") return Backend::kNeon;
  if (name == "auto") return best_backend();
  throw InvalidArgument("unknown SIMD backend '" + std::string(name) + "'");
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return cpu_has_avx2();
    case Backend::kNeon:
#ifdef SPARSEPOSE_HAVE_NEON_TU
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend best_backend() {
  if (backend_available(Backend::kAvx2)) return Backend::kAvx2;
  if (backend_available(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

Backend active_backend() { return active().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b))
    throw InvalidArgument("SIMD backend '" + std::string(backend_name(b)) +
                          "' is not available on this CPU");
  active().store(b, std::memory_order_relaxed);
}

template <>
const Table<double>& table<double>(Backend b) {
  if (!backend_available(b))
    throw InvalidArgument("SIMD backend '" + std::string(backend_name(b)) +
                          "' is not available on this CPU");
  switch (b) {
#ifdef SPARSEPOSE_HAVE_AVX2_TU
    case Backend::kAvx2:
      return avx2::table_f64();
#endif
#ifdef SPARSEPOSE_HAVE_NEON_TU
    case Backend::kNeon:
      return neon::table_f64();
#endif
    default:
      return kScalarF64;
  }
}

template <>
const Table<float>& table<float>(Backend b) {
  if (!backend_available(b))
    throw InvalidArgument("SIMD backend '" + std::string(backend_name(b)) +
                          "' is not available on this CPU");
  switch (b) {
#ifdef SPARSEPOSE_HAVE_AVX2_TU
    case Backend::kAvx2:
      return avx2::table_f32();
#endif
#ifdef SPARSEPOSE_HAVE_NEON_TU
    case Backend::kNeon:
      return neon::table_f32();
#endif
    default:
      return kScalarF32;
  }
}

namespace {
template <class T>
const Table<T>& current() {
  // Resolved per call so set_backend() takes effect immediately. The active
  // backend was validated when it was set.
  if constexpr (std::is_same_v<T, double>) {
    switch (active_backend()) {
#ifdef SPARSEPOSE_HAVE_AVX2_TU
      case Backend::kAvx2:
        return avx2::table_f64();
#endif
#ifdef SPARSEPOSE_HAVE_NEON_TU
      case Backend::kNeon:
        return neon::table_f64();
#endif
      default:
        return kScalarF64;
    }
  } else {
    switch (active_backend()) {
#ifdef SPARSEPOSE_HAVE_AVX2_TU
      case Backend::kAvx2:
        return avx2::table_f32();
#endif
#ifdef SPARSEPOSE_HAVE_NEON_TU
      case Backend::kNeon:
        return neon::table_f32();
#endif
      default:
        return kScalarF32;
    }
  }
}
}  // namespace

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  return current<T>().dot(a, b, n);
}
template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  current<T>().axpy(alpha, x, y, n);
}
template <class T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  current<T>().add(a, b, out, n);
}
template <class T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  current<T>().mul(a, b, out, n);
}
template <class T>
void mul_acc(const T* a, const T* b, T* out, std::size_t n) {
  current<T>().mul_acc(a, b, out, n);
}
template <class T>
T sum(const T* a, std::size_t n) {
  return current<T>().sum(a, n);
}
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  current<T>().gemm(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

#define SPARSEPOSE_INSTANTIATE(T)                                             \
  template T dot<T>(const T*, const T*, std::size_t);                         \
  template void axpy<T>(T, const T*, T*, std::size_t);                        \
  template void add<T>(const T*, const T*, T*, std::size_t);                  \
  template void mul<T>(const T*, const T*, T*, std::size_t);                  \
  template void mul_acc<T>(const T*, const T*, T*, std::size_t);              \
  template T sum<T>(const T*, std::size_t);                                   \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t,    \
                        const T*, const T*, T*, bool);

SPARSEPOSE_INSTANTIATE(float)
SPARSEPOSE_INSTANTIATE(double)
#undef SPARSEPOSE_INSTANTIATE

}  // namespace sparsepose::kernels
