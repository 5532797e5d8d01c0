// aarch64 only; NEON is architecturally guaranteed there.
#include <arm_neon.h>

#include "sparsepose/kernels.hpp"
#include "simd_impl.hpp"

namespace sparsepose::kernels::neon {
namespace {

struct F64x2 {
  using reg = float64x2_t;
  static constexpr std::size_t width = 2;
  static reg zero() { return vdupq_n_f64(0.0); }
  static reg load(const double* p) { return vld1q_f64(p); }
  static void store(double* p, reg r) { vst1q_f64(p, r); }
  static reg broadcast(double x) { return vdupq_n_f64(x); }
  static reg fma(reg a, reg b, reg c) { return vfmaq_f64(c, a, b); }
  static reg add(reg a, reg b) { return vaddq_f64(a, b); }
  static reg mul(reg a, reg b) { return vmulq_f64(a, b); }
  static double hsum(reg r) { return vaddvq_f64(r); }
};

struct F32x4 {
  using reg = float32x4_t;
  static constexpr std::size_t width = 4;
  static reg zero() { return vdupq_n_f32(0.0f); }
  static reg load(const float* p) { return vld1q_f32(p); }
  static void store(float* p, reg r) { vst1q_f32(p, r); }
  static reg broadcast(float x) { return vdupq_n_f32(x); }
  static reg fma(reg a, reg b, reg c) { return vfmaq_f32(c, a, b); }
  static reg add(reg a, reg b) { return vaddq_f32(a, b); }
  static reg mul(reg a, reg b) { return vmulq_f32(a, b); }
  static float hsum(reg r) { return vaddvq_f32(r); }
};

}  // namespace

const Table<double>& table_f64() {
  static const Table<double> t = simd::make_table<F64x2, double>();
  return t;
}

const Table<float>& table_f32() {
  static const Table<float> t = simd::make_table<F32x4, float>();
  return t;
}

}  // namespace sparsepose::kernels::neon
