#pragma once
// Vector-width-generic kernel bodies. Each SIMD translation unit supplies a
// traits type V with:
//   reg, width, zero(), load(p), store(p, r), broadcast(x),
//   fma(a, b, c) = a*b + c, add(a, b), mul(a, b), hsum(r)

#include <cstddef>
#include <vector>

namespace sparsepose::kernels::simd {

template <class V, class T>
T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t w = V::width;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * w <= n; i += 2 * w) {
    acc0 = V::fma(V::load(a + i), V::load(b + i), acc0);
    acc1 = V::fma(V::load(a + i + w), V::load(b + i + w), acc1);
  }
  for (; i + w <= n; i += w) acc0 = V::fma(V::load(a + i), V::load(b + i), acc0);
  T acc = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class V, class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  constexpr std::size_t w = V::width;
  const auto va = V::broadcast(alpha);
  std::size_t i = 0;
  for (; i + w <= n; i += w) V::store(y + i, V::fma(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class V, class T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  constexpr std::size_t w = V::width;
  std::size_t i = 0;
  for (; i + w <= n; i += w) V::store(out + i, V::add(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <class V, class T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  constexpr std::size_t w = V::width;
  std::size_t i = 0;
  for (; i + w <= n; i += w) V::store(out + i, V::mul(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

template <class V, class T>
void mul_acc(const T* a, const T* b, T* out, std::size_t n) {
  constexpr std::size_t w = V::width;
  std::size_t i = 0;
  for (; i + w <= n; i += w)
    V::store(out + i, V::fma(V::load(a + i), V::load(b + i), V::load(out + i)));
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

template <class V, class T>
T sum(const T* a, std::size_t n) {
  constexpr std::size_t w = V::width;
  auto acc = V::zero();
  std::size_t i = 0;
  for (; i + w <= n; i += w) acc = V::add(acc, V::load(a + i));
  T total = V::hsum(acc);
  for (; i < n; ++i) total += a[i];
  return total;
}

// C = A * B with A m x k, B k x n, all row-major and contiguous.
// Register-blocked over 4 rows x 2 vectors of columns.
template <class V, class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
             T* c, bool accumulate) {
  constexpr std::size_t w = V::width;
  constexpr std::size_t mr = 4;
  using R = typename V::reg;
  std::size_t i = 0;
  for (; i + mr <= m; i += mr) {
    std::size_t j = 0;
    for (; j + 2 * w <= n; j += 2 * w) {
      R acc[mr][2];
      for (std::size_t r = 0; r < mr; ++r) {
        T* row = c + (i + r) * n + j;
        acc[r][0] = accumulate ? V::load(row) : V::zero();
        acc[r][1] = accumulate ? V::load(row + w) : V::zero();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const R b0 = V::load(b + p * n + j);
        const R b1 = V::load(b + p * n + j + w);
        for (std::size_t r = 0; r < mr; ++r) {
          const R av = V::broadcast(a[(i + r) * k + p]);
          acc[r][0] = V::fma(av, b0, acc[r][0]);
          acc[r][1] = V::fma(av, b1, acc[r][1]);
        }
      }
      for (std::size_t r = 0; r < mr; ++r) {
        T* row = c + (i + r) * n + j;
        V::store(row, acc[r][0]);
        V::store(row + w, acc[r][1]);
      }
    }
    for (; j + w <= n; j += w) {
      R acc[mr];
      for (std::size_t r = 0; r < mr; ++r)
        acc[r] = accumulate ? V::load(c + (i + r) * n + j) : V::zero();
      for (std::size_t p = 0; p < k; ++p) {
        const R b0 = V::load(b + p * n + j);
        for (std::size_t r = 0; r < mr; ++r)
          acc[r] = V::fma(V::broadcast(a[(i + r) * k + p]), b0, acc[r]);
      }
      for (std::size_t r = 0; r < mr; ++r) V::store(c + (i + r) * n + j, acc[r]);
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < mr; ++r) {
        T acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += a[(i + r) * k + p] * b[p * n + j];
        T& out = c[(i + r) * n + j];
        out = accumulate ? out + acc : acc;
      }
    }
  }
  for (; i < m; ++i) {
    std::size_t j = 0;
    for (; j + w <= n; j += w) {
      R acc = accumulate ? V::load(c + i * n + j) : V::zero();
      for (std::size_t p = 0; p < k; ++p)
        acc = V::fma(V::broadcast(a[i * k + p]), V::load(b + p * n + j), acc);
      V::store(c + i * n + j, acc);
    }
    for (; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      T& out = c[i * n + j];
      out = accumulate ? out + acc : acc;
    }
  }
}

template <class T>
void transpose_into(std::vector<T>& dst, const T* src, std::size_t rows,
                    std::size_t cols) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

template <class V, class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, bool accumulate) {
  thread_local std::vector<T> a_scratch;
  thread_local std::vector<T> b_scratch;
  if (trans_a) {
    transpose_into(a_scratch, a, k, m);
    a = a_scratch.data();
  }
  if (trans_b) {
    transpose_into(b_scratch, b, n, k);
    b = b_scratch.data();
  }
  gemm_nn<V>(m, n, k, a, b, c, accumulate);
}

template <class V, class T>
constexpr Table<T> make_table() {
  return Table<T>{&dot<V, T>,     &axpy<V, T>, &add<V, T>,  &mul<V, T>,
                  &mul_acc<V, T>, &sum<V, T>,  &gemm<V, T>};
}

}  // namespace sparsepose::kernels::simd
