#pragma once

// Scalar reference kernels. These define the numeric semantics; the SIMD
// variants in src/kernels/ are checked against them. Loop order matters:
// matmul_nn/matmul_tn walk (i, k, j) updating one output row per k step,
// which is the order the SIMD versions reproduce lane-for-lane.

#include <cmath>
#include <cstddef>

namespace epcl::kernels::ref {

template <typename T>
inline void add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
inline void sub(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
inline void mul(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
inline void scale(const T* x, T alpha, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * alpha;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

template <typename T>
inline T reduce_max(const T* x, std::size_t n) {
  T m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

template <typename T>
inline T reduce_sum(const T* x, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s = s + x[i];
  return s;
}

template <typename T>
inline void matmul_nn(const T* a, const T* b, T* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

template <typename T>
inline void matmul_nt(const T* a, const T* b, T* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s = T(0);
      for (std::size_t p = 0; p < k; ++p) s = s + arow[p] * brow[p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

template <typename T>
inline void matmul_tn(const T* a, const T* b, T* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  // a is stored [k x m]; result is a^T * b.
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    for (std::size_t p = 0; p < k; ++p) {
      const T api = a[p * m + i];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + api * brow[j];
    }
  }
}

template <typename T>
inline void sqdist3(const T* pts, std::size_t n, const T* q, T* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const T dx = pts[i * 3 + 0] - q[0];
    const T dy = pts[i * 3 + 1] - q[1];
    const T dz = pts[i * 3 + 2] - q[2];
    out[i] = (dx * dx + dy * dy) + dz * dz;
  }
}

template <typename T>
inline void adamw_update(T* p, const T* g, T* m, T* v, std::size_t n,
                         T lr, T beta1, T beta2, T eps, T weight_decay,
                         T inv_bias1, T inv_bias2) {
  const T c1 = T(1) - beta1;
  const T c2 = T(1) - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const T gi = g[i];
    const T mi = beta1 * m[i] + c1 * gi;
    const T vi = beta2 * v[i] + c2 * (gi * gi);
    m[i] = mi;
    v[i] = vi;
    const T mhat = mi * inv_bias1;
    const T vhat = vi * inv_bias2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
  }
}

}  // namespace epcl::kernels::ref
