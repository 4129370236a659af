// AVX2 float32 kernels. Compiled with -mavx2 and no FMA so that mul/add
// rounding matches the scalar reference exactly; see kernels.hpp for which
// kernels are bitwise-equal and which are reduction-reordered.

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <cstddef>

#include "epcl/kernels.hpp"
#include "epcl/kernels_ref.hpp"

namespace epcl::kernels::avx2 {

void add(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const float* x, float alpha, float* out, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), av));
  for (; i < n; ++i) out[i] = x[i] * alpha;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 yv = _mm256_loadu_ps(y + i);
    yv = _mm256_add_ps(yv, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    _mm256_storeu_ps(y + i, yv);
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

static inline float hmax(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 m = _mm_max_ps(lo, hi);
  m = _mm_max_ps(m, _mm_movehl_ps(m, m));
  m = _mm_max_ss(m, _mm_shuffle_ps(m, m, 1));
  return _mm_cvtss_f32(m);
}

float reduce_max(const float* x, std::size_t n) {
  std::size_t i = 0;
  float m;
  if (n >= 8) {
    __m256 mv = _mm256_loadu_ps(x);
    for (i = 8; i + 8 <= n; i += 8) mv = _mm256_max_ps(mv, _mm256_loadu_ps(x + i));
    m = hmax(mv);
  } else {
    m = x[0];
    i = 1;
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

static inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
  return _mm_cvtss_f32(s);
}

float reduce_sum(const float* x, std::size_t n) {
  __m256 sv = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) sv = _mm256_add_ps(sv, _mm256_loadu_ps(x + i));
  float s = hsum(sv);
  for (; i < n; ++i) s += x[i];
  return s;
}

void matmul_nn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const std::size_t nv = n & ~std::size_t(7);
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    for (std::size_t j = 0; j < nv; j += 8) {
      __m256 acc = accumulate ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256 av = _mm256_set1_ps(arow[p]);
        const __m256 bv = _mm256_loadu_ps(b + p * n + j);
        acc = _mm256_add_ps(acc, _mm256_mul_ps(av, bv));
      }
      _mm256_storeu_ps(crow + j, acc);
    }
    for (std::size_t j = nv; j < n; ++j) {
      float s = accumulate ? crow[j] : 0.0f;
      for (std::size_t p = 0; p < k; ++p) s = s + arow[p] * b[p * n + j];
      crow[j] = s;
    }
  }
}

void matmul_nt(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const std::size_t kv = k & ~std::size_t(7);
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      __m256 acc = _mm256_setzero_ps();
      for (std::size_t p = 0; p < kv; p += 8)
        acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p)));
      float s = hsum(acc);
      for (std::size_t p = kv; p < k; ++p) s = s + arow[p] * brow[p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void matmul_tn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const std::size_t nv = n & ~std::size_t(7);
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t j = 0; j < nv; j += 8) {
      __m256 acc = accumulate ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256 av = _mm256_set1_ps(a[p * m + i]);
        const __m256 bv = _mm256_loadu_ps(b + p * n + j);
        acc = _mm256_add_ps(acc, _mm256_mul_ps(av, bv));
      }
      _mm256_storeu_ps(crow + j, acc);
    }
    for (std::size_t j = nv; j < n; ++j) {
      float s = accumulate ? crow[j] : 0.0f;
      for (std::size_t p = 0; p < k; ++p) s = s + a[p * m + i] * b[p * n + j];
      crow[j] = s;
    }
  }
}

void sqdist3(const float* pts, std::size_t n, const float* q, float* out) {
  const __m256i idx = _mm256_setr_epi32(0, 3, 6, 9, 12, 15, 18, 21);
  const __m256 qx = _mm256_set1_ps(q[0]);
  const __m256 qy = _mm256_set1_ps(q[1]);
  const __m256 qz = _mm256_set1_ps(q[2]);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const float* base = pts + i * 3;
    const __m256 x = _mm256_i32gather_ps(base + 0, idx, 4);
    const __m256 y = _mm256_i32gather_ps(base + 1, idx, 4);
    const __m256 z = _mm256_i32gather_ps(base + 2, idx, 4);
    const __m256 dx = _mm256_sub_ps(x, qx);
    const __m256 dy = _mm256_sub_ps(y, qy);
    const __m256 dz = _mm256_sub_ps(z, qz);
    const __m256 d = _mm256_add_ps(
        _mm256_add_ps(_mm256_mul_ps(dx, dx), _mm256_mul_ps(dy, dy)), _mm256_mul_ps(dz, dz));
    _mm256_storeu_ps(out + i, d);
  }
  for (; i < n; ++i) {
    const float dx = pts[i * 3 + 0] - q[0];
    const float dy = pts[i * 3 + 1] - q[1];
    const float dz = pts[i * 3 + 2] - q[2];
    out[i] = (dx * dx + dy * dy) + dz * dz;
  }
}

void adamw_update(float* p, const float* g, float* m, float* v,
                  std::size_t n, const AdamHyper& h) {
  const __m256 b1 = _mm256_set1_ps(h.beta1);
  const __m256 b2 = _mm256_set1_ps(h.beta2);
  const __m256 c1 = _mm256_set1_ps(1.0f - h.beta1);
  const __m256 c2 = _mm256_set1_ps(1.0f - h.beta2);
  const __m256 inv1 = _mm256_set1_ps(h.inv_bias1);
  const __m256 inv2 = _mm256_set1_ps(h.inv_bias2);
  const __m256 epsv = _mm256_set1_ps(h.eps);
  const __m256 wdv = _mm256_set1_ps(h.weight_decay);
  const __m256 lrv = _mm256_set1_ps(h.lr);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)),
                                    _mm256_mul_ps(c1, gv));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(c2, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mhat = _mm256_mul_ps(mi, inv1);
    const __m256 vhat = _mm256_mul_ps(vi, inv2);
    const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
    const __m256 pv = _mm256_loadu_ps(p + i);
    const __m256 upd = _mm256_add_ps(_mm256_div_ps(mhat, den), _mm256_mul_ps(wdv, pv));
    _mm256_storeu_ps(p + i, _mm256_sub_ps(pv, _mm256_mul_ps(lrv, upd)));
  }
  if (i < n) {
    ref::adamw_update<float>(p + i, g + i, m + i, v + i, n - i, h.lr, h.beta1, h.beta2,
                             h.eps, h.weight_decay, h.inv_bias1, h.inv_bias2);
  }
}

}  // namespace epcl::kernels::avx2

#endif  // x86
