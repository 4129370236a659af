// NEON float32 kernels (aarch64). Same structure and per-element operation
// order as the AVX2 file; vld3q_f32 does the xyz deinterleave natively.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cstddef>

#include "epcl/kernels.hpp"
#include "epcl/kernels_ref.hpp"

namespace epcl::kernels::neon {

void add(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const float* x, float alpha, float* out, std::size_t n) {
  const float32x4_t av = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(x + i), av));
  for (; i < n; ++i) out[i] = x[i] * alpha;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t av = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), vmulq_f32(av, vld1q_f32(x + i))));
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

float reduce_max(const float* x, std::size_t n) {
  std::size_t i = 0;
  float m;
  if (n >= 4) {
    float32x4_t mv = vld1q_f32(x);
    for (i = 4; i + 4 <= n; i += 4) mv = vmaxq_f32(mv, vld1q_f32(x + i));
    m = vmaxvq_f32(mv);
  } else {
    m = x[0];
    i = 1;
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

float reduce_sum(const float* x, std::size_t n) {
  float32x4_t sv = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) sv = vaddq_f32(sv, vld1q_f32(x + i));
  float s = vaddvq_f32(sv);
  for (; i < n; ++i) s += x[i];
  return s;
}

void matmul_nn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const std::size_t nv = n & ~std::size_t(3);
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    for (std::size_t j = 0; j < nv; j += 4) {
      float32x4_t acc = accumulate ? vld1q_f32(crow + j) : vdupq_n_f32(0.0f);
      for (std::size_t p = 0; p < k; ++p)
        acc = vaddq_f32(acc, vmulq_f32(vdupq_n_f32(arow[p]), vld1q_f32(b + p * n + j)));
      vst1q_f32(crow + j, acc);
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
  const std::size_t kv = k & ~std::size_t(3);
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      float32x4_t acc = vdupq_n_f32(0.0f);
      for (std::size_t p = 0; p < kv; p += 4)
        acc = vaddq_f32(acc, vmulq_f32(vld1q_f32(arow + p), vld1q_f32(brow + p)));
      float s = vaddvq_f32(acc);
      for (std::size_t p = kv; p < k; ++p) s = s + arow[p] * brow[p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void matmul_tn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const std::size_t nv = n & ~std::size_t(3);
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t j = 0; j < nv; j += 4) {
      float32x4_t acc = accumulate ? vld1q_f32(crow + j) : vdupq_n_f32(0.0f);
      for (std::size_t p = 0; p < k; ++p)
        acc = vaddq_f32(acc, vmulq_f32(vdupq_n_f32(a[p * m + i]), vld1q_f32(b + p * n + j)));
      vst1q_f32(crow + j, acc);
    }
    for (std::size_t j = nv; j < n; ++j) {
      float s = accumulate ? crow[j] : 0.0f;
      for (std::size_t p = 0; p < k; ++p) s = s + a[p * m + i] * b[p * n + j];
      crow[j] = s;
    }
  }
}

void sqdist3(const float* pts, std::size_t n, const float* q, float* out) {
  const float32x4_t qx = vdupq_n_f32(q[0]);
  const float32x4_t qy = vdupq_n_f32(q[1]);
  const float32x4_t qz = vdupq_n_f32(q[2]);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4x3_t xyz = vld3q_f32(pts + i * 3);
    const float32x4_t dx = vsubq_f32(xyz.val[0], qx);
    const float32x4_t dy = vsubq_f32(xyz.val[1], qy);
    const float32x4_t dz = vsubq_f32(xyz.val[2], qz);
    const float32x4_t d =
        vaddq_f32(vaddq_f32(vmulq_f32(dx, dx), vmulq_f32(dy, dy)), vmulq_f32(dz, dz));
    vst1q_f32(out + i, d);
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
  const float32x4_t b1 = vdupq_n_f32(h.beta1);
  const float32x4_t b2 = vdupq_n_f32(h.beta2);
  const float32x4_t c1 = vdupq_n_f32(1.0f - h.beta1);
  const float32x4_t c2 = vdupq_n_f32(1.0f - h.beta2);
  const float32x4_t inv1 = vdupq_n_f32(h.inv_bias1);
  const float32x4_t inv2 = vdupq_n_f32(h.inv_bias2);
  const float32x4_t epsv = vdupq_n_f32(h.eps);
  const float32x4_t wdv = vdupq_n_f32(h.weight_decay);
  const float32x4_t lrv = vdupq_n_f32(h.lr);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t gv = vld1q_f32(g + i);
    const float32x4_t mi = vaddq_f32(vmulq_f32(b1, vld1q_f32(m + i)), vmulq_f32(c1, gv));
    const float32x4_t vi =
        vaddq_f32(vmulq_f32(b2, vld1q_f32(v + i)), vmulq_f32(c2, vmulq_f32(gv, gv)));
    vst1q_f32(m + i, mi);
    vst1q_f32(v + i, vi);
    const float32x4_t den = vaddq_f32(vsqrtq_f32(vmulq_f32(vi, inv2)), epsv);
    const float32x4_t pv = vld1q_f32(p + i);
    const float32x4_t upd =
        vaddq_f32(vdivq_f32(vmulq_f32(mi, inv1), den), vmulq_f32(wdv, pv));
    vst1q_f32(p + i, vsubq_f32(pv, vmulq_f32(lrv, upd)));
  }
  if (i < n) {
    ref::adamw_update<float>(p + i, g + i, m + i, v + i, n - i, h.lr, h.beta1, h.beta2,
                             h.eps, h.weight_decay, h.inv_bias1, h.inv_bias2);
  }
}

}  // namespace epcl::kernels::neon

#endif  // aarch64
