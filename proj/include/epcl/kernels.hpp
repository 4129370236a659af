#pragma once

// Low-level array kernels behind the tensor engine. Every kernel has a
// scalar reference implementation (kernels_ref.hpp, templated on float/double)
// and may have AVX2/NEON float32 variants selected at runtime. float64 always
// runs the scalar reference path; it exists for high-precision checks, not speed.
//
// Rounding contract: kernels are compiled without FP contraction and the SIMD
// variants of elementwise kernels, matmul_nn/matmul_tn, sqdist3, reduce_max and
// adamw_update perform per-element operations in the same order as the scalar
// reference, so they produce bitwise-identical results. matmul_nt and
// reduce_sum vectorize a reduction (partial sums), so they agree with the
// reference only up to rounding; tests bound that difference.

#include <cstddef>

namespace epcl::kernels {

enum class Backend { scalar, avx2, neon };

Backend active();
void set_backend(Backend b);
bool available(Backend b);
const char* name(Backend b);

struct AdamHyper {
  float lr;
  float beta1;
  float beta2;
  float eps;
  float weight_decay;
  float inv_bias1;  // 1/(1 - beta1^t)
  float inv_bias2;  // 1/(1 - beta2^t)
};

// Elementwise, out may alias a or b.
void add(const float* a, const float* b, float* out, std::size_t n);
void sub(const float* a, const float* b, float* out, std::size_t n);
void mul(const float* a, const float* b, float* out, std::size_t n);
void scale(const float* x, float alpha, float* out, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);  // y += alpha*x

float reduce_max(const float* x, std::size_t n);  // n >= 1
float reduce_sum(const float* x, std::size_t n);

// c[m x n] = a[m x k] * b[k x n]; accumulate adds into c instead of overwriting.
void matmul_nn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// c[m x n] = a[k x m]^T * b[k x n]
void matmul_tn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// Squared Euclidean distance from query q[3] to each of n xyz-interleaved points.
void sqdist3(const float* pts, std::size_t n, const float* q, float* out);

// Decoupled-weight-decay Adam step on one parameter buffer.
void adamw_update(float* p, const float* g, float* m, float* v,
                  std::size_t n, const AdamHyper& h);

}  // namespace epcl::kernels
