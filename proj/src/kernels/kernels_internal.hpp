#pragma once

#include <cstddef>

#include "epcl/kernels.hpp"

// Per-backend entry points; only the dispatch layer includes this.

#if defined(__x86_64__) || defined(__i386__)
namespace epcl::kernels::avx2 {
void add(const float* a, const float* b, float* out, std::size_t n);
void sub(const float* a, const float* b, float* out, std::size_t n);
void mul(const float* a, const float* b, float* out, std::size_t n);
void scale(const float* x, float alpha, float* out, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
float reduce_max(const float* x, std::size_t n);
float reduce_sum(const float* x, std::size_t n);
void matmul_nn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nt(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_tn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void sqdist3(const float* pts, std::size_t n, const float* q, float* out);
void adamw_update(float* p, const float* g, float* m, float* v,
                  std::size_t n, const AdamHyper& h);
}  // namespace epcl::kernels::avx2
#endif

#if defined(__aarch64__)
namespace epcl::kernels::neon {
void add(const float* a, const float* b, float* out, std::size_t n);
void sub(const float* a, const float* b, float* out, std::size_t n);
void mul(const float* a, const float* b, float* out, std::size_t n);
void scale(const float* x, float alpha, float* out, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
float reduce_max(const float* x, std::size_t n);
float reduce_sum(const float* x, std::size_t n);
void matmul_nn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nt(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_tn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void sqdist3(const float* pts, std::size_t n, const float* q, float* out);
void adamw_update(float* p, const float* g, float* m, float* v,
                  std::size_t n, const AdamHyper& h);
}  // namespace epcl::kernels::neon
#endif
