#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "epcl/kernels.hpp"
#include "epcl/kernels_ref.hpp"
#include "kernels_internal.hpp"

namespace epcl::kernels {

namespace {

Backend detect() {
  if (const char* env = std::getenv("EPCL_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && available(Backend::avx2)) return Backend::avx2;
    if (std::strcmp(env, "neon") == 0 && available(Backend::neon)) return Backend::neon;
    // "auto" or anything unrecognized falls through to detection
  }
#if defined(__x86_64__) || defined(__i386__)
  if (__builtin_cpu_supports("avx2")) return Backend::avx2;
#elif defined(__aarch64__)
  return Backend::neon;
#endif
  return Backend::scalar;
}

Backend& backend_slot() {
  static Backend b = detect();
  return b;
}

}  // namespace

Backend active() { return backend_slot(); }

bool available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Backend::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

void set_backend(Backend b) {
  if (!available(b)) throw std::invalid_argument(std::string("kernel backend unavailable: ") + name(b));
  backend_slot() = b;
}

const char* name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

#if defined(__x86_64__) || defined(__i386__)
#define EPCL_SIMD_NS avx2
#elif defined(__aarch64__)
#define EPCL_SIMD_NS neon
#endif

#ifdef EPCL_SIMD_NS
#define EPCL_DISPATCH(fn, ...)                         \
  if (backend_slot() != Backend::scalar) {             \
    return EPCL_SIMD_NS::fn(__VA_ARGS__);              \
  }                                                    \
  return ref::fn<float>(__VA_ARGS__)
#else
#define EPCL_DISPATCH(fn, ...) return ref::fn<float>(__VA_ARGS__)
#endif

void add(const float* a, const float* b, float* out, std::size_t n) { EPCL_DISPATCH(add, a, b, out, n); }
void sub(const float* a, const float* b, float* out, std::size_t n) { EPCL_DISPATCH(sub, a, b, out, n); }
void mul(const float* a, const float* b, float* out, std::size_t n) { EPCL_DISPATCH(mul, a, b, out, n); }
void scale(const float* x, float alpha, float* out, std::size_t n) { EPCL_DISPATCH(scale, x, alpha, out, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) { EPCL_DISPATCH(axpy, alpha, x, y, n); }
float reduce_max(const float* x, std::size_t n) { EPCL_DISPATCH(reduce_max, x, n); }
float reduce_sum(const float* x, std::size_t n) { EPCL_DISPATCH(reduce_sum, x, n); }

void matmul_nn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  EPCL_DISPATCH(matmul_nn, a, b, c, m, k, n, accumulate);
}
void matmul_nt(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  EPCL_DISPATCH(matmul_nt, a, b, c, m, k, n, accumulate);
}
void matmul_tn(const float* a, const float* b, float* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  EPCL_DISPATCH(matmul_tn, a, b, c, m, k, n, accumulate);
}
void sqdist3(const float* pts, std::size_t n, const float* q, float* out) {
  EPCL_DISPATCH(sqdist3, pts, n, q, out);
}

void adamw_update(float* p, const float* g, float* m, float* v,
                  std::size_t n, const AdamHyper& h) {
#ifdef EPCL_SIMD_NS
  if (backend_slot() != Backend::scalar) return EPCL_SIMD_NS::adamw_update(p, g, m, v, n, h);
#endif
  ref::adamw_update<float>(p, g, m, v, n, h.lr, h.beta1, h.beta2, h.eps, h.weight_decay,
                           h.inv_bias1, h.inv_bias2);
}

}  // namespace epcl::kernels
