// Scalar/SIMD kernel equivalence. Sizes straddle the 8-lane AVX2 boundary so
// both the vector body and the scalar tail are exercised. Kernels documented
// as bitwise-equal are compared bit for bit; reduction-reordered kernels
// (matmul_nt, reduce_sum) are compared against a float64 oracle instead.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <vector>

#include "epcl/kernels.hpp"
#include "epcl/kernels_ref.hpp"

namespace k = epcl::kernels;

namespace {

const std::size_t kSizes[] = {1, 2, 3, 7, 8, 9, 15, 16, 17, 31, 32, 33, 64, 65, 100, 257};

struct MatDims {
  std::size_t m, kk, n;
};
const MatDims kMatDims[] = {{1, 1, 1}, {2, 3, 5},  {3, 8, 8},  {5, 7, 9},   {8, 8, 8},
                            {4, 16, 17}, {7, 31, 33}, {16, 9, 24}, {1, 257, 8}};

std::vector<float> rand_vec(std::mt19937_64& rng, std::size_t n, float lo = -2.0f, float hi = 2.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Returns v.size() when equal, else the first differing index.
std::size_t first_bit_mismatch(const std::vector<float>& a, const std::vector<float>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return i;
  return a.size();
}

bool simd_backend(k::Backend* out) {
  if (k::available(k::Backend::avx2)) { *out = k::Backend::avx2; return true; }
  if (k::available(k::Backend::neon)) { *out = k::Backend::neon; return true; }
  return false;
}

// Runs fn once per backend (scalar first) and hands both outputs to check.
template <typename Fn, typename Check>
void compare_backends(Fn fn, Check check) {
  k::Backend simd;
  if (!simd_backend(&simd)) return;  // scalar-only build: nothing to compare
  k::set_backend(k::Backend::scalar);
  auto a = fn();
  k::set_backend(simd);
  auto b = fn();
  k::set_backend(k::Backend::scalar);
  check(a, b);
}

}  // namespace

TEST_CASE("backend dispatch") {
  CHECK(k::available(k::Backend::scalar));
  CHECK(k::available(k::active()));
  k::set_backend(k::Backend::scalar);
  CHECK(k::active() == k::Backend::scalar);
  k::Backend simd;
  if (simd_backend(&simd)) {
    k::set_backend(simd);
    CHECK(k::active() == simd);
    k::set_backend(k::Backend::scalar);
  }
  // At most one SIMD flavour exists per build; the other must be rejected.
  const k::Backend absent =
      k::available(k::Backend::avx2) ? k::Backend::neon : k::Backend::avx2;
  if (!k::available(absent)) CHECK_THROWS_AS(k::set_backend(absent), std::invalid_argument);
}

TEST_CASE("elementwise kernels are bitwise equal across backends") {
  std::mt19937_64 rng(7);
  for (std::size_t n : kSizes) {
    CAPTURE(n);
    const auto a = rand_vec(rng, n);
    const auto b = rand_vec(rng, n);
    auto run = [&](auto kernel) {
      return [&, kernel] {
        std::vector<float> out(n);
        kernel(a.data(), b.data(), out.data(), n);
        return out;
      };
    };
    auto expect_bitwise = [&](const std::vector<float>& s, const std::vector<float>& v) {
      CHECK(first_bit_mismatch(s, v) == s.size());
    };
    compare_backends(run(k::add), expect_bitwise);
    compare_backends(run(k::sub), expect_bitwise);
    compare_backends(run(k::mul), expect_bitwise);
    compare_backends(
        [&] {
          std::vector<float> out(n);
          k::scale(a.data(), 1.7f, out.data(), n);
          return out;
        },
        expect_bitwise);
    compare_backends(
        [&] {
          std::vector<float> y = b;
          k::axpy(-0.3f, a.data(), y.data(), n);
          return y;
        },
        expect_bitwise);
  }
}

TEST_CASE("elementwise kernels allow out to alias an input") {
  std::mt19937_64 rng(8);
  const auto a = rand_vec(rng, 19);
  const auto b = rand_vec(rng, 19);
  std::vector<float> expect(19);
  k::add(a.data(), b.data(), expect.data(), 19);
  std::vector<float> inplace = a;
  k::add(inplace.data(), b.data(), inplace.data(), 19);
  CHECK(first_bit_mismatch(expect, inplace) == expect.size());
}

TEST_CASE("reduce_max is bitwise equal, reduce_sum within rounding") {
  std::mt19937_64 rng(9);
  for (std::size_t n : kSizes) {
    CAPTURE(n);
    const auto x = rand_vec(rng, n, -5.0f, 5.0f);
    compare_backends([&] { return std::vector<float>{k::reduce_max(x.data(), n)}; },
                     [&](const std::vector<float>& s, const std::vector<float>& v) {
                       CHECK(first_bit_mismatch(s, v) == 1);
                     });
    double exact = 0.0;
    for (float xi : x) exact += static_cast<double>(xi);
    compare_backends([&] { return std::vector<float>{k::reduce_sum(x.data(), n)}; },
                     [&](const std::vector<float>& s, const std::vector<float>& v) {
                       const double tol = 1e-5 * (1.0 + std::abs(exact));
                       CHECK(std::abs(s[0] - exact) <= tol);
                       CHECK(std::abs(v[0] - exact) <= tol);
                       CHECK(std::abs(double(s[0]) - double(v[0])) <= tol);
                     });
  }
}

namespace {

// float64 oracle shared by all three matmul layouts.
std::vector<double> matmul_oracle(const std::vector<float>& a, const std::vector<float>& b,
                                  std::size_t m, std::size_t kk, std::size_t n,
                                  bool a_trans, bool b_trans) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < kk; ++p) {
        const double av = a_trans ? a[p * m + i] : a[i * kk + p];
        const double bv = b_trans ? b[j * kk + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = s;
    }
  return c;
}

void check_close(const std::vector<float>& got, const std::vector<double>& want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CAPTURE(i);
    CHECK(std::abs(got[i] - want[i]) <= tol * (1.0 + std::abs(want[i])));
  }
}

}  // namespace

TEST_CASE("matmul_nn/matmul_tn bitwise equal, matmul_nt within rounding; all match float64 oracle") {
  std::mt19937_64 rng(10);
  for (const auto& d : kMatDims) {
    CAPTURE(d.m);
    CAPTURE(d.kk);
    CAPTURE(d.n);
    for (bool accumulate : {false, true}) {
      CAPTURE(accumulate);
      const auto a_nn = rand_vec(rng, d.m * d.kk);
      const auto b_nn = rand_vec(rng, d.kk * d.n);
      const auto a_tn = rand_vec(rng, d.kk * d.m);
      const auto b_nt = rand_vec(rng, d.n * d.kk);
      const auto c0 = rand_vec(rng, d.m * d.n);

      auto run = [&](auto kernel, const float* a, const float* b) {
        return [&, kernel, a, b] {
          std::vector<float> c = accumulate ? c0 : std::vector<float>(d.m * d.n, -99.0f);
          kernel(a, b, c.data(), d.m, d.kk, d.n, accumulate);
          return c;
        };
      };
      auto oracle_plus_c0 = [&](std::vector<double> o) {
        if (accumulate)
          for (std::size_t i = 0; i < o.size(); ++i) o[i] += c0[i];
        return o;
      };

      const auto want_nn = oracle_plus_c0(matmul_oracle(a_nn, b_nn, d.m, d.kk, d.n, false, false));
      compare_backends(run(k::matmul_nn, a_nn.data(), b_nn.data()),
                       [&](const std::vector<float>& s, const std::vector<float>& v) {
                         CHECK(first_bit_mismatch(s, v) == s.size());
                         check_close(s, want_nn, 1e-5);
                       });

      const auto want_tn = oracle_plus_c0(matmul_oracle(a_tn, b_nn, d.m, d.kk, d.n, true, false));
      compare_backends(run(k::matmul_tn, a_tn.data(), b_nn.data()),
                       [&](const std::vector<float>& s, const std::vector<float>& v) {
                         CHECK(first_bit_mismatch(s, v) == s.size());
                         check_close(s, want_tn, 1e-5);
                       });

      const auto want_nt = oracle_plus_c0(matmul_oracle(a_nn, b_nt, d.m, d.kk, d.n, false, true));
      compare_backends(run(k::matmul_nt, a_nn.data(), b_nt.data()),
                       [&](const std::vector<float>& s, const std::vector<float>& v) {
                         check_close(s, want_nt, 1e-5);
                         check_close(v, want_nt, 1e-5);
                       });
    }
  }
}

TEST_CASE("sqdist3 is bitwise equal and matches float64 oracle") {
  std::mt19937_64 rng(11);
  for (std::size_t n : kSizes) {
    CAPTURE(n);
    const auto pts = rand_vec(rng, n * 3);
    const auto q = rand_vec(rng, 3);
    std::vector<double> want(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = double(pts[i * 3 + 0]) - double(q[0]);
      const double dy = double(pts[i * 3 + 1]) - double(q[1]);
      const double dz = double(pts[i * 3 + 2]) - double(q[2]);
      want[i] = dx * dx + dy * dy + dz * dz;
    }
    compare_backends(
        [&] {
          std::vector<float> out(n);
          k::sqdist3(pts.data(), n, q.data(), out.data());
          return out;
        },
        [&](const std::vector<float>& s, const std::vector<float>& v) {
          CHECK(first_bit_mismatch(s, v) == s.size());
          check_close(s, want, 1e-5);
        });
  }
}

TEST_CASE("adamw_update is bitwise equal across backends") {
  std::mt19937_64 rng(12);
  const k::AdamHyper h{3e-4f, 0.9f, 0.999f, 1e-8f, 0.04f,
                       1.0f / (1.0f - 0.9f), 1.0f / (1.0f - 0.999f)};
  for (std::size_t n : kSizes) {
    CAPTURE(n);
    const auto p0 = rand_vec(rng, n);
    const auto g = rand_vec(rng, n);
    const auto m0 = rand_vec(rng, n, 0.0f, 0.1f);
    const auto v0 = rand_vec(rng, n, 0.0f, 0.1f);
    struct State {
      std::vector<float> p, m, v;
    };
    compare_backends(
        [&] {
          State st{p0, m0, v0};
          k::adamw_update(st.p.data(), g.data(), st.m.data(), st.v.data(), n, h);
          return st;
        },
        [&](const State& s, const State& v) {
          CHECK(first_bit_mismatch(s.p, v.p) == n);
          CHECK(first_bit_mismatch(s.m, v.m) == n);
          CHECK(first_bit_mismatch(s.v, v.v) == n);
        });
  }
}

TEST_CASE("adamw_update first step matches hand-computed value") {
  // theta=1, g=1, lr=3e-4, wd=0.04, defaults otherwise:
  // m=0.1, v=0.001, mhat=1, vhat=1, step = lr*(1/(1+eps) + 0.04) so
  // theta' = 1 - 3e-4*1.04 = 0.999688.
  float p = 1.0f, g = 1.0f, m = 0.0f, v = 0.0f;
  const k::AdamHyper h{3e-4f, 0.9f, 0.999f, 1e-8f, 0.04f,
                       1.0f / (1.0f - 0.9f), 1.0f / (1.0f - 0.999f)};
  k::set_backend(k::Backend::scalar);
  k::adamw_update(&p, &g, &m, &v, 1, h);
  CHECK(p == doctest::Approx(0.999688).epsilon(1e-6));
  CHECK(m == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(v == doctest::Approx(0.001).epsilon(1e-6));
}

int main(int argc, char** argv) {
  // Pin the startup path: the env override must win over CPU detection.
  setenv("EPCL_KERNELS", "scalar", 1);
  if (k::active() != k::Backend::scalar) {
    std::fprintf(stderr, "EPCL_KERNELS=scalar was not honoured at startup\n");
    return 1;
  }
  return doctest::Context(argc, argv).run();
}
