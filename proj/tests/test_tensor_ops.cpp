// Tensor engine: op semantics pinned by hand examples and double-precision
// oracles, then analytic gradients vs central finite differences (float64,
// h=1e-5, rel err <= 1e-4, 10 seeded instances per op).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "epcl/errors.hpp"
#include "epcl/ops.hpp"
#include "epcl/rng.hpp"
#include "epcl/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace epcl;
namespace o = epcl::ops;
using epcl::testing::check_gradients;

namespace {

template <typename T>
Tensor<T> rand_tensor(Rng& rng, std::vector<std::size_t> shape, bool rg = false,
                      double lo = -1.5, double hi = 1.5) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<T> data(n);
  for (auto& v : data) v = T(rng.uniform(lo, hi));
  return Tensor<T>::from_data(std::move(shape), std::move(data), rg);
}

// Values bounded away from zero so relu/max kinks stay clear of the fd step.
template <typename T>
Tensor<T> rand_tensor_nonzero(Rng& rng, std::vector<std::size_t> shape, bool rg = false) {
  auto t = rand_tensor<T>(rng, std::move(shape), rg);
  for (auto& v : t.data_mut())
    if (std::abs(double(v)) < 1e-2) v += v >= T(0) ? T(0.05) : T(-0.05);
  return t;
}

// loss = sum(y * R) with a fixed random probe so dY is nondegenerate.
TensorD probe_loss(const TensorD& y, Rng& rng) {
  auto r = rand_tensor<double>(rng, y.shape());
  return o::sum_all(o::mul(y, r));
}

}  // namespace

TEST_CASE("matmul: identity, hand product, shape errors") {
  auto id = TensorF::from_data({2, 2}, {1, 0, 0, 1});
  auto m = TensorF::from_data({2, 2}, {2, 3, 4, 5});
  auto y = o::matmul(id, m);
  CHECK(y.data() == m.data());

  auto a = TensorF::from_data({1, 2}, {1, 2});
  auto b = TensorF::from_data({2, 1}, {3, 4});
  CHECK(o::matmul(a, b).item() == doctest::Approx(11));

  CHECK_THROWS_WITH_AS(o::matmul(b, m), doctest::Contains("[2x1]"), std::invalid_argument);
}

TEST_CASE("layer_norm: constant row, hand values, gamma zero") {
  auto gamma = TensorF::from_data({3}, {1, 1, 1});
  auto beta = TensorF::from_data({3}, {0, 0, 0});
  auto flat = o::layer_norm(TensorF::from_data({1, 3}, {5, 5, 5}), gamma, beta);
  for (float v : flat.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-5));

  auto y = o::layer_norm(TensorF::from_data({1, 3}, {1, 2, 3}), gamma, beta);
  CHECK(y.data()[0] == doctest::Approx(-1.2247).epsilon(1e-3));
  CHECK(y.data()[1] == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(y.data()[2] == doctest::Approx(1.2247).epsilon(1e-3));

  auto g0 = TensorF::from_data({3}, {0, 0, 0});
  auto b7 = TensorF::from_data({3}, {7, 7, 7});
  auto z = o::layer_norm(TensorF::from_data({2, 3}, {1, 2, 3, 9, 0, 4}), g0, b7);
  for (float v : z.data()) CHECK(v == doctest::Approx(7.0));

  CHECK_THROWS_AS(o::layer_norm(TensorF::from_data({1, 2}, {1, 2}), gamma, beta),
                  std::invalid_argument);
}

TEST_CASE("layer_norm keeps per-row mean near zero pre-affine") {
  Rng rng(21);
  auto x = rand_tensor<float>(rng, {5, 16});
  auto gamma = TensorF::full({16}, 1.0f);
  auto beta = TensorF::zeros({16});
  auto y = o::layer_norm(x, gamma, beta);
  for (std::size_t i = 0; i < 5; ++i) {
    double mu = 0;
    for (std::size_t j = 0; j < 16; ++j) mu += y.data()[i * 16 + j];
    CHECK(std::abs(mu / 16) <= 1e-5);
  }
}

TEST_CASE("softmax: symmetry, overflow stability, float64 oracle") {
  auto y = o::softmax_rows(TensorF::from_data({1, 2}, {0, 0}));
  CHECK(y.data()[0] == doctest::Approx(0.5));
  CHECK(y.data()[1] == doctest::Approx(0.5));

  auto big = o::softmax_rows(TensorF::from_data({1, 2}, {1000, 0}));
  CHECK(big.data()[0] == doctest::Approx(1.0));
  CHECK(big.data()[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(big.data()[0]));

  Rng rng(3);
  std::vector<double> row(4);
  for (auto& v : row) v = rng.uniform(-3, 3);
  auto got = o::softmax_rows(TensorD::from_data({1, 4}, row));
  auto want = epcl::testing::softmax_oracle(row);
  double sum = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(got.data()[i] - want[i]) <= 1e-7);
    sum += got.data()[i];
  }
  CHECK(std::abs(sum - 1.0) <= 1e-6);
}

TEST_CASE("attention: one-token identity, permutation symmetry, loop oracle") {
  // Identity projections, single token: softmax over one key is 1.
  const std::size_t d = 4;
  std::vector<float> eye(d * d, 0.0f);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0f;
  o::MsaParams<float> p{TensorF::from_data({d, d}, eye), TensorF::zeros({d}),
                        TensorF::from_data({d, d}, eye), TensorF::zeros({d}),
                        TensorF::from_data({d, d}, eye), TensorF::zeros({d}),
                        TensorF::from_data({d, d}, eye), TensorF::zeros({d})};
  auto x1 = TensorF::from_data({1, d}, {0.5f, -1.0f, 2.0f, 0.25f});
  auto y1 = o::multi_head_self_attention(x1, p, 2);
  for (std::size_t i = 0; i < d; ++i) CHECK(y1.data()[i] == doctest::Approx(x1.data()[i]));

  // Two identical tokens produce identical output rows.
  auto x2 = TensorF::from_data({2, d}, {0.5f, -1.0f, 2.0f, 0.25f, 0.5f, -1.0f, 2.0f, 0.25f});
  auto y2 = o::multi_head_self_attention(x2, p, 2);
  for (std::size_t i = 0; i < d; ++i) CHECK(y2.data()[i] == doctest::Approx(y2.data()[d + i]));

  // Random 3x8 input, 2 heads, against the naive per-head loop oracle.
  Rng rng(5);
  const std::size_t n = 3, dd = 8;
  auto x = rand_tensor<double>(rng, {n, dd});
  o::MsaParams<double> pd{rand_tensor<double>(rng, {dd, dd}), rand_tensor<double>(rng, {dd}),
                          rand_tensor<double>(rng, {dd, dd}), rand_tensor<double>(rng, {dd}),
                          rand_tensor<double>(rng, {dd, dd}), rand_tensor<double>(rng, {dd}),
                          rand_tensor<double>(rng, {dd, dd}), rand_tensor<double>(rng, {dd})};
  auto got = o::multi_head_self_attention(x, pd, 2);
  auto want = epcl::testing::msa_oracle(x.data(), n, dd, pd.wq.data(), pd.bq.data(),
                                        pd.wk.data(), pd.bk.data(), pd.wv.data(), pd.bv.data(),
                                        pd.wo.data(), pd.bo.data(), 2);
  for (std::size_t i = 0; i < n * dd; ++i) CHECK(std::abs(got.data()[i] - want[i]) <= 1e-6);

  CHECK_THROWS_AS(o::multi_head_self_attention(x1, p, 3), ConfigError);
}

TEST_CASE("elementwise and reduction examples") {
  Rng rng(6);
  auto x = rand_tensor<float>(rng, {2, 3});
  auto same = o::dropout(x, 0.0, rng, true);
  CHECK(same.data() == x.data());

  auto ce = o::cross_entropy(TensorF::from_data({1, 2}, {10, -10}), {0});
  CHECK(ce.item() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK_THROWS_AS(o::cross_entropy(TensorF::from_data({1, 2}, {1, 2}), {2}), std::out_of_range);

  auto mp = o::maxpool_groups(TensorF::from_data({2, 2}, {1, 4, 3, 2}), 2);
  CHECK(mp.data()[0] == doctest::Approx(3));
  CHECK(mp.data()[1] == doctest::Approx(4));

  auto mean = o::mean_all(TensorF::from_data({2, 2}, {1, 2, 3, 6}));
  CHECK(mean.item() == doctest::Approx(3.0));

  auto cat = o::concat_rows<float>({TensorF::from_data({1, 2}, {1, 2}),
                                    TensorF::from_data({2, 2}, {3, 4, 5, 6})});
  CHECK(cat.shape() == std::vector<std::size_t>{3, 2});
  CHECK(cat.data() == std::vector<float>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("dropout scales survivors by 1/(1-p) and is identity in eval mode") {
  Rng rng(7);
  auto x = TensorF::full({4, 8}, 1.0f);
  auto y = o::dropout(x, 0.5, rng, true);
  for (float v : y.data()) CHECK((v == 0.0f || v == doctest::Approx(2.0f)));
  Rng rng2(7);
  auto e = o::dropout(x, 0.5, rng2, false);
  CHECK(e.data() == x.data());
  CHECK_THROWS_AS(o::dropout(x, 1.0, rng, true), std::invalid_argument);
}

TEST_CASE("backward: linear probe gradient, frozen tensors, scalar contract") {
  auto w = TensorF::from_data({1, 3}, {1, 2, 3}, true);
  auto x = TensorF::from_data({1, 3}, {4, 5, 6});
  auto loss = o::sum_all(o::mul(w, x));
  loss.backward();
  REQUIRE(w.has_grad());
  CHECK(w.grad() == std::vector<float>{4, 5, 6});
  CHECK_FALSE(x.has_grad());  // frozen input: grad buffer absent

  auto y = o::mul(w, x);
  CHECK_THROWS_AS(y.backward(), std::invalid_argument);  // non-scalar loss
}

TEST_CASE("inference mode builds no tape") {
  auto w = TensorF::from_data({1, 3}, {1, 2, 3}, true);
  auto x = TensorF::from_data({1, 3}, {4, 5, 6});
  TensorF y;
  {
    NoGradGuard ng;
    y = o::sum_all(o::mul(w, x));
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("forward passes are bitwise deterministic") {
  Rng rng(8);
  auto x = rand_tensor<float>(rng, {4, 8});
  auto g = TensorF::full({8}, 1.0f);
  auto b = TensorF::zeros({8});
  auto y1 = o::softmax_rows(o::layer_norm(x, g, b));
  auto y2 = o::softmax_rows(o::layer_norm(x, g, b));
  CHECK(y1.data() == y2.data());
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks, 10 seeded instances per op.

namespace {

constexpr double kTol = 1e-4;
constexpr int kInstances = 10;

template <typename BuildLoss>
void gradcheck_instances(const char* name, BuildLoss build) {
  for (int inst = 0; inst < kInstances; ++inst) {
    CAPTURE(name);
    CAPTURE(inst);
    Rng rng(100 + inst);
    auto [params, forward] = build(rng);
    std::vector<TensorD*> ptrs;
    for (auto& p : params) ptrs.push_back(p.get());
    auto r = check_gradients(ptrs, forward);
    CHECK(r.max_rel_err <= kTol);
  }
}

using ParamList = std::vector<std::shared_ptr<TensorD>>;

std::shared_ptr<TensorD> param(Rng& rng, std::vector<std::size_t> shape, bool nonzero = false) {
  auto t = nonzero ? rand_tensor_nonzero<double>(rng, shape, true)
                   : rand_tensor<double>(rng, shape, true);
  return std::make_shared<TensorD>(t);
}

}  // namespace

TEST_CASE("gradcheck: matmul family") {
  gradcheck_instances("matmul", [](Rng& rng) {
    auto a = param(rng, {3, 4});
    auto b = param(rng, {4, 2});
    auto probe = std::make_shared<Rng>(rng.next_u64());
    auto fwd = [a, b, probe] {
      Rng pr(42);
      return probe_loss(o::matmul(*a, *b), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a, b}, fwd);
  });
  gradcheck_instances("matmul_nt", [](Rng& rng) {
    auto a = param(rng, {3, 4});
    auto b = param(rng, {5, 4});
    auto fwd = [a, b] {
      Rng pr(43);
      return probe_loss(o::matmul_nt(*a, *b), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a, b}, fwd);
  });
  gradcheck_instances("transpose", [](Rng& rng) {
    auto a = param(rng, {3, 5});
    auto fwd = [a] {
      Rng pr(44);
      return probe_loss(o::transpose(*a), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a}, fwd);
  });
}

TEST_CASE("gradcheck: arithmetic and broadcasting") {
  gradcheck_instances("add", [](Rng& rng) {
    auto a = param(rng, {3, 4});
    auto b = param(rng, {3, 4});
    auto fwd = [a, b] {
      Rng pr(45);
      return probe_loss(o::add(*a, *b), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a, b}, fwd);
  });
  gradcheck_instances("sub", [](Rng& rng) {
    auto a = param(rng, {2, 5});
    auto b = param(rng, {2, 5});
    auto fwd = [a, b] {
      Rng pr(46);
      return probe_loss(o::sub(*a, *b), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a, b}, fwd);
  });
  gradcheck_instances("mul", [](Rng& rng) {
    auto a = param(rng, {4, 3});
    auto b = param(rng, {4, 3});
    auto fwd = [a, b] {
      Rng pr(47);
      return probe_loss(o::mul(*a, *b), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a, b}, fwd);
  });
  gradcheck_instances("add_rowvec", [](Rng& rng) {
    auto a = param(rng, {4, 6});
    auto b = param(rng, {6});
    auto fwd = [a, b] {
      Rng pr(48);
      return probe_loss(o::add_rowvec(*a, *b), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a, b}, fwd);
  });
  gradcheck_instances("scale", [](Rng& rng) {
    auto a = param(rng, {3, 3});
    auto fwd = [a] {
      Rng pr(49);
      return probe_loss(o::scale(*a, 1.7), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a}, fwd);
  });
}

TEST_CASE("gradcheck: shape ops") {
  gradcheck_instances("concat_rows", [](Rng& rng) {
    auto a = param(rng, {2, 4});
    auto b = param(rng, {3, 4});
    auto fwd = [a, b] {
      Rng pr(50);
      return probe_loss(o::concat_rows<double>({*a, *b}), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a, b}, fwd);
  });
  gradcheck_instances("concat_cols", [](Rng& rng) {
    auto a = param(rng, {3, 2});
    auto b = param(rng, {3, 5});
    auto fwd = [a, b] {
      Rng pr(51);
      return probe_loss(o::concat_cols<double>({*a, *b}), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a, b}, fwd);
  });
  gradcheck_instances("slice_rows", [](Rng& rng) {
    auto a = param(rng, {5, 3});
    auto fwd = [a] {
      Rng pr(52);
      return probe_loss(o::slice_rows(*a, 1, 4), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a}, fwd);
  });
  gradcheck_instances("slice_cols", [](Rng& rng) {
    auto a = param(rng, {4, 6});
    auto fwd = [a] {
      Rng pr(53);
      return probe_loss(o::slice_cols(*a, 2, 5), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a}, fwd);
  });
  gradcheck_instances("repeat_rows", [](Rng& rng) {
    auto a = param(rng, {3, 4});
    auto fwd = [a] {
      Rng pr(54);
      return probe_loss(o::repeat_rows(*a, 3), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a}, fwd);
  });
  gradcheck_instances("gather_rows", [](Rng& rng) {
    auto a = param(rng, {5, 3});
    auto fwd = [a] {
      Rng pr(55);
      return probe_loss(o::gather_rows(*a, {4, 0, 2, 2, 1}), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a}, fwd);
  });
}

TEST_CASE("gradcheck: nonlinearities and norms") {
  gradcheck_instances("relu", [](Rng& rng) {
    auto a = param(rng, {4, 5}, /*nonzero=*/true);
    auto fwd = [a] {
      Rng pr(56);
      return probe_loss(o::relu(*a), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a}, fwd);
  });
  gradcheck_instances("gelu", [](Rng& rng) {
    auto a = param(rng, {4, 5});
    auto fwd = [a] {
      Rng pr(57);
      return probe_loss(o::gelu(*a), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a}, fwd);
  });
  gradcheck_instances("maxpool_groups", [](Rng& rng) {
    auto a = param(rng, {8, 4});
    auto fwd = [a] {
      Rng pr(58);
      return probe_loss(o::maxpool_groups(*a, 4), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({a}, fwd);
  });
  gradcheck_instances("layer_norm", [](Rng& rng) {
    auto x = param(rng, {3, 6});
    auto g = param(rng, {6});
    auto b = param(rng, {6});
    auto fwd = [x, g, b] {
      Rng pr(59);
      return probe_loss(o::layer_norm(*x, *g, *b), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({x, g, b}, fwd);
  });
  gradcheck_instances("softmax_rows", [](Rng& rng) {
    auto x = param(rng, {3, 5});
    auto fwd = [x] {
      Rng pr(60);
      return probe_loss(o::softmax_rows(*x), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({x}, fwd);
  });
  gradcheck_instances("l2_normalize_rows", [](Rng& rng) {
    auto x = param(rng, {3, 5}, /*nonzero=*/true);
    auto fwd = [x] {
      Rng pr(61);
      return probe_loss(o::l2_normalize_rows(*x), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({x}, fwd);
  });
}

TEST_CASE("gradcheck: losses, dropout, interpolation") {
  gradcheck_instances("cross_entropy", [](Rng& rng) {
    auto x = param(rng, {4, 3});
    auto fwd = [x] { return o::cross_entropy(*x, {0, 2, 1, 2}); };
    return std::pair<ParamList, decltype(fwd)>({x}, fwd);
  });
  gradcheck_instances("mean_all", [](Rng& rng) {
    auto x = param(rng, {3, 4});
    auto fwd = [x] { return o::mean_all(*x); };
    return std::pair<ParamList, decltype(fwd)>({x}, fwd);
  });
  gradcheck_instances("dropout", [](Rng& rng) {
    auto x = param(rng, {4, 6});
    const std::uint64_t seed = rng.next_u64();
    auto fwd = [x, seed] {
      Rng dr(seed);  // re-seeded per call: identical mask on every evaluation
      Rng pr(62);
      return probe_loss(o::dropout(*x, 0.4, dr, true), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({x}, fwd);
  });
  gradcheck_instances("interpolate_rows", [](Rng& rng) {
    auto x = param(rng, {6, 4});
    std::vector<std::array<std::size_t, 3>> idx(5);
    std::vector<std::array<double, 3>> w(5);
    for (auto& a : idx)
      for (auto& v : a) v = rng.index(6);
    for (auto& a : w)
      for (auto& v : a) v = rng.uniform(0.05, 1.0);
    auto fwd = [x, idx, w] {
      Rng pr(63);
      return probe_loss(o::interpolate_rows(*x, idx, w), pr);
    };
    return std::pair<ParamList, decltype(fwd)>({x}, fwd);
  });
}

TEST_CASE("gradcheck: attention and a full pre-norm block") {
  gradcheck_instances("multi_head_self_attention", [](Rng& rng) {
    const std::size_t d = 8;
    auto x = param(rng, {3, d});
    ParamList ps = {x};
    for (int i = 0; i < 4; ++i) {
      ps.push_back(param(rng, {d, d}));
      ps.push_back(param(rng, {d}));
    }
    auto fwd = [ps, d] {
      o::MsaParams<double> mp{*ps[1], *ps[2], *ps[3], *ps[4],
                              *ps[5], *ps[6], *ps[7], *ps[8]};
      Rng pr(64);
      return probe_loss(o::multi_head_self_attention(*ps[0], mp, 2), pr);
    };
    return std::pair<ParamList, decltype(fwd)>(ps, fwd);
  });

  // x += MSA(LN(x)); x += MLP(LN(x)) with a 2x expansion, the exact block the
  // backbone stacks.
  gradcheck_instances("transformer_block", [](Rng& rng) {
    const std::size_t d = 8, hidden = 16;
    auto x = param(rng, {4, d});
    ParamList ps = {x};
    for (int i = 0; i < 4; ++i) {
      ps.push_back(param(rng, {d, d}));
      ps.push_back(param(rng, {d}));
    }
    ps.push_back(param(rng, {d}));  // ln1 gamma
    ps.push_back(param(rng, {d}));  // ln1 beta
    ps.push_back(param(rng, {d}));  // ln2 gamma
    ps.push_back(param(rng, {d}));  // ln2 beta
    ps.push_back(param(rng, {d, hidden}));
    ps.push_back(param(rng, {hidden}));
    ps.push_back(param(rng, {hidden, d}));
    ps.push_back(param(rng, {d}));
    auto fwd = [ps, d] {
      o::MsaParams<double> mp{*ps[1], *ps[2], *ps[3], *ps[4],
                              *ps[5], *ps[6], *ps[7], *ps[8]};
      auto h = o::add(*ps[0], o::multi_head_self_attention(
                                  o::layer_norm(*ps[0], *ps[9], *ps[10]), mp, 2));
      auto m = o::add_rowvec(
          o::matmul(o::gelu(o::add_rowvec(o::matmul(o::layer_norm(h, *ps[11], *ps[12]), *ps[13]),
                                          *ps[14])),
                    *ps[15]),
          *ps[16]);
      Rng pr(65);
      return probe_loss(o::add(h, m), pr);
    };
    return std::pair<ParamList, decltype(fwd)>(ps, fwd);
  });
}
