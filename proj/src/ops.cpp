#include "epcl/ops.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "epcl/errors.hpp"
#include "epcl/kernels.hpp"
#include "epcl/kernels_ref.hpp"

namespace epcl::ops {

namespace {

using detail::Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) r += "x";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

template <typename T>
NodePtr<T> make_node(std::vector<std::size_t> shape) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  std::size_t p = 1;
  for (std::size_t d : n->shape) p *= d;
  n->value.resize(p);
  return n;
}

template <typename... Ts>
bool tape_wanted(const Ts&... inputs) {
  return autograd_enabled() && (inputs.requires_grad() || ...);
}

// Kernel shims: float routes through the runtime-dispatched kernels, double
// always takes the scalar reference (precision path for gradient checks).
template <typename T>
void k_mm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool acc) {
  if constexpr (std::is_same_v<T, float>) kernels::matmul_nn(a, b, c, m, k, n, acc);
  else kernels::ref::matmul_nn(a, b, c, m, k, n, acc);
}
template <typename T>
void k_mm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool acc) {
  if constexpr (std::is_same_v<T, float>) kernels::matmul_nt(a, b, c, m, k, n, acc);
  else kernels::ref::matmul_nt(a, b, c, m, k, n, acc);
}
template <typename T>
void k_mm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool acc) {
  if constexpr (std::is_same_v<T, float>) kernels::matmul_tn(a, b, c, m, k, n, acc);
  else kernels::ref::matmul_tn(a, b, c, m, k, n, acc);
}
template <typename T>
void k_add(const T* a, const T* b, T* out, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::add(a, b, out, n);
  else kernels::ref::add(a, b, out, n);
}
template <typename T>
void k_sub(const T* a, const T* b, T* out, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::sub(a, b, out, n);
  else kernels::ref::sub(a, b, out, n);
}
template <typename T>
void k_mul(const T* a, const T* b, T* out, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::mul(a, b, out, n);
  else kernels::ref::mul(a, b, out, n);
}
template <typename T>
void k_scale(const T* x, T alpha, T* out, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::scale(x, alpha, out, n);
  else kernels::ref::scale(x, alpha, out, n);
}
template <typename T>
void k_axpy(T alpha, const T* x, T* y, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) kernels::axpy(alpha, x, y, n);
  else kernels::ref::axpy(alpha, x, y, n);
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

template <typename T>
void check_rank2(const Tensor<T>& a, const char* op) {
  if (a.rank() != 2)
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got " +
                                shape_str(a.shape()));
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  if (a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto out = make_node<T>({m, n});
  k_mm_nn(a.data().data(), b.data().data(), out->value.data(), m, k, n, false);
  if (tape_wanted(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    out->backward_fn = [m, k, n](Node<T>& nd) {
      auto& A = *nd.parents[0];
      auto& B = *nd.parents[1];
      if (A.requires_grad) {
        A.ensure_grad();  // dA += dC * B^T
        k_mm_nt(nd.grad.data(), B.value.data(), A.grad.data(), m, n, k, true);
      }
      if (B.requires_grad) {
        B.ensure_grad();  // dB += A^T * dC
        k_mm_tn(A.value.data(), nd.grad.data(), B.grad.data(), k, m, n, true);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  check_rank2(a, "matmul_nt");
  check_rank2(b, "matmul_nt");
  if (a.shape()[1] != b.shape()[1])
    throw std::invalid_argument("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()) + "^T");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  auto out = make_node<T>({m, n});
  k_mm_nt(a.data().data(), b.data().data(), out->value.data(), m, k, n, false);
  if (tape_wanted(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    out->backward_fn = [m, k, n](Node<T>& nd) {
      auto& A = *nd.parents[0];
      auto& B = *nd.parents[1];
      if (A.requires_grad) {
        A.ensure_grad();  // dA += dY * B
        k_mm_nn(nd.grad.data(), B.value.data(), A.grad.data(), m, n, k, true);
      }
      if (B.requires_grad) {
        B.ensure_grad();  // dB += dY^T * A
        k_mm_tn(nd.grad.data(), A.value.data(), B.grad.data(), n, m, k, true);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  auto out = make_node<T>(a.shape());
  k_add(a.data().data(), b.data().data(), out->value.data(), a.size());
  if (tape_wanted(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    out->backward_fn = [](Node<T>& nd) {
      for (int i = 0; i < 2; ++i) {
        auto& p = *nd.parents[i];
        if (!p.requires_grad) continue;
        p.ensure_grad();
        k_axpy(T(1), nd.grad.data(), p.grad.data(), nd.grad.size());
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& b) {
  check_rank2(a, "add_rowvec");
  if (b.rank() != 1 || b.size() != a.shape()[1])
    throw std::invalid_argument("add_rowvec: row vector " + shape_str(b.shape()) +
                                " does not match matrix " + shape_str(a.shape()));
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < r; ++i)
    k_add(a.data().data() + i * c, b.data().data(), out->value.data() + i * c, c);
  if (tape_wanted(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    out->backward_fn = [r, c](Node<T>& nd) {
      auto& A = *nd.parents[0];
      auto& B = *nd.parents[1];
      if (A.requires_grad) {
        A.ensure_grad();
        k_axpy(T(1), nd.grad.data(), A.grad.data(), nd.grad.size());
      }
      if (B.requires_grad) {
        B.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          k_axpy(T(1), nd.grad.data() + i * c, B.grad.data(), c);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  auto out = make_node<T>(a.shape());
  k_sub(a.data().data(), b.data().data(), out->value.data(), a.size());
  if (tape_wanted(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    out->backward_fn = [](Node<T>& nd) {
      auto& A = *nd.parents[0];
      auto& B = *nd.parents[1];
      if (A.requires_grad) {
        A.ensure_grad();
        k_axpy(T(1), nd.grad.data(), A.grad.data(), nd.grad.size());
      }
      if (B.requires_grad) {
        B.ensure_grad();
        k_axpy(T(-1), nd.grad.data(), B.grad.data(), nd.grad.size());
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  auto out = make_node<T>(a.shape());
  k_mul(a.data().data(), b.data().data(), out->value.data(), a.size());
  if (tape_wanted(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    out->backward_fn = [](Node<T>& nd) {
      auto& A = *nd.parents[0];
      auto& B = *nd.parents[1];
      if (A.requires_grad) {
        A.ensure_grad();
        for (std::size_t i = 0; i < nd.grad.size(); ++i)
          A.grad[i] += nd.grad[i] * B.value[i];
      }
      if (B.requires_grad) {
        B.ensure_grad();
        for (std::size_t i = 0; i < nd.grad.size(); ++i)
          B.grad[i] += nd.grad[i] * A.value[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = make_node<T>(a.shape());
  k_scale(a.data().data(), s, out->value.data(), a.size());
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [s](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      k_axpy(s, nd.grad.data(), A.grad.data(), nd.grad.size());
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  check_rank2(a, "transpose");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  auto out = make_node<T>({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out->value[j * r + i] = a.data()[i * c + j];
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [r, c](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) A.grad[i * c + j] += nd.grad[j * r + i];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t rows = 0;
  bool grad = false;
  for (const auto& p : parts) {
    check_rank2(p, "concat_rows");
    if (p.shape()[1] != c)
      throw std::invalid_argument("concat_rows: column mismatch " + shape_str(p.shape()));
    rows += p.shape()[0];
    grad = grad || p.requires_grad();
  }
  auto out = make_node<T>({rows, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out->value.begin() + off);
    off += p.size();
  }
  if (autograd_enabled() && grad) {
    out->requires_grad = true;
    for (const auto& p : parts) out->parents.push_back(p.node());
    out->backward_fn = [](Node<T>& nd) {
      std::size_t off = 0;
      for (auto& pp : nd.parents) {
        auto& p = *pp;
        if (p.requires_grad) {
          p.ensure_grad();
          k_axpy(T(1), nd.grad.data() + off, p.grad.data(), p.value.size());
        }
        off += p.value.size();
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t cols = 0;
  bool grad = false;
  for (const auto& p : parts) {
    check_rank2(p, "concat_cols");
    if (p.shape()[0] != r)
      throw std::invalid_argument("concat_cols: row mismatch " + shape_str(p.shape()));
    cols += p.shape()[1];
    grad = grad || p.requires_grad();
  }
  auto out = make_node<T>({r, cols});
  std::size_t coff = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.shape()[1];
    for (std::size_t i = 0; i < r; ++i)
      std::copy(p.data().begin() + i * pc, p.data().begin() + (i + 1) * pc,
                out->value.begin() + i * cols + coff);
    coff += pc;
  }
  if (autograd_enabled() && grad) {
    out->requires_grad = true;
    for (const auto& p : parts) out->parents.push_back(p.node());
    out->backward_fn = [r, cols](Node<T>& nd) {
      std::size_t coff = 0;
      for (auto& pp : nd.parents) {
        auto& p = *pp;
        const std::size_t pc = p.shape[1];
        if (p.requires_grad) {
          p.ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            k_axpy(T(1), nd.grad.data() + i * cols + coff, p.grad.data() + i * pc, pc);
        }
        coff += pc;
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t r0, std::size_t r1) {
  check_rank2(a, "slice_rows");
  if (r0 > r1 || r1 > a.shape()[0])
    throw std::invalid_argument("slice_rows: range [" + std::to_string(r0) + ", " +
                                std::to_string(r1) + ") out of " + shape_str(a.shape()));
  const std::size_t c = a.shape()[1];
  auto out = make_node<T>({r1 - r0, c});
  std::copy(a.data().begin() + r0 * c, a.data().begin() + r1 * c, out->value.begin());
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [r0, c](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      k_axpy(T(1), nd.grad.data(), A.grad.data() + r0 * c, nd.grad.size());
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t c0, std::size_t c1) {
  check_rank2(a, "slice_cols");
  if (c0 > c1 || c1 > a.shape()[1])
    throw std::invalid_argument("slice_cols: range [" + std::to_string(c0) + ", " +
                                std::to_string(c1) + ") out of " + shape_str(a.shape()));
  const std::size_t r = a.shape()[0], c = a.shape()[1], w = c1 - c0;
  auto out = make_node<T>({r, w});
  for (std::size_t i = 0; i < r; ++i)
    std::copy(a.data().begin() + i * c + c0, a.data().begin() + i * c + c1,
              out->value.begin() + i * w);
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [r, c, c0, w](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        k_axpy(T(1), nd.grad.data() + i * w, A.grad.data() + i * c + c0, w);
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& a, std::size_t times) {
  check_rank2(a, "repeat_rows");
  if (times == 0) throw std::invalid_argument("repeat_rows: times must be positive");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  auto out = make_node<T>({r * times, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t t = 0; t < times; ++t)
      std::copy(a.data().begin() + i * c, a.data().begin() + (i + 1) * c,
                out->value.begin() + (i * times + t) * c);
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [r, c, times](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t t = 0; t < times; ++t)
          k_axpy(T(1), nd.grad.data() + (i * times + t) * c, A.grad.data() + i * c, c);
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& idx) {
  check_rank2(a, "gather_rows");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  for (std::size_t q = 0; q < idx.size(); ++q)
    if (idx[q] >= r)
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[q]) + " >= " +
                              std::to_string(r) + " at position " + std::to_string(q));
  auto out = make_node<T>({idx.size(), c});
  for (std::size_t q = 0; q < idx.size(); ++q)
    std::copy(a.data().begin() + idx[q] * c, a.data().begin() + (idx[q] + 1) * c,
              out->value.begin() + q * c);
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [idx, c](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t q = 0; q < idx.size(); ++q)
        k_axpy(T(1), nd.grad.data() + q * c, A.grad.data() + idx[q] * c, c);
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> maxpool_groups(const Tensor<T>& a, std::size_t group) {
  check_rank2(a, "maxpool_groups");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  if (group == 0 || r % group != 0)
    throw std::invalid_argument("maxpool_groups: group size " + std::to_string(group) +
                                " does not divide row count " + std::to_string(r));
  const std::size_t g = r / group;
  auto out = make_node<T>({g, c});
  std::vector<std::uint32_t> arg(g * c);  // winning source row per output cell
  for (std::size_t gi = 0; gi < g; ++gi) {
    const std::size_t base = gi * group;
    for (std::size_t j = 0; j < c; ++j) {
      T best = a.data()[base * c + j];
      std::uint32_t bi = std::uint32_t(base);
      for (std::size_t t = 1; t < group; ++t) {
        const T v = a.data()[(base + t) * c + j];
        if (v > best) {  // strict: first max wins on ties
          best = v;
          bi = std::uint32_t(base + t);
        }
      }
      out->value[gi * c + j] = best;
      arg[gi * c + j] = bi;
    }
  }
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [arg = std::move(arg), c](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < nd.grad.size(); ++i) {
        const std::size_t j = i % c;
        A.grad[std::size_t(arg[i]) * c + j] += nd.grad[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out->value[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < nd.grad.size(); ++i)
        if (A.value[i] > T(0)) A.grad[i] += nd.grad[i];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(0.7071067811865476);
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T x = a.data()[i];
    out->value[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
  }
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      constexpr T inv_sqrt2pi = T(0.3989422804014327);
      for (std::size_t i = 0; i < nd.grad.size(); ++i) {
        const T x = A.value[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
        A.grad[i] += nd.grad[i] * (cdf + x * pdf);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  check_rank2(x, "layer_norm");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (gamma.rank() != 1 || gamma.size() != c || beta.rank() != 1 || beta.size() != c)
    throw std::invalid_argument("layer_norm: feature width " + std::to_string(c) +
                                " vs gamma " + shape_str(gamma.shape()) + ", beta " +
                                shape_str(beta.shape()));
  if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be positive");
  auto out = make_node<T>(x.shape());
  std::vector<T> xhat(r * c);
  std::vector<T> rstd(r);
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = x.data().data() + i * c;
    T mu = T(0);
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= T(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      const T d = row[j] - mu;
      var += d * d;
    }
    var /= T(c);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[i] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const T xh = (row[j] - mu) * rs;
      xhat[i * c + j] = xh;
      out->value[i * c + j] = gamma.data()[j] * xh + beta.data()[j];
    }
  }
  if (tape_wanted(x, gamma, beta)) {
    out->requires_grad = true;
    out->parents = {x.node(), gamma.node(), beta.node()};
    out->backward_fn = [r, c, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& nd) {
      auto& X = *nd.parents[0];
      auto& G = *nd.parents[1];
      auto& B = *nd.parents[2];
      if (G.requires_grad) G.ensure_grad();
      if (B.requires_grad) B.ensure_grad();
      if (X.requires_grad) X.ensure_grad();
      std::vector<T> dxhat(c);
      for (std::size_t i = 0; i < r; ++i) {
        const T* dy = nd.grad.data() + i * c;
        const T* xh = xhat.data() + i * c;
        if (G.requires_grad)
          for (std::size_t j = 0; j < c; ++j) G.grad[j] += dy[j] * xh[j];
        if (B.requires_grad)
          for (std::size_t j = 0; j < c; ++j) B.grad[j] += dy[j];
        if (X.requires_grad) {
          T m1 = T(0), m2 = T(0);
          for (std::size_t j = 0; j < c; ++j) {
            dxhat[j] = dy[j] * G.value[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xh[j];
          }
          m1 /= T(c);
          m2 /= T(c);
          for (std::size_t j = 0; j < c; ++j)
            X.grad[i * c + j] += rstd[i] * (dxhat[j] - m1 - xh[j] * m2);
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  check_rank2(x, "softmax_rows");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  auto out = make_node<T>(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = x.data().data() + i * c;
    T* y = out->value.data() + i * c;
    T mx = row[0];
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > mx) mx = row[j];
    T sum = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(row[j] - mx);
      sum += y[j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < c; ++j) y[j] *= inv;
  }
  if (tape_wanted(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    out->backward_fn = [r, c](Node<T>& nd) {
      auto& X = *nd.parents[0];
      if (!X.requires_grad) return;
      X.ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        const T* y = nd.value.data() + i * c;
        const T* dy = nd.grad.data() + i * c;
        T dot = T(0);
        for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) X.grad[i * c + j] += y[j] * (dy[j] - dot);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;  // identity, consumes no randomness
  const T keep_scale = T(1.0 / (1.0 - p));
  auto out = make_node<T>(x.shape());
  std::vector<T> mask(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() >= p ? keep_scale : T(0);
    out->value[i] = x.data()[i] * mask[i];
  }
  if (tape_wanted(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    out->backward_fn = [mask = std::move(mask)](Node<T>& nd) {
      auto& X = *nd.parents[0];
      if (!X.requires_grad) return;
      X.ensure_grad();
      for (std::size_t i = 0; i < nd.grad.size(); ++i) X.grad[i] += nd.grad[i] * mask[i];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
  check_rank2(logits, "cross_entropy");
  const std::size_t b = logits.shape()[0], c = logits.shape()[1];
  if (labels.size() != b)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(b) + " rows");
  for (std::size_t i = 0; i < b; ++i)
    if (labels[i] >= c)
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) +
                              " >= class count " + std::to_string(c) + " at row " +
                              std::to_string(i));
  auto out = make_node<T>({1});
  std::vector<T> probs(b * c);
  T loss = T(0);
  for (std::size_t i = 0; i < b; ++i) {
    const T* row = logits.data().data() + i * c;
    T mx = row[0];
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > mx) mx = row[j];
    T sum = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(row[j] - mx);
      sum += probs[i * c + j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] *= inv;
    loss += mx + std::log(sum) - row[labels[i]];
  }
  out->value[0] = loss / T(b);
  if (tape_wanted(logits)) {
    out->requires_grad = true;
    out->parents = {logits.node()};
    out->backward_fn = [b, c, labels, probs = std::move(probs)](Node<T>& nd) {
      auto& L = *nd.parents[0];
      if (!L.requires_grad) return;
      L.ensure_grad();
      const T g = nd.grad[0] / T(b);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j)
          L.grad[i * c + j] += g * (probs[i * c + j] - (j == labels[i] ? T(1) : T(0)));
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  auto out = make_node<T>({1});
  T s = T(0);
  for (T v : a.data()) s += v;
  out->value[0] = s / T(a.size());
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      const T g = nd.grad[0] / T(A.value.size());
      for (std::size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += g;
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto out = make_node<T>({1});
  T s = T(0);
  for (T v : a.data()) s += v;
  out->value[0] = s;
  if (tape_wanted(a)) {
    out->requires_grad = true;
    out->parents = {a.node()};
    out->backward_fn = [](Node<T>& nd) {
      auto& A = *nd.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      const T g = nd.grad[0];
      for (std::size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += g;
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x) {
  check_rank2(x, "l2_normalize_rows");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  constexpr T eps = T(1e-12);  // keeps the zero row finite
  auto out = make_node<T>(x.shape());
  std::vector<T> inv_norm(r);
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = x.data().data() + i * c;
    T ss = T(0);
    for (std::size_t j = 0; j < c; ++j) ss += row[j] * row[j];
    const T inv = T(1) / std::sqrt(ss + eps);
    inv_norm[i] = inv;
    for (std::size_t j = 0; j < c; ++j) out->value[i * c + j] = row[j] * inv;
  }
  if (tape_wanted(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    out->backward_fn = [r, c, inv_norm = std::move(inv_norm)](Node<T>& nd) {
      auto& X = *nd.parents[0];
      if (!X.requires_grad) return;
      X.ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        const T* y = nd.value.data() + i * c;
        const T* dy = nd.grad.data() + i * c;
        T dot = T(0);
        for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
        for (std::size_t j = 0; j < c; ++j)
          X.grad[i * c + j] += inv_norm[i] * (dy[j] - y[j] * dot);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> interpolate_rows(const Tensor<T>& x, const std::vector<std::array<std::size_t, 3>>& idx,
                           const std::vector<std::array<T, 3>>& w) {
  check_rank2(x, "interpolate_rows");
  if (idx.size() != w.size())
    throw std::invalid_argument("interpolate_rows: index and weight counts differ");
  const std::size_t s = x.shape()[0], c = x.shape()[1];
  for (std::size_t q = 0; q < idx.size(); ++q)
    for (std::size_t j = 0; j < 3; ++j)
      if (idx[q][j] >= s)
        throw std::out_of_range("interpolate_rows: source index " + std::to_string(idx[q][j]) +
                                " >= " + std::to_string(s));
  auto out = make_node<T>({idx.size(), c});
  for (std::size_t q = 0; q < idx.size(); ++q) {
    T* y = out->value.data() + q * c;
    for (std::size_t jj = 0; jj < c; ++jj) y[jj] = T(0);
    for (std::size_t j = 0; j < 3; ++j)
      k_axpy(w[q][j], x.data().data() + idx[q][j] * c, y, c);
  }
  if (tape_wanted(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    out->backward_fn = [idx, w, c](Node<T>& nd) {
      auto& X = *nd.parents[0];
      if (!X.requires_grad) return;
      X.ensure_grad();
      for (std::size_t q = 0; q < idx.size(); ++q)
        for (std::size_t j = 0; j < 3; ++j)
          k_axpy(w[q][j], nd.grad.data() + q * c, X.grad.data() + idx[q][j] * c, c);
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const MsaParams<T>& p, std::size_t heads) {
  check_rank2(x, "multi_head_self_attention");
  const std::size_t d = x.shape()[1];
  if (heads == 0 || d % heads != 0)
    throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  auto q = add_rowvec(matmul(x, p.wq), p.bq);
  auto k = add_rowvec(matmul(x, p.wk), p.bk);
  auto v = add_rowvec(matmul(x, p.wv), p.bv);
  const std::size_t dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  std::vector<Tensor<T>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = slice_cols(q, h * dh, (h + 1) * dh);
    auto kh = slice_cols(k, h * dh, (h + 1) * dh);
    auto vh = slice_cols(v, h * dh, (h + 1) * dh);
    auto attn = softmax_rows(scale(matmul_nt(qh, kh), sc));
    outs.push_back(matmul(attn, vh));
  }
  auto merged = heads == 1 ? outs[0] : concat_cols(outs);
  return add_rowvec(matmul(merged, p.wo), p.bo);
}

template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& a) {
  check_rank2(a, "argmax_rows");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<std::size_t> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = a.data().data() + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = best;
  }
  return out;
}

#define EPCL_OPS_INSTANTIATE(T)                                                            \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> add_rowvec<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                       \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                      \
  template Tensor<T> concat_rows<T>(const std::vector<Tensor<T>>&);                       \
  template Tensor<T> concat_cols<T>(const std::vector<Tensor<T>>&);                       \
  template Tensor<T> slice_rows<T>(const Tensor<T>&, std::size_t, std::size_t);           \
  template Tensor<T> slice_cols<T>(const Tensor<T>&, std::size_t, std::size_t);           \
  template Tensor<T> repeat_rows<T>(const Tensor<T>&, std::size_t);                       \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, const std::vector<std::size_t>&);   \
  template Tensor<T> maxpool_groups<T>(const Tensor<T>&, std::size_t);                    \
  template Tensor<T> relu<T>(const Tensor<T>&);                                           \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                           \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                   \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, Rng&, bool);                    \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<std::size_t>&); \
  template Tensor<T> mean_all<T>(const Tensor<T>&);                                       \
  template Tensor<T> sum_all<T>(const Tensor<T>&);                                        \
  template Tensor<T> l2_normalize_rows<T>(const Tensor<T>&);                              \
  template Tensor<T> interpolate_rows<T>(const Tensor<T>&,                                \
      const std::vector<std::array<std::size_t, 3>>&, const std::vector<std::array<T, 3>>&); \
  template Tensor<T> multi_head_self_attention<T>(const Tensor<T>&, const MsaParams<T>&,  \
                                                  std::size_t);                           \
  template std::vector<std::size_t> argmax_rows<T>(const Tensor<T>&);

EPCL_OPS_INSTANTIATE(float)
EPCL_OPS_INSTANTIATE(double)
#undef EPCL_OPS_INSTANTIATE

}  // namespace epcl::ops
