#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "epcl/rng.hpp"
#include "epcl/tensor.hpp"

// Differentiable operations over Tensor<T>. Every op computes its value
// eagerly and, when autograd is on and an input requires grad, records a
// backward closure on the result node. Gradients accumulate in a fixed
// deterministic order. Matrices are rank-2 row-major; vectors rank-1.

namespace epcl::ops {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);  // [m,k]x[k,n]

// a[m,k] times b[n,k] transposed; the attention-scores layout.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);  // same shape

// matrix[r,c] + row vector[c], broadcast down rows.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);  // elementwise

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t r0, std::size_t r1);

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t c0, std::size_t c1);

// Row m of the input appears `times` consecutive times in the output.
template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& a, std::size_t times);

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& idx);

// Column-wise max over consecutive row groups of the given size; the backward
// pass routes gradient to the first maximal element of each group.
template <typename T>
Tensor<T> maxpool_groups(const Tensor<T>& a, std::size_t group);

template <typename T>
Tensor<T> relu(const Tensor<T>& a);

template <typename T>
Tensor<T> gelu(const Tensor<T>& a);  // exact erf form

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

// Inverted dropout: scales kept values by 1/(1-p) in training mode, identity
// in evaluation mode, so the inference path needs no rescaling.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training);

// Mean over the batch of per-row negative log-likelihood under a numerically
// stabilized log-softmax.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels);

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a);

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a);

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x);

// out[q] = sum_j w[q][j] * x[idx[q][j]]; the three-nearest upsampling step.
template <typename T>
Tensor<T> interpolate_rows(const Tensor<T>& x, const std::vector<std::array<std::size_t, 3>>& idx,
                           const std::vector<std::array<T, 3>>& w);

template <typename T>
struct MsaParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

// Scaled dot-product attention per head (scale 1/sqrt(D/heads)), heads
// concatenated, output-projected. Composed from the primitives above so the
// gradient comes from the tape.
template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const MsaParams<T>& p, std::size_t heads);

// Index of the max element per row (first max wins). Not differentiable.
template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& a);

#define EPCL_OPS_EXTERN(T)                                                                 \
  extern template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                \
  extern template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);             \
  extern template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                   \
  extern template Tensor<T> add_rowvec<T>(const Tensor<T>&, const Tensor<T>&);            \
  extern template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                   \
  extern template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                   \
  extern template Tensor<T> scale<T>(const Tensor<T>&, T);                                \
  extern template Tensor<T> transpose<T>(const Tensor<T>&);                               \
  extern template Tensor<T> concat_rows<T>(const std::vector<Tensor<T>>&);                \
  extern template Tensor<T> concat_cols<T>(const std::vector<Tensor<T>>&);                \
  extern template Tensor<T> slice_rows<T>(const Tensor<T>&, std::size_t, std::size_t);    \
  extern template Tensor<T> slice_cols<T>(const Tensor<T>&, std::size_t, std::size_t);    \
  extern template Tensor<T> repeat_rows<T>(const Tensor<T>&, std::size_t);                \
  extern template Tensor<T> gather_rows<T>(const Tensor<T>&, const std::vector<std::size_t>&); \
  extern template Tensor<T> maxpool_groups<T>(const Tensor<T>&, std::size_t);             \
  extern template Tensor<T> relu<T>(const Tensor<T>&);                                    \
  extern template Tensor<T> gelu<T>(const Tensor<T>&);                                    \
  extern template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  extern template Tensor<T> softmax_rows<T>(const Tensor<T>&);                            \
  extern template Tensor<T> dropout<T>(const Tensor<T>&, double, Rng&, bool);             \
  extern template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<std::size_t>&); \
  extern template Tensor<T> mean_all<T>(const Tensor<T>&);                                \
  extern template Tensor<T> sum_all<T>(const Tensor<T>&);                                 \
  extern template Tensor<T> l2_normalize_rows<T>(const Tensor<T>&);                       \
  extern template Tensor<T> interpolate_rows<T>(const Tensor<T>&,                         \
      const std::vector<std::array<std::size_t, 3>>&, const std::vector<std::array<T, 3>>&); \
  extern template Tensor<T> multi_head_self_attention<T>(const Tensor<T>&, const MsaParams<T>&, \
                                                         std::size_t);                    \
  extern template std::vector<std::size_t> argmax_rows<T>(const Tensor<T>&);

EPCL_OPS_EXTERN(float)
EPCL_OPS_EXTERN(double)
#undef EPCL_OPS_EXTERN

}  // namespace epcl::ops
