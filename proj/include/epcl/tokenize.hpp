#pragma once

#include <cstddef>
#include <vector>

#include "epcl/geometry.hpp"
#include "epcl/rng.hpp"
#include "epcl/tensor.hpp"
#include "epcl/weights.hpp"

// Token construction for both input branches. Point clouds go through
// FPS -> kNN grouping -> per-patch shared MLP with max-pooling, producing one
// token per patch; images are cut into P x P patches and linearly projected.
// Both branches emit the layout [CLS | task tokens | content tokens] with a
// same-shape additive positional field kept separate so rigid cloud motion
// provably touches only the positional half.

namespace epcl {

struct TokenSequence {
  TensorF tokens;      // (1 + G + M) x D, rows ordered [CLS | task | content]
  TensorF positional;  // same shape, added before the backbone consumes it
  std::size_t task_count = 0;
  std::size_t content_count = 0;

  TensorF combined() const;  // tokens + positional
};

struct PointTokenizerWeights {
  TensorF mlp1_w, mlp1_b;  // per-point stage, 3 -> 128
  TensorF mlp2_w, mlp2_b;  // per-point stage, 128 -> 256
  TensorF proj_w, proj_b;  // pooled-concat stage, 512 -> width
  TensorF pos_w1, pos_b1;  // center-coordinate MLP, 3 -> 128
  TensorF pos_w2, pos_b2;  // center-coordinate MLP, 128 -> width
  TensorF cls, cls_pos;    // 1 x width each
  TensorF task_w, task_b;  // width -> width enumeration lift; undefined when G=0
  TensorF task_pos;        // G x width; undefined when G=0

  std::size_t width() const { return cls.cols(); }
  std::size_t task_count() const { return task_pos.defined() ? task_pos.rows() : 0; }
};

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<float> pixels;  // row-major, channel-interleaved, values in [0,1]
};

struct ImageTokenizerWeights {
  TensorF proj_w, proj_b;  // (P*P*C) -> width
  TensorF cls;             // 1 x width
  TensorF pos;             // (1+N) x width learnable table
  std::size_t patch = 0;   // P: side length of a square pixel patch

  std::size_t width() const { return cls.cols(); }
};

// Parameter lifecycle: init draws fresh values, register_/bind_ move them in
// and out of a WeightContainer under fixed names (all trainable).
PointTokenizerWeights init_point_tokenizer(Rng& rng, std::size_t width,
                                           std::size_t task_tokens);
void register_point_tokenizer(WeightContainer& c, const PointTokenizerWeights& w);
PointTokenizerWeights bind_point_tokenizer(const WeightContainer& c);

ImageTokenizerWeights init_image_tokenizer(Rng& rng, std::size_t width, std::size_t patch,
                                           std::size_t image_h, std::size_t image_w,
                                           std::size_t channels);
void register_image_tokenizer(WeightContainer& c, const ImageTokenizerWeights& w);
ImageTokenizerWeights bind_image_tokenizer(const WeightContainer& c, std::size_t patch);

// One token per patch from center-relative coordinates, (m*k) x 3 with each
// patch's k rows contiguous. Exposed so pooling symmetry is testable directly.
TensorF point_patch_tokens(const PointTokenizerWeights& w, const TensorF& coords,
                           std::size_t k);

// Task rows: the fixed enumeration g / max(G-1, 1), broadcast across the
// width, mapped through the trainable fully-connected lift.
TensorF task_token_rows(const TensorF& fc_w, const TensorF& fc_b, std::size_t g);

// Full point branch: FPS to m centers, k-NN grouping, per-patch tokens,
// positional MLP over the raw centers. Geometry errors propagate. The sampled
// patch set is returned through *patches_out when the caller needs it.
TokenSequence tokenize_points(const PointTokenizerWeights& w, const PointCloud& cloud,
                              std::size_t m, std::size_t k,
                              PatchSet* patches_out = nullptr);

// Image branch: rejects dimensions not divisible by the patch size, projects
// each flattened patch, and pairs tokens with the learned positional table.
TokenSequence tokenize_image(const ImageTokenizerWeights& w, const Image& img);

}  // namespace epcl
