#include "epcl/tokenize.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "epcl/ops.hpp"
#include "epcl/param_init.hpp"

namespace epcl {

namespace o = ops;

namespace {

// Per-point stage widths; the pooled-global concat doubles the second stage.
constexpr std::size_t kHidden1 = 128;
constexpr std::size_t kHidden2 = 256;

}  // namespace

TensorF TokenSequence::combined() const { return o::add(tokens, positional); }

PointTokenizerWeights init_point_tokenizer(Rng& rng, std::size_t width,
                                           std::size_t task_tokens) {
  PointTokenizerWeights w;
  w.mlp1_w = normal_matrix(rng, 3, kHidden1, relu_std(3));
  w.mlp1_b = TensorF::zeros({kHidden1});
  w.mlp2_w = normal_matrix(rng, kHidden1, kHidden2, linear_std(kHidden1));
  w.mlp2_b = TensorF::zeros({kHidden2});
  w.proj_w = normal_matrix(rng, 2 * kHidden2, width, linear_std(2 * kHidden2));
  w.proj_b = TensorF::zeros({width});
  w.pos_w1 = normal_matrix(rng, 3, kHidden1, relu_std(3));
  w.pos_b1 = TensorF::zeros({kHidden1});
  w.pos_w2 = normal_matrix(rng, kHidden1, width, linear_std(kHidden1));
  w.pos_b2 = TensorF::zeros({width});
  w.cls = normal_matrix(rng, 1, width, 0.02);
  w.cls_pos = normal_matrix(rng, 1, width, 0.02);
  if (task_tokens > 0) {
    w.task_w = normal_matrix(rng, width, width, linear_std(width));
    w.task_b = TensorF::zeros({width});
    w.task_pos = normal_matrix(rng, task_tokens, width, 0.02);
  }
  return w;
}

void register_point_tokenizer(WeightContainer& c, const PointTokenizerWeights& w) {
  c.add("tokenizer.point.mlp1.w", w.mlp1_w);
  c.add("tokenizer.point.mlp1.b", w.mlp1_b);
  c.add("tokenizer.point.mlp2.w", w.mlp2_w);
  c.add("tokenizer.point.mlp2.b", w.mlp2_b);
  c.add("tokenizer.point.proj.w", w.proj_w);
  c.add("tokenizer.point.proj.b", w.proj_b);
  c.add("tokenizer.pos.w1", w.pos_w1);
  c.add("tokenizer.pos.b1", w.pos_b1);
  c.add("tokenizer.pos.w2", w.pos_w2);
  c.add("tokenizer.pos.b2", w.pos_b2);
  c.add("tokenizer.cls", w.cls);
  c.add("tokenizer.cls_pos", w.cls_pos);
  if (w.task_pos.defined()) {
    c.add("task_token.fc.w", w.task_w);
    c.add("task_token.fc.b", w.task_b);
    c.add("task_token.pos", w.task_pos);
  }
}

PointTokenizerWeights bind_point_tokenizer(const WeightContainer& c) {
  PointTokenizerWeights w;
  w.mlp1_w = c.get("tokenizer.point.mlp1.w");
  w.mlp1_b = c.get("tokenizer.point.mlp1.b");
  w.mlp2_w = c.get("tokenizer.point.mlp2.w");
  w.mlp2_b = c.get("tokenizer.point.mlp2.b");
  w.proj_w = c.get("tokenizer.point.proj.w");
  w.proj_b = c.get("tokenizer.point.proj.b");
  w.pos_w1 = c.get("tokenizer.pos.w1");
  w.pos_b1 = c.get("tokenizer.pos.b1");
  w.pos_w2 = c.get("tokenizer.pos.w2");
  w.pos_b2 = c.get("tokenizer.pos.b2");
  w.cls = c.get("tokenizer.cls");
  w.cls_pos = c.get("tokenizer.cls_pos");
  if (c.contains("task_token.pos")) {
    w.task_w = c.get("task_token.fc.w");
    w.task_b = c.get("task_token.fc.b");
    w.task_pos = c.get("task_token.pos");
  }
  return w;
}

ImageTokenizerWeights init_image_tokenizer(Rng& rng, std::size_t width, std::size_t patch,
                                           std::size_t image_h, std::size_t image_w,
                                           std::size_t channels) {
  if (patch == 0 || image_h % patch != 0 || image_w % patch != 0)
    throw std::invalid_argument("image " + std::to_string(image_h) + "x" +
                                std::to_string(image_w) + " not divisible by patch size " +
                                std::to_string(patch));
  std::size_t flat = patch * patch * channels;
  std::size_t n = (image_h / patch) * (image_w / patch);
  ImageTokenizerWeights w;
  w.proj_w = normal_matrix(rng, flat, width, linear_std(flat));
  w.proj_b = TensorF::zeros({width});
  w.cls = normal_matrix(rng, 1, width, 0.02);
  w.pos = normal_matrix(rng, 1 + n, width, 0.02);
  w.patch = patch;
  return w;
}

void register_image_tokenizer(WeightContainer& c, const ImageTokenizerWeights& w) {
  c.add("image.proj.w", w.proj_w);
  c.add("image.proj.b", w.proj_b);
  c.add("image.cls", w.cls);
  c.add("image.pos", w.pos);
}

ImageTokenizerWeights bind_image_tokenizer(const WeightContainer& c, std::size_t patch) {
  ImageTokenizerWeights w;
  w.proj_w = c.get("image.proj.w");
  w.proj_b = c.get("image.proj.b");
  w.cls = c.get("image.cls");
  w.pos = c.get("image.pos");
  w.patch = patch;
  return w;
}

TensorF point_patch_tokens(const PointTokenizerWeights& w, const TensorF& coords,
                           std::size_t k) {
  if (coords.rank() != 2 || coords.cols() != 3)
    throw std::invalid_argument("patch coordinates must be rank-2 with 3 columns");
  if (k == 0 || coords.rows() % k != 0)
    throw std::invalid_argument("coordinate rows must split into groups of k");

  TensorF h1 = o::relu(o::add_rowvec(o::matmul(coords, w.mlp1_w), w.mlp1_b));
  TensorF h2 = o::add_rowvec(o::matmul(h1, w.mlp2_w), w.mlp2_b);
  TensorF pooled = o::maxpool_groups(h2, k);
  TensorF widened = o::concat_cols<float>({h2, o::repeat_rows(pooled, k)});
  TensorF projected = o::add_rowvec(o::matmul(widened, w.proj_w), w.proj_b);
  return o::maxpool_groups(projected, k);
}

TensorF task_token_rows(const TensorF& fc_w, const TensorF& fc_b, std::size_t g) {
  if (g == 0) return TensorF();
  std::size_t d = fc_w.rows();
  float denom = static_cast<float>(g > 1 ? g - 1 : 1);
  std::vector<float> base(g * d);
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < d; ++j) base[i * d + j] = static_cast<float>(i) / denom;
  TensorF enumeration = TensorF::from_data({g, d}, base);
  return o::add_rowvec(o::matmul(enumeration, fc_w), fc_b);
}

TokenSequence tokenize_points(const PointTokenizerWeights& w, const PointCloud& cloud,
                              std::size_t m, std::size_t k, PatchSet* patches_out) {
  std::vector<std::size_t> picked = farthest_point_sample(cloud, m);
  std::vector<float> centers(m * 3);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < 3; ++c) centers[i * 3 + c] = cloud.xyz[picked[i] * 3 + c];

  PatchSet ps = knn_group(cloud, centers, m, k);
  std::vector<float> coords(m * k * 3);
  std::vector<float> patch(k * 3);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t src = ps.member_indices[i * k + j];
      for (std::size_t c = 0; c < 3; ++c) patch[j * 3 + c] = cloud.xyz[src * 3 + c];
    }
    std::vector<float> centered = normalize_patch(patch, k, &centers[i * 3]);
    std::copy(centered.begin(), centered.end(), coords.begin() + i * k * 3);
  }

  TensorF content = point_patch_tokens(w, TensorF::from_data({m * k, 3}, coords), k);
  TensorF center_mat = TensorF::from_data({m, 3}, centers);
  TensorF pos_h = o::relu(o::add_rowvec(o::matmul(center_mat, w.pos_w1), w.pos_b1));
  TensorF content_pos = o::add_rowvec(o::matmul(pos_h, w.pos_w2), w.pos_b2);

  TokenSequence seq;
  seq.task_count = w.task_count();
  seq.content_count = m;
  if (seq.task_count > 0) {
    TensorF task = task_token_rows(w.task_w, w.task_b, seq.task_count);
    seq.tokens = o::concat_rows<float>({w.cls, task, content});
    seq.positional = o::concat_rows<float>({w.cls_pos, w.task_pos, content_pos});
  } else {
    seq.tokens = o::concat_rows<float>({w.cls, content});
    seq.positional = o::concat_rows<float>({w.cls_pos, content_pos});
  }
  if (patches_out) *patches_out = std::move(ps);
  return seq;
}

TokenSequence tokenize_image(const ImageTokenizerWeights& w, const Image& img) {
  std::size_t p = w.patch;
  if (p == 0 || img.height % p != 0 || img.width % p != 0)
    throw std::invalid_argument("image " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) +
                                " not divisible by patch size " + std::to_string(p));
  if (img.pixels.size() != img.height * img.width * img.channels)
    throw std::invalid_argument("image pixel buffer does not match its dimensions");
  std::size_t flat = p * p * img.channels;
  if (w.proj_w.rows() != flat)
    throw std::invalid_argument("image projection expects " +
                                std::to_string(w.proj_w.rows()) +
                                " inputs per patch, got " + std::to_string(flat));

  std::size_t py_count = img.height / p;
  std::size_t px_count = img.width / p;
  std::size_t n = py_count * px_count;
  if (w.pos.rows() != 1 + n)
    throw std::invalid_argument("positional table has " + std::to_string(w.pos.rows()) +
                                " rows but the image yields " + std::to_string(1 + n) +
                                " tokens");

  std::vector<float> flattened(n * flat);
  for (std::size_t py = 0; py < py_count; ++py)
    for (std::size_t px = 0; px < px_count; ++px) {
      std::size_t row = py * px_count + px;
      std::size_t out = row * flat;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t c = 0; c < img.channels; ++c)
            flattened[out++] =
                img.pixels[((py * p + y) * img.width + (px * p + x)) * img.channels + c];
    }

  TensorF patches = TensorF::from_data({n, flat}, flattened);
  TensorF content = o::add_rowvec(o::matmul(patches, w.proj_w), w.proj_b);

  TokenSequence seq;
  seq.task_count = 0;
  seq.content_count = n;
  seq.tokens = o::concat_rows<float>({w.cls, content});
  seq.positional = w.pos;
  return seq;
}

}  // namespace epcl
