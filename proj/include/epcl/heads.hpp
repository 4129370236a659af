#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "epcl/backbone.hpp"
#include "epcl/geometry.hpp"
#include "epcl/rng.hpp"
#include "epcl/tensor.hpp"
#include "epcl/weights.hpp"

// Task heads. Classification reads the CLS feature (sequence row 0 of the
// backbone's normalized output) through a 3-layer MLP, optionally paired with
// a contrastive branch that projects the same feature against a bank of
// per-class text vectors. Segmentation runs a three-stage down/up cascade with
// the frozen backbone at the coarsest scale and skip concatenation on the way
// back up to one logit row per input point.

namespace epcl {

struct ClassificationHeadWeights {
  TensorF w1, b1;          // width -> 256
  TensorF w2, b2;          // 256 -> 256
  TensorF w3, b3;          // 256 -> C
  TensorF proj_w, proj_b;  // width -> D_text; undefined without a text branch
  float dropout = 0.2f;    // applied after each of the first two layers

  std::size_t classes() const { return w3.cols(); }
};

ClassificationHeadWeights init_classification_head(Rng& rng, std::size_t width,
                                                   std::size_t classes,
                                                   std::size_t text_width);
void register_classification_head(WeightContainer& c, const ClassificationHeadWeights& w);
ClassificationHeadWeights bind_classification_head(const WeightContainer& c);

// Logits for a batch of CLS features (B x width) -> (B x C).
TensorF head_logits(const ClassificationHeadWeights& w, const TensorF& cls_features,
                    Rng& rng, bool training);

// Contrastive projections for the same batch, (B x D_text), unnormalized.
TensorF head_projections(const ClassificationHeadWeights& w, const TensorF& cls_features);

struct TextFeatureBank {
  std::vector<std::string> labels;  // one name per class, row-aligned
  TensorF features;                 // C x D_text, rows unit-normalized
  std::size_t classes() const { return labels.size(); }
};

// Plain-text format: header `EPCL-TEXTBANK v1 C D_text`, then C lines of
// `label_name` followed by D_text floats. Rows must be unit-norm within 1e-5.
TextFeatureBank load_text_bank(const std::string& path);
void save_text_bank(const TextFeatureBank& bank, const std::string& path);

// CLIP-style alignment loss: normalize projections, dot against every bank
// row, divide by temperature, cross-entropy toward the true class.
TensorF contrastive_loss(const TensorF& projections, const std::vector<std::size_t>& labels,
                         const TextFeatureBank& bank, float temperature);

// cross_entropy(logits, labels) + lambda * contrastive. Pass an undefined
// contrastive tensor when no bank is loaded; lambda > 0 then raises
// ConfigError, lambda == 0 reduces to plain cross-entropy.
TensorF total_classification_loss(const TensorF& logits, const std::vector<std::size_t>& labels,
                                  const TensorF& contrastive, float lambda);

struct SegStageWeights {
  TensorF w1, b1, w2, b2;  // shared MLP over [relative xyz | member features]
};

struct SegmentationWeights {
  SegStageWeights down1, down2, down3;  // widths 64, 128, backbone width
  TensorF pos_w1, pos_b1, pos_w2, pos_b2;  // coarsest-center positional MLP
  TensorF cls, cls_pos;                    // 1 x width
  TensorF task_w, task_b, task_pos;        // undefined when task tokens are off
  TensorF up3_w, up3_b;                    // width+128 -> 128
  TensorF up2_w, up2_b;                    // 128+64 -> 64
  TensorF up1_w, up1_b;                    // 64+3 -> 64
  TensorF cls_w1, cls_b1, cls_w2, cls_b2;  // per-point classifier 64 -> 64 -> C
  std::size_t neighbors = 16;              // grouping size per transition-down

  std::size_t width() const { return cls.cols(); }
  std::size_t classes() const { return cls_w2.cols(); }
  std::size_t task_count() const { return task_pos.defined() ? task_pos.rows() : 0; }
};

SegmentationWeights init_segmentation(Rng& rng, std::size_t width, std::size_t classes,
                                      std::size_t task_tokens, std::size_t neighbors = 16);
void register_segmentation(WeightContainer& c, const SegmentationWeights& w);
SegmentationWeights bind_segmentation(const WeightContainer& c, std::size_t neighbors = 16);

// Encoder state the decoder interpolates back through: per-level points and
// features, level 0 being the raw input cloud.
struct SegEncoding {
  std::vector<std::vector<float>> points;  // xyz-interleaved per level (0..3)
  std::vector<TensorF> features;           // per-level features; [3] pre-backbone
};

// Transition-down cascade: point counts halve at each of the three stages.
SegEncoding seg_encode(const SegmentationWeights& w, const PointCloud& cloud);

// Transition-up cascade from refined coarsest features (m3 x width) back to
// per-point logits (A x C). Exposed separately so constant-field decoding is
// testable without constructing a backbone.
TensorF seg_decode(const SegmentationWeights& w, const TensorF& refined,
                   const SegEncoding& enc);

// Full pipeline: encode, run the coarsest tokens (+CLS/task) through the
// backbone, decode. Undersized clouds (coarsest level thinner than the
// grouping size or the 3-point interpolation floor) raise invalid_argument.
TensorF segment(const SegmentationWeights& w, const BackboneWeights& backbone,
                const PointCloud& cloud, Rng& rng, bool training);

}  // namespace epcl
