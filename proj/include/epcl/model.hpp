#pragma once

#include <cstddef>
#include <vector>

#include "epcl/backbone.hpp"
#include "epcl/geometry.hpp"
#include "epcl/heads.hpp"
#include "epcl/rng.hpp"
#include "epcl/tokenize.hpp"
#include "epcl/weights.hpp"

// Whole-model assembly: a WeightContainer holds every named parameter, the
// bound model structs hold live views into it. The backbone partition is
// frozen at creation; tokenizer, task token, and head stay trainable. Only
// parameters that actually participate in the configured loss are registered,
// so the optimizer's every-trainable-tensor-gets-a-gradient contract holds.

namespace epcl {

struct ClassModelConfig {
  std::size_t classes = 0;
  std::size_t patches = 64;     // M: point patches per cloud
  std::size_t neighbors = 32;   // K: points per patch
  std::size_t task_tokens = 1;  // G
  std::size_t text_width = 0;   // contrastive projection width; 0 disables the branch
  TransformerConfig backbone;
};

WeightContainer init_classification_container(Rng& rng, const ClassModelConfig& cfg);

struct ClassificationModel {
  PointTokenizerWeights tokenizer;
  BackboneWeights backbone;
  ClassificationHeadWeights head;
  std::size_t patches = 64;
  std::size_t neighbors = 32;
};

ClassificationModel bind_classification_model(const WeightContainer& c, std::size_t patches,
                                              std::size_t neighbors);

// Stacked CLS features, one row per listed cloud.
TensorF batch_cls_features(const ClassificationModel& m, const std::vector<PointCloud>& clouds,
                           const std::vector<std::size_t>& indices, Rng& rng, bool training);

struct SegModelConfig {
  std::size_t classes = 0;
  std::size_t neighbors = 16;  // grouping size per transition-down
  std::size_t task_tokens = 1;
  TransformerConfig backbone;
};

WeightContainer init_segmentation_container(Rng& rng, const SegModelConfig& cfg);

struct SegmentationModel {
  SegmentationWeights head;
  BackboneWeights backbone;
};

SegmentationModel bind_segmentation_model(const WeightContainer& c, std::size_t neighbors);

// One SHA-256 over the ordered per-tensor hashes of the backbone partition.
std::string combined_backbone_hash(const WeightContainer& c);

}  // namespace epcl
