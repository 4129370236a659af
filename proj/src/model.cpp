#include "epcl/model.hpp"

#include "epcl/ops.hpp"

namespace epcl {

namespace o = ops;

WeightContainer init_classification_container(Rng& rng, const ClassModelConfig& cfg) {
  WeightContainer c;
  register_backbone(c, init_backbone(rng, cfg.backbone));
  register_point_tokenizer(c, init_point_tokenizer(rng, cfg.backbone.width, cfg.task_tokens));
  register_classification_head(
      c, init_classification_head(rng, cfg.backbone.width, cfg.classes, cfg.text_width));
  c.source_tag = "synthetic-random-init";
  return c;
}

ClassificationModel bind_classification_model(const WeightContainer& c, std::size_t patches,
                                              std::size_t neighbors) {
  ClassificationModel m;
  m.tokenizer = bind_point_tokenizer(c);
  m.backbone = bind_backbone(c);
  m.head = bind_classification_head(c);
  m.patches = patches;
  m.neighbors = neighbors;
  return m;
}

TensorF batch_cls_features(const ClassificationModel& m, const std::vector<PointCloud>& clouds,
                           const std::vector<std::size_t>& indices, Rng& rng, bool training) {
  std::vector<TensorF> rows;
  rows.reserve(indices.size());
  for (std::size_t idx : indices) {
    TokenSequence seq = tokenize_points(m.tokenizer, clouds[idx], m.patches, m.neighbors);
    BackboneOutput out = backbone_forward(m.backbone, seq.combined(), rng, training);
    rows.push_back(o::slice_rows(out.normalized, 0, 1));
  }
  return o::concat_rows(rows);
}

WeightContainer init_segmentation_container(Rng& rng, const SegModelConfig& cfg) {
  WeightContainer c;
  register_backbone(c, init_backbone(rng, cfg.backbone));
  register_segmentation(
      c, init_segmentation(rng, cfg.backbone.width, cfg.classes, cfg.task_tokens,
                           cfg.neighbors));
  c.source_tag = "synthetic-random-init";
  return c;
}

SegmentationModel bind_segmentation_model(const WeightContainer& c, std::size_t neighbors) {
  SegmentationModel m;
  m.head = bind_segmentation(c, neighbors);
  m.backbone = bind_backbone(c);
  return m;
}

std::string combined_backbone_hash(const WeightContainer& c) {
  std::string joined;
  for (const auto& [name, hash] : tensor_hashes(c, "backbone.")) joined += name + ":" + hash + "\n";
  return sha256_hex(reinterpret_cast<const unsigned char*>(joined.data()), joined.size());
}

}  // namespace epcl
