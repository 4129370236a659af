#include "epcl/heads.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "epcl/errors.hpp"
#include "epcl/ops.hpp"
#include "epcl/param_init.hpp"
#include "epcl/tokenize.hpp"

namespace epcl {

namespace o = ops;

namespace {

constexpr std::size_t kHeadHidden = 256;
constexpr std::size_t kSegWidth1 = 64;
constexpr std::size_t kSegWidth2 = 128;

// Center-relative member coordinates for every patch, flattened (m*k) x 3.
std::vector<float> relative_coords(const std::vector<float>& parent_xyz, const PatchSet& ps) {
  std::vector<float> out(ps.patches * ps.neighbors * 3);
  std::vector<float> patch(ps.neighbors * 3);
  for (std::size_t i = 0; i < ps.patches; ++i) {
    for (std::size_t j = 0; j < ps.neighbors; ++j) {
      std::size_t src = ps.member_indices[i * ps.neighbors + j];
      for (std::size_t c = 0; c < 3; ++c) patch[j * 3 + c] = parent_xyz[src * 3 + c];
    }
    std::vector<float> centered = normalize_patch(patch, ps.neighbors, &ps.centers[i * 3]);
    std::copy(centered.begin(), centered.end(), out.begin() + i * ps.neighbors * 3);
  }
  return out;
}

TensorF stage_forward(const SegStageWeights& st, const TensorF& grouped, std::size_t k) {
  TensorF h = o::relu(o::add_rowvec(o::matmul(grouped, st.w1), st.b1));
  h = o::add_rowvec(o::matmul(h, st.w2), st.b2);
  return o::maxpool_groups(h, k);
}

SegStageWeights init_stage(Rng& rng, std::size_t in, std::size_t out) {
  SegStageWeights st;
  st.w1 = normal_matrix(rng, in, out, relu_std(in));
  st.b1 = TensorF::zeros({out});
  st.w2 = normal_matrix(rng, out, out, linear_std(out));
  st.b2 = TensorF::zeros({out});
  return st;
}

void register_stage(WeightContainer& c, const std::string& prefix, const SegStageWeights& st) {
  c.add(prefix + ".w1", st.w1);
  c.add(prefix + ".b1", st.b1);
  c.add(prefix + ".w2", st.w2);
  c.add(prefix + ".b2", st.b2);
}

SegStageWeights bind_stage(const WeightContainer& c, const std::string& prefix) {
  SegStageWeights st;
  st.w1 = c.get(prefix + ".w1");
  st.b1 = c.get(prefix + ".b1");
  st.w2 = c.get(prefix + ".w2");
  st.b2 = c.get(prefix + ".b2");
  return st;
}

}  // namespace

ClassificationHeadWeights init_classification_head(Rng& rng, std::size_t width,
                                                   std::size_t classes,
                                                   std::size_t text_width) {
  if (classes == 0) throw std::invalid_argument("classification head needs at least 1 class");
  ClassificationHeadWeights w;
  w.w1 = normal_matrix(rng, width, kHeadHidden, relu_std(width));
  w.b1 = TensorF::zeros({kHeadHidden});
  w.w2 = normal_matrix(rng, kHeadHidden, kHeadHidden, relu_std(kHeadHidden));
  w.b2 = TensorF::zeros({kHeadHidden});
  w.w3 = normal_matrix(rng, kHeadHidden, classes, linear_std(kHeadHidden));
  w.b3 = TensorF::zeros({classes});
  if (text_width > 0) {
    w.proj_w = normal_matrix(rng, width, text_width, linear_std(width));
    w.proj_b = TensorF::zeros({text_width});
  }
  return w;
}

void register_classification_head(WeightContainer& c, const ClassificationHeadWeights& w) {
  c.add("head.cls.w1", w.w1);
  c.add("head.cls.b1", w.b1);
  c.add("head.cls.w2", w.w2);
  c.add("head.cls.b2", w.b2);
  c.add("head.cls.w3", w.w3);
  c.add("head.cls.b3", w.b3);
  if (w.proj_w.defined()) {
    c.add("head.proj.w", w.proj_w);
    c.add("head.proj.b", w.proj_b);
  }
}

ClassificationHeadWeights bind_classification_head(const WeightContainer& c) {
  ClassificationHeadWeights w;
  w.w1 = c.get("head.cls.w1");
  w.b1 = c.get("head.cls.b1");
  w.w2 = c.get("head.cls.w2");
  w.b2 = c.get("head.cls.b2");
  w.w3 = c.get("head.cls.w3");
  w.b3 = c.get("head.cls.b3");
  if (c.contains("head.proj.w")) {
    w.proj_w = c.get("head.proj.w");
    w.proj_b = c.get("head.proj.b");
  }
  return w;
}

TensorF head_logits(const ClassificationHeadWeights& w, const TensorF& cls_features,
                    Rng& rng, bool training) {
  TensorF h = o::relu(o::add_rowvec(o::matmul(cls_features, w.w1), w.b1));
  h = o::dropout(h, w.dropout, rng, training);
  h = o::relu(o::add_rowvec(o::matmul(h, w.w2), w.b2));
  h = o::dropout(h, w.dropout, rng, training);
  return o::add_rowvec(o::matmul(h, w.w3), w.b3);
}

TensorF head_projections(const ClassificationHeadWeights& w, const TensorF& cls_features) {
  if (!w.proj_w.defined())
    throw ConfigError("classification head has no contrastive projection");
  return o::add_rowvec(o::matmul(cls_features, w.proj_w), w.proj_b);
}

TextFeatureBank load_text_bank(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open text feature bank '" + path + "'");

  std::string tag, version;
  std::size_t classes = 0, width = 0;
  if (!(f >> tag >> version >> classes >> width) || tag != "EPCL-TEXTBANK" || version != "v1")
    throw DataError("'" + path + "' is not a text feature bank (expected EPCL-TEXTBANK v1)");
  if (classes == 0 || width == 0)
    throw DataError("text feature bank '" + path + "' declares an empty bank");

  TextFeatureBank bank;
  bank.labels.resize(classes);
  std::vector<float> values(classes * width);
  for (std::size_t i = 0; i < classes; ++i) {
    if (!(f >> bank.labels[i]))
      throw DataError("text feature bank row " + std::to_string(i) + " is missing its label");
    double norm_sq = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      float v;
      if (!(f >> v) || !std::isfinite(v))
        throw DataError("text feature bank row '" + bank.labels[i] +
                        "' has a malformed value at column " + std::to_string(j));
      values[i * width + j] = v;
      norm_sq += static_cast<double>(v) * static_cast<double>(v);
    }
    if (std::abs(std::sqrt(norm_sq) - 1.0) > 1e-5)
      throw DataError("text feature bank row '" + bank.labels[i] +
                      "' is not unit-normalized");
  }
  bank.features = TensorF::from_data({classes, width}, values);
  return bank;
}

void save_text_bank(const TextFeatureBank& bank, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  std::size_t classes = bank.classes();
  std::size_t width = bank.features.cols();
  f << "EPCL-TEXTBANK v1 " << classes << ' ' << width << '\n';
  f << std::setprecision(9);
  for (std::size_t i = 0; i < classes; ++i) {
    f << bank.labels[i];
    for (std::size_t j = 0; j < width; ++j) f << ' ' << bank.features.data()[i * width + j];
    f << '\n';
  }
  if (!f) throw DataError("write to '" + path + "' failed");
}

TensorF contrastive_loss(const TensorF& projections, const std::vector<std::size_t>& labels,
                         const TextFeatureBank& bank, float temperature) {
  if (temperature <= 0.0f)
    throw std::invalid_argument("contrastive temperature must be positive");
  if (projections.cols() != bank.features.cols())
    throw std::invalid_argument("projection width " + std::to_string(projections.cols()) +
                                " does not match bank width " +
                                std::to_string(bank.features.cols()));
  TensorF sims = o::matmul_nt(o::l2_normalize_rows(projections), bank.features);
  return o::cross_entropy(o::scale(sims, 1.0f / temperature), labels);
}

TensorF total_classification_loss(const TensorF& logits, const std::vector<std::size_t>& labels,
                                  const TensorF& contrastive, float lambda) {
  if (lambda < 0.0f) throw std::invalid_argument("contrastive weight must be >= 0");
  TensorF ce = o::cross_entropy(logits, labels);
  if (lambda == 0.0f) return ce;
  if (!contrastive.defined())
    throw ConfigError("contrastive weight " + std::to_string(lambda) +
                      " > 0 but no text feature bank is loaded");
  return o::add(ce, o::scale(contrastive, lambda));
}

SegmentationWeights init_segmentation(Rng& rng, std::size_t width, std::size_t classes,
                                      std::size_t task_tokens, std::size_t neighbors) {
  if (classes == 0) throw std::invalid_argument("segmentation needs at least 1 class");
  if (neighbors == 0) throw std::invalid_argument("segmentation grouping size must be >= 1");
  SegmentationWeights w;
  w.down1 = init_stage(rng, 3 + 3, kSegWidth1);
  w.down2 = init_stage(rng, 3 + kSegWidth1, kSegWidth2);
  w.down3 = init_stage(rng, 3 + kSegWidth2, width);
  w.pos_w1 = normal_matrix(rng, 3, kSegWidth2, relu_std(3));
  w.pos_b1 = TensorF::zeros({kSegWidth2});
  w.pos_w2 = normal_matrix(rng, kSegWidth2, width, linear_std(kSegWidth2));
  w.pos_b2 = TensorF::zeros({width});
  w.cls = normal_matrix(rng, 1, width, 0.02);
  w.cls_pos = normal_matrix(rng, 1, width, 0.02);
  if (task_tokens > 0) {
    w.task_w = normal_matrix(rng, width, width, linear_std(width));
    w.task_b = TensorF::zeros({width});
    w.task_pos = normal_matrix(rng, task_tokens, width, 0.02);
  }
  w.up3_w = normal_matrix(rng, width + kSegWidth2, kSegWidth2, relu_std(width + kSegWidth2));
  w.up3_b = TensorF::zeros({kSegWidth2});
  w.up2_w = normal_matrix(rng, kSegWidth2 + kSegWidth1, kSegWidth1,
                          relu_std(kSegWidth2 + kSegWidth1));
  w.up2_b = TensorF::zeros({kSegWidth1});
  w.up1_w = normal_matrix(rng, kSegWidth1 + 3, kSegWidth1, relu_std(kSegWidth1 + 3));
  w.up1_b = TensorF::zeros({kSegWidth1});
  w.cls_w1 = normal_matrix(rng, kSegWidth1, kSegWidth1, relu_std(kSegWidth1));
  w.cls_b1 = TensorF::zeros({kSegWidth1});
  w.cls_w2 = normal_matrix(rng, kSegWidth1, classes, linear_std(kSegWidth1));
  w.cls_b2 = TensorF::zeros({classes});
  w.neighbors = neighbors;
  return w;
}

void register_segmentation(WeightContainer& c, const SegmentationWeights& w) {
  register_stage(c, "seg.down1", w.down1);
  register_stage(c, "seg.down2", w.down2);
  register_stage(c, "seg.down3", w.down3);
  c.add("seg.pos.w1", w.pos_w1);
  c.add("seg.pos.b1", w.pos_b1);
  c.add("seg.pos.w2", w.pos_w2);
  c.add("seg.pos.b2", w.pos_b2);
  c.add("seg.cls", w.cls);
  c.add("seg.cls_pos", w.cls_pos);
  if (w.task_pos.defined()) {
    c.add("seg.task.fc.w", w.task_w);
    c.add("seg.task.fc.b", w.task_b);
    c.add("seg.task.pos", w.task_pos);
  }
  c.add("seg.up3.w", w.up3_w);
  c.add("seg.up3.b", w.up3_b);
  c.add("seg.up2.w", w.up2_w);
  c.add("seg.up2.b", w.up2_b);
  c.add("seg.up1.w", w.up1_w);
  c.add("seg.up1.b", w.up1_b);
  c.add("seg.classifier.w1", w.cls_w1);
  c.add("seg.classifier.b1", w.cls_b1);
  c.add("seg.classifier.w2", w.cls_w2);
  c.add("seg.classifier.b2", w.cls_b2);
}

SegmentationWeights bind_segmentation(const WeightContainer& c, std::size_t neighbors) {
  SegmentationWeights w;
  w.down1 = bind_stage(c, "seg.down1");
  w.down2 = bind_stage(c, "seg.down2");
  w.down3 = bind_stage(c, "seg.down3");
  w.pos_w1 = c.get("seg.pos.w1");
  w.pos_b1 = c.get("seg.pos.b1");
  w.pos_w2 = c.get("seg.pos.w2");
  w.pos_b2 = c.get("seg.pos.b2");
  w.cls = c.get("seg.cls");
  w.cls_pos = c.get("seg.cls_pos");
  if (c.contains("seg.task.pos")) {
    w.task_w = c.get("seg.task.fc.w");
    w.task_b = c.get("seg.task.fc.b");
    w.task_pos = c.get("seg.task.pos");
  }
  w.up3_w = c.get("seg.up3.w");
  w.up3_b = c.get("seg.up3.b");
  w.up2_w = c.get("seg.up2.w");
  w.up2_b = c.get("seg.up2.b");
  w.up1_w = c.get("seg.up1.w");
  w.up1_b = c.get("seg.up1.b");
  w.cls_w1 = c.get("seg.classifier.w1");
  w.cls_b1 = c.get("seg.classifier.b1");
  w.cls_w2 = c.get("seg.classifier.w2");
  w.cls_b2 = c.get("seg.classifier.b2");
  w.neighbors = neighbors;
  return w;
}

SegEncoding seg_encode(const SegmentationWeights& w, const PointCloud& cloud) {
  std::size_t a = cloud.size();
  // After three halvings the coarsest level still needs the grouping size and
  // the 3 sources the interpolation floor requires.
  std::size_t coarsest = a / 8;
  if (coarsest < 3 || a / 4 < w.neighbors)
    throw std::invalid_argument("cloud with " + std::to_string(a) +
                                " points is too small for the segmentation cascade");

  SegEncoding enc;
  enc.points.push_back(cloud.xyz);
  enc.features.push_back(TensorF::from_data({a, 3}, cloud.xyz));

  const SegStageWeights* stages[3] = {&w.down1, &w.down2, &w.down3};
  for (std::size_t s = 0; s < 3; ++s) {
    const std::vector<float>& parent = enc.points[s];
    PointCloud level;
    level.xyz = parent;
    std::size_t m = level.size() / 2;

    std::vector<std::size_t> picked = farthest_point_sample(level, m);
    std::vector<float> centers(m * 3);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t c = 0; c < 3; ++c) centers[i * 3 + c] = parent[picked[i] * 3 + c];
    PatchSet ps = knn_group(level, centers, m, w.neighbors);

    TensorF rel = TensorF::from_data({m * w.neighbors, 3}, relative_coords(parent, ps));
    TensorF gathered = o::gather_rows(enc.features[s], ps.member_indices);
    TensorF grouped = o::concat_cols<float>({rel, gathered});
    enc.features.push_back(stage_forward(*stages[s], grouped, w.neighbors));
    enc.points.push_back(std::move(centers));
  }
  return enc;
}

TensorF seg_decode(const SegmentationWeights& w, const TensorF& refined,
                   const SegEncoding& enc) {
  if (refined.rows() * 3 != enc.points[3].size() || refined.cols() != w.width())
    throw std::invalid_argument("refined coarse features do not match the encoding");

  TensorF x = refined;
  const TensorF* ups_w[3] = {&w.up3_w, &w.up2_w, &w.up1_w};
  const TensorF* ups_b[3] = {&w.up3_b, &w.up2_b, &w.up1_b};
  for (std::size_t s = 3; s-- > 0;) {
    ThreeNN tnn = three_nn(enc.points[s + 1], enc.points[s + 1].size() / 3, enc.points[s],
                           enc.points[s].size() / 3);
    TensorF interp = o::interpolate_rows(x, tnn.idx, tnn.w);
    TensorF cat = o::concat_cols<float>({interp, enc.features[s]});
    x = o::relu(o::add_rowvec(o::matmul(cat, *ups_w[2 - s]), *ups_b[2 - s]));
  }

  TensorF h = o::relu(o::add_rowvec(o::matmul(x, w.cls_w1), w.cls_b1));
  return o::add_rowvec(o::matmul(h, w.cls_w2), w.cls_b2);
}

TensorF segment(const SegmentationWeights& w, const BackboneWeights& backbone,
                const PointCloud& cloud, Rng& rng, bool training) {
  if (backbone.cfg.width != w.width())
    throw ConfigError("segmentation width " + std::to_string(w.width()) +
                      " does not match backbone width " +
                      std::to_string(backbone.cfg.width));

  SegEncoding enc = seg_encode(w, cloud);
  std::size_t m3 = enc.points[3].size() / 3;
  TensorF centers = TensorF::from_data({m3, 3}, enc.points[3]);
  TensorF pos_h = o::relu(o::add_rowvec(o::matmul(centers, w.pos_w1), w.pos_b1));
  TensorF pos = o::add_rowvec(o::matmul(pos_h, w.pos_w2), w.pos_b2);

  std::size_t g = w.task_count();
  TensorF tokens, positional;
  if (g > 0) {
    TensorF task = task_token_rows(w.task_w, w.task_b, g);
    tokens = o::concat_rows<float>({w.cls, task, enc.features[3]});
    positional = o::concat_rows<float>({w.cls_pos, w.task_pos, pos});
  } else {
    tokens = o::concat_rows<float>({w.cls, enc.features[3]});
    positional = o::concat_rows<float>({w.cls_pos, pos});
  }

  BackboneOutput out = backbone_forward(backbone, o::add(tokens, positional), rng, training);
  TensorF refined = o::slice_rows(out.normalized, 1 + g, 1 + g + m3);
  return seg_decode(w, refined, enc);
}

}  // namespace epcl
