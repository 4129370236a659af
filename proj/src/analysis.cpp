#include "epcl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <stdexcept>

#include "epcl/errors.hpp"
#include "epcl/ops.hpp"

namespace epcl {

namespace o = ops;

CorrelationEstimator parse_estimator(const std::string& name) {
  if (name == "pearson") return CorrelationEstimator::pearson;
  if (name == "cosine") return CorrelationEstimator::cosine;
  throw ConfigError("unknown correlation estimator '" + name +
                    "' (expected pearson or cosine)");
}

std::string estimator_name(CorrelationEstimator est) {
  return est == CorrelationEstimator::pearson ? "pearson" : "cosine";
}

namespace {

// Correlation of two feature rows in double precision; false means degenerate
// (zero variance / zero norm).
bool correlate(const float* a, const float* b, std::size_t d, CorrelationEstimator est,
               double& out) {
  double ma = 0.0, mb = 0.0;
  if (est == CorrelationEstimator::pearson) {
    for (std::size_t k = 0; k < d; ++k) {
      ma += a[k];
      mb += b[k];
    }
    ma /= double(d);
    mb /= double(d);
  }
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double da = a[k] - ma, db = b[k] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return false;
  out = std::clamp(cov / (std::sqrt(va) * std::sqrt(vb)), -1.0, 1.0);
  return true;
}

std::vector<std::string> numbered_categories(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("category" + std::to_string(i));
  return names;
}

}  // namespace

AlignmentMatrix cross_correlation(const TensorF& a, const TensorF& b, std::size_t layer,
                                  CorrelationEstimator est,
                                  std::vector<std::string> categories_a,
                                  std::vector<std::string> categories_b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("feature matrices must be rank 2");
  if (a.cols() != b.cols())
    throw std::invalid_argument("feature widths differ: " + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.cols()));

  AlignmentMatrix m;
  m.layer = layer;
  m.categories_a =
      categories_a.empty() ? numbered_categories(a.rows()) : std::move(categories_a);
  m.categories_b =
      categories_b.empty() ? numbered_categories(b.rows()) : std::move(categories_b);
  if (m.categories_a.size() != a.rows() || m.categories_b.size() != b.rows())
    throw std::invalid_argument("category name count does not match feature rows");

  std::size_t d = a.cols();
  m.r.assign(a.rows() * b.rows(), 0.0);
  m.flagged.assign(a.rows() * b.rows(), 0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double r;
      if (correlate(a.data().data() + i * d, b.data().data() + j * d, d, est, r)) {
        m.r[i * b.rows() + j] = r;
      } else {
        m.r[i * b.rows() + j] = AlignmentMatrix::kDegenerate;
        m.flagged[i * b.rows() + j] = 1;
        std::cerr << "warning: degenerate feature pair (" << m.categories_a[i] << ", "
                  << m.categories_b[j] << ") at depth " << layer << "\n";
      }
    }
  return m;
}

namespace {

// Accumulates the CLS row of every depth into per-class double sums, then
// divides into classes x width float matrices.
struct MeanAccumulator {
  std::size_t classes, width, depths;
  std::vector<std::vector<double>> sums;  // per depth, classes*width
  std::vector<std::size_t> counts;

  MeanAccumulator(std::size_t c, std::size_t w, std::size_t l)
      : classes(c), width(w), depths(l), sums(l, std::vector<double>(c * w, 0.0)),
        counts(c, 0) {}

  void add(const BackboneOutput& out, std::size_t label) {
    if (label >= classes)
      throw std::out_of_range("label " + std::to_string(label) + " out of range");
    for (std::size_t l = 0; l < depths; ++l) {
      const auto& v = out.layer_outputs[l].data();  // CLS feature is row 0
      for (std::size_t k = 0; k < width; ++k) sums[l][label * width + k] += v[k];
    }
    ++counts[label];
  }

  std::vector<TensorF> finish() const {
    for (std::size_t c = 0; c < classes; ++c)
      if (counts[c] == 0)
        throw std::invalid_argument("class " + std::to_string(c) + " has no samples");
    std::vector<TensorF> out;
    for (std::size_t l = 0; l < depths; ++l) {
      std::vector<float> rows(classes * width);
      for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t k = 0; k < width; ++k)
          rows[c * width + k] =
              static_cast<float>(sums[l][c * width + k] / double(counts[c]));
      out.push_back(TensorF::from_data({classes, width}, rows));
    }
    return out;
  }
};

}  // namespace

std::vector<TensorF> category_mean_point_features(const ClassificationModel& m,
                                                  const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("dataset is empty");
  NoGradGuard off;
  Rng unused(0);
  std::size_t width = m.tokenizer.width();
  MeanAccumulator acc(data.classes(), width, m.backbone.cfg.layers + 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    TokenSequence seq =
        tokenize_points(m.tokenizer, data.clouds[i], m.patches, m.neighbors);
    acc.add(backbone_forward(m.backbone, seq.combined(), unused, false), data.labels[i]);
  }
  return acc.finish();
}

std::vector<TensorF> category_mean_image_features(const ImageTokenizerWeights& tok,
                                                  const BackboneWeights& backbone,
                                                  const std::vector<Image>& images,
                                                  const std::vector<std::size_t>& labels,
                                                  std::size_t classes) {
  if (images.empty()) throw std::invalid_argument("image set is empty");
  if (images.size() != labels.size())
    throw std::invalid_argument("image/label count mismatch");
  NoGradGuard off;
  Rng unused(0);
  MeanAccumulator acc(classes, tok.cls.cols(), backbone.cfg.layers + 1);
  for (std::size_t i = 0; i < images.size(); ++i) {
    TokenSequence seq = tokenize_image(tok, images[i]);
    acc.add(backbone_forward(backbone, seq.combined(), unused, false), labels[i]);
  }
  return acc.finish();
}

AlignmentCurve alignment_curve(const std::vector<TensorF>& a_by_layer,
                               const std::vector<TensorF>& b_by_layer,
                               CorrelationEstimator est) {
  if (a_by_layer.empty() || a_by_layer.size() != b_by_layer.size())
    throw std::invalid_argument("per-depth feature stacks must match and be non-empty");

  AlignmentCurve curve;
  for (std::size_t l = 0; l < a_by_layer.size(); ++l) {
    if (a_by_layer[l].rows() != b_by_layer[l].rows())
      throw std::invalid_argument("category counts differ at depth " + std::to_string(l));
    AlignmentMatrix m = cross_correlation(a_by_layer[l], b_by_layer[l], l, est);
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < a_by_layer[l].rows(); ++c) {
      if (m.is_flagged(c, c)) continue;
      sum += m.at(c, c);
      ++used;
    }
    curve.mean_diagonal.push_back(used ? sum / double(used)
                                       : AlignmentMatrix::kDegenerate);
  }
  return curve;
}

void write_alignment_curve(const AlignmentCurve& curve, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << "layer,mean_diagonal\n" << std::setprecision(10);
  for (std::size_t l = 0; l < curve.mean_diagonal.size(); ++l)
    f << l << ',' << curve.mean_diagonal[l] << '\n';
  if (!f) throw DataError("write to '" + path + "' failed");
}

void write_alignment_matrix(const AlignmentMatrix& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << std::setprecision(10);
  f << "depth\t" << m.layer << '\n';
  for (const auto& name : m.categories_b) f << '\t' << name;
  f << '\n';
  for (std::size_t i = 0; i < m.categories_a.size(); ++i) {
    f << m.categories_a[i];
    for (std::size_t j = 0; j < m.categories_b.size(); ++j) {
      f << '\t';
      if (m.is_flagged(i, j))
        f << "degenerate";
      else
        f << m.at(i, j);
    }
    f << '\n';
  }
  if (!f) throw DataError("write to '" + path + "' failed");
}

void export_embeddings(const ClassificationModel& m, const Dataset& data,
                       std::size_t layer, const std::string& path) {
  if (layer > m.backbone.cfg.layers)
    throw std::out_of_range("depth " + std::to_string(layer) + " exceeds model depth " +
                            std::to_string(m.backbone.cfg.layers));
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");

  std::size_t width = m.tokenizer.width();
  f << "sample_id,label";
  for (std::size_t k = 0; k < width; ++k) f << ",d" << k;
  f << '\n' << std::setprecision(9);

  NoGradGuard off;
  Rng unused(0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    TokenSequence seq =
        tokenize_points(m.tokenizer, data.clouds[i], m.patches, m.neighbors);
    BackboneOutput out = backbone_forward(m.backbone, seq.combined(), unused, false);
    const auto& v = out.layer_outputs[layer].data();
    f << i << ',' << data.labels[i];
    for (std::size_t k = 0; k < width; ++k) f << ',' << v[k];
    f << '\n';
  }
  if (!f) throw DataError("write to '" + path + "' failed");
}

}  // namespace epcl
