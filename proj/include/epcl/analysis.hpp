#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "epcl/model.hpp"
#include "epcl/tokenize.hpp"
#include "epcl/train.hpp"

// Cross-modal feature comparison: category-mean CLS features from both
// modalities at every depth of the shared backbone, correlated pairwise.
// Everything runs in evaluation mode with gradients off.

namespace epcl {

enum class CorrelationEstimator { pearson, cosine };

// Accepts "pearson" or "cosine"; anything else is a ConfigError.
CorrelationEstimator parse_estimator(const std::string& name);
std::string estimator_name(CorrelationEstimator est);

struct AlignmentMatrix {
  // Pairs with no usable correlation (zero variance under Pearson, zero norm
  // under cosine) carry this sentinel and a set flag; a warning is printed.
  static constexpr double kDegenerate = -2.0;

  std::size_t layer = 0;
  std::vector<std::string> categories_a;
  std::vector<std::string> categories_b;
  std::vector<double> r;               // categories_a x categories_b, row-major
  std::vector<unsigned char> flagged;  // parallel to r

  double at(std::size_t i, std::size_t j) const { return r[i * categories_b.size() + j]; }
  bool is_flagged(std::size_t i, std::size_t j) const {
    return flagged[i * categories_b.size() + j] != 0;
  }
};

// Correlates every row of `a` (categories x width) against every row of `b`.
// Pearson centers each row over the feature dimensions; cosine does not.
AlignmentMatrix cross_correlation(const TensorF& a, const TensorF& b, std::size_t layer,
                                  CorrelationEstimator est,
                                  std::vector<std::string> categories_a = {},
                                  std::vector<std::string> categories_b = {});

// Category-mean CLS feature per backbone depth: result[l] is classes x width,
// l = 0 being the token embedding before any block. Every class needs at
// least one sample.
std::vector<TensorF> category_mean_point_features(const ClassificationModel& m,
                                                  const Dataset& data);
std::vector<TensorF> category_mean_image_features(const ImageTokenizerWeights& tok,
                                                  const BackboneWeights& backbone,
                                                  const std::vector<Image>& images,
                                                  const std::vector<std::size_t>& labels,
                                                  std::size_t classes);

struct AlignmentCurve {
  std::vector<double> mean_diagonal;  // entry l = mean matched-category r at depth l
};

// Mean of the unflagged diagonal of cross_correlation at every depth. Both
// feature stacks must agree in depth, category count, and width.
AlignmentCurve alignment_curve(const std::vector<TensorF>& a_by_layer,
                               const std::vector<TensorF>& b_by_layer,
                               CorrelationEstimator est);

// One `layer,mean_diagonal` line per depth, header included.
void write_alignment_curve(const AlignmentCurve& curve, const std::string& path);

// Matrix as rows of tab-separated values with category name row/column
// headers; flagged entries print as "degenerate".
void write_alignment_matrix(const AlignmentMatrix& m, const std::string& path);

// CLS features of every sample at one depth as CSV rows `sample_id,label,
// d0..d{width-1}`; an empty dataset still gets the header.
void export_embeddings(const ClassificationModel& m, const Dataset& data,
                       std::size_t layer, const std::string& path);

}  // namespace epcl
