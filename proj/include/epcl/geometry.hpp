#pragma once

#include <array>
#include <cstddef>
#include <vector>

// Spatial kernels over raw point clouds. Determinism contract: farthest point
// sampling starts at a caller-given index and breaks distance ties by lowest
// index; k-nearest-neighbor selection orders by (distance, index). Tests hold
// these against brute-force oracles, so the tie-breaks are load-bearing.

namespace epcl {

struct PointCloud {
  std::vector<float> xyz;   // A points, xyz-interleaved
  std::vector<int> labels;  // per-point class ids; empty when unlabeled
  std::size_t size() const { return xyz.size() / 3; }
};

struct PatchSet {
  std::vector<float> centers;               // M selected points, xyz-interleaved
  std::vector<std::size_t> member_indices;  // M*K indices into the parent cloud
  std::size_t patches = 0;                  // M
  std::size_t neighbors = 0;                // K
};

// Greedy max-min selection of m indices; each pick maximizes its distance to
// the already-chosen set, never revisiting a chosen index.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                               std::size_t start = 0);

// K nearest cloud points per center row, nearest first.
PatchSet knn_group(const PointCloud& cloud, const std::vector<float>& centers,
                   std::size_t center_count, std::size_t k);

// Indices and weights of the 3 nearest sources per query with inverse-distance
// weights w_i = (1/(d_i+eps)) / sum_j (1/(d_j+eps)); each weight row sums to 1.
struct ThreeNN {
  std::vector<std::array<std::size_t, 3>> idx;
  std::vector<std::array<float, 3>> w;
};
ThreeNN three_nn(const std::vector<float>& sources, std::size_t source_count,
                 const std::vector<float>& queries, std::size_t query_count);

// Upsample per-source features (source_count x dim, row-major) onto queries.
std::vector<float> interpolate_features(const std::vector<float>& sources,
                                        std::size_t source_count,
                                        const std::vector<float>& features, std::size_t dim,
                                        const std::vector<float>& queries,
                                        std::size_t query_count);

// Center-relative patch coordinates: member row minus the center.
std::vector<float> normalize_patch(const std::vector<float>& patch_xyz, std::size_t count,
                                   const float center[3]);

}  // namespace epcl
