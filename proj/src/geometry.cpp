#include "epcl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "epcl/kernels.hpp"

namespace epcl {

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                               std::size_t start) {
  const std::size_t a = cloud.size();
  if (m < 1 || m > a)
    throw std::invalid_argument("farthest_point_sample: m=" + std::to_string(m) +
                                " outside [1, " + std::to_string(a) + "]");
  if (start >= a)
    throw std::invalid_argument("farthest_point_sample: start index " + std::to_string(start) +
                                " >= " + std::to_string(a));
  std::vector<std::size_t> picked;
  picked.reserve(m);
  std::vector<char> chosen(a, 0);
  std::vector<float> dist(a, std::numeric_limits<float>::max());
  std::size_t cur = start;
  picked.push_back(cur);
  chosen[cur] = 1;
  std::vector<float> d(a);
  for (std::size_t step = 1; step < m; ++step) {
    kernels::sqdist3(cloud.xyz.data(), a, cloud.xyz.data() + cur * 3, d.data());
    for (std::size_t i = 0; i < a; ++i)
      if (d[i] < dist[i]) dist[i] = d[i];
    // Max-min pick over unchosen indices; strict > keeps the lowest index on ties.
    std::size_t best = a;
    float best_d = -1.0f;
    for (std::size_t i = 0; i < a; ++i) {
      if (chosen[i]) continue;
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    cur = best;
    picked.push_back(cur);
    chosen[cur] = 1;
  }
  return picked;
}

PatchSet knn_group(const PointCloud& cloud, const std::vector<float>& centers,
                   std::size_t center_count, std::size_t k) {
  const std::size_t a = cloud.size();
  if (k < 1 || k > a)
    throw std::invalid_argument("knn_group: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(a) + "]");
  if (centers.size() != center_count * 3)
    throw std::invalid_argument("knn_group: center buffer does not hold " +
                                std::to_string(center_count) + " points");
  PatchSet out;
  out.patches = center_count;
  out.neighbors = k;
  out.centers = centers;
  out.member_indices.resize(center_count * k);
  std::vector<float> d(a);
  std::vector<std::size_t> order(a);
  for (std::size_t c = 0; c < center_count; ++c) {
    kernels::sqdist3(cloud.xyz.data(), a, centers.data() + c * 3, d.data());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](std::size_t i, std::size_t j) {
                        return d[i] < d[j] || (d[i] == d[j] && i < j);
                      });
    std::copy(order.begin(), order.begin() + k, out.member_indices.begin() + c * k);
  }
  return out;
}

ThreeNN three_nn(const std::vector<float>& sources, std::size_t source_count,
                 const std::vector<float>& queries, std::size_t query_count) {
  if (source_count < 3)
    throw std::invalid_argument("three_nn: need at least 3 sources, got " +
                                std::to_string(source_count));
  constexpr float eps = 1e-8f;
  ThreeNN out;
  out.idx.resize(query_count);
  out.w.resize(query_count);
  std::vector<float> d(source_count);
  std::vector<std::size_t> order(source_count);
  for (std::size_t q = 0; q < query_count; ++q) {
    kernels::sqdist3(sources.data(), source_count, queries.data() + q * 3, d.data());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::partial_sort(order.begin(), order.begin() + 3, order.end(),
                      [&](std::size_t i, std::size_t j) {
                        return d[i] < d[j] || (d[i] == d[j] && i < j);
                      });
    float inv[3];
    float sum = 0.0f;
    for (int j = 0; j < 3; ++j) {
      inv[j] = 1.0f / (std::sqrt(d[order[j]]) + eps);
      sum += inv[j];
    }
    for (int j = 0; j < 3; ++j) {
      out.idx[q][j] = order[j];
      out.w[q][j] = inv[j] / sum;
    }
  }
  return out;
}

std::vector<float> interpolate_features(const std::vector<float>& sources,
                                        std::size_t source_count,
                                        const std::vector<float>& features, std::size_t dim,
                                        const std::vector<float>& queries,
                                        std::size_t query_count) {
  if (features.size() != source_count * dim)
    throw std::invalid_argument("interpolate_features: feature buffer does not hold " +
                                std::to_string(source_count) + " rows of width " +
                                std::to_string(dim));
  const auto nn = three_nn(sources, source_count, queries, query_count);
  std::vector<float> out(query_count * dim, 0.0f);
  for (std::size_t q = 0; q < query_count; ++q)
    for (int j = 0; j < 3; ++j)
      kernels::axpy(nn.w[q][j], features.data() + nn.idx[q][j] * dim, out.data() + q * dim, dim);
  return out;
}

std::vector<float> normalize_patch(const std::vector<float>& patch_xyz, std::size_t count,
                                   const float center[3]) {
  std::vector<float> out(count * 3);
  for (std::size_t i = 0; i < count; ++i)
    for (int j = 0; j < 3; ++j) out[i * 3 + j] = patch_xyz[i * 3 + j] - center[j];
  return out;
}

}  // namespace epcl
