#include "epcl/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "epcl/rng.hpp"

namespace epcl {

namespace {

constexpr float kJitter = 0.02f;  // bounded so surface invariants stay checkable

float jittered(Rng& rng, float v) {
  return v + static_cast<float>(rng.uniform(-kJitter, kJitter));
}

void push_point(PointCloud& c, Rng& rng, float x, float y, float z) {
  c.xyz.push_back(jittered(rng, x));
  c.xyz.push_back(jittered(rng, y));
  c.xyz.push_back(jittered(rng, z));
}

PointCloud sphere_cloud(Rng& rng, std::size_t points, float radius) {
  PointCloud c;
  for (std::size_t i = 0; i < points; ++i) {
    double dx = rng.normal(), dy = rng.normal(), dz = rng.normal();
    double n = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (n < 1e-12) n = 1.0;
    push_point(c, rng, float(radius * dx / n), float(radius * dy / n),
               float(radius * dz / n));
  }
  return c;
}

PointCloud cube_cloud(Rng& rng, std::size_t points, float half) {
  PointCloud c;
  for (std::size_t i = 0; i < points; ++i) {
    int face = int(rng.uniform(0.0, 6.0));
    float u = float(rng.uniform(-half, half));
    float v = float(rng.uniform(-half, half));
    float s = face % 2 == 0 ? half : -half;
    if (face < 2)
      push_point(c, rng, s, u, v);
    else if (face < 4)
      push_point(c, rng, u, s, v);
    else
      push_point(c, rng, u, v, s);
  }
  return c;
}

PointCloud cylinder_cloud(Rng& rng, std::size_t points, float radius, float half_height) {
  PointCloud c;
  for (std::size_t i = 0; i < points; ++i) {
    double theta = rng.uniform(0.0, 2.0 * M_PI);
    float z = float(rng.uniform(-half_height, half_height));
    push_point(c, rng, float(radius * std::cos(theta)), float(radius * std::sin(theta)),
               z);
  }
  return c;
}

PointCloud plane_cloud(Rng& rng, std::size_t points, float half, bool labeled) {
  PointCloud c;
  for (std::size_t i = 0; i < points; ++i) {
    push_point(c, rng, float(rng.uniform(-half, half)), float(rng.uniform(-half, half)),
               0.0f);
    // The half the point ended up in after jitter decides its label.
    if (labeled) c.labels.push_back(c.xyz[i * 3] >= 0.0f ? 1 : 0);
  }
  return c;
}

PointCloud family_cloud(Rng& rng, std::size_t family, std::size_t points, float scale) {
  switch (family) {
    case 0: return sphere_cloud(rng, points, 1.0f * scale);
    case 1: return cube_cloud(rng, points, 0.8f * scale);
    case 2: return cylinder_cloud(rng, points, 0.6f * scale, 1.1f * scale);
    default: return plane_cloud(rng, points, 1.2f * scale, false);
  }
}

std::string family_class_name(std::size_t c) {
  static const char* base[] = {"sphere", "cube", "cylinder", "plane"};
  std::string name = base[c % 4];
  if (c >= 4) name += std::to_string(c / 4 + 1);
  return name;
}

std::size_t train_count(std::size_t per_class, float fraction) {
  auto n = std::size_t(std::lround(double(per_class) * double(fraction)));
  return std::min(n, per_class);
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (spec.per_class == 0 || spec.points == 0)
    throw std::invalid_argument("per_class and points must be >= 1");
  if (!(spec.train_fraction > 0.0f && spec.train_fraction <= 1.0f))
    throw std::invalid_argument("train_fraction must be in (0, 1]");

  Rng rng(spec.seed);
  SyntheticData out;
  for (std::size_t c = 0; c < spec.classes; ++c)
    out.train.class_names.push_back(family_class_name(c));
  out.test.class_names = out.train.class_names;

  std::size_t n_train = train_count(spec.per_class, spec.train_fraction);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    float scale = 1.0f + 0.3f * float(c / 4);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Dataset& split = i < n_train ? out.train : out.test;
      split.clouds.push_back(family_cloud(rng, c % 4, spec.points, scale));
      split.labels.push_back(c);
    }
  }
  return out;
}

SyntheticData gen_plane_segmentation(std::size_t count, std::size_t points,
                                     float train_fraction, std::uint64_t seed) {
  if (count == 0 || points == 0)
    throw std::invalid_argument("count and points must be >= 1");
  if (!(train_fraction > 0.0f && train_fraction <= 1.0f))
    throw std::invalid_argument("train_fraction must be in (0, 1]");

  Rng rng(seed);
  SyntheticData out;
  out.train.class_names = {"left", "right"};
  out.test.class_names = out.train.class_names;

  std::size_t n_train = train_count(count, train_fraction);
  for (std::size_t i = 0; i < count; ++i) {
    Dataset& split = i < n_train ? out.train : out.test;
    split.clouds.push_back(plane_cloud(rng, points, 1.2f, true));
    split.labels.push_back(0);  // whole-cloud label is meaningless here
  }
  return out;
}

Image render_occupancy(const PointCloud& cloud, std::size_t size, float extent) {
  if (size == 0 || extent <= 0.0f)
    throw std::invalid_argument("raster size and extent must be positive");
  Image img;
  img.height = size;
  img.width = size;
  img.channels = 1;
  img.pixels.assign(size * size, 0.0f);

  float cell = 2.0f * extent / float(size);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    float x = cloud.xyz[i * 3], y = cloud.xyz[i * 3 + 1];
    auto col = std::int64_t(std::floor((x + extent) / cell));
    auto row = std::int64_t(std::floor((extent - y) / cell));
    if (col < 0 || row < 0 || col >= std::int64_t(size) || row >= std::int64_t(size))
      continue;
    img.pixels[std::size_t(row) * size + std::size_t(col)] = 1.0f;
  }
  return img;
}

TextFeatureBank synthetic_text_bank(const std::vector<std::string>& class_names,
                                    std::size_t width, std::uint64_t seed) {
  if (class_names.empty() || width == 0)
    throw std::invalid_argument("need at least one class and width >= 1");

  Rng rng(seed);
  std::vector<float> rows(class_names.size() * width);
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    double norm_sq = 0.0;
    std::vector<double> v(width);
    for (auto& x : v) {
      x = rng.normal();
      norm_sq += x * x;
    }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t j = 0; j < width; ++j)
      rows[c * width + j] = static_cast<float>(v[j] * inv);
  }

  TextFeatureBank bank;
  bank.labels = class_names;
  bank.features = TensorF::from_data({class_names.size(), width}, rows);
  return bank;
}

}  // namespace epcl
