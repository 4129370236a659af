#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "epcl/heads.hpp"
#include "epcl/tokenize.hpp"
#include "epcl/train.hpp"

// Procedural stand-in datasets. Four shape families cycle by class id
// (sphere, cube, cylinder, plane), growing in scale on each repeat, so any
// class count is supported. All sampling flows through one seeded Rng in a
// fixed order: a fixed seed reproduces every coordinate bit-for-bit.

namespace epcl {

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t per_class = 100;
  std::size_t points = 512;
  float train_fraction = 0.8f;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
};

// Classification clouds, `per_class` per class, split per `train_fraction`
// (train count rounded to nearest). Requires classes >= 2.
SyntheticData gen_synthetic(const SyntheticSpec& spec);

// Segmentation clouds: flat planes whose per-point label is the sign half of
// the final x coordinate (boundary exactly at x = 0). Class names are
// {"left", "right"}.
SyntheticData gen_plane_segmentation(std::size_t count, std::size_t points,
                                     float train_fraction, std::uint64_t seed);

// Orthographic occupancy render: a size x size grayscale image over
// [-extent, extent]^2 in x/y; a pixel is 1.0 when at least one point lands in
// its cell, else 0.0. Points outside the extent are ignored. Row 0 is the top
// (largest y).
Image render_occupancy(const PointCloud& cloud, std::size_t size, float extent);

// Unit-norm pseudo text feature per class name, standing in for a real text
// encoder at desk scale.
TextFeatureBank synthetic_text_bank(const std::vector<std::string>& class_names,
                                    std::size_t width, std::uint64_t seed);

}  // namespace epcl
