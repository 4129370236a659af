#pragma once

#include <cmath>
#include <cstddef>

#include "epcl/rng.hpp"
#include "epcl/tensor.hpp"

// Shared parameter initialization: fan-in scaled normals, sqrt(2/fan_in)
// ahead of relu and sqrt(1/fan_in) for plain linear maps, small-normal (0.02)
// for embedding tables. Draw order is the registration order of each module,
// which makes initialization bitwise-reproducible for a given seed.

namespace epcl {

inline TensorF normal_matrix(Rng& rng, std::size_t r, std::size_t c, double stddev) {
  std::vector<float> v(r * c);
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, stddev));
  return TensorF::from_data({r, c}, v);
}

inline double relu_std(std::size_t fan_in) {
  return std::sqrt(2.0 / static_cast<double>(fan_in));
}

inline double linear_std(std::size_t fan_in) {
  return std::sqrt(1.0 / static_cast<double>(fan_in));
}

}  // namespace epcl
