#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "epcl/tensor.hpp"

// Central finite-difference gradient checking in float64. The forward functor
// rebuilds the graph from the checked parameters on every call and returns the
// scalar loss; any internal randomness must be re-seeded inside the functor so
// repeated calls see identical draws.

namespace epcl::testing {

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// rel err per element: |analytic - fd| / max(1, |analytic|, |fd|).
template <typename Forward>
GradCheck check_gradients(std::vector<TensorD*> params, Forward forward, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  auto loss = forward();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params)
    analytic.push_back(p->has_grad() ? p->grad() : std::vector<double>(p->size(), 0.0));
  GradCheck r;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& v = params[pi]->data_mut();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double lp = forward().item();
      v[i] = orig - h;
      const double lm = forward().item();
      v[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[pi][i];
      const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      r.max_rel_err = std::max(r.max_rel_err, rel);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace epcl::testing
