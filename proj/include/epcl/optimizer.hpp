#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "epcl/weights.hpp"

// AdamW with decoupled weight decay over a container's trainable partition.
// Moment buffers exist only for trainable tensors, captured at construction
// (after the freeze policy is applied); frozen tensors are never touched even
// if a gradient was erroneously attached to them.

namespace epcl {

struct AdamWConfig {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.04f;
};

class AdamW {
 public:
  AdamW(WeightContainer& c, AdamWConfig cfg);

  // One update: theta <- theta - lr*(m_hat/(sqrt(v_hat)+eps) + wd*theta).
  // A trainable tensor without a gradient violates the training contract and
  // raises std::logic_error naming it.
  void step();

  void zero_grads();
  void set_lr(float lr) { cfg_.lr = lr; }
  float lr() const { return cfg_.lr; }
  std::size_t steps_taken() const { return t_; }
  const std::vector<std::string>& trainable_names() const { return names_; }

 private:
  WeightContainer& container_;
  AdamWConfig cfg_;
  std::vector<std::string> names_;
  std::vector<std::vector<float>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace epcl
