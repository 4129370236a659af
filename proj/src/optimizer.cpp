#include "epcl/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "epcl/kernels.hpp"

namespace epcl {

AdamW::AdamW(WeightContainer& c, AdamWConfig cfg) : container_(c), cfg_(cfg) {
  for (const auto& name : c.names()) {
    if (c.is_frozen(name)) continue;
    names_.push_back(name);
    std::size_t n = c.get(name).size();
    m_.emplace_back(n, 0.0f);
    v_.emplace_back(n, 0.0f);
  }
}

void AdamW::step() {
  ++t_;
  kernels::AdamHyper h;
  h.lr = cfg_.lr;
  h.beta1 = cfg_.beta1;
  h.beta2 = cfg_.beta2;
  h.eps = cfg_.eps;
  h.weight_decay = cfg_.weight_decay;
  h.inv_bias1 = 1.0f / (1.0f - std::pow(cfg_.beta1, static_cast<float>(t_)));
  h.inv_bias2 = 1.0f / (1.0f - std::pow(cfg_.beta2, static_cast<float>(t_)));

  for (std::size_t i = 0; i < names_.size(); ++i) {
    // The frozen partition wins over the construction-time snapshot: a tensor
    // frozen after the optimizer was built is never touched, gradient or not.
    if (container_.is_frozen(names_[i])) continue;
    TensorF p = container_.get(names_[i]);
    if (!p.has_grad())
      throw std::logic_error("trainable tensor '" + names_[i] +
                             "' has no gradient at optimizer step " + std::to_string(t_));
    kernels::adamw_update(p.data_mut().data(), p.grad().data(), m_[i].data(), v_[i].data(),
                          p.size(), h);
  }
}

void AdamW::zero_grads() {
  for (const auto& name : names_) container_.get(name).zero_grad();
}

}  // namespace epcl
