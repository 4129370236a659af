#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

// Dense row-major tensor with define-by-run reverse-mode autodiff. Templated
// on the scalar type: float is the training/inference precision, double exists
// for finite-difference gradient checks. Ops record parents plus a backward
// closure only when some input requires grad and autograd is enabled, so a
// frozen parameter (requires_grad=false) never accumulates gradient and an
// inference pass builds no tape.

namespace epcl {

// Process-wide autograd switch; single-threaded by design.
bool autograd_enabled();

// RAII scope that disables tape construction (evaluation mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

template <typename T>
struct Node {
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until backward writes it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad/value, accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, T fill, bool requires_grad = false);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<T> data,
                          bool requires_grad = false);
  static Tensor scalar(T v);

  bool defined() const { return n_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return n_->shape; }
  std::size_t size() const { return n_->value.size(); }
  std::size_t rank() const { return n_->shape.size(); }
  // Rank-1 tensors count as one row; rank-2 as [rows x cols].
  std::size_t rows() const { return rank() == 2 ? n_->shape[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? n_->shape[1] : n_->shape[0]; }

  const std::vector<T>& data() const { return n_->value; }
  // Mutable access is for initialization and optimizer updates, never for
  // tensors already consumed by an op.
  std::vector<T>& data_mut() { return n_->value; }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }
  bool has_grad() const { return !n_->grad.empty(); }
  const std::vector<T>& grad() const { return n_->grad; }
  void zero_grad() { n_->grad.clear(); }

  T item() const;  // requires size()==1

  // Reverse-mode sweep from a scalar; populates grads of every reachable
  // tensor whose requires_grad is set. Throws std::invalid_argument when this
  // tensor is not scalar.
  void backward();

  // Internal: ops construct results directly on nodes.
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
  const std::shared_ptr<Node>& node() const { return n_; }

 private:
  std::shared_ptr<Node> n_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace epcl
