#include "epcl/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace epcl {

namespace {
bool g_autograd = true;
}

bool autograd_enabled() { return g_autograd; }

NoGradGuard::NoGradGuard() : prev_(g_autograd) { g_autograd = false; }
NoGradGuard::~NoGradGuard() { g_autograd = prev_; }

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t p = 1;
  for (std::size_t d : shape) p *= d;
  return p;
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.assign(shape_product(n->shape), T(0));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::full(std::vector<std::size_t> shape, T fill, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.data_mut()) v = fill;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_data(std::vector<std::size_t> shape, std::vector<T> data,
                               bool requires_grad) {
  if (shape_product(shape) != data.size())
    throw std::invalid_argument("Tensor::from_data: shape does not match data length");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v) {
  return from_data({1}, {v}, false);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
  return n_->value[0];
}

template <typename T>
void Tensor<T>::backward() {
  if (size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  // Iterative post-order DFS; reverse post-order is reverse topological order,
  // so each node's grad is complete before its backward_fn runs.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(n_.get(), 0);
  seen.insert(n_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  n_->ensure_grad();
  n_->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace epcl
