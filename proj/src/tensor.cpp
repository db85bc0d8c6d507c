#include "reffakd/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace reffakd {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

static void validate_shape(const std::vector<int>& s) {
  for (int e : s) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(s));
  }
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  validate_shape(shape);
  data.assign(static_cast<size_t>(shape_numel(shape)), fill);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  validate_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

double Tensor::scalar() const {
  if (!is_scalar()) throw std::invalid_argument("tensor is not scalar: shape " + shape_str(shape));
  return data[0];
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad.empty()) grad.assign(data.size(), 0.0);
}

TensorPtr make_tensor(std::vector<int> shape, double fill) {
  return std::make_shared<Tensor>(std::move(shape), fill);
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data) {
  return std::make_shared<Tensor>(std::move(shape), std::move(data));
}

TensorPtr make_param(std::vector<int> shape, std::vector<double> data) {
  auto t = make_tensor(std::move(shape), std::move(data));
  t->requires_grad = true;
  return t;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const TensorPtr& loss) {
  if (!loss) throw std::invalid_argument("backward: null tensor");
  if (!loss->is_scalar()) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss->shape));
  }

  // Post-order DFS over the recorded graph.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> visited;
  std::vector<std::pair<Tensor*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Tensor* p = node->parents[idx].get();
      ++idx;
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch per sweep; leaves keep accumulating.
  for (Tensor* t : order) {
    if (!t->is_leaf()) {
      t->grad.assign(t->data.size(), 0.0);
    }
  }
  loss->ensure_grad();
  loss->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor* t = *it;
    if (t->backward_fn && t->requires_grad) t->backward_fn();
  }
}

}  // namespace reffakd
