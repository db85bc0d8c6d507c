#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace reffakd {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major tensor of 64-bit floats with an optional gradient buffer.
/// Non-leaf tensors carry the autograd edges recorded during the forward
/// pass; leaves (no parents) accumulate gradients across backward calls.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed; same length as data after
  bool requires_grad = false;

  std::vector<TensorPtr> parents;
  std::function<void()> backward_fn;  // pulls this->grad into the parents' grads

  Tensor() = default;
  Tensor(std::vector<int> s, double fill);
  Tensor(std::vector<int> s, std::vector<double> values);

  int64_t numel() const;
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool is_scalar() const { return numel() == 1; }
  double scalar() const;

  void ensure_grad();
  void zero_grad();
  bool is_leaf() const { return parents.empty(); }
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

TensorPtr make_tensor(std::vector<int> shape, double fill = 0.0);
TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data);
/// Leaf tensor with requires_grad set (a trainable parameter).
TensorPtr make_param(std::vector<int> shape, std::vector<double> data);

/// Reverse-mode sweep from a scalar loss. Parameter (leaf) gradients
/// accumulate across calls; intermediate gradients are reset each call.
void backward(const TensorPtr& loss);

/// Thread-local switch; when off, ops do not record autograd edges.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace reffakd
