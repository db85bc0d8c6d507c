#include "reffakd/optim.hpp"

#include <stdexcept>

namespace reffakd {

SgdOptimizer::SgdOptimizer(std::vector<TensorPtr> params, double lr, double momentum,
                           double weight_decay, double decay_factor,
                           std::vector<int> decay_epochs)
    : params_(std::move(params)),
      lr_(lr),
      momentum_(momentum),
      weight_decay_(weight_decay),
      decay_factor_(decay_factor),
      decay_epochs_(std::move(decay_epochs)) {
  // lr 0 is allowed: it freezes the parameters, which some callers rely on.
  if (lr_ < 0.0) throw std::invalid_argument("sgd: lr must be >= 0");
  if (momentum_ < 0.0 || momentum_ >= 1.0)
    throw std::invalid_argument("sgd: momentum must be in [0,1)");
  if (weight_decay_ < 0.0) throw std::invalid_argument("sgd: weight_decay must be >= 0");
  if (decay_factor_ <= 0.0 || decay_factor_ > 1.0)
    throw std::invalid_argument("sgd: decay_factor must be in (0,1]");
  velocity_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p) throw std::invalid_argument("sgd: null parameter");
    velocity_.emplace_back(p->data.size(), 0.0);
  }
}

double SgdOptimizer::effective_lr(int epoch) const {
  double lr = lr_;
  for (int e : decay_epochs_)
    if (e <= epoch) lr *= decay_factor_;
  return lr;
}

void SgdOptimizer::step(int epoch) {
  const double lr = effective_lr(epoch);
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    p.ensure_grad();
    std::vector<double>& v = velocity_[i];
    for (size_t j = 0; j < v.size(); ++j) {
      v[j] = momentum_ * v[j] + p.grad[j] + weight_decay_ * p.data[j];
      p.data[j] -= lr * v[j];
    }
  }
}

void SgdOptimizer::zero_grad() {
  for (const auto& p : params_) p->zero_grad();
}

}  // namespace reffakd
