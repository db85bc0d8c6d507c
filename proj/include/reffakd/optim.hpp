#pragma once

#include <vector>

#include "reffakd/tensor.hpp"

namespace reffakd {

/// SGD with momentum, weight decay, and a step schedule:
///   effective_lr = lr * decay_factor^(number of decay_epochs <= epoch)
///   v <- momentum*v + grad + weight_decay*param
///   param <- param - effective_lr*v
/// Gradients are left untouched; the caller zeroes them between steps.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<TensorPtr> params, double lr, double momentum, double weight_decay,
               double decay_factor = 1.0, std::vector<int> decay_epochs = {});

  void step(int epoch);
  void zero_grad();
  double effective_lr(int epoch) const;

 private:
  std::vector<TensorPtr> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  double momentum_;
  double weight_decay_;
  double decay_factor_;
  std::vector<int> decay_epochs_;
};

}  // namespace reffakd
