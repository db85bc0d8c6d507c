#pragma once

#include <vector>

#include "reffakd/tensor.hpp"

namespace reffakd::ops {

// Differentiable ops. Each one validates shapes (std::invalid_argument on
// mismatch), runs the forward kernel, and records a backward closure when
// gradients are enabled and some input requires them. Gradients accumulate
// into the inputs' grad buffers.

/// x [n,cin,h,w], w [cout,cin,k,k] (square kernel), b [cout] or null.
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride, int pad);
/// x [n,cin,h,w], w [cin,cout,k,k], b [cout] or null.
/// out extent = (in - 1)*stride - 2*pad + k + outpad.
TensorPtr conv_transpose2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                           int pad, int outpad);
/// x [n,fin], w [fout,fin], b [fout] or null.
TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
TensorPtr relu(const TensorPtr& x);
TensorPtr sigmoid(const TensorPtr& x);
/// Ties take the first position in scan order; padded positions never win.
TensorPtr maxpool2d(const TensorPtr& x, int kernel, int stride, int pad = 0);
/// Padded positions count as zeros in the window average.
TensorPtr avgpool2d(const TensorPtr& x, int kernel, int stride, int pad = 0);
/// Training mode normalizes with batch statistics (biased variance) and
/// updates the running buffers in place; eval mode reads them.
TensorPtr batchnorm2d(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                      std::vector<double>& running_mean, std::vector<double>& running_var,
                      bool training, double momentum = 0.1, double eps = 1e-5);
/// [n, ...] -> [n, product of the rest].
TensorPtr flatten(const TensorPtr& x);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& x, double factor);
/// Sum of all elements, as a scalar.
TensorPtr sum(const TensorPtr& x);

/// Row-wise softmax of logits/temperature with max subtraction.
TensorPtr softmax_t(const TensorPtr& logits, double temperature);
/// Row-wise log softmax of logits/temperature with max subtraction.
TensorPtr log_softmax_t(const TensorPtr& logits, double temperature);

/// Mean over the batch of -log softmax(logits)[label].
TensorPtr cross_entropy_loss(const TensorPtr& logits, const std::vector<int>& hard_labels);
/// Mean over the batch of sum_j t_j*(ln t_j - lp_j) with 0*ln 0 := 0.
/// Target rows must sum to 1 within 1e-6; the target is treated as constant.
TensorPtr kl_div_loss(const TensorPtr& target_probs, const TensorPtr& pred_log_probs);
/// Mean of squared elementwise differences; target is treated as constant.
TensorPtr mse_loss(const TensorPtr& pred, const TensorPtr& target);

}  // namespace reffakd::ops
