#include "reffakd/ops.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include "reffakd/kernels.hpp"

namespace reffakd::ops {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

bool wants_grad(const TensorPtr& t) { return t && t->requires_grad; }

}  // namespace

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride, int pad) {
  require(x && w, "conv2d: null tensor");
  require(x->rank() == 4, "conv2d: input must be [n,c,h,w], got " + shape_str(x->shape));
  require(w->rank() == 4 && w->dim(2) == w->dim(3),
          "conv2d: weight must be [cout,cin,k,k] with square kernel, got " + shape_str(w->shape));
  require(w->dim(1) == x->dim(1), "conv2d: weight expects " + std::to_string(w->dim(1)) +
                                      " input channels, input has " + std::to_string(x->dim(1)));
  if (b)
    require(b->rank() == 1 && b->dim(0) == w->dim(0),
            "conv2d: bias must be [cout], got " + shape_str(b->shape));
  const auto d = kern::conv2d_dims(x->dim(0), x->dim(1), x->dim(2), x->dim(3), w->dim(0),
                                   w->dim(2), stride, pad);
  auto y = make_tensor({d.n, d.cout, d.hout, d.wout});
  kern::conv2d_forward(x->data.data(), w->data.data(), b ? b->data.data() : nullptr,
                       y->data.data(), d);
  if (grad_enabled() && (wants_grad(x) || wants_grad(w) || wants_grad(b))) {
    y->requires_grad = true;
    y->parents = {x, w};
    if (b) y->parents.push_back(b);
    Tensor* yp = y.get();
    y->backward_fn = [x, w, b, yp, d]() {
      if (x->requires_grad) {
        x->ensure_grad();
        kern::conv2d_backward_input(yp->grad.data(), w->data.data(), x->grad.data(), d);
      }
      if (w->requires_grad) {
        w->ensure_grad();
        kern::conv2d_backward_weight(x->data.data(), yp->grad.data(), w->grad.data(), d);
      }
      if (b && b->requires_grad) {
        b->ensure_grad();
        kern::conv2d_backward_bias(yp->grad.data(), b->grad.data(), d);
      }
    };
  }
  return y;
}

TensorPtr conv_transpose2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                           int pad, int outpad) {
  require(x && w, "conv_transpose2d: null tensor");
  require(x->rank() == 4, "conv_transpose2d: input must be [n,c,h,w], got " + shape_str(x->shape));
  require(w->rank() == 4 && w->dim(2) == w->dim(3),
          "conv_transpose2d: weight must be [cin,cout,k,k] with square kernel, got " +
              shape_str(w->shape));
  require(w->dim(0) == x->dim(1),
          "conv_transpose2d: weight expects " + std::to_string(w->dim(0)) +
              " input channels, input has " + std::to_string(x->dim(1)));
  if (b)
    require(b->rank() == 1 && b->dim(0) == w->dim(1),
            "conv_transpose2d: bias must be [cout], got " + shape_str(b->shape));
  const auto d = kern::conv_transpose2d_dims(x->dim(0), x->dim(1), x->dim(2), x->dim(3), w->dim(1),
                                             w->dim(2), stride, pad, outpad);
  auto y = make_tensor({d.n, d.cout, d.hout, d.wout});
  kern::conv_transpose2d_forward(x->data.data(), w->data.data(), b ? b->data.data() : nullptr,
                                 y->data.data(), d);
  if (grad_enabled() && (wants_grad(x) || wants_grad(w) || wants_grad(b))) {
    y->requires_grad = true;
    y->parents = {x, w};
    if (b) y->parents.push_back(b);
    Tensor* yp = y.get();
    y->backward_fn = [x, w, b, yp, d]() {
      if (x->requires_grad) {
        x->ensure_grad();
        kern::conv_transpose2d_backward_input(yp->grad.data(), w->data.data(), x->grad.data(), d);
      }
      if (w->requires_grad) {
        w->ensure_grad();
        kern::conv_transpose2d_backward_weight(x->data.data(), yp->grad.data(), w->grad.data(), d);
      }
      if (b && b->requires_grad) {
        b->ensure_grad();
        kern::conv_transpose2d_backward_bias(yp->grad.data(), b->grad.data(), d);
      }
    };
  }
  return y;
}

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  require(x && w, "linear: null tensor");
  require(x->rank() == 2, "linear: input must be [n,features], got " + shape_str(x->shape));
  require(w->rank() == 2, "linear: weight must be [out,in], got " + shape_str(w->shape));
  require(w->dim(1) == x->dim(1), "linear: weight expects " + std::to_string(w->dim(1)) +
                                      " features, input has " + std::to_string(x->dim(1)));
  if (b)
    require(b->rank() == 1 && b->dim(0) == w->dim(0),
            "linear: bias must be [out], got " + shape_str(b->shape));
  const int n = x->dim(0), fin = x->dim(1), fout = w->dim(0);
  auto y = make_tensor({n, fout});
  kern::linear_forward(x->data.data(), w->data.data(), b ? b->data.data() : nullptr,
                       y->data.data(), n, fin, fout);
  if (grad_enabled() && (wants_grad(x) || wants_grad(w) || wants_grad(b))) {
    y->requires_grad = true;
    y->parents = {x, w};
    if (b) y->parents.push_back(b);
    Tensor* yp = y.get();
    y->backward_fn = [x, w, b, yp, n, fin, fout]() {
      if (x->requires_grad) {
        x->ensure_grad();
        kern::linear_backward_input(yp->grad.data(), w->data.data(), x->grad.data(), n, fin, fout);
      }
      if (w->requires_grad) {
        w->ensure_grad();
        kern::linear_backward_weight(x->data.data(), yp->grad.data(), w->grad.data(), n, fin,
                                     fout);
      }
      if (b && b->requires_grad) {
        b->ensure_grad();
        kern::linear_backward_bias(yp->grad.data(), b->grad.data(), n, fout);
      }
    };
  }
  return y;
}

TensorPtr relu(const TensorPtr& x) {
  require(static_cast<bool>(x), "relu: null tensor");
  auto y = make_tensor(x->shape);
  kern::relu_forward(x->data.data(), y->data.data(), x->numel());
  if (grad_enabled() && x->requires_grad) {
    y->requires_grad = true;
    y->parents = {x};
    Tensor* yp = y.get();
    y->backward_fn = [x, yp]() {
      x->ensure_grad();
      kern::relu_backward(x->data.data(), yp->grad.data(), x->grad.data(), x->numel());
    };
  }
  return y;
}

TensorPtr sigmoid(const TensorPtr& x) {
  require(static_cast<bool>(x), "sigmoid: null tensor");
  auto y = make_tensor(x->shape);
  kern::sigmoid_forward(x->data.data(), y->data.data(), x->numel());
  if (grad_enabled() && x->requires_grad) {
    y->requires_grad = true;
    y->parents = {x};
    Tensor* yp = y.get();
    y->backward_fn = [x, yp]() {
      x->ensure_grad();
      kern::sigmoid_backward(yp->data.data(), yp->grad.data(), x->grad.data(), x->numel());
    };
  }
  return y;
}

namespace {

void check_pool(const char* who, const TensorPtr& x, int kernel, int stride, int pad) {
  require(static_cast<bool>(x), std::string(who) + ": null tensor");
  require(x->rank() == 4,
          std::string(who) + ": input must be [n,c,h,w], got " + shape_str(x->shape));
  require(kernel >= 1 && stride >= 1, std::string(who) + ": kernel and stride must be >= 1");
  require(pad >= 0 && 2 * pad <= kernel,
          std::string(who) + ": pad must satisfy 0 <= 2*pad <= kernel");
  const int h = x->dim(2), w = x->dim(3);
  require(h + 2 * pad >= kernel && w + 2 * pad >= kernel,
          std::string(who) + ": window " + std::to_string(kernel) + " exceeds padded input " +
              std::to_string(h) + "x" + std::to_string(w));
}

}  // namespace

TensorPtr maxpool2d(const TensorPtr& x, int kernel, int stride, int pad) {
  check_pool("maxpool2d", x, kernel, stride, pad);
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const int ho = (h + 2 * pad - kernel) / stride + 1;
  const int wo = (w + 2 * pad - kernel) / stride + 1;
  auto y = make_tensor({n, c, ho, wo});
  auto argmax = std::make_shared<std::vector<int32_t>>(y->data.size());
  kern::maxpool2d_forward(x->data.data(), y->data.data(), argmax->data(), n, c, h, w, kernel,
                          stride, pad, ho, wo);
  if (grad_enabled() && x->requires_grad) {
    y->requires_grad = true;
    y->parents = {x};
    Tensor* yp = y.get();
    y->backward_fn = [x, yp, argmax, n, c, h, w, kernel, stride, pad, ho, wo]() {
      x->ensure_grad();
      kern::maxpool2d_backward(yp->grad.data(), argmax->data(), x->grad.data(), n, c, h, w,
                               kernel, stride, pad, ho, wo);
    };
  }
  return y;
}

TensorPtr avgpool2d(const TensorPtr& x, int kernel, int stride, int pad) {
  check_pool("avgpool2d", x, kernel, stride, pad);
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const int ho = (h + 2 * pad - kernel) / stride + 1;
  const int wo = (w + 2 * pad - kernel) / stride + 1;
  auto y = make_tensor({n, c, ho, wo});
  kern::avgpool2d_forward(x->data.data(), y->data.data(), n, c, h, w, kernel, stride, pad, ho,
                          wo);
  if (grad_enabled() && x->requires_grad) {
    y->requires_grad = true;
    y->parents = {x};
    Tensor* yp = y.get();
    y->backward_fn = [x, yp, n, c, h, w, kernel, stride, pad, ho, wo]() {
      x->ensure_grad();
      kern::avgpool2d_backward(yp->grad.data(), x->grad.data(), n, c, h, w, kernel, stride, pad,
                               ho, wo);
    };
  }
  return y;
}

TensorPtr batchnorm2d(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                      std::vector<double>& running_mean, std::vector<double>& running_var,
                      bool training, double momentum, double eps) {
  require(x && gamma && beta, "batchnorm2d: null tensor");
  require(x->rank() == 4, "batchnorm2d: input must be [n,c,h,w], got " + shape_str(x->shape));
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  require(gamma->rank() == 1 && gamma->dim(0) == c,
          "batchnorm2d: gamma must be [" + std::to_string(c) + "], got " + shape_str(gamma->shape));
  require(beta->rank() == 1 && beta->dim(0) == c,
          "batchnorm2d: beta must be [" + std::to_string(c) + "], got " + shape_str(beta->shape));
  require(running_mean.size() == static_cast<size_t>(c) &&
              running_var.size() == static_cast<size_t>(c),
          "batchnorm2d: running buffers must have one entry per channel");
  require(momentum >= 0.0 && momentum <= 1.0, "batchnorm2d: momentum must be in [0,1]");
  require(eps > 0.0, "batchnorm2d: eps must be positive");
  auto y = make_tensor(x->shape);
  const bool rec = grad_enabled() && (wants_grad(x) || wants_grad(gamma) || wants_grad(beta));
  if (training) {
    auto xhat = std::make_shared<std::vector<double>>(x->data.size());
    auto var = std::make_shared<std::vector<double>>(static_cast<size_t>(c));
    std::vector<double> mean(static_cast<size_t>(c));
    kern::batchnorm2d_forward_train(x->data.data(), gamma->data.data(), beta->data.data(),
                                    y->data.data(), xhat->data(), mean.data(), var->data(),
                                    running_mean.data(), running_var.data(), n, c, h, w, momentum,
                                    eps);
    if (rec) {
      y->requires_grad = true;
      y->parents = {x, gamma, beta};
      Tensor* yp = y.get();
      y->backward_fn = [x, gamma, beta, yp, xhat, var, n, c, h, w, eps]() {
        // The kernel fills all three grads at once; route unused ones into
        // scratch space.
        std::vector<double> scratch_x, scratch_g, scratch_b;
        double* dx = nullptr;
        double* dg = nullptr;
        double* db = nullptr;
        if (x->requires_grad) {
          x->ensure_grad();
          dx = x->grad.data();
        } else {
          scratch_x.assign(x->data.size(), 0.0);
          dx = scratch_x.data();
        }
        if (gamma->requires_grad) {
          gamma->ensure_grad();
          dg = gamma->grad.data();
        } else {
          scratch_g.assign(static_cast<size_t>(c), 0.0);
          dg = scratch_g.data();
        }
        if (beta->requires_grad) {
          beta->ensure_grad();
          db = beta->grad.data();
        } else {
          scratch_b.assign(static_cast<size_t>(c), 0.0);
          db = scratch_b.data();
        }
        kern::batchnorm2d_backward(yp->grad.data(), xhat->data(), gamma->data.data(), var->data(),
                                   dx, dg, db, n, c, h, w, eps);
      };
    }
  } else {
    kern::batchnorm2d_forward_eval(x->data.data(), gamma->data.data(), beta->data.data(),
                                   running_mean.data(), running_var.data(), y->data.data(), n, c,
                                   h, w, eps);
    if (rec) {
      // Eval mode treats the running statistics as constants, so the map is
      // an affine per-channel transform.
      auto rm = std::make_shared<std::vector<double>>(running_mean);
      auto rv = std::make_shared<std::vector<double>>(running_var);
      y->requires_grad = true;
      y->parents = {x, gamma, beta};
      Tensor* yp = y.get();
      y->backward_fn = [x, gamma, beta, yp, rm, rv, n, c, h, w, eps]() {
        const int64_t plane = static_cast<int64_t>(h) * w;
        for (int cc = 0; cc < c; ++cc) {
          const double invstd = 1.0 / std::sqrt((*rv)[cc] + eps);
          const double m = (*rm)[cc];
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int nn = 0; nn < n; ++nn) {
            const int64_t base = (static_cast<int64_t>(nn) * c + cc) * plane;
            for (int64_t i = 0; i < plane; ++i) {
              const double dy = yp->grad[base + i];
              sum_dy += dy;
              sum_dy_xhat += dy * ((x->data[base + i] - m) * invstd);
            }
          }
          if (gamma->requires_grad) {
            gamma->ensure_grad();
            gamma->grad[cc] += sum_dy_xhat;
          }
          if (beta->requires_grad) {
            beta->ensure_grad();
            beta->grad[cc] += sum_dy;
          }
          if (x->requires_grad) {
            x->ensure_grad();
            const double scale = gamma->data[cc] * invstd;
            for (int nn = 0; nn < n; ++nn) {
              const int64_t base = (static_cast<int64_t>(nn) * c + cc) * plane;
              for (int64_t i = 0; i < plane; ++i) x->grad[base + i] += scale * yp->grad[base + i];
            }
          }
        }
      };
    }
  }
  return y;
}

TensorPtr flatten(const TensorPtr& x) {
  require(static_cast<bool>(x), "flatten: null tensor");
  require(x->rank() >= 2, "flatten: input must have rank >= 2, got " + shape_str(x->shape));
  int64_t rest = 1;
  for (int i = 1; i < x->rank(); ++i) rest *= x->dim(i);
  auto y = make_tensor({x->dim(0), static_cast<int>(rest)}, x->data);
  if (grad_enabled() && x->requires_grad) {
    y->requires_grad = true;
    y->parents = {x};
    Tensor* yp = y.get();
    y->backward_fn = [x, yp]() {
      x->ensure_grad();
      for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += yp->grad[i];
    };
  }
  return y;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  require(a && b, "add: null tensor");
  require(a->shape == b->shape,
          "add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto y = make_tensor(a->shape);
  for (size_t i = 0; i < y->data.size(); ++i) y->data[i] = a->data[i] + b->data[i];
  if (grad_enabled() && (wants_grad(a) || wants_grad(b))) {
    y->requires_grad = true;
    y->parents = {a, b};
    Tensor* yp = y.get();
    y->backward_fn = [a, b, yp]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += yp->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += yp->grad[i];
      }
    };
  }
  return y;
}

TensorPtr scale(const TensorPtr& x, double factor) {
  require(static_cast<bool>(x), "scale: null tensor");
  auto y = make_tensor(x->shape);
  for (size_t i = 0; i < y->data.size(); ++i) y->data[i] = factor * x->data[i];
  if (grad_enabled() && x->requires_grad) {
    y->requires_grad = true;
    y->parents = {x};
    Tensor* yp = y.get();
    y->backward_fn = [x, yp, factor]() {
      x->ensure_grad();
      for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += factor * yp->grad[i];
    };
  }
  return y;
}

TensorPtr sum(const TensorPtr& x) {
  require(static_cast<bool>(x), "sum: null tensor");
  double acc = 0.0;
  for (double v : x->data) acc += v;
  auto y = make_tensor({1}, std::vector<double>{acc});
  if (grad_enabled() && x->requires_grad) {
    y->requires_grad = true;
    y->parents = {x};
    Tensor* yp = y.get();
    y->backward_fn = [x, yp]() {
      x->ensure_grad();
      const double g = yp->grad[0];
      for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
    };
  }
  return y;
}

TensorPtr softmax_t(const TensorPtr& logits, double temperature) {
  require(static_cast<bool>(logits), "softmax_t: null tensor");
  require(logits->rank() == 2,
          "softmax_t: logits must be [batch,c], got " + shape_str(logits->shape));
  require(temperature > 0.0, "softmax_t: temperature must be positive");
  const int n = logits->dim(0), c = logits->dim(1);
  auto y = make_tensor(logits->shape);
  kern::row_softmax(logits->data.data(), y->data.data(), n, c, temperature);
  if (grad_enabled() && logits->requires_grad) {
    y->requires_grad = true;
    y->parents = {logits};
    Tensor* yp = y.get();
    y->backward_fn = [logits, yp, n, c, temperature]() {
      logits->ensure_grad();
      for (int r = 0; r < n; ++r) {
        const double* p = yp->data.data() + static_cast<int64_t>(r) * c;
        const double* dy = yp->grad.data() + static_cast<int64_t>(r) * c;
        double* dx = logits->grad.data() + static_cast<int64_t>(r) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += dy[j] * p[j];
        for (int j = 0; j < c; ++j) dx[j] += p[j] * (dy[j] - dot) / temperature;
      }
    };
  }
  return y;
}

TensorPtr log_softmax_t(const TensorPtr& logits, double temperature) {
  require(static_cast<bool>(logits), "log_softmax_t: null tensor");
  require(logits->rank() == 2,
          "log_softmax_t: logits must be [batch,c], got " + shape_str(logits->shape));
  require(temperature > 0.0, "log_softmax_t: temperature must be positive");
  const int n = logits->dim(0), c = logits->dim(1);
  auto y = make_tensor(logits->shape);
  for (int r = 0; r < n; ++r) {
    const double* x = logits->data.data() + static_cast<int64_t>(r) * c;
    double* out = y->data.data() + static_cast<int64_t>(r) * c;
    double m = x[0];
    for (int j = 1; j < c; ++j)
      if (x[j] > m) m = x[j];
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      out[j] = (x[j] - m) / temperature;
      s += std::exp(out[j]);
    }
    const double ls = std::log(s);
    for (int j = 0; j < c; ++j) out[j] -= ls;
  }
  if (grad_enabled() && logits->requires_grad) {
    y->requires_grad = true;
    y->parents = {logits};
    Tensor* yp = y.get();
    y->backward_fn = [logits, yp, n, c, temperature]() {
      logits->ensure_grad();
      for (int r = 0; r < n; ++r) {
        const double* lp = yp->data.data() + static_cast<int64_t>(r) * c;
        const double* dy = yp->grad.data() + static_cast<int64_t>(r) * c;
        double* dx = logits->grad.data() + static_cast<int64_t>(r) * c;
        double sum_dy = 0.0;
        for (int j = 0; j < c; ++j) sum_dy += dy[j];
        for (int j = 0; j < c; ++j) dx[j] += (dy[j] - std::exp(lp[j]) * sum_dy) / temperature;
      }
    };
  }
  return y;
}

TensorPtr cross_entropy_loss(const TensorPtr& logits, const std::vector<int>& hard_labels) {
  require(static_cast<bool>(logits), "cross_entropy_loss: null tensor");
  require(logits->rank() == 2,
          "cross_entropy_loss: logits must be [batch,c], got " + shape_str(logits->shape));
  const int n = logits->dim(0), c = logits->dim(1);
  require(static_cast<int>(hard_labels.size()) == n,
          "cross_entropy_loss: " + std::to_string(hard_labels.size()) + " labels for batch " +
              std::to_string(n));
  for (int label : hard_labels)
    require(label >= 0 && label < c,
            "cross_entropy_loss: label " + std::to_string(label) + " out of range [0," +
                std::to_string(c) + ")");
  auto probs = std::make_shared<std::vector<double>>(logits->data.size());
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    const double* x = logits->data.data() + static_cast<int64_t>(r) * c;
    double* p = probs->data() + static_cast<int64_t>(r) * c;
    double m = x[0];
    for (int j = 1; j < c; ++j)
      if (x[j] > m) m = x[j];
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      p[j] = std::exp(x[j] - m);
      s += p[j];
    }
    const double ls = std::log(s);
    for (int j = 0; j < c; ++j) p[j] /= s;
    acc += ls - (x[hard_labels[r]] - m);
  }
  auto y = make_tensor({1}, std::vector<double>{acc / n});
  if (grad_enabled() && logits->requires_grad) {
    y->requires_grad = true;
    y->parents = {logits};
    Tensor* yp = y.get();
    auto labels = std::make_shared<std::vector<int>>(hard_labels);
    y->backward_fn = [logits, yp, probs, labels, n, c]() {
      logits->ensure_grad();
      const double g = yp->grad[0] / n;
      for (int r = 0; r < n; ++r) {
        const double* p = probs->data() + static_cast<int64_t>(r) * c;
        double* dx = logits->grad.data() + static_cast<int64_t>(r) * c;
        const int label = (*labels)[r];
        for (int j = 0; j < c; ++j) dx[j] += g * (p[j] - (j == label ? 1.0 : 0.0));
      }
    };
  }
  return y;
}

TensorPtr kl_div_loss(const TensorPtr& target_probs, const TensorPtr& pred_log_probs) {
  require(target_probs && pred_log_probs, "kl_div_loss: null tensor");
  require(target_probs->rank() == 2 && pred_log_probs->rank() == 2,
          "kl_div_loss: inputs must be [batch,c]");
  require(target_probs->shape == pred_log_probs->shape,
          "kl_div_loss: shape mismatch " + shape_str(target_probs->shape) + " vs " +
              shape_str(pred_log_probs->shape));
  const int n = target_probs->dim(0), c = target_probs->dim(1);
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    const double* t = target_probs->data.data() + static_cast<int64_t>(r) * c;
    const double* lp = pred_log_probs->data.data() + static_cast<int64_t>(r) * c;
    double row_sum = 0.0;
    for (int j = 0; j < c; ++j) {
      require(t[j] >= 0.0, "kl_div_loss: target row " + std::to_string(r) +
                               " has a negative entry");
      row_sum += t[j];
    }
    require(std::abs(row_sum - 1.0) <= 1e-6, "kl_div_loss: target row " + std::to_string(r) +
                                                 " sums to " + std::to_string(row_sum));
    for (int j = 0; j < c; ++j) {
      if (t[j] > 0.0) acc += t[j] * (std::log(t[j]) - lp[j]);
    }
  }
  double loss = acc / n;
  // Rounding can leave a tiny negative residue when the distributions match;
  // the quantity itself is nonnegative.
  if (loss < 0.0) loss = 0.0;
  auto y = make_tensor({1}, std::vector<double>{loss});
  if (grad_enabled() && pred_log_probs->requires_grad) {
    y->requires_grad = true;
    y->parents = {pred_log_probs, target_probs};
    Tensor* yp = y.get();
    y->backward_fn = [target_probs, pred_log_probs, yp, n, c]() {
      if (!pred_log_probs->requires_grad) return;
      pred_log_probs->ensure_grad();
      const double g = yp->grad[0] / n;
      for (int64_t i = 0; i < static_cast<int64_t>(n) * c; ++i)
        pred_log_probs->grad[i] += -g * target_probs->data[i];
    };
  }
  return y;
}

TensorPtr mse_loss(const TensorPtr& pred, const TensorPtr& target) {
  require(pred && target, "mse_loss: null tensor");
  require(pred->shape == target->shape, "mse_loss: shape mismatch " + shape_str(pred->shape) +
                                            " vs " + shape_str(target->shape));
  const int64_t count = pred->numel();
  double acc = 0.0;
  for (int64_t i = 0; i < count; ++i) {
    const double dv = pred->data[i] - target->data[i];
    acc += dv * dv;
  }
  auto y = make_tensor({1}, std::vector<double>{acc / count});
  if (grad_enabled() && pred->requires_grad) {
    y->requires_grad = true;
    y->parents = {pred, target};
    Tensor* yp = y.get();
    y->backward_fn = [pred, target, yp, count]() {
      if (!pred->requires_grad) return;
      pred->ensure_grad();
      const double g = yp->grad[0] * 2.0 / count;
      for (int64_t i = 0; i < count; ++i)
        pred->grad[i] += g * (pred->data[i] - target->data[i]);
    };
  }
  return y;
}

}  // namespace reffakd::ops
