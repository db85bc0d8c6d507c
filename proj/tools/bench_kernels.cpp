// Times the OpenMP kernels against their serial reference implementations
// and checks the outputs are bit-identical. Not a test binary; run by hand:
//   ./build/tools/bench_kernels [reps]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "reffakd/kernels.hpp"
#include "reffakd/rng.hpp"

using reffakd::Rng;
namespace kern = reffakd::kern;

namespace {

std::vector<double> random_vec(size_t count, Rng& rng) {
  std::vector<double> v(count);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void report(const std::string& name, double serial_ms, double parallel_ms, double diff) {
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx   max|diff| %g\n", name.c_str(), serial_ms,
              parallel_ms, serial_ms / parallel_ms, diff);
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  Rng rng(42);

  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

  {
    const auto d = kern::conv2d_dims(8, 16, 32, 32, 32, 3, 1, 1);
    const auto x = random_vec(static_cast<size_t>(d.n) * d.cin * d.hin * d.win, rng);
    const auto w = random_vec(static_cast<size_t>(d.cout) * d.cin * d.k * d.k, rng);
    const auto b = random_vec(d.cout, rng);
    std::vector<double> ys(static_cast<size_t>(d.n) * d.cout * d.hout * d.wout);
    std::vector<double> yp(ys.size());
    const double ts = time_ms(
        [&] { kern::serial::conv2d_forward(x.data(), w.data(), b.data(), ys.data(), d); }, reps);
    const double tp =
        time_ms([&] { kern::conv2d_forward(x.data(), w.data(), b.data(), yp.data(), d); }, reps);
    report("conv2d_forward", ts, tp, max_abs_diff(ys, yp));

    const auto dy = random_vec(ys.size(), rng);
    std::vector<double> dxs(x.size()), dxp(x.size());
    const double tsb = time_ms(
        [&] {
          std::fill(dxs.begin(), dxs.end(), 0.0);
          kern::serial::conv2d_backward_input(dy.data(), w.data(), dxs.data(), d);
        },
        reps);
    const double tpb = time_ms(
        [&] {
          std::fill(dxp.begin(), dxp.end(), 0.0);
          kern::conv2d_backward_input(dy.data(), w.data(), dxp.data(), d);
        },
        reps);
    report("conv2d_backward_input", tsb, tpb, max_abs_diff(dxs, dxp));

    std::vector<double> dws(w.size()), dwp(w.size());
    const double tsw = time_ms(
        [&] {
          std::fill(dws.begin(), dws.end(), 0.0);
          kern::serial::conv2d_backward_weight(x.data(), dy.data(), dws.data(), d);
        },
        reps);
    const double tpw = time_ms(
        [&] {
          std::fill(dwp.begin(), dwp.end(), 0.0);
          kern::conv2d_backward_weight(x.data(), dy.data(), dwp.data(), d);
        },
        reps);
    report("conv2d_backward_weight", tsw, tpw, max_abs_diff(dws, dwp));
  }

  {
    const auto d = kern::conv_transpose2d_dims(8, 32, 16, 16, 16, 4, 2, 1, 0);
    const auto x = random_vec(static_cast<size_t>(d.n) * d.cin * d.hin * d.win, rng);
    const auto w = random_vec(static_cast<size_t>(d.cin) * d.cout * d.k * d.k, rng);
    std::vector<double> ys(static_cast<size_t>(d.n) * d.cout * d.hout * d.wout);
    std::vector<double> yp(ys.size());
    const double ts = time_ms(
        [&] { kern::serial::conv_transpose2d_forward(x.data(), w.data(), nullptr, ys.data(), d); },
        reps);
    const double tp = time_ms(
        [&] { kern::conv_transpose2d_forward(x.data(), w.data(), nullptr, yp.data(), d); }, reps);
    report("conv_transpose2d_forward", ts, tp, max_abs_diff(ys, yp));
  }

  {
    const int n = 256, fin = 1024, fout = 512;
    const auto x = random_vec(static_cast<size_t>(n) * fin, rng);
    const auto w = random_vec(static_cast<size_t>(fout) * fin, rng);
    std::vector<double> ys(static_cast<size_t>(n) * fout), yp(ys.size());
    const double ts = time_ms(
        [&] { kern::serial::linear_forward(x.data(), w.data(), nullptr, ys.data(), n, fin, fout); },
        reps);
    const double tp = time_ms(
        [&] { kern::linear_forward(x.data(), w.data(), nullptr, yp.data(), n, fin, fout); }, reps);
    report("linear_forward", ts, tp, max_abs_diff(ys, yp));
  }

  {
    const int n = 16, c = 32, h = 32, w = 32;
    const auto x = random_vec(static_cast<size_t>(n) * c * h * w, rng);
    const auto gamma = random_vec(c, rng);
    const auto beta = random_vec(c, rng);
    std::vector<double> out_s(x.size()), out_p(x.size()), xhat(x.size());
    std::vector<double> mean(c), var(c), rm_s(c, 0.0), rv_s(c, 1.0), rm_p(c, 0.0), rv_p(c, 1.0);
    const double ts = time_ms(
        [&] {
          kern::serial::batchnorm2d_forward_train(x.data(), gamma.data(), beta.data(),
                                                  out_s.data(), xhat.data(), mean.data(),
                                                  var.data(), rm_s.data(), rv_s.data(), n, c, h,
                                                  w, 0.1, 1e-5);
        },
        reps);
    const double tp = time_ms(
        [&] {
          kern::batchnorm2d_forward_train(x.data(), gamma.data(), beta.data(), out_p.data(),
                                          xhat.data(), mean.data(), var.data(), rm_p.data(),
                                          rv_p.data(), n, c, h, w, 0.1, 1e-5);
        },
        reps);
    report("batchnorm2d_forward_train", ts, tp, max_abs_diff(out_s, out_p));
  }

  {
    const int c = 20, n = 40, dim = 768;
    const auto vecs = random_vec(static_cast<size_t>(c) * n * dim, rng);
    std::vector<double> norms(static_cast<size_t>(c) * n);
    for (size_t i = 0; i < norms.size(); ++i) {
      double acc = 0.0;
      for (int t = 0; t < dim; ++t) {
        const double v = vecs[i * dim + t];
        acc += v * v;
      }
      norms[i] = std::sqrt(acc);
    }
    std::vector<double> zs(static_cast<size_t>(c) * c), zp(zs.size());
    const double ts = time_ms(
        [&] { kern::serial::class_mean_cosine(vecs.data(), norms.data(), c, n, dim, zs.data()); },
        reps);
    const double tp = time_ms(
        [&] { kern::class_mean_cosine(vecs.data(), norms.data(), c, n, dim, zp.data()); }, reps);
    report("class_mean_cosine", ts, tp, max_abs_diff(zs, zp));
  }

  return 0;
}
