#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "reffakd/rng.hpp"
#include "reffakd/tensor.hpp"

namespace testutil {

struct GradCheckReport {
  bool ok = true;
  double worst_abs = 0.0;
  double worst_rel = 0.0;
  std::string where;
};

// Central finite differences against autograd. The forward callback must
// rebuild the graph from the params' current data on every call.
inline GradCheckReport gradcheck(const std::vector<reffakd::TensorPtr>& params,
                                 const std::function<reffakd::TensorPtr()>& forward,
                                 double rel_tol = 1e-4, double abs_tol = 1e-7,
                                 double h = 1e-5) {
  using namespace reffakd;
  for (auto& p : params) p->zero_grad();
  auto loss = forward();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    p->ensure_grad();
    analytic.push_back(p->grad);
  }

  GradCheckReport rep;
  NoGradGuard guard;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (size_t i = 0; i < p->data.size(); ++i) {
      const double saved = p->data[i];
      p->data[i] = saved + h;
      const double up = forward()->scalar();
      p->data[i] = saved - h;
      const double dn = forward()->scalar();
      p->data[i] = saved;
      const double numeric = (up - dn) / (2.0 * h);
      const double a = analytic[pi][i];
      const double diff = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double rel = scale > 0.0 ? diff / scale : 0.0;
      if (diff > std::max(abs_tol, rel_tol * scale)) {
        rep.ok = false;
        if (diff > rep.worst_abs) {
          rep.worst_abs = diff;
          rep.worst_rel = rel;
          rep.where = "param " + std::to_string(pi) + " elem " + std::to_string(i) +
                      " analytic " + std::to_string(a) + " numeric " + std::to_string(numeric);
        }
      }
      rep.worst_abs = std::max(rep.worst_abs, diff);
      rep.worst_rel = std::max(rep.worst_rel, rel);
    }
  }
  return rep;
}

inline void fill_uniform(const reffakd::TensorPtr& t, reffakd::Rng& rng, double lo, double hi) {
  for (auto& v : t->data) v = rng.uniform(lo, hi);
}

// Uniform values guaranteed at least `gap` away from zero, for kink-free
// finite differences through relu.
inline void fill_signed_away_from_zero(const reffakd::TensorPtr& t, reffakd::Rng& rng,
                                       double gap = 0.05) {
  for (auto& v : t->data) {
    const double mag = gap + rng.uniform(0.0, 1.0);
    v = rng.next_double() < 0.5 ? -mag : mag;
  }
}

// Distinct values with comfortable margins, for kink-free maxpool checks.
inline void fill_distinct(const reffakd::TensorPtr& t, reffakd::Rng& rng) {
  std::vector<size_t> order(t->data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  for (size_t i = 0; i < order.size(); ++i)
    t->data[order[i]] = 0.01 * static_cast<double>(i + 1) + rng.uniform(0.0, 0.002);
}

// Scoped temporary directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("reffakd_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("slurp: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spew(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("spew: cannot write " + path);
}

}  // namespace testutil
