#include "reffakd/synth.hpp"

#include <algorithm>
#include <cmath>

namespace reffakd {

namespace {

constexpr int kSide = 28;
constexpr int kClasses = 10;

double glyph_margin(int cls, double u, double v) {
  const double r = std::hypot(u, v);
  switch (cls) {
    case 0:  // ring
      return 0.15 - std::abs(r - 0.6);
    case 1:  // filled disc
      return 0.55 - r;
    case 2:  // vertical bar
      return 0.18 - std::abs(u);
    case 3:  // horizontal bar
      return 0.18 - std::abs(v);
    case 4:  // upright cross
      return std::max(0.15 - std::abs(u), 0.15 - std::abs(v));
    case 5: {  // diagonal cross, clipped to the disc
      const double d1 = std::abs(u - v) * 0.7071067811865476;
      const double d2 = std::abs(u + v) * 0.7071067811865476;
      return std::min(std::max(0.14 - d1, 0.14 - d2), 0.95 - r);
    }
    case 6: {  // square outline
      const double q = std::max(std::abs(u), std::abs(v));
      return 0.125 - std::abs(q - 0.525);
    }
    case 7:  // filled square
      return 0.5 - std::max(std::abs(u), std::abs(v));
    case 8:  // upward-widening wedge
      return std::min({v + 0.5, 0.55 - v, (v + 0.5) * 0.6 - std::abs(u)});
    default: {  // vertical dumbbell
      const double d = std::min(std::hypot(u, v + 0.45), std::hypot(u, v - 0.45));
      return 0.3 - d;
    }
  }
}

std::vector<double> render(int cls, Rng& rng) {
  const double dx = rng.uniform(-0.15, 0.15);
  const double dy = rng.uniform(-0.15, 0.15);
  const double scale = rng.uniform(0.85, 1.15);
  const double phi = rng.uniform(-10.0, 10.0) * 0.017453292519943295;
  const double amp = rng.uniform(0.7, 1.0);
  const double cs = std::cos(phi), sn = std::sin(phi);
  const double inv_scale = 1.0 / scale;
  const double half = (kSide - 1) * 0.5;

  std::vector<double> img(kSide * kSide);
  for (int y = 0; y < kSide; ++y) {
    const double v0 = (y - half) / half;
    for (int x = 0; x < kSide; ++x) {
      const double u0 = (x - half) / half;
      const double u = (cs * u0 + sn * v0) * inv_scale - dx;
      const double v = (-sn * u0 + cs * v0) * inv_scale - dy;
      const double m = glyph_margin(cls, u, v);
      const double shape = std::clamp(m / 0.08, 0.0, 1.0);
      const double noise = rng.uniform(0.0, 0.08);
      img[static_cast<size_t>(y) * kSide + x] = std::clamp(amp * shape + noise, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace

Dataset make_synth_dataset(int per_class, uint64_t seed, const std::string& split) {
  if (per_class < 1) throw std::invalid_argument("synth: per_class must be >= 1");
  Dataset ds;
  ds.channels = 1;
  ds.height = kSide;
  ds.width = kSide;
  ds.num_classes = kClasses;
  ds.split = split;
  ds.images.reserve(static_cast<size_t>(per_class) * kClasses);
  ds.labels.reserve(static_cast<size_t>(per_class) * kClasses);
  Rng rng(seed);
  for (int c = 0; c < kClasses; ++c)
    for (int k = 0; k < per_class; ++k) {
      ds.images.push_back(render(c, rng));
      ds.labels.push_back(c);
    }
  return ds;
}

void write_synth_idx(const std::string& images_path, const std::string& labels_path,
                     int per_class, uint64_t seed) {
  const Dataset ds = make_synth_dataset(per_class, seed);
  write_idx_images(images_path, ds.images, ds.height, ds.width);
  write_idx_labels(labels_path, ds.labels);
}

}  // namespace reffakd
