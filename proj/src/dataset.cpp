#include "reffakd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace reffakd {

namespace {

constexpr double kPixelScale = 1.0 / 255.0;

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return in;
}

uint32_t read_be32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated: " + path);
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_be32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<unsigned char> read_exact(std::istream& is, size_t count, const std::string& path) {
  std::vector<unsigned char> buf(count);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count)))
    throw std::runtime_error("truncated: " + path);
  return buf;
}

void finalize_labels(Dataset& ds) {
  int max_label = -1;
  for (int l : ds.labels) max_label = std::max(max_label, l);
  ds.num_classes = max_label + 1;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split) {
  Dataset ds;
  ds.split = split;
  ds.channels = 1;

  {
    std::ifstream in = open_binary(images_path);
    const uint32_t magic = read_be32(in, images_path);
    if (magic != 0x00000803u)
      throw std::runtime_error(images_path + ": bad magic for idx images (got " +
                               std::to_string(magic) + ", want 2051)");
    const uint32_t count = read_be32(in, images_path);
    ds.height = static_cast<int>(read_be32(in, images_path));
    ds.width = static_cast<int>(read_be32(in, images_path));
    if (ds.height < 1 || ds.width < 1)
      throw std::runtime_error(images_path + ": zero image dimensions");
    const size_t pix = static_cast<size_t>(ds.height) * ds.width;
    ds.images.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
      const auto raw = read_exact(in, pix, images_path);
      std::vector<double> img(pix);
      for (size_t p = 0; p < pix; ++p) img[p] = raw[p] * kPixelScale;
      ds.images.push_back(std::move(img));
    }
    if (in.peek() != std::char_traits<char>::eof())
      throw std::runtime_error(images_path + ": trailing bytes after declared image count");
  }
  {
    std::ifstream in = open_binary(labels_path);
    const uint32_t magic = read_be32(in, labels_path);
    if (magic != 0x00000801u)
      throw std::runtime_error(labels_path + ": bad magic for idx labels (got " +
                               std::to_string(magic) + ", want 2049)");
    const uint32_t count = read_be32(in, labels_path);
    if (count != ds.images.size())
      throw std::runtime_error("image/label count mismatch: " + std::to_string(ds.images.size()) +
                               " images vs " + std::to_string(count) + " labels");
    const auto raw = read_exact(in, count, labels_path);
    ds.labels.assign(raw.begin(), raw.end());
    if (in.peek() != std::char_traits<char>::eof())
      throw std::runtime_error(labels_path + ": trailing bytes after declared label count");
  }
  finalize_labels(ds);
  return ds;
}

void write_idx_images(const std::string& path, const std::vector<std::vector<double>>& images,
                      int height, int width) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  write_be32(out, 0x00000803u);
  write_be32(out, static_cast<uint32_t>(images.size()));
  write_be32(out, static_cast<uint32_t>(height));
  write_be32(out, static_cast<uint32_t>(width));
  const size_t pix = static_cast<size_t>(height) * width;
  for (const auto& img : images) {
    if (img.size() != pix) throw std::invalid_argument("image size does not match h*w");
    for (double v : img) {
      const double clamped = std::min(1.0, std::max(0.0, v));
      const auto byte = static_cast<unsigned char>(std::lround(clamped * 255.0));
      out.put(static_cast<char>(byte));
    }
  }
  if (!out) throw std::runtime_error("failed writing: " + path);
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  write_be32(out, 0x00000801u);
  write_be32(out, static_cast<uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw std::invalid_argument("idx labels must fit a byte");
    out.put(static_cast<char>(l));
  }
  if (!out) throw std::runtime_error("failed writing: " + path);
}

Dataset load_records(const std::string& path, int channels, int height, int width,
                     int num_classes, const std::string& split) {
  std::ifstream in = open_binary(path);
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<uint64_t>(in.tellg());
  in.seekg(0, std::ios::beg);

  const size_t pix = static_cast<size_t>(channels) * height * width;
  const uint64_t record = 2 + pix;
  if (file_size % record != 0)
    throw std::runtime_error(path + ": length " + std::to_string(file_size) +
                             " is not a multiple of the record size " + std::to_string(record));
  const uint64_t count = file_size / record;

  Dataset ds;
  ds.split = split;
  ds.channels = channels;
  ds.height = height;
  ds.width = width;
  ds.num_classes = num_classes;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    const auto raw = read_exact(in, record, path);
    const int fine = raw[1];
    if (fine >= num_classes)
      throw std::runtime_error(path + ": record " + std::to_string(i) + " has label " +
                               std::to_string(fine) + " >= " + std::to_string(num_classes));
    std::vector<double> img(pix);
    for (size_t p = 0; p < pix; ++p) img[p] = raw[2 + p] * kPixelScale;
    ds.images.push_back(std::move(img));
    ds.labels.push_back(fine);
  }
  return ds;
}

Dataset load_cifar100(const std::string& bin_path, const std::string& split) {
  return load_records(bin_path, 3, 32, 32, 100, split);
}

Dataset load_tiny_records(const std::string& path, const std::string& split) {
  return load_records(path, 3, 64, 64, 200, split);
}

void validate_augment_policy(const AugmentPolicy& policy) {
  if (policy.max_rotation_degrees < 0.0)
    throw std::invalid_argument("augment: max_rotation_degrees must be >= 0");
  if (policy.horizontal_flip_prob < 0.0 || policy.horizontal_flip_prob > 1.0)
    throw std::invalid_argument("augment: horizontal_flip_prob must be in [0,1]");
}

std::vector<double> augment(const std::vector<double>& image, int channels, int height, int width,
                            const AugmentPolicy& policy, Rng& rng) {
  validate_augment_policy(policy);
  const size_t pix = static_cast<size_t>(height) * width;
  if (image.size() != pix * channels)
    throw std::invalid_argument("augment: image size does not match c*h*w");
  if (!policy.enabled) return image;

  const double degrees =
      rng.uniform(-policy.max_rotation_degrees, policy.max_rotation_degrees);
  const bool flip = rng.next_double() < policy.horizontal_flip_prob;

  std::vector<double> out(image.size(), 0.0);
  const double theta = degrees * 0.017453292519943295;  // pi / 180
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = (height - 1) * 0.5, cx = (width - 1) * 0.5;
  for (int c = 0; c < channels; ++c) {
    const double* src = image.data() + static_cast<size_t>(c) * pix;
    double* dst = out.data() + static_cast<size_t>(c) * pix;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        // Inverse mapping: sample the source at the point that rotates onto
        // (y,x). Bilinear weights keep values inside the source range.
        const double dy = y - cy, dx = x - cx;
        const double sy = cs * dy + sn * dx + cy;
        const double sx = -sn * dy + cs * dx + cx;
        const int y0 = static_cast<int>(std::floor(sy));
        const int x0 = static_cast<int>(std::floor(sx));
        const double fy = sy - y0, fx = sx - x0;
        auto at = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= height || xx < 0 || xx >= width) return 0.0;
          return src[static_cast<size_t>(yy) * width + xx];
        };
        dst[static_cast<size_t>(y) * width + x] =
            at(y0, x0) * (1.0 - fy) * (1.0 - fx) + at(y0, x0 + 1) * (1.0 - fy) * fx +
            at(y0 + 1, x0) * fy * (1.0 - fx) + at(y0 + 1, x0 + 1) * fy * fx;
      }
    }
  }
  if (flip) {
    std::vector<double> flipped(out.size());
    for (int c = 0; c < channels; ++c) {
      const double* src = out.data() + static_cast<size_t>(c) * pix;
      double* dst = flipped.data() + static_cast<size_t>(c) * pix;
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          dst[static_cast<size_t>(y) * width + x] =
              src[static_cast<size_t>(y) * width + (width - 1 - x)];
    }
    out = std::move(flipped);
  }
  return out;
}

Dataset subset_per_class(const Dataset& ds, int n_per_class, uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("subset_per_class: n_per_class must be >= 1");
  std::vector<std::vector<size_t>> by_class(ds.num_classes);
  for (size_t i = 0; i < ds.labels.size(); ++i)
    by_class[static_cast<size_t>(ds.labels[i])].push_back(i);

  Dataset out;
  out.channels = ds.channels;
  out.height = ds.height;
  out.width = ds.width;
  out.num_classes = ds.num_classes;
  out.split = ds.split;
  out.images.reserve(static_cast<size_t>(n_per_class) * ds.num_classes);
  out.labels.reserve(static_cast<size_t>(n_per_class) * ds.num_classes);

  Rng rng(seed);
  for (int c = 0; c < ds.num_classes; ++c) {
    auto& idx = by_class[static_cast<size_t>(c)];
    if (idx.size() < static_cast<size_t>(n_per_class))
      throw std::invalid_argument("subset_per_class: class " + std::to_string(c) + " has " +
                                  std::to_string(idx.size()) + " items, need " +
                                  std::to_string(n_per_class));
    rng.shuffle(idx);
    for (int k = 0; k < n_per_class; ++k) {
      out.images.push_back(ds.images[idx[static_cast<size_t>(k)]]);
      out.labels.push_back(c);
    }
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> compute_channel_stats(const Dataset& ds) {
  if (ds.images.empty()) throw std::invalid_argument("channel stats: empty dataset");
  const size_t pix = static_cast<size_t>(ds.height) * ds.width;
  std::vector<double> mean(ds.channels, 0.0), var(ds.channels, 0.0);
  const double inv_count = 1.0 / (static_cast<double>(ds.images.size()) * pix);
  for (const auto& img : ds.images)
    for (int c = 0; c < ds.channels; ++c) {
      const double* p = img.data() + static_cast<size_t>(c) * pix;
      for (size_t i = 0; i < pix; ++i) mean[static_cast<size_t>(c)] += p[i];
    }
  for (double& m : mean) m *= inv_count;
  for (const auto& img : ds.images)
    for (int c = 0; c < ds.channels; ++c) {
      const double* p = img.data() + static_cast<size_t>(c) * pix;
      for (size_t i = 0; i < pix; ++i) {
        const double d = p[i] - mean[static_cast<size_t>(c)];
        var[static_cast<size_t>(c)] += d * d;
      }
    }
  std::vector<double> stddev(ds.channels);
  for (int c = 0; c < ds.channels; ++c)
    stddev[static_cast<size_t>(c)] =
        std::max(1e-8, std::sqrt(var[static_cast<size_t>(c)] * inv_count));
  return {mean, stddev};
}

}  // namespace reffakd
