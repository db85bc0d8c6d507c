#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "reffakd/rng.hpp"

namespace reffakd {

/// In-memory image dataset. Every image is a flat (channels*height*width)
/// buffer in channel-major order with values in [0,1].
struct Dataset {
  int channels = 0;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::string split;  // "train" or "test"
  std::vector<std::vector<double>> images;
  std::vector<int> labels;

  size_t size() const { return images.size(); }
  int image_numel() const { return channels * height * width; }
};

/// Big-endian IDX reader (magic 0x00000803 for images, 0x00000801 for
/// labels). Pixels are u8 scaled by 1/255. num_classes = max label + 1.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split = "train");

/// Writers for the same format, used for fixtures and the synthetic corpus.
void write_idx_images(const std::string& path, const std::vector<std::vector<double>>& images,
                      int height, int width);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

/// Record-format reader: each record is 1 coarse-label byte + 1 fine-label
/// byte + channels*height*width pixel bytes in planar channel order. The
/// fine label is kept. File length must be an exact multiple of the record
/// size.
Dataset load_records(const std::string& path, int channels, int height, int width,
                     int num_classes, const std::string& split = "train");

/// CIFAR-100 binary: 3074-byte records of 32x32 RGB, 100 fine classes.
Dataset load_cifar100(const std::string& bin_path, const std::string& split = "train");

/// Converted Tiny-ImageNet records: 12,290-byte records of 64x64 RGB,
/// 200 classes (see tools/convert_tiny_imagenet.py).
Dataset load_tiny_records(const std::string& path, const std::string& split = "train");

struct AugmentPolicy {
  double max_rotation_degrees = 15.0;
  double horizontal_flip_prob = 0.5;
  bool enabled = true;
};

void validate_augment_policy(const AugmentPolicy& policy);

/// Rotation by an angle drawn from Uniform(-max,+max) degrees (bilinear
/// resampling about the image center, zero fill outside), then a horizontal
/// flip with the stated probability. Pure given the rng; a disabled policy
/// returns the image unchanged and consumes no randomness.
std::vector<double> augment(const std::vector<double>& image, int channels, int height, int width,
                            const AugmentPolicy& policy, Rng& rng);

/// Exactly n_per_class items of every class, chosen without replacement by a
/// single seeded shuffle per class (classes visited in ascending order).
/// Output is class-major. Throws naming the first undersupplied class.
Dataset subset_per_class(const Dataset& ds, int n_per_class, uint64_t seed);

/// Per-channel mean and standard deviation over every pixel of the dataset
/// (population std, floored at 1e-8 so normalization stays finite).
std::pair<std::vector<double>, std::vector<double>> compute_channel_stats(const Dataset& ds);

}  // namespace reffakd
