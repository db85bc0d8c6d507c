#pragma once

#include <cstdint>
#include <string>

#include "reffakd/dataset.hpp"

namespace reffakd {

/// Procedural 10-class 28x28 grayscale corpus for self-contained end-to-end
/// runs. Each class is a distinct soft-edged glyph (ring, disc, bars, cross,
/// diagonal cross, square outline, filled square, wedge, dumbbell); samples
/// get random shift, scale, small rotation, amplitude, and pixel noise.
/// Fully deterministic given the seed; images are class-major.
Dataset make_synth_dataset(int per_class, uint64_t seed, const std::string& split = "train");

/// Same corpus written out as an IDX image/label pair.
void write_synth_idx(const std::string& images_path, const std::string& labels_path,
                     int per_class, uint64_t seed);

}  // namespace reffakd
