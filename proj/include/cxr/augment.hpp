#pragma once

#include <cstdint>
#include <random>

#include "cxr/tensor.hpp"

namespace cxr {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  friend bool operator==(const Range&, const Range&) = default;
};

// Horizontal flip only: a vertical flip has no field and cannot be configured.
struct AugmentPolicy {
  bool flip = true;
  double flip_probability = 0.5;
  bool crop = true;
  Range crop_fraction{0.8, 1.0};  // sampled area fraction of the kept sub-rectangle
  bool brightness = true;
  Range brightness_delta{-0.1, 0.1};
  bool contrast = true;
  Range contrast_factor{0.9, 1.1};
  bool saturation = true;
  Range saturation_factor{0.9, 1.1};

  static AugmentPolicy identity();
  // Throws std::invalid_argument on lo > hi, crop fractions outside (0,1], or a
  // flip probability outside [0,1].
  void validate() const;

  friend bool operator==(const AugmentPolicy&, const AugmentPolicy&) = default;
};

// Independent stream per (seed, epoch, sample index).
std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

Tensor<float> flip_horizontal(const Tensor<float>& image);
// Sub-rectangle [top, top+h) x [left, left+w) resampled back to the input extent.
Tensor<float> crop_and_resize(const Tensor<float>& image, std::size_t top, std::size_t left,
                              std::size_t height, std::size_t width);
Tensor<float> adjust_brightness(const Tensor<float>& image, float delta);
// Scales about the mean over all pixels and channels.
Tensor<float> adjust_contrast(const Tensor<float>& image, float factor);
// Scales each pixel about its channel mean.
Tensor<float> adjust_saturation(const Tensor<float>& image, float factor);

// flip -> crop -> brightness -> contrast -> saturation, then clamp to [0,1].
Tensor<float> augment(const Tensor<float>& image, const AugmentPolicy& policy, std::mt19937_64& rng);

}  // namespace cxr
