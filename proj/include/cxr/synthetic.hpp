#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>

#include "cxr/dataset.hpp"

namespace cxr {

// Class 0: filled disk. Class 1: horizontal bars. Class 2: checkerboard.
// Position, scale and phase vary per image; Gaussian pixel noise is added and the
// result is clamped to [0,1] and replicated across three channels.
inline const std::vector<std::string> kSyntheticClasses = {"disk", "bars", "checker"};

struct SyntheticOptions {
  std::size_t image_size = kDefaultImageSize;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  // Index of the first generated image per class; disjoint ranges give disjoint images.
  std::uint64_t first_index = 0;
};

Tensor<float> synthetic_image(std::size_t label, const SyntheticOptions& options, std::uint64_t index);

// counts[c] images of class c, ordered by class then index.
ImageSet make_synthetic(std::span<const std::size_t> counts, const SyntheticOptions& options);

// Writes PNGs in the root/{train,test}/<class>/ layout.
void write_synthetic_dataset(const std::filesystem::path& root, std::span<const std::size_t> train_counts,
                             std::span<const std::size_t> test_counts, const SyntheticOptions& options);

}  // namespace cxr
