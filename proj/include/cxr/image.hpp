#pragma once

#include <cstddef>
#include <filesystem>

#include "cxr/tensor.hpp"

namespace cxr {

inline constexpr std::size_t kDefaultImageSize = 80;

// Decodes a JPEG or PNG into [3,H,W] RGB in [0,1]. Grayscale sources are replicated
// across channels. Throws DataError carrying the path on failure.
Tensor<float> decode_image(const std::filesystem::path& path);

// Bilinear resampling of a [C,H,W] image with half-pixel centers and edge clamping.
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width);

Tensor<float> load_and_resize(const std::filesystem::path& path, std::size_t size = kDefaultImageSize);

// Encodes [3,H,W] (or [1,H,W]) values in [0,1] as 8-bit; format follows the extension.
void write_image(const std::filesystem::path& path, const Tensor<float>& image);

}  // namespace cxr
