#include "cxr/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cxr/image.hpp"

namespace cxr {

namespace {

void require_image(const Tensor<float>& image, const char* op) {
  if (image.rank() != 3) {
    throw std::invalid_argument(std::string(op) + ": expected [C,H,W], got " + to_string(image.shape()));
  }
}

void check_range(const Range& r, const char* what) {
  if (!(r.lo <= r.hi)) throw std::invalid_argument(std::string(what) + ": range lo exceeds hi");
}

double draw(const Range& r, std::mt19937_64& rng) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

AugmentPolicy AugmentPolicy::identity() {
  AugmentPolicy p;
  p.flip = p.crop = p.brightness = p.contrast = p.saturation = false;
  return p;
}

void AugmentPolicy::validate() const {
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw std::invalid_argument("augment: flip probability must lie in [0,1]");
  }
  check_range(crop_fraction, "augment crop fraction");
  check_range(brightness_delta, "augment brightness delta");
  check_range(contrast_factor, "augment contrast factor");
  check_range(saturation_factor, "augment saturation factor");
  if (!(crop_fraction.lo > 0.0 && crop_fraction.hi <= 1.0)) {
    throw std::invalid_argument("augment: crop fraction must lie in (0,1]");
  }
  if (contrast_factor.lo < 0.0 || saturation_factor.lo < 0.0) {
    throw std::invalid_argument("augment: contrast and saturation factors must be non-negative");
  }
}

std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

Tensor<float> flip_horizontal(const Tensor<float>& image) {
  require_image(image, "flip_horizontal");
  Tensor<float> out(image.shape());
  const std::size_t rows = image.dim(0) * image.dim(1), width = image.dim(2);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* src = image.raw() + r * width;
    std::reverse_copy(src, src + width, out.raw() + r * width);
  }
  return out;
}

Tensor<float> crop_and_resize(const Tensor<float>& image, std::size_t top, std::size_t left,
                              std::size_t height, std::size_t width) {
  require_image(image, "crop_and_resize");
  const std::size_t channels = image.dim(0), in_h = image.dim(1), in_w = image.dim(2);
  if (height == 0 || width == 0 || top + height > in_h || left + width > in_w) {
    throw std::invalid_argument("crop_and_resize: crop window leaves the image");
  }
  Tensor<float> crop(Shape{channels, height, width});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const float* src = image.raw() + (c * in_h + top + y) * in_w + left;
      std::copy(src, src + width, crop.raw() + (c * height + y) * width);
    }
  }
  return resize_bilinear(crop, in_h, in_w);
}

Tensor<float> adjust_brightness(const Tensor<float>& image, float delta) {
  Tensor<float> out = image;
  for (auto& v : out.data()) v += delta;
  return out;
}

Tensor<float> adjust_contrast(const Tensor<float>& image, float factor) {
  double total = 0.0;
  for (auto v : image.data()) total += v;
  const auto mean = static_cast<float>(total / static_cast<double>(image.size()));
  Tensor<float> out = image;
  for (auto& v : out.data()) v = mean + factor * (v - mean);
  return out;
}

Tensor<float> adjust_saturation(const Tensor<float>& image, float factor) {
  require_image(image, "adjust_saturation");
  const std::size_t channels = image.dim(0), plane = image.dim(1) * image.dim(2);
  Tensor<float> out = image;
  for (std::size_t p = 0; p < plane; ++p) {
    float gray = 0.0f;
    for (std::size_t c = 0; c < channels; ++c) gray += image[c * plane + p];
    gray /= static_cast<float>(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      out[c * plane + p] = gray + factor * (image[c * plane + p] - gray);
    }
  }
  return out;
}

Tensor<float> augment(const Tensor<float>& image, const AugmentPolicy& policy, std::mt19937_64& rng) {
  require_image(image, "augment");
  Tensor<float> out = image;
  if (policy.flip && std::bernoulli_distribution(policy.flip_probability)(rng)) {
    out = flip_horizontal(out);
  }
  if (policy.crop) {
    const double area = draw(policy.crop_fraction, rng);
    const double side = std::sqrt(area);
    const std::size_t h = image.dim(1), w = image.dim(2);
    const auto ch = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * static_cast<double>(h))), 1, h);
    const auto cw = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * static_cast<double>(w))), 1, w);
    const std::size_t top = std::uniform_int_distribution<std::size_t>(0, h - ch)(rng);
    const std::size_t left = std::uniform_int_distribution<std::size_t>(0, w - cw)(rng);
    if (ch != h || cw != w) out = crop_and_resize(out, top, left, ch, cw);
  }
  if (policy.brightness) {
    out = adjust_brightness(out, static_cast<float>(draw(policy.brightness_delta, rng)));
  }
  if (policy.contrast) {
    out = adjust_contrast(out, static_cast<float>(draw(policy.contrast_factor, rng)));
  }
  if (policy.saturation) {
    out = adjust_saturation(out, static_cast<float>(draw(policy.saturation_factor, rng)));
  }
  for (auto& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace cxr
