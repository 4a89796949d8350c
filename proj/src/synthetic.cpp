#include "cxr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace cxr {

namespace {

constexpr float kForeground = 0.75f;
constexpr float kBackground = 0.25f;

}  // namespace

Tensor<float> synthetic_image(std::size_t label, const SyntheticOptions& options, std::uint64_t index) {
  if (label >= kSyntheticClasses.size()) throw std::invalid_argument("synthetic label out of range");
  const std::size_t n = options.image_size;
  const double size = static_cast<double>(n);
  std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                    static_cast<std::uint32_t>(label), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  std::vector<float> plane(n * n, kBackground);
  if (label == 0) {
    const double radius = uniform(0.15, 0.3) * size;
    const double cy = uniform(radius, size - radius);
    const double cx = uniform(radius, size - radius);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
        if (dy * dy + dx * dx <= radius * radius) plane[y * n + x] = kForeground;
      }
    }
  } else if (label == 1) {
    const double period = uniform(0.1, 0.2) * size;
    const double phase = uniform(0.0, period);
    for (std::size_t y = 0; y < n; ++y) {
      const bool on = std::fmod(static_cast<double>(y) + phase, period) < period / 2;
      if (on) std::fill_n(plane.begin() + static_cast<std::ptrdiff_t>(y * n), n, kForeground);
    }
  } else {
    const double cell = uniform(0.075, 0.15) * size;
    const double py = uniform(0.0, cell), px = uniform(0.0, cell);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const auto row = static_cast<long>(std::floor((static_cast<double>(y) + py) / cell));
        const auto col = static_cast<long>(std::floor((static_cast<double>(x) + px) / cell));
        if ((row + col) % 2 == 0) plane[y * n + x] = kForeground;
      }
    }
  }
  std::normal_distribution<double> noise(0.0, options.noise_sigma);
  Tensor<float> out(Shape{3, n, n});
  for (std::size_t p = 0; p < n * n; ++p) {
    const float v = std::clamp(plane[p] + static_cast<float>(noise(rng)), 0.0f, 1.0f);
    for (std::size_t c = 0; c < 3; ++c) out[c * n * n + p] = v;
  }
  return out;
}

ImageSet make_synthetic(std::span<const std::size_t> counts, const SyntheticOptions& options) {
  if (counts.size() != kSyntheticClasses.size()) {
    throw std::invalid_argument("synthetic data needs one count per class (3)");
  }
  ImageSet set;
  set.classes = kSyntheticClasses;
  for (std::size_t label = 0; label < counts.size(); ++label) {
    for (std::size_t i = 0; i < counts[label]; ++i) {
      set.images.push_back(synthetic_image(label, options, options.first_index + i));
      set.labels.push_back(label);
    }
  }
  return set;
}

void write_synthetic_dataset(const std::filesystem::path& root, std::span<const std::size_t> train_counts,
                             std::span<const std::size_t> test_counts, const SyntheticOptions& options) {
  auto emit = [&](Split split, std::span<const std::size_t> counts, std::uint64_t offset) {
    offset += options.first_index;
    for (std::size_t label = 0; label < counts.size(); ++label) {
      const auto dir = root / to_string(split) / kSyntheticClasses[label];
      std::filesystem::create_directories(dir);
      for (std::size_t i = 0; i < counts[label]; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img%05zu.png", i);
        write_image(dir / name, synthetic_image(label, options, offset + i));
      }
    }
  };
  // Test images draw from a disjoint index range so the two splits never coincide.
  emit(Split::Train, train_counts, 0);
  emit(Split::Test, test_counts, 1u << 20);
}

}  // namespace cxr
