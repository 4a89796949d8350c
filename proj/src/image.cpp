#include "cxr/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cxr/errors.hpp"

namespace cxr {

Tensor<float> decode_image(const std::filesystem::path& path) {
  cv::Mat raw;
  try {
    raw = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DataError("cannot decode image " + path.string() + ": " + e.what());
  }
  if (raw.empty()) throw DataError("cannot decode image " + path.string());
  const auto height = static_cast<std::size_t>(raw.rows);
  const auto width = static_cast<std::size_t>(raw.cols);
  Tensor<float> out(Shape{3, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    const auto* row = raw.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < width; ++x) {
      // OpenCV stores BGR.
      for (std::size_t c = 0; c < 3; ++c) {
        out[(c * height + y) * width + x] = static_cast<float>(row[x][2 - c]) / 255.0f;
      }
    }
  }
  return out;
}

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) {
    throw std::invalid_argument("resize_bilinear: expected [C,H,W], got " + to_string(image.shape()));
  }
  const std::size_t channels = image.dim(0), in_h = image.dim(1), in_w = image.dim(2);
  if (in_h == height && in_w == width) return image;

  struct Tap {
    std::size_t lo, hi;
    float frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> result(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      const std::size_t hi = std::min(lo + 1, in - 1);
      result[i] = {lo, hi, static_cast<float>(src - static_cast<double>(lo))};
    }
    return result;
  };
  const auto ys = taps(in_h, height);
  const auto xs = taps(in_w, width);
  Tensor<float> out(Shape{channels, height, width});
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = image.raw() + c * in_h * in_w;
    float* dst = out.raw() + c * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const float* top = src + ys[y].lo * in_w;
      const float* bottom = src + ys[y].hi * in_w;
      const float fy = ys[y].frac;
      for (std::size_t x = 0; x < width; ++x) {
        const float fx = xs[x].frac;
        const float upper = top[xs[x].lo] + (top[xs[x].hi] - top[xs[x].lo]) * fx;
        const float lower = bottom[xs[x].lo] + (bottom[xs[x].hi] - bottom[xs[x].lo]) * fx;
        dst[y * width + x] = upper + (lower - upper) * fy;
      }
    }
  }
  return out;
}

Tensor<float> load_and_resize(const std::filesystem::path& path, std::size_t size) {
  return resize_bilinear(decode_image(path), size, size);
}

void write_image(const std::filesystem::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 1)) {
    throw std::invalid_argument("write_image: expected [3,H,W] or [1,H,W], got " +
                                to_string(image.shape()));
  }
  const std::size_t channels = image.dim(0), height = image.dim(1), width = image.dim(2);
  cv::Mat mat(static_cast<int>(height), static_cast<int>(width), CV_8UC3);
  for (std::size_t y = 0; y < height; ++y) {
    auto* row = mat.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t src_c = channels == 1 ? 0 : c;
        const float v = std::clamp(image[(src_c * height + y) * width + x], 0.0f, 1.0f);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw DataError("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw DataError("cannot write image " + path.string());
}

}  // namespace cxr
