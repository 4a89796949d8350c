#include "cxr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "gemm.hpp"

namespace cxr {

namespace {

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

void require_rank(const Shape& shape, std::size_t rank, const char* op, const char* what) {
  if (shape.size() != rank) {
    std::ostringstream os;
    os << what << " must have rank " << rank << ", got " << to_string(shape);
    shape_error(op, os.str());
  }
}

template <typename T>
void im2col(const T* image, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t k, std::size_t stride, const ConvGeometry& g, T* col) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = image + c * height * width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* dst = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          T* row = dst + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(row, row + g.out_w, T{0});
            continue;
          }
          const T* src_row = src + static_cast<std::size_t>(ih) * width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            row[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width))
                          ? T{0}
                          : src_row[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t height, std::size_t width,
                std::size_t k, std::size_t stride, const ConvGeometry& g, T* image) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = image + c * height * width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
          T* dst_row = dst + static_cast<std::size_t>(ih) * width;
          const T* row = src + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(width)) {
              dst_row[static_cast<std::size_t>(iw)] += row[ow];
            }
          }
        }
      }
    }
  }
}

struct ConvDims {
  std::size_t batch, channels, height, width, filters, k;
  ConvGeometry geometry;
};

template <typename T>
ConvDims check_conv(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                    Conv2dOptions options) {
  const auto& in = input.shape();
  const auto& ks = kernel.shape();
  if (in.size() != 4 || ks.size() != 4 || ks[2] != ks[3] || in[1] != ks[1]) {
    shape_error("conv2d", "input " + to_string(in) + " is incompatible with kernel " +
                              to_string(ks) + " (expected [N,C,H,W] and [F,C,k,k])");
  }
  if (bias.shape() != Shape{ks[0]}) {
    shape_error("conv2d", "bias " + to_string(bias.shape()) + " does not match kernel " +
                              to_string(ks));
  }
  if (options.stride == 0) shape_error("conv2d", "stride must be positive");
  if (options.padding == Padding::Valid && (in[2] < ks[2] || in[3] < ks[3])) {
    shape_error("conv2d", "input " + to_string(in) + " is smaller than kernel " + to_string(ks) +
                              " under valid padding");
  }
  return ConvDims{in[0], in[1], in[2], in[3], ks[0], ks[2],
                  conv_geometry(in[2], in[3], ks[2], options)};
}

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& input, std::size_t window, std::size_t stride,
                          std::vector<std::size_t>* argmax) {
  const auto& s = input.shape();
  require_rank(s, 4, "maxpool2d", "input");
  if (window == 0 || stride == 0) shape_error("maxpool2d", "window and stride must be positive");
  if (s[2] < window || s[3] < window) {
    shape_error("maxpool2d", "window " + std::to_string(window) + " exceeds spatial extent of " +
                                 to_string(s));
  }
  const std::size_t oh = pool_extent(s[2], window, stride);
  const std::size_t ow = pool_extent(s[3], window, stride);
  Tensor<T> out(Shape{s[0], s[1], oh, ow});
  if (argmax) argmax->resize(out.size());
  const T* src = input.raw();
  T* dst = out.raw();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < s[0] * s[1]; ++plane) {
    const std::size_t base = plane * s[2] * s[3];
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++o) {
        std::size_t best = base + (y * stride) * s[3] + x * stride;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = base + (y * stride + i) * s[3] + x * stride + j;
            // Strict comparison keeps the first maximal element in row-major order.
            if (src[idx] > src[best]) best = idx;
          }
        }
        dst[o] = src[best];
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
  return out;
}

}  // namespace

ConvGeometry conv_geometry(std::size_t height, std::size_t width, std::size_t kernel,
                           Conv2dOptions options) {
  ConvGeometry g;
  const std::size_t s = options.stride;
  if (options.padding == Padding::Valid) {
    g.out_h = (height - kernel) / s + 1;
    g.out_w = (width - kernel) / s + 1;
    return g;
  }
  g.out_h = (height + s - 1) / s;
  g.out_w = (width + s - 1) / s;
  const std::size_t need_h = (g.out_h - 1) * s + kernel;
  const std::size_t need_w = (g.out_w - 1) * s + kernel;
  g.pad_top = need_h > height ? (need_h - height) / 2 : 0;
  g.pad_left = need_w > width ? (need_w - width) / 2 : 0;
  return g;
}

std::size_t pool_extent(std::size_t extent, std::size_t window, std::size_t stride) {
  return (extent - window) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Conv2dOptions options) {
  const ConvDims d = check_conv(input, kernel, bias, options);
  const auto& g = d.geometry;
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t patch = d.channels * d.k * d.k;
  Tensor<T> out(Shape{d.batch, d.filters, g.out_h, g.out_w});
  std::vector<T> col(patch * plane);
  for (std::size_t n = 0; n < d.batch; ++n) {
    im2col(input.raw() + n * d.channels * d.height * d.width, d.channels, d.height, d.width, d.k,
           options.stride, g, col.data());
    T* dst = out.raw() + n * d.filters * plane;
    for (std::size_t f = 0; f < d.filters; ++f) std::fill_n(dst + f * plane, plane, bias[f]);
    detail::gemm(false, false, static_cast<int>(d.filters), static_cast<int>(plane),
                 static_cast<int>(patch), T{1}, kernel.raw(), static_cast<int>(patch), col.data(),
                 static_cast<int>(plane), T{1}, dst, static_cast<int>(plane));
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, std::size_t window, std::size_t stride) {
  return maxpool_forward(input, window, stride, nullptr);
}

template <typename T>
Tensor<T> global_avg_pool2d(const Tensor<T>& input) {
  const auto& s = input.shape();
  require_rank(s, 4, "global_avg_pool2d", "input");
  const std::size_t area = s[2] * s[3];
  Tensor<T> out(Shape{s[0], s[1]});
  for (std::size_t p = 0; p < s[0] * s[1]; ++p) {
    T acc{0};
    const T* src = input.raw() + p * area;
    for (std::size_t i = 0; i < area; ++i) acc += src[i];
    out[p] = acc / static_cast<T>(area);
  }
  return out;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  const auto& in = input.shape();
  const auto& ws = weights.shape();
  if (in.size() != 2 || ws.size() != 2 || in[1] != ws[0]) {
    shape_error("dense", "input " + to_string(in) + " is incompatible with weights " +
                             to_string(ws) + " (expected [N,D] and [D,M])");
  }
  if (bias.shape() != Shape{ws[1]}) {
    shape_error("dense", "bias " + to_string(bias.shape()) + " does not match weights " +
                             to_string(ws));
  }
  const std::size_t n = in[0], dim = in[1], m = ws[1];
  Tensor<T> out(Shape{n, m});
  // One product per row: a batched GEMM tiles rows by batch extent, which would make
  // a sample's output depend on its position and on the batch size.
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(bias.raw(), bias.raw() + m, out.raw() + i * m);
    detail::gemm(false, false, 1, static_cast<int>(m), static_cast<int>(dim), T{1},
                 input.raw() + i * dim, static_cast<int>(dim), weights.raw(), static_cast<int>(m),
                 T{1}, out.raw() + i * m, static_cast<int>(m));
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& input) {
  const auto& s = input.shape();
  require_rank(s, 2, "softmax", "input");
  Tensor<T> out(s);
  const std::size_t k = s[1];
  for (std::size_t i = 0; i < s[0]; ++i) {
    const T* row = input.raw() + i * k;
    T* dst = out.raw() + i * k;
    const T peak = *std::max_element(row, row + k);
    T total{0};
    for (std::size_t j = 0; j < k; ++j) {
      dst[j] = std::exp(row[j] - peak);
      total += dst[j];
    }
    for (std::size_t j = 0; j < k; ++j) dst[j] /= total;
  }
  return out;
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts) {
  if (parts.empty()) shape_error("concat", "needs at least one part");
  const std::size_t n = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::size_t width = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != n) {
      shape_error("concat", "part " + to_string(p.shape()) + " is incompatible with " +
                                to_string(parts[0].shape()) + " (expected [N,D_i] with shared N)");
    }
    width += p.dim(1);
  }
  Tensor<T> out(Shape{n, width});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t d = p.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(p.raw() + i * d, p.raw() + (i + 1) * d, out.raw() + i * width + offset);
    }
    offset += d;
  }
  return out;
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& input) {
  if (input.rank() < 2) shape_error("flatten", "input must have rank >= 2, got " + to_string(input.shape()));
  return input.reshaped(Shape{input.dim(0), input.size() / input.dim(0)});
}

// ---------------------------------------------------------------------------
// Recorded ops

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, Conv2dOptions options) {
  auto& tape = *input.tape;
  const ConvDims d = check_conv(input.value(), kernel.value(), bias.value(), options);
  Tensor<T> out = conv2d(input.value(), kernel.value(), bias.value(), options);
  const std::size_t in_id = input.id, k_id = kernel.id, b_id = bias.id;
  return tape.record(std::move(out), {input, kernel, bias},
      [d, options, in_id, k_id, b_id](Tape<T>& t, const Tensor<T>& grad) {
        const auto& g = d.geometry;
        const std::size_t plane = g.out_h * g.out_w;
        const std::size_t patch = d.channels * d.k * d.k;
        const std::size_t image = d.channels * d.height * d.width;
        const Tensor<T>& x = t.value(in_id);
        const Tensor<T>& w = t.value(k_id);
        Tensor<T>* gx = t.grad_slot(in_id);
        Tensor<T>* gw = t.grad_slot(k_id);
        Tensor<T>* gb = t.grad_slot(b_id);
        std::vector<T> col(patch * plane);
        for (std::size_t n = 0; n < d.batch; ++n) {
          const T* gy = grad.raw() + n * d.filters * plane;
          if (gb) {
            for (std::size_t f = 0; f < d.filters; ++f) {
              T acc{0};
              for (std::size_t p = 0; p < plane; ++p) acc += gy[f * plane + p];
              (*gb)[f] += acc;
            }
          }
          if (gw) {
            im2col(x.raw() + n * image, d.channels, d.height, d.width, d.k, options.stride, g,
                   col.data());
            detail::gemm(false, true, static_cast<int>(d.filters), static_cast<int>(patch),
                         static_cast<int>(plane), T{1}, gy, static_cast<int>(plane), col.data(),
                         static_cast<int>(plane), T{1}, gw->raw(), static_cast<int>(patch));
          }
          if (gx) {
            detail::gemm(true, false, static_cast<int>(patch), static_cast<int>(plane),
                         static_cast<int>(d.filters), T{1}, w.raw(), static_cast<int>(patch), gy,
                         static_cast<int>(plane), T{0}, col.data(), static_cast<int>(plane));
            col2im_add(col.data(), d.channels, d.height, d.width, d.k, options.stride, g,
                       gx->raw() + n * image);
          }
        }
      });
}

template <typename T>
Var<T> maxpool2d(Var<T> input, std::size_t window, std::size_t stride) {
  std::vector<std::size_t> argmax;
  Tensor<T> out = maxpool_forward(input.value(), window, stride, &argmax);
  const std::size_t in_id = input.id;
  return input.tape->record(std::move(out), {input},
      [in_id, argmax = std::move(argmax)](Tape<T>& t, const Tensor<T>& grad) {
        Tensor<T>* gx = t.grad_slot(in_id);
        if (!gx) return;
        for (std::size_t o = 0; o < argmax.size(); ++o) (*gx)[argmax[o]] += grad[o];
      });
}

template <typename T>
Var<T> global_avg_pool2d(Var<T> input) {
  Tensor<T> out = global_avg_pool2d(input.value());
  const std::size_t in_id = input.id;
  const std::size_t area = input.shape()[2] * input.shape()[3];
  return input.tape->record(std::move(out), {input},
      [in_id, area](Tape<T>& t, const Tensor<T>& grad) {
        Tensor<T>* gx = t.grad_slot(in_id);
        if (!gx) return;
        const T scale = T{1} / static_cast<T>(area);
        for (std::size_t p = 0; p < grad.size(); ++p) {
          const T share = grad[p] * scale;
          T* dst = gx->raw() + p * area;
          for (std::size_t i = 0; i < area; ++i) dst[i] += share;
        }
      });
}

template <typename T>
Var<T> dense(Var<T> input, Var<T> weights, Var<T> bias) {
  Tensor<T> out = dense(input.value(), weights.value(), bias.value());
  const std::size_t in_id = input.id, w_id = weights.id, b_id = bias.id;
  return input.tape->record(std::move(out), {input, weights, bias},
      [in_id, w_id, b_id](Tape<T>& t, const Tensor<T>& grad) {
        const Tensor<T>& x = t.value(in_id);
        const Tensor<T>& w = t.value(w_id);
        const int n = static_cast<int>(x.dim(0));
        const int dim = static_cast<int>(x.dim(1));
        const int m = static_cast<int>(w.dim(1));
        if (auto* gx = t.grad_slot(in_id)) {
          detail::gemm(false, true, n, dim, m, T{1}, grad.raw(), m, w.raw(), m, T{1}, gx->raw(), dim);
        }
        if (auto* gw = t.grad_slot(w_id)) {
          detail::gemm(true, false, dim, m, n, T{1}, x.raw(), dim, grad.raw(), m, T{1}, gw->raw(), m);
        }
        if (auto* gb = t.grad_slot(b_id)) {
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) (*gb)[j] += grad[static_cast<std::size_t>(i * m + j)];
          }
        }
      });
}

template <typename T>
Var<T> relu(Var<T> input) {
  Tensor<T> out = relu(input.value());
  const std::size_t in_id = input.id;
  return input.tape->record(std::move(out), {input}, [in_id](Tape<T>& t, const Tensor<T>& grad) {
    Tensor<T>* gx = t.grad_slot(in_id);
    if (!gx) return;
    const Tensor<T>& x = t.value(in_id);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (x[i] > T{0}) (*gx)[i] += grad[i];
    }
  });
}

template <typename T>
Var<T> softmax(Var<T> input) {
  Tensor<T> out = softmax(input.value());
  const std::size_t in_id = input.id;
  // The backward pass needs the probabilities; keep a copy rather than an id that
  // does not exist until record() returns.
  Tensor<T> probs = out;
  return input.tape->record(std::move(out), {input},
      [in_id, probs = std::move(probs)](Tape<T>& t, const Tensor<T>& grad) {
        Tensor<T>* gx = t.grad_slot(in_id);
        if (!gx) return;
        const std::size_t rows = probs.dim(0), k = probs.dim(1);
        for (std::size_t i = 0; i < rows; ++i) {
          const T* y = probs.raw() + i * k;
          const T* gy = grad.raw() + i * k;
          T dot{0};
          for (std::size_t j = 0; j < k; ++j) dot += gy[j] * y[j];
          T* dst = gx->raw() + i * k;
          for (std::size_t j = 0; j < k; ++j) dst[j] += y[j] * (gy[j] - dot);
        }
      });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts) {
  if (parts.empty()) shape_error("concat", "needs at least one part");
  std::vector<Tensor<T>> values;
  std::vector<std::size_t> ids;
  values.reserve(parts.size());
  for (const auto& p : parts) {
    values.push_back(p.value());
    ids.push_back(p.id);
  }
  Tensor<T> out = concat(std::span<const Tensor<T>>(values));
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(std::move(out), inputs,
      [ids = std::move(ids)](Tape<T>& t, const Tensor<T>& grad) {
        const std::size_t n = grad.dim(0), width = grad.dim(1);
        std::size_t offset = 0;
        for (auto id : ids) {
          const std::size_t d = t.value(id).dim(1);
          if (auto* gx = t.grad_slot(id)) {
            for (std::size_t i = 0; i < n; ++i) {
              const T* src = grad.raw() + i * width + offset;
              T* dst = gx->raw() + i * d;
              for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
            }
          }
          offset += d;
        }
      });
}

template <typename T>
Var<T> flatten(Var<T> input) {
  Tensor<T> out = flatten(input.value());
  const std::size_t in_id = input.id;
  return input.tape->record(std::move(out), {input}, [in_id](Tape<T>& t, const Tensor<T>& grad) {
    Tensor<T>* gx = t.grad_slot(in_id);
    if (!gx) return;
    for (std::size_t i = 0; i < grad.size(); ++i) (*gx)[i] += grad[i];
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const auto& rhs = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= rhs[i];
  const std::size_t a_id = a.id, b_id = b.id;
  return a.tape->record(std::move(out), {a, b}, [a_id, b_id](Tape<T>& t, const Tensor<T>& grad) {
    const Tensor<T>& av = t.value(a_id);
    const Tensor<T>& bv = t.value(b_id);
    if (auto* ga = t.grad_slot(a_id)) {
      for (std::size_t i = 0; i < grad.size(); ++i) (*ga)[i] += grad[i] * bv[i];
    }
    if (auto* gb = t.grad_slot(b_id)) {
      for (std::size_t i = 0; i < grad.size(); ++i) (*gb)[i] += grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> sum(Var<T> input) {
  T acc{0};
  for (auto v : input.value().data()) acc += v;
  const std::size_t in_id = input.id;
  return input.tape->record(Tensor<T>::scalar(acc), {input},
      [in_id](Tape<T>& t, const Tensor<T>& grad) {
        Tensor<T>* gx = t.grad_slot(in_id);
        if (!gx) return;
        for (auto& g : gx->data()) g += grad[0];
      });
}

#define CXR_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                            Conv2dOptions);                                                 \
  template Tensor<T> maxpool2d(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> global_avg_pool2d(const Tensor<T>&);                                   \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template Tensor<T> softmax(const Tensor<T>&);                                             \
  template Tensor<T> concat(std::span<const Tensor<T>>);                                    \
  template Tensor<T> flatten(const Tensor<T>&);                                             \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, Conv2dOptions);                            \
  template Var<T> maxpool2d(Var<T>, std::size_t, std::size_t);                              \
  template Var<T> global_avg_pool2d(Var<T>);                                                \
  template Var<T> dense(Var<T>, Var<T>, Var<T>);                                            \
  template Var<T> relu(Var<T>);                                                             \
  template Var<T> softmax(Var<T>);                                                          \
  template Var<T> concat(std::span<const Var<T>>);                                          \
  template Var<T> flatten(Var<T>);                                                          \
  template Var<T> mul(Var<T>, Var<T>);                                                      \
  template Var<T> sum(Var<T>);

CXR_INSTANTIATE_OPS(float)
CXR_INSTANTIATE_OPS(double)

#undef CXR_INSTANTIATE_OPS

}  // namespace cxr
