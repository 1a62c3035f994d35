#include "sgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gemm.hpp"
#include "sgan/errors.hpp"

namespace sgan::ops {

namespace {

using detail::Node;

constexpr double kOneBelow = 1.0 - 0x1.0p-53;  // largest double < 1

// Result node whose recording depends on grad mode and the inputs.
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_mode_enabled()) {
    for (const Tensor* t : inputs) {
      if (t->defined() && t->requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
    if (node->requires_grad) {
      for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) node->parents.push_back(t->node());
      }
    }
  }
  return Tensor(std::move(node));
}

// Parents are recorded only when they required a gradient at forward time.
bool wants_grad(const Node& self, const Tensor& t) {
  for (const auto& p : self.parents)
    if (p == t.node()) return true;
  return false;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t channels, height, width;  // image side
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;             // column side (conv output grid)
  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

// cols[(c*kh + i)*kw + j, oy*out_w + ox] = image[c, oy*stride + i - pad, ox*stride + j - pad]
void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          double* out = row + oy * g.out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(out, out + g.out_w, 0.0);
            continue;
          }
          const double* src = image + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t x =
                static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            out[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[x];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
void col2im(const double* cols, const ConvGeometry& g, double* image) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = image + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          const double* in = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t x =
                static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(g.width)) dst[x] += in[ox];
          }
        }
      }
    }
  }
}

// conv2d output grid for an image of the given extent.
ConvGeometry conv_geometry(std::size_t channels, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                           std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError("stride must be at least 1");
  if (kh > h + 2 * pad || kw > w + 2 * pad) {
    throw ShapeError("kernel " + std::to_string(kh) + "x" + std::to_string(kw) + " larger than padded input " +
                     std::to_string(h + 2 * pad) + "x" + std::to_string(w + 2 * pad));
  }
  ConvGeometry g{channels, h, w, kh, kw, stride, pad, 0, 0};
  g.out_h = (h + 2 * pad - kh) / stride + 1;
  g.out_w = (w + 2 * pad - kw) / stride + 1;
  return g;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t f = kernel.dim(0);
  if (kernel.dim(1) != c) {
    throw ShapeError("conv2d: input has " + std::to_string(c) + " channels, kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  const ConvGeometry g = conv_geometry(c, input.dim(2), input.dim(3), kernel.dim(2), kernel.dim(3), stride, pad);
  const std::size_t rows = g.rows(), ncols = g.cols();
  const std::size_t in_plane = c * g.height * g.width, out_plane = f * ncols;

  std::vector<double> out(n * out_plane, 0.0);
  std::vector<double> cols(rows * ncols);
  const double* x = input.data().data();
  const double* k = kernel.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    im2col(x + b * in_plane, g, cols.data());
    detail::gemm_nn(f, ncols, rows, k, cols.data(), out.data() + b * out_plane);
  }

  Tensor result = make_result({n, f, g.out_h, g.out_w}, std::move(out), {&input, &kernel});
  if (result.requires_grad()) {
    result.node()->backward = [input, kernel, g, n, f](Node& self) {
      const std::size_t rows = g.rows(), ncols = g.cols();
      const std::size_t in_plane = g.channels * g.height * g.width, out_plane = f * ncols;
      std::vector<double> cols(rows * ncols);
      const double* dy = self.grad.data();
      const double* x = input.data().data();
      const double* k = kernel.data().data();
      double* dk = wants_grad(self, kernel) ? kernel.node()->ensure_grad().data() : nullptr;
      double* dx = wants_grad(self, input) ? input.node()->ensure_grad().data() : nullptr;
      for (std::size_t b = 0; b < n; ++b) {
        if (dk) {
          im2col(x + b * in_plane, g, cols.data());
          detail::gemm_nt(f, rows, ncols, dy + b * out_plane, cols.data(), dk);
        }
        if (dx) {
          std::fill(cols.begin(), cols.end(), 0.0);
          detail::gemm_tn(rows, ncols, f, k, dy + b * out_plane, cols.data());
          col2im(cols.data(), g, dx + b * in_plane);
        }
      }
    };
  }
  return result;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad) {
  require_rank(input, 4, "conv_transpose2d input");
  require_rank(kernel, 4, "conv_transpose2d kernel");
  if (stride == 0) throw ShapeError("stride must be at least 1");
  const std::size_t n = input.dim(0), f = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel.dim(0) != f) {
    throw ShapeError("conv_transpose2d: input has " + std::to_string(f) + " channels, kernel expects " +
                     std::to_string(kernel.dim(0)));
  }
  const std::size_t c = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  const auto extent = [&](std::size_t in, std::size_t k) {
    const long long e = static_cast<long long>(in - 1) * static_cast<long long>(stride) -
                        2 * static_cast<long long>(pad) + static_cast<long long>(k);
    if (e <= 0) throw ShapeError("conv_transpose2d: non-positive output extent " + std::to_string(e));
    return static_cast<std::size_t>(e);
  };
  const std::size_t out_h = extent(h, kh), out_w = extent(w, kw);
  // Geometry of the forward conv that maps the output grid back onto the input grid.
  ConvGeometry g{c, out_h, out_w, kh, kw, stride, pad, h, w};
  const std::size_t rows = g.rows(), ncols = g.cols();
  const std::size_t in_plane = f * ncols, out_plane = c * out_h * out_w;

  std::vector<double> out(n * out_plane, 0.0);
  std::vector<double> cols(rows * ncols);
  const double* y = input.data().data();
  const double* k = kernel.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    std::fill(cols.begin(), cols.end(), 0.0);
    detail::gemm_tn(rows, ncols, f, k, y + b * in_plane, cols.data());
    col2im(cols.data(), g, out.data() + b * out_plane);
  }

  Tensor result = make_result({n, c, out_h, out_w}, std::move(out), {&input, &kernel});
  if (result.requires_grad()) {
    result.node()->backward = [input, kernel, g, n, f](Node& self) {
      const std::size_t rows = g.rows(), ncols = g.cols();
      const std::size_t in_plane = f * ncols, out_plane = g.channels * g.height * g.width;
      std::vector<double> cols(rows * ncols);
      const double* dz = self.grad.data();
      const double* y = input.data().data();
      const double* k = kernel.data().data();
      double* dk = wants_grad(self, kernel) ? kernel.node()->ensure_grad().data() : nullptr;
      double* dy = wants_grad(self, input) ? input.node()->ensure_grad().data() : nullptr;
      for (std::size_t b = 0; b < n; ++b) {
        im2col(dz + b * out_plane, g, cols.data());
        if (dk) detail::gemm_nt(f, rows, ncols, y + b * in_plane, cols.data(), dk);
        if (dy) detail::gemm_nn(f, ncols, rows, k, cols.data(), dy + b * in_plane);
      }
    };
  }
  return result;
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
  if (input.rank() < 2) throw ShapeError("add_channel_bias needs rank >= 2, got " + shape_string(input.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1);
  if (bias.size() != c) {
    throw ShapeError("add_channel_bias: " + std::to_string(bias.size()) + " biases for " + std::to_string(c) +
                     " channels");
  }
  const std::size_t inner = input.size() / (n * c);
  std::vector<double> out(input.data().begin(), input.data().end());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = out.data() + (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) p[i] += bias[ch];
    }
  Tensor result = make_result(input.shape(), std::move(out), {&input, &bias});
  if (result.requires_grad()) {
    result.node()->backward = [input, bias, n, c, inner](Node& self) {
      if (wants_grad(self, input)) {
        auto& dx = input.node()->ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
      }
      if (wants_grad(self, bias)) {
        auto& db = bias.node()->ensure_grad();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double* g = self.grad.data() + (b * c + ch) * inner;
            double s = 0.0;
            for (std::size_t i = 0; i < inner; ++i) s += g[i];
            db[ch] += s;
          }
      }
    };
  }
  return result;
}

Tensor batch_norm(const Tensor& input, const Tensor& scale, const Tensor& shift, Tensor& running_mean,
                  Tensor& running_var, const BatchNormOptions& options) {
  if (input.rank() != 2 && input.rank() != 4) {
    throw ShapeError("batch_norm expects [N,C] or [N,C,H,W], got " + shape_string(input.shape()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t inner = input.size() / (n * c);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&scale, &shift, &running_mean, &running_var}) {
    if (t->size() != c) throw ShapeError("batch_norm: per-channel tensor size mismatch with " + std::to_string(c));
  }
  if (options.training && n < 2) {
    throw ShapeError("batch_norm: training mode needs batch size >= 2");
  }
  const std::size_t m = n * inner;
  const double* x = input.data().data();
  std::vector<double> mean(c), invstd(c);
  if (options.training) {
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      v /= static_cast<double>(m);
      mean[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(v + options.eps);
      rm[ch] = options.momentum * rm[ch] + (1.0 - options.momentum) * mu;
      rv[ch] = options.momentum * rv[ch] + (1.0 - options.momentum) * v;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      invstd[ch] = 1.0 / std::sqrt(running_var[ch] + options.eps);
    }
  }
  std::vector<double> xhat(input.size());
  std::vector<double> out(input.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double h = (x[off + i] - mean[ch]) * invstd[ch];
        xhat[off + i] = h;
        out[off + i] = scale[ch] * h + shift[ch];
      }
    }
  Tensor result = make_result(input.shape(), std::move(out), {&input, &scale, &shift});
  if (result.requires_grad()) {
    const bool training = options.training;
    result.node()->backward = [input, scale, shift, xhat = std::move(xhat), invstd, n, c, inner, m,
                               training](Node& self) {
      const double* dy = self.grad.data();
      std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t off = (b * c + ch) * inner;
          for (std::size_t i = 0; i < inner; ++i) {
            sum_dy[ch] += dy[off + i];
            sum_dy_xhat[ch] += dy[off + i] * xhat[off + i];
          }
        }
      if (wants_grad(self, scale)) {
        auto& ds = scale.node()->ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) ds[ch] += sum_dy_xhat[ch];
      }
      if (wants_grad(self, shift)) {
        auto& db = shift.node()->ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_dy[ch];
      }
      if (wants_grad(self, input)) {
        auto& dx = input.node()->ensure_grad();
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * inner;
            const double g = scale[ch] * invstd[ch];
            for (std::size_t i = 0; i < inner; ++i) {
              if (training) {
                dx[off + i] +=
                    g * (dy[off + i] - inv_m * sum_dy[ch] - xhat[off + i] * inv_m * sum_dy_xhat[ch]);
              } else {
                dx[off + i] += g * dy[off + i];
              }
            }
          }
      }
    };
  }
  return result;
}

Tensor leaky_relu(const Tensor& input, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw std::invalid_argument("leaky_relu slope must lie in (0,1)");
  std::vector<double> out(input.size());
  const auto x = input.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  Tensor result = make_result(input.shape(), std::move(out), {&input});
  if (result.requires_grad()) {
    result.node()->backward = [input, slope](Node& self) {
      auto& dx = input.node()->ensure_grad();
      const auto x = input.data();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += x[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
    };
  }
  return result;
}

Tensor tanh(const Tensor& input) {
  std::vector<double> out(input.size());
  const auto x = input.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(std::tanh(x[i]), -kOneBelow, kOneBelow);
  Tensor result = make_result(input.shape(), std::move(out), {&input});
  if (result.requires_grad()) {
    result.node()->backward = [input](Node& self) {
      auto& dx = input.node()->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const double y = self.value[i];
        dx[i] += self.grad[i] * (1.0 - y * y);
      }
    };
  }
  return result;
}

Tensor sigmoid(const Tensor& input) {
  std::vector<double> out(input.size());
  const auto x = input.data();
  constexpr double kTiny = std::numeric_limits<double>::min();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
    out[i] = std::clamp(s, kTiny, kOneBelow);
  }
  Tensor result = make_result(input.shape(), std::move(out), {&input});
  if (result.requires_grad()) {
    result.node()->backward = [input](Node& self) {
      auto& dx = input.node()->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const double y = self.value[i];
        dx[i] += self.grad[i] * y * (1.0 - y);
      }
    };
  }
  return result;
}

Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "fully_connected input");
  require_rank(weight, 2, "fully_connected weight");
  const std::size_t n = input.dim(0), k = input.dim(1), m = weight.dim(1);
  if (weight.dim(0) != k) {
    throw ShapeError("fully_connected: input " + shape_string(input.shape()) + " vs weight " +
                     shape_string(weight.shape()));
  }
  if (bias.size() != m) throw ShapeError("fully_connected: bias size " + std::to_string(bias.size()));
  std::vector<double> out(n * m);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < m; ++j) out[b * m + j] = bias[j];
  detail::gemm_nn(n, m, k, input.data().data(), weight.data().data(), out.data());
  Tensor result = make_result({n, m}, std::move(out), {&input, &weight, &bias});
  if (result.requires_grad()) {
    result.node()->backward = [input, weight, bias, n, k, m](Node& self) {
      const double* dy = self.grad.data();
      if (wants_grad(self, input)) {
        detail::gemm_nt(n, k, m, dy, weight.data().data(), input.node()->ensure_grad().data());
      }
      if (wants_grad(self, weight)) {
        detail::gemm_tn(k, m, n, input.data().data(), dy, weight.node()->ensure_grad().data());
      }
      if (wants_grad(self, bias)) {
        auto& db = bias.node()->ensure_grad();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t j = 0; j < m; ++j) db[j] += dy[b * m + j];
      }
    };
  }
  return result;
}

Tensor max_pool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  require_rank(input, 4, "max_pool2d input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (window == 0 || stride == 0) throw ShapeError("max_pool2d: window and stride must be positive");
  if (window > h || window > w) throw ShapeError("max_pool2d: window larger than input");
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  std::vector<double> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const double* x = input.data().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = x + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (oy * stride) * w + ox * stride;
        for (std::size_t i = 0; i < window; ++i)
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = (oy * stride + i) * w + ox * stride + j;
            if (src[idx] > src[best]) best = idx;
          }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        out[o] = src[best];
        argmax[o] = plane * h * w + best;
      }
  }
  Tensor result = make_result({n, c, oh, ow}, std::move(out), {&input});
  if (result.requires_grad()) {
    result.node()->backward = [input, argmax = std::move(argmax)](Node& self) {
      auto& dx = input.node()->ensure_grad();
      for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += self.grad[o];
    };
  }
  return result;
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool input");
  const std::size_t n = input.dim(0), c = input.dim(1), inner = input.dim(2) * input.dim(3);
  std::vector<double> out(n * c);
  const double* x = input.data().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    double s = 0.0;
    for (std::size_t i = 0; i < inner; ++i) s += x[plane * inner + i];
    out[plane] = s / static_cast<double>(inner);
  }
  Tensor result = make_result({n, c}, std::move(out), {&input});
  if (result.requires_grad()) {
    result.node()->backward = [input, inner](Node& self) {
      auto& dx = input.node()->ensure_grad();
      const double inv = 1.0 / static_cast<double>(inner);
      for (std::size_t plane = 0; plane < self.grad.size(); ++plane)
        for (std::size_t i = 0; i < inner; ++i) dx[plane * inner + i] += self.grad[plane] * inv;
    };
  }
  return result;
}

Tensor zero_sum_filter(const Tensor& input, const Tensor& kernel, std::size_t pad) {
  require_rank(input, 4, "zero_sum_filter input");
  require_rank(kernel, 2, "zero_sum_filter kernel");
  const std::size_t k = kernel.dim(0);
  if (kernel.dim(1) != k) throw ShapeError("zero_sum_filter kernel must be square, got " + shape_string(kernel.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h + 2 * pad < k || w + 2 * pad < k) throw ShapeError("zero_sum_filter kernel larger than padded input");
  const std::size_t oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1;
  // Output pixel (y, x) sits on input pixel (y + k/2 - pad, x + k/2 - pad); taps outside
  // the image read zero padding.
  const auto center = [k, pad](std::size_t o) { return static_cast<std::ptrdiff_t>(o + k / 2) - static_cast<std::ptrdiff_t>(pad); };
  const auto inside = [](std::ptrdiff_t v, std::size_t extent) { return v >= 0 && v < static_cast<std::ptrdiff_t>(extent); };
  const double* x = input.data().data();
  const double* kw = kernel.data().data();
  std::vector<double> out(n * c * oh * ow, 0.0);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* xp = x + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::ptrdiff_t cy = center(oy), cx = center(ox);
        const double mid = inside(cy, h) && inside(cx, w) ? xp[cy * w + cx] : 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy + i) - static_cast<std::ptrdiff_t>(pad);
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox + j) - static_cast<std::ptrdiff_t>(pad);
            const double v = inside(y, h) && inside(xx, w) ? xp[y * w + xx] : 0.0;
            s += kw[i * k + j] * (v - mid);
          }
        out[(plane * oh + oy) * ow + ox] = s;
      }
  }
  Tensor result = make_result({n, c, oh, ow}, std::move(out), {&input, &kernel});
  if (result.requires_grad()) {
    result.node()->backward = [=](Node& self) {
      const bool gx = wants_grad(self, input), gk = wants_grad(self, kernel);
      std::vector<double>* dx = gx ? &input.node()->ensure_grad() : nullptr;
      std::vector<double>* dk = gk ? &kernel.node()->ensure_grad() : nullptr;
      const double* xv = input.data().data();
      const double* kv = kernel.data().data();
      for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double g = self.grad[(plane * oh + oy) * ow + ox];
            const std::ptrdiff_t cy = center(oy), cx = center(ox);
            const bool mid_in = inside(cy, h) && inside(cx, w);
            const double mid = mid_in ? xv[base + cy * w + cx] : 0.0;
            double ksum = 0.0;
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy + i) - static_cast<std::ptrdiff_t>(pad);
                const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox + j) - static_cast<std::ptrdiff_t>(pad);
                const bool in = inside(y, h) && inside(xx, w);
                if (dx && in) (*dx)[base + y * w + xx] += kv[i * k + j] * g;
                if (dk) (*dk)[i * k + j] += g * ((in ? xv[base + y * w + xx] : 0.0) - mid);
                ksum += kv[i * k + j];
              }
            if (dx && mid_in) (*dx)[base + cy * w + cx] -= ksum * g;
          }
      }
    };
  }
  return result;
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (shape_size(shape) != input.size()) {
    throw ShapeError("reshape " + shape_string(input.shape()) + " -> " + shape_string(shape));
  }
  Tensor result = make_result(std::move(shape), std::vector<double>(input.data().begin(), input.data().end()),
                              {&input});
  if (result.requires_grad()) {
    result.node()->backward = [input](Node& self) {
      auto& dx = input.node()->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    };
  }
  return result;
}

Tensor bce_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.size() != target.size()) {
    throw ShapeError("bce_loss: prediction " + shape_string(prediction.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  const std::size_t n = prediction.size();
  const auto p = prediction.data();
  const auto t = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    s -= t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
  }
  Tensor result = make_result({1}, {s / static_cast<double>(n)}, {&prediction});
  if (result.requires_grad()) {
    result.node()->backward = [prediction, target, n](Node& self) {
      auto& dp = prediction.node()->ensure_grad();
      const auto p = prediction.data();
      const auto t = target.data();
      const double g = self.grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (p[i] < kProbClamp || p[i] > 1.0 - kProbClamp) continue;  // clamp is flat there
        dp[i] += g * (-t[i] / p[i] + (1.0 - t[i]) / (1.0 - p[i]));
      }
    };
  }
  return result;
}

Tensor bce_loss(const Tensor& prediction, double label) {
  return bce_loss(prediction, Tensor::full(prediction.shape(), label));
}

Tensor sum(const Tensor& input) {
  double s = 0.0;
  for (double v : input.data()) s += v;
  Tensor result = make_result({1}, {s}, {&input});
  if (result.requires_grad()) {
    result.node()->backward = [input](Node& self) {
      auto& dx = input.node()->ensure_grad();
      for (double& g : dx) g += self.grad[0];
    };
  }
  return result;
}

Tensor mean(const Tensor& input) { return scale(sum(input), 1.0 / static_cast<double>(input.size())); }

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor result = make_result(a.shape(), std::move(out), {&a, &b});
  if (result.requires_grad()) {
    result.node()->backward = [a, b](Node& self) {
      for (const Tensor* t : std::initializer_list<const Tensor*>{&a, &b}) {
        if (!wants_grad(self, *t)) continue;
        auto& d = t->node()->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
      }
    };
  }
  return result;
}

Tensor scale(const Tensor& input, double factor) {
  std::vector<double> out(input.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * input[i];
  Tensor result = make_result(input.shape(), std::move(out), {&input});
  if (result.requires_grad()) {
    result.node()->backward = [input, factor](Node& self) {
      auto& dx = input.node()->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * self.grad[i];
    };
  }
  return result;
}

Tensor straight_through(const Tensor& input, const Tensor& forward_value) {
  if (input.size() != forward_value.size()) {
    throw ShapeError("straight_through: " + shape_string(input.shape()) + " vs " +
                     shape_string(forward_value.shape()));
  }
  Tensor result = make_result(input.shape(),
                              std::vector<double>(forward_value.data().begin(), forward_value.data().end()),
                              {&input});
  if (result.requires_grad()) {
    result.node()->backward = [input](Node& self) {
      auto& dx = input.node()->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    };
  }
  return result;
}

}  // namespace sgan::ops
