#include "milplot/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "milplot/blas.hpp"

namespace milplot::nn {

namespace {

template <typename T>
void uniform_fill(Tensor<T>& t, double bound, Rng& rng) {
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(ConvSpec spec, const std::string& name)
    : weight(name + ".weight", {spec.out_channels, spec.kernel, spec.kernel, spec.in_channels}),
      bias(name + ".bias", {spec.out_channels}),
      spec_(spec) {
  if (spec.kernel == 0 || spec.stride == 0 || spec.in_channels == 0 || spec.out_channels == 0) {
    throw Error(ErrorKind::InvalidConfig, "convolution sizes must be positive");
  }
}

template <typename T>
std::size_t Conv2d<T>::out_extent(std::size_t in) const {
  require_shape(in + 2 * spec_.padding >= spec_.kernel, "kernel does not fit the padded input");
  return (in + 2 * spec_.padding - spec_.kernel) / spec_.stride + 1;
}

template <typename T>
void Conv2d<T>::im2col(const T* image, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow, T* cols) const {
  const std::size_t k = spec_.kernel, ci = spec_.in_channels;
  const auto pad = static_cast<std::ptrdiff_t>(spec_.padding);
  T* row = cols;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec_.stride + ky) - pad;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec_.stride + kx) - pad;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w)) {
            std::fill(row, row + ci, T{});
          } else {
            const T* src = image + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * ci;
            std::copy(src, src + ci, row);
          }
          row += ci;
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const T* cols, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow, T* image) const {
  const std::size_t k = spec_.kernel, ci = spec_.in_channels;
  const auto pad = static_cast<std::ptrdiff_t>(spec_.padding);
  const T* row = cols;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec_.stride + ky) - pad;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec_.stride + kx) - pad;
          if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix < static_cast<std::ptrdiff_t>(w)) {
            T* dst = image + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * ci;
            for (std::size_t c = 0; c < ci; ++c) dst[c] += row[c];
          }
          row += ci;
        }
      }
    }
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& input) const {
  require_shape(input.rank() == 4 && input.dim(3) == spec_.in_channels,
                "conv2d expects [n,h,w," + std::to_string(spec_.in_channels) + "], got " + shape_string(input.shape()));
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = out_extent(h), ow = out_extent(w);
  const std::size_t co = spec_.out_channels;
  const std::size_t kk = spec_.kernel * spec_.kernel * spec_.in_channels;
  const std::size_t positions = oh * ow;

  Tensor<T> output({n, oh, ow, co});
  std::vector<T> cols(positions * kk);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(input.data() + i * h * w * spec_.in_channels, h, w, oh, ow, cols.data());
    T* out = output.data() + i * positions * co;
    for (std::size_t p = 0; p < positions; ++p) std::copy(bias.value.data(), bias.value.data() + co, out + p * co);
    blas::gemm<T>(false, true, positions, co, kk, T(1), cols.data(), kk, weight.value.data(), kk, T(1), out, co);
  }
  return output;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& input, const Tensor<T>& grad_output, bool need_input_grad) {
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = out_extent(h), ow = out_extent(w);
  const std::size_t co = spec_.out_channels;
  const std::size_t kk = spec_.kernel * spec_.kernel * spec_.in_channels;
  const std::size_t positions = oh * ow;
  require_shape(grad_output.shape() == Shape({n, oh, ow, co}), "conv2d grad_output shape mismatch");

  Tensor<T> grad_input;
  if (need_input_grad) grad_input = Tensor<T>(input.shape());
  std::vector<T> cols(positions * kk);
  std::vector<T> grad_cols(need_input_grad ? positions * kk : 0);
  for (std::size_t i = 0; i < n; ++i) {
    const T* dy = grad_output.data() + i * positions * co;
    im2col(input.data() + i * h * w * spec_.in_channels, h, w, oh, ow, cols.data());
    blas::gemm<T>(true, false, co, kk, positions, T(1), dy, co, cols.data(), kk, T(1), weight.grad.data(), kk);
    for (std::size_t p = 0; p < positions; ++p) {
      for (std::size_t c = 0; c < co; ++c) bias.grad[c] += dy[p * co + c];
    }
    if (need_input_grad) {
      blas::gemm<T>(false, false, positions, kk, co, T(1), dy, co, weight.value.data(), kk, T(0), grad_cols.data(), kk);
      col2im(grad_cols.data(), h, w, oh, ow, grad_input.data() + i * h * w * spec_.in_channels);
    }
  }
  return grad_input;
}

template <typename T>
void Conv2d<T>::init_kaiming(Rng& rng) {
  const double fan_in = static_cast<double>(spec_.kernel * spec_.kernel * spec_.in_channels);
  uniform_fill(weight.value, std::sqrt(6.0 / fan_in), rng);
  bias.value.fill(T{});
}

// ---------------------------------------------------------------- pooling

template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input) {
  require_shape(input.rank() == 4, "maxpool2 expects [n,h,w,c]");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  PoolResult<T> result{Tensor<T>({n, oh, ow, c}), std::vector<std::uint32_t>(n * oh * ow * c)};
  std::size_t o = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          std::size_t best = ((i * h + 2 * oy) * w + 2 * ox) * c + ch;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t y = 2 * oy + dy, x = 2 * ox + dx;
              if (y >= h || x >= w) continue;
              const std::size_t idx = ((i * h + y) * w + x) * c + ch;
              if (input[idx] > input[best]) best = idx;
            }
          }
          result.output[o] = input[best];
          result.argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return result;
}

template <typename T>
Tensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                            const Tensor<T>& grad_output) {
  require_shape(argmax.size() == grad_output.size(), "maxpool2 argmax/grad size mismatch");
  Tensor<T> grad_input(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) grad_input[argmax[o]] += grad_output[o];
  return grad_input;
}

template <typename T>
Tensor<T> adaptive_avgpool(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  require_shape(input.rank() == 4, "adaptive_avgpool expects [n,h,w,c]");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  Tensor<T> output({n, out_h, out_w, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t y0 = oy * h / out_h, y1 = ((oy + 1) * h + out_h - 1) / out_h;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t x0 = ox * w / out_w, x1 = ((ox + 1) * w + out_w - 1) / out_w;
        const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
        T* out = output.data() + ((i * out_h + oy) * out_w + ox) * c;
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) {
            const T* in = input.data() + ((i * h + y) * w + x) * c;
            for (std::size_t ch = 0; ch < c; ++ch) out[ch] += in[ch];
          }
        }
        for (std::size_t ch = 0; ch < c; ++ch) out[ch] *= inv;
      }
    }
  }
  return output;
}

template <typename T>
Tensor<T> adaptive_avgpool_backward(const Shape& input_shape, const Tensor<T>& grad_output) {
  const std::size_t n = input_shape[0], h = input_shape[1], w = input_shape[2], c = input_shape[3];
  const std::size_t out_h = grad_output.dim(1), out_w = grad_output.dim(2);
  Tensor<T> grad_input(input_shape);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t y0 = oy * h / out_h, y1 = ((oy + 1) * h + out_h - 1) / out_h;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t x0 = ox * w / out_w, x1 = ((ox + 1) * w + out_w - 1) / out_w;
        const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
        const T* g = grad_output.data() + ((i * out_h + oy) * out_w + ox) * c;
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) {
            T* dst = grad_input.data() + ((i * h + y) * w + x) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += g[ch] * inv;
          }
        }
      }
    }
  }
  return grad_input;
}

// ---------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(std::size_t in_features, std::size_t out_features, const std::string& name)
    : weight(name + ".weight", {out_features, in_features}), bias(name + ".bias", {out_features}) {}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& input) const {
  const std::size_t d_in = in_features(), d_out = out_features();
  require_shape(input.rank() == 2 && input.dim(1) == d_in,
                "dense expects [n," + std::to_string(d_in) + "], got " + shape_string(input.shape()));
  const std::size_t n = input.dim(0);
  Tensor<T> output({n, d_out});
  for (std::size_t r = 0; r < n; ++r) {
    T* y = output.data() + r * d_out;
    std::copy(bias.value.data(), bias.value.data() + d_out, y);
    blas::gemv<T>(d_out, d_in, T(1), weight.value.data(), d_in, input.data() + r * d_in, T(1), y);
  }
  return output;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& input, const Tensor<T>& grad_output, bool need_input_grad) {
  const std::size_t d_in = in_features(), d_out = out_features();
  const std::size_t n = input.dim(0);
  require_shape(grad_output.shape() == Shape({n, d_out}), "dense grad_output shape mismatch");
  blas::gemm<T>(true, false, d_out, d_in, n, T(1), grad_output.data(), d_out, input.data(), d_in, T(1),
                weight.grad.data(), d_in);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < d_out; ++o) bias.grad[o] += grad_output[r * d_out + o];
  }
  if (!need_input_grad) return {};
  Tensor<T> grad_input({n, d_in});
  blas::gemm<T>(false, false, n, d_in, d_out, T(1), grad_output.data(), d_out, weight.value.data(), d_in, T(0),
                grad_input.data(), d_in);
  return grad_input;
}

template <typename T>
void Dense<T>::init_kaiming(Rng& rng) {
  uniform_fill(weight.value, std::sqrt(6.0 / static_cast<double>(in_features())), rng);
  bias.value.fill(T{});
}

template <typename T>
void Dense<T>::init_xavier(Rng& rng) {
  uniform_fill(weight.value, std::sqrt(6.0 / static_cast<double>(in_features() + out_features())), rng);
  bias.value.fill(T{});
}

// ---------------------------------------------------------------- activations

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_output) {
  Tensor<T> g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(output[i] > T(0))) g[i] = T(0);
  }
  return g;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = std::tanh(v);
  return y;
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& output, const Tensor<T>& grad_output) {
  Tensor<T> g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= T(1) - output[i] * output[i];
  return g;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = T(1) / (T(1) + std::exp(-v));
  return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_output) {
  Tensor<T> g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output[i] * (T(1) - output[i]);
  return g;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  require_shape(x.rank() >= 1 && x.size() > 0, "softmax of an empty tensor");
  const std::size_t last = x.shape().back();
  const std::size_t rows = x.size() / last;
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * last;
    T* out = y.data() + r * last;
    const T m = *std::max_element(in, in + last);
    T sum = T(0);
    for (std::size_t i = 0; i < last; ++i) {
      out[i] = std::exp(in[i] - m);
      sum += out[i];
    }
    for (std::size_t i = 0; i < last; ++i) out[i] /= sum;
  }
  return y;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& output, const Tensor<T>& grad_output) {
  const std::size_t last = output.shape().back();
  const std::size_t rows = output.size() / last;
  Tensor<T> g(output.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* y = output.data() + r * last;
    const T* dy = grad_output.data() + r * last;
    T dot = T(0);
    for (std::size_t i = 0; i < last; ++i) dot += y[i] * dy[i];
    for (std::size_t i = 0; i < last; ++i) g[r * last + i] = y[i] * (dy[i] - dot);
  }
  return g;
}

template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets) {
  require_shape(logits.rank() == 2 && logits.dim(0) == targets.size(), "cross_entropy logits/targets mismatch");
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  LossResult<T> result{T(0), softmax(logits)};
  const T scale = T(1) / static_cast<T>(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] >= classes) throw Error(ErrorKind::ShapeMismatch, "target class out of range");
    const T* row = logits.data() + r * classes;
    const T m = *std::max_element(row, row + classes);
    T sum = T(0);
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - m);
    result.loss += (m + std::log(sum) - row[targets[r]]) * scale;
    for (std::size_t c = 0; c < classes; ++c) {
      T& g = result.grad[r * classes + c];
      g = (g - (c == targets[r] ? T(1) : T(0))) * scale;
    }
  }
  return result;
}

#define MILPLOT_INSTANTIATE_LAYERS(T)                                                                          \
  template class Conv2d<T>;                                                                                    \
  template class Dense<T>;                                                                                     \
  template PoolResult<T> maxpool2<T>(const Tensor<T>&);                                                        \
  template Tensor<T> maxpool2_backward<T>(const Shape&, const std::vector<std::uint32_t>&, const Tensor<T>&);   \
  template Tensor<T> adaptive_avgpool<T>(const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> adaptive_avgpool_backward<T>(const Shape&, const Tensor<T>&);                             \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                                \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> tanh<T>(const Tensor<T>&);                                                                \
  template Tensor<T> tanh_backward<T>(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                             \
  template Tensor<T> sigmoid_backward<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                             \
  template Tensor<T> softmax_backward<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template LossResult<T> cross_entropy<T>(const Tensor<T>&, std::span<const std::size_t>);

MILPLOT_INSTANTIATE_LAYERS(float)
MILPLOT_INSTANTIATE_LAYERS(double)

#undef MILPLOT_INSTANTIATE_LAYERS

}  // namespace milplot::nn
