#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "milplot/rng.hpp"
#include "milplot/tensor.hpp"

// Differentiable building blocks. Layers own their parameters but never the
// activations: forward() is const and the caller keeps whatever backward()
// needs, which keeps inference thread-safe and lets sub-batches be
// recomputed instead of cached.
namespace milplot::nn {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ConvSpec spec, const std::string& name);

  const ConvSpec& spec() const { return spec_; }
  std::size_t out_extent(std::size_t in) const;

  // [n,h,w,c_in] -> [n,h',w',c_out]; h' = floor((h + 2p - k) / stride) + 1.
  Tensor<T> forward(const Tensor<T>& input) const;

  // Accumulates weight/bias gradients. Returns the input gradient unless
  // `need_input_grad` is false, in which case an empty tensor is returned.
  Tensor<T> backward(const Tensor<T>& input, const Tensor<T>& grad_output, bool need_input_grad = true);

  void init_kaiming(Rng& rng);

  // weight layout [c_out, k, k, c_in]
  Param<T> weight;
  Param<T> bias;

 private:
  void im2col(const T* image, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow, T* cols) const;
  void col2im(const T* cols, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow, T* image) const;

  ConvSpec spec_;
};

// 2x2 max pool, stride 2. Odd extents produce a clipped final window.
template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input);

// Gradient routed to the recorded argmax (first maximum in scan order).
template <typename T>
Tensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                            const Tensor<T>& grad_output);

// Average pool with PyTorch-style adaptive bins: [start, end) =
// [floor(i*H/out), ceil((i+1)*H/out)).
template <typename T>
Tensor<T> adaptive_avgpool(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> adaptive_avgpool_backward(const Shape& input_shape, const Tensor<T>& grad_output);

template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in_features, std::size_t out_features, const std::string& name);

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }

  // [n,d_in] -> [n,d_out]. Rows are computed independently, so a row's
  // result does not depend on what else is in the batch.
  Tensor<T> forward(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& input, const Tensor<T>& grad_output, bool need_input_grad = true);

  void init_kaiming(Rng& rng);
  void init_xavier(Rng& rng);

  // weight layout [d_out, d_in]
  Param<T> weight;
  Param<T> bias;
};

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
// Uses the forward output: gradient passes where output > 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_output);

template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& output, const Tensor<T>& grad_output);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_output);

// Softmax over the last axis, max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& output, const Tensor<T>& grad_output);

template <typename T>
struct LossResult {
  T loss{};
  Tensor<T> grad;  // d loss / d logits
};

// Mean over rows of -log softmax(logits)[target].
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets);

}  // namespace milplot::nn
