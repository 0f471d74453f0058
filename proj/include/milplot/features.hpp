#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "milplot/layers.hpp"

namespace milplot::nn {

// conv3x3 -> relu -> maxpool2 -> ... -> adaptive average pool -> flatten.
// Shared by the instance embedder and the resize baseline.
struct ConvStackConfig {
  std::vector<std::size_t> channels{16, 32, 32};
  std::size_t first_stride = 2;
  // Whether the last conv layer is followed by a max pool as well.
  bool pool_after_last = false;
  std::size_t pooled_side = 4;

  std::size_t output_features() const { return channels.back() * pooled_side * pooled_side; }
};

template <typename T>
class ConvStack {
 public:
  struct Trace {
    std::vector<Tensor<T>> conv_inputs;
    std::vector<Tensor<T>> relu_outputs;
    std::vector<std::vector<std::uint32_t>> argmax;
    Shape avgpool_input;
  };

  ConvStack() = default;
  ConvStack(ConvStackConfig config, const std::string& name);

  const ConvStackConfig& config() const { return config_; }

  // [n,h,w,1] -> [n, output_features]
  Tensor<T> forward(const Tensor<T>& input, Trace* trace = nullptr) const;
  void backward(const Trace& trace, const Tensor<T>& grad_output);

  void init(Rng& rng);
  void collect(ParamRefs<T>& out);

  std::vector<Conv2d<T>> convs;

 private:
  bool pools_after(std::size_t layer) const { return layer + 1 < convs.size() || config_.pool_after_last; }

  ConvStackConfig config_;
};

}  // namespace milplot::nn
