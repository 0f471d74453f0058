#include "milplot/features.hpp"

namespace milplot::nn {

template <typename T>
ConvStack<T>::ConvStack(ConvStackConfig config, const std::string& name) : config_(std::move(config)) {
  if (config_.channels.empty()) throw Error(ErrorKind::InvalidConfig, "conv stack needs at least one layer");
  std::size_t in = 1;
  for (std::size_t l = 0; l < config_.channels.size(); ++l) {
    ConvSpec spec{in, config_.channels[l], 3, l == 0 ? config_.first_stride : 1, 1};
    convs.emplace_back(spec, name + ".conv" + std::to_string(l + 1));
    in = config_.channels[l];
  }
}

template <typename T>
Tensor<T> ConvStack<T>::forward(const Tensor<T>& input, Trace* trace) const {
  if (trace) *trace = Trace{};
  Tensor<T> x = input;
  for (std::size_t l = 0; l < convs.size(); ++l) {
    Tensor<T> y = relu(convs[l].forward(x));
    if (trace) trace->conv_inputs.push_back(std::move(x));
    if (pools_after(l)) {
      PoolResult<T> pooled = maxpool2(y);
      x = std::move(pooled.output);
      if (trace) trace->argmax.push_back(std::move(pooled.argmax));
    } else {
      x = y;
      if (trace) trace->argmax.emplace_back();
    }
    if (trace) trace->relu_outputs.push_back(std::move(y));
  }
  if (trace) trace->avgpool_input = x.shape();
  Tensor<T> pooled = adaptive_avgpool(x, config_.pooled_side, config_.pooled_side);
  pooled.reshape({input.dim(0), config_.output_features()});
  return pooled;
}

template <typename T>
void ConvStack<T>::backward(const Trace& trace, const Tensor<T>& grad_output) {
  const std::size_t n = grad_output.dim(0);
  Tensor<T> g = grad_output;
  g.reshape({n, config_.pooled_side, config_.pooled_side, config_.channels.back()});
  g = adaptive_avgpool_backward(trace.avgpool_input, g);
  for (std::size_t l = convs.size(); l-- > 0;) {
    const Tensor<T>& y = trace.relu_outputs[l];
    if (pools_after(l)) g = maxpool2_backward(y.shape(), trace.argmax[l], g);
    g = relu_backward(y, g);
    g = convs[l].backward(trace.conv_inputs[l], g, l > 0);
  }
}

template <typename T>
void ConvStack<T>::init(Rng& rng) {
  for (auto& c : convs) c.init_kaiming(rng);
}

template <typename T>
void ConvStack<T>::collect(ParamRefs<T>& out) {
  for (auto& c : convs) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
}

template class ConvStack<float>;
template class ConvStack<double>;

}  // namespace milplot::nn
