#include "milplot/baseline.hpp"

namespace milplot::baseline {

using nn::Tensor;

byteplot::Patch baseline_preprocess(std::span<const std::uint8_t> bytes, std::size_t side) {
  return byteplot::to_unit(byteplot::resize_bilinear(byteplot::to_square_image(bytes), side, side));
}

template <typename T>
BaselineModel<T>::BaselineModel(BaselineConfig config)
    : stack(config.stack, "baseline"),
      hidden(config.stack.output_features(), config.hidden, "baseline.fc1"),
      classifier(config.hidden, config.classes, "baseline.fc2"),
      config_(std::move(config)) {
  if (config_.classes < 2) throw Error(ErrorKind::InvalidConfig, "baseline needs at least 2 classes");
}

template <typename T>
void BaselineModel<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  stack.init(rng);
  hidden.init_kaiming(rng);
  classifier.init_xavier(rng);
}

template <typename T>
Tensor<T> BaselineModel<T>::input_tensor(const byteplot::Patch& patch) const {
  if (patch.width != config_.side || patch.height != config_.side) {
    throw Error(ErrorKind::ShapeMismatch, "baseline expects a " + std::to_string(config_.side) + "x" +
                                              std::to_string(config_.side) + " input");
  }
  return Tensor<T>({1, config_.side, config_.side, 1}, std::vector<T>(patch.values.begin(), patch.values.end()));
}

template <typename T>
Tensor<T> BaselineModel<T>::logits(const byteplot::Patch& patch) const {
  return classifier.forward(nn::relu(hidden.forward(stack.forward(input_tensor(patch)))));
}

template <typename T>
std::vector<T> BaselineModel<T>::forward(const byteplot::Patch& patch) const {
  return nn::softmax(logits(patch)).storage();
}

template <typename T>
T BaselineModel<T>::accumulate_gradients(const byteplot::Patch& patch, std::size_t label,
                                         std::vector<T>* probabilities) {
  typename nn::ConvStack<T>::Trace trace;
  const Tensor<T> features = stack.forward(input_tensor(patch), &trace);
  const Tensor<T> h = nn::relu(hidden.forward(features));
  const Tensor<T> out = classifier.forward(h);
  const std::size_t targets[] = {label};
  nn::LossResult<T> loss = nn::cross_entropy(out, std::span<const std::size_t>(targets));

  Tensor<T> g = classifier.backward(h, loss.grad);
  g = hidden.backward(features, nn::relu_backward(h, g));
  stack.backward(trace, g);

  if (probabilities) *probabilities = nn::softmax(out).storage();
  return loss.loss;
}

template <typename T>
nn::ParamRefs<T> BaselineModel<T>::params() {
  nn::ParamRefs<T> out;
  stack.collect(out);
  for (auto* d : {&hidden, &classifier}) {
    out.push_back(&d->weight);
    out.push_back(&d->bias);
  }
  return out;
}

template class BaselineModel<float>;
template class BaselineModel<double>;

}  // namespace milplot::baseline
