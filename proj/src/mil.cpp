#include "milplot/mil.hpp"

#include <algorithm>
#include <numeric>

namespace milplot::mil {

using nn::Tensor;

template <typename T>
Tensor<T> instances_tensor(const byteplot::Bag& bag, std::size_t begin, std::size_t end) {
  if (begin >= end || end > bag.size()) throw Error(ErrorKind::ShapeMismatch, "bad instance range");
  const std::size_t side = bag.instances[begin].width;
  const std::size_t pixels = side * side;
  Tensor<T> x({end - begin, side, side, 1});
  for (std::size_t i = begin; i < end; ++i) {
    const auto& p = bag.instances[i];
    if (p.width != side || p.height != side) throw Error(ErrorKind::ShapeMismatch, "instances differ in size");
    std::copy(p.values.begin(), p.values.end(), x.data() + (i - begin) * pixels);
  }
  return x;
}

// ---------------------------------------------------------------- Embedder

template <typename T>
Embedder<T>::Embedder(const nn::ConvStackConfig& config)
    : stack(config, "embedder"), projection(config.output_features(), kEmbedDim, "embedder.fc") {}

template <typename T>
Tensor<T> Embedder<T>::forward(const Tensor<T>& instances, Trace* trace) const {
  if (!trace) return projection.forward(stack.forward(instances));
  trace->stack_output = stack.forward(instances, &trace->stack);
  return projection.forward(trace->stack_output);
}

template <typename T>
void Embedder<T>::backward(const Trace& trace, const Tensor<T>& grad_output) {
  stack.backward(trace.stack, projection.backward(trace.stack_output, grad_output));
}

template <typename T>
void Embedder<T>::init(Rng& rng) {
  stack.init(rng);
  projection.init_kaiming(rng);
}

template <typename T>
void Embedder<T>::collect(nn::ParamRefs<T>& out) {
  stack.collect(out);
  out.push_back(&projection.weight);
  out.push_back(&projection.bias);
}

// ---------------------------------------------------------------- attention

template <typename T>
AttentionHead<T>::AttentionHead(std::size_t in_features, std::size_t hidden, bool gated)
    : V(in_features, hidden, "attention.V"), w(hidden, 1, "attention.w"), gated_(gated) {
  if (gated_) U = nn::Dense<T>(in_features, hidden, "attention.U");
}

template <typename T>
Tensor<T> AttentionHead<T>::scores(const Tensor<T>& features, Trace* trace) const {
  Tensor<T> hidden = nn::tanh(V.forward(features));
  Tensor<T> s;
  if (gated_) {
    Tensor<T> gate = nn::sigmoid(U.forward(features));
    Tensor<T> mixed = hidden;
    for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] *= gate[i];
    s = w.forward(mixed);
    if (trace) {
      trace->gate = std::move(gate);
      trace->mixed = std::move(mixed);
    }
  } else {
    s = w.forward(hidden);
  }
  if (trace) trace->hidden = std::move(hidden);
  s.reshape({features.dim(0)});
  return s;
}

template <typename T>
Tensor<T> AttentionHead<T>::backward(const Tensor<T>& features, const Trace& trace, const Tensor<T>& grad_scores) {
  Tensor<T> ds = grad_scores;
  ds.reshape({grad_scores.size(), 1});
  if (!gated_) {
    Tensor<T> dh = w.backward(trace.hidden, ds);
    return V.backward(features, nn::tanh_backward(trace.hidden, dh));
  }
  Tensor<T> dmixed = w.backward(trace.mixed, ds);
  Tensor<T> dh = dmixed, dg = dmixed;
  for (std::size_t i = 0; i < dmixed.size(); ++i) {
    dh[i] *= trace.gate[i];
    dg[i] *= trace.hidden[i];
  }
  Tensor<T> df = V.backward(features, nn::tanh_backward(trace.hidden, dh));
  Tensor<T> df_gate = U.backward(features, nn::sigmoid_backward(trace.gate, dg));
  for (std::size_t i = 0; i < df.size(); ++i) df[i] += df_gate[i];
  return df;
}

template <typename T>
void AttentionHead<T>::init(Rng& rng) {
  V.init_xavier(rng);
  if (gated_) U.init_xavier(rng);
  w.init_xavier(rng);
}

template <typename T>
void AttentionHead<T>::collect(nn::ParamRefs<T>& out) {
  out.push_back(&V.weight);
  out.push_back(&V.bias);
  if (gated_) {
    out.push_back(&U.weight);
    out.push_back(&U.bias);
  }
  out.push_back(&w.weight);
  out.push_back(&w.bias);
}

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& features, const AttentionHead<T>& head) {
  return nn::softmax(head.scores(features));
}

// ---------------------------------------------------------------- top-k + aggregation

template <typename T>
std::vector<std::size_t> topk_select(std::span<const T> values, std::size_t k_top) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  if (k_top == 0 || k_top >= values.size()) return order;
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_top), order.end(),
                    [&](std::size_t a, std::size_t b) { return values[a] > values[b] || (values[a] == values[b] && a < b); });
  order.resize(k_top);
  std::sort(order.begin(), order.end());
  return order;
}

template <typename T>
Tensor<T> aggregate(const Tensor<T>& features, const Tensor<T>& weights, std::span<const std::size_t> selected) {
  nn::require_shape(features.rank() == 2 && weights.size() == features.dim(0), "aggregate features/weights mismatch");
  if (selected.empty()) throw Error(ErrorKind::ShapeMismatch, "aggregate needs a non-empty selection");
  const std::size_t d = features.dim(1);
  T total = T(0);
  for (std::size_t j : selected) total += weights[j];
  Tensor<T> out({d});
  for (std::size_t j : selected) {
    const T a = weights[j] / total;
    const T* f = features.data() + j * d;
    for (std::size_t c = 0; c < d; ++c) out[c] += a * f[c];
  }
  return out;
}

template <typename T>
AggregateGrads<T> aggregate_backward(const Tensor<T>& features, const Tensor<T>& weights,
                                     std::span<const std::size_t> selected, const Tensor<T>& grad_output) {
  const std::size_t d = features.dim(1);
  AggregateGrads<T> grads{Tensor<T>(features.shape()), Tensor<T>(weights.shape())};
  T total = T(0);
  for (std::size_t j : selected) total += weights[j];

  std::vector<T> dnorm(selected.size());
  T mean_term = T(0);
  for (std::size_t s = 0; s < selected.size(); ++s) {
    const std::size_t j = selected[s];
    const T a = weights[j] / total;
    const T* f = features.data() + j * d;
    T* gf = grads.features.data() + j * d;
    T dot = T(0);
    for (std::size_t c = 0; c < d; ++c) {
      gf[c] = a * grad_output[c];
      dot += f[c] * grad_output[c];
    }
    dnorm[s] = dot;
    mean_term += a * dot;
  }
  for (std::size_t s = 0; s < selected.size(); ++s) grads.weights[selected[s]] = (dnorm[s] - mean_term) / total;
  return grads;
}

// ---------------------------------------------------------------- model

template <typename T>
MilModel<T>::MilModel(MilConfig config)
    : embedder(config.embedder),
      attention(kEmbedDim, config.attention_dim, config.gated),
      classifier(kEmbedDim, config.classes, "classifier"),
      config_(std::move(config)) {
  if (config_.classes < 2) throw Error(ErrorKind::InvalidConfig, "MIL model needs at least 2 classes");
  if (config_.sub_batch == 0) throw Error(ErrorKind::InvalidConfig, "sub_batch must be positive");
}

template <typename T>
void MilModel<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  embedder.init(rng);
  attention.init(rng);
  classifier.init_xavier(rng);
}

template <typename T>
Tensor<T> MilModel<T>::embed_instances(const byteplot::Bag& bag, std::size_t sub_batch) const {
  if (bag.size() == 0) throw Error(ErrorKind::EmptyInput, "bag has no instances");
  if (sub_batch == 0) throw Error(ErrorKind::InvalidConfig, "sub_batch must be positive");
  Tensor<T> features({bag.size(), kEmbedDim});
  for (std::size_t begin = 0; begin < bag.size(); begin += sub_batch) {
    const std::size_t end = std::min(bag.size(), begin + sub_batch);
    const Tensor<T> group = embedder.forward(instances_tensor<T>(bag, begin, end));
    std::copy(group.data(), group.data() + group.size(), features.data() + begin * kEmbedDim);
  }
  return features;
}

template <typename T>
MilOutput<T> MilModel<T>::forward_features(const Tensor<T>& features) const {
  MilOutput<T> out;
  const Tensor<T> scores = attention.scores(features);
  out.attention = nn::softmax(scores).storage();
  out.selected = topk_select<T>(scores.values(), config_.k_top);

  // Selected weights come from a softmax over the selected scores only, so
  // instances outside the selection cannot perturb them.
  Tensor<T> selected_scores({out.selected.size()});
  for (std::size_t s = 0; s < out.selected.size(); ++s) selected_scores[s] = scores[out.selected[s]];
  const Tensor<T> selected_weights = nn::softmax(selected_scores);
  Tensor<T> weights({features.dim(0)});
  for (std::size_t s = 0; s < out.selected.size(); ++s) weights[out.selected[s]] = selected_weights[s];

  Tensor<T> bag_embedding = aggregate(features, weights, out.selected);
  bag_embedding.reshape({1, kEmbedDim});
  out.logits = classifier.forward(bag_embedding);
  out.probabilities = nn::softmax(out.logits).storage();
  return out;
}

template <typename T>
MilOutput<T> MilModel<T>::forward(const byteplot::Bag& bag) const {
  return forward_features(embed_instances(bag, config_.sub_batch));
}

template <typename T>
T MilModel<T>::accumulate_gradients(const byteplot::Bag& bag, std::size_t label, MilOutput<T>* output) {
  const std::size_t k = bag.size();
  if (k == 0) throw Error(ErrorKind::EmptyInput, "bag has no instances");
  const bool single_group = k <= config_.sub_batch;

  typename Embedder<T>::Trace full_trace;
  Tensor<T> features = single_group ? embedder.forward(instances_tensor<T>(bag, 0, k), &full_trace)
                                    : embed_instances(bag, config_.sub_batch);

  typename AttentionHead<T>::Trace att_trace;
  const Tensor<T> scores = attention.scores(features, &att_trace);
  const std::vector<std::size_t> selected = topk_select<T>(scores.values(), config_.k_top);

  Tensor<T> selected_scores({selected.size()});
  for (std::size_t s = 0; s < selected.size(); ++s) selected_scores[s] = scores[selected[s]];
  const Tensor<T> selected_weights = nn::softmax(selected_scores);
  Tensor<T> weights({k});
  for (std::size_t s = 0; s < selected.size(); ++s) weights[selected[s]] = selected_weights[s];

  Tensor<T> bag_embedding = aggregate(features, weights, selected);
  bag_embedding.reshape({1, kEmbedDim});
  const Tensor<T> logits = classifier.forward(bag_embedding);
  const std::size_t targets[] = {label};
  nn::LossResult<T> loss = nn::cross_entropy(logits, std::span<const std::size_t>(targets));

  Tensor<T> grad_embedding = classifier.backward(bag_embedding, loss.grad);
  grad_embedding.reshape({kEmbedDim});
  AggregateGrads<T> agg = aggregate_backward(features, weights, selected, grad_embedding);

  Tensor<T> grad_selected_weights({selected.size()});
  for (std::size_t s = 0; s < selected.size(); ++s) grad_selected_weights[s] = agg.weights[selected[s]];
  const Tensor<T> grad_selected_scores = nn::softmax_backward(selected_weights, grad_selected_weights);
  Tensor<T> grad_scores({k});
  for (std::size_t s = 0; s < selected.size(); ++s) grad_scores[selected[s]] = grad_selected_scores[s];

  Tensor<T> grad_features = attention.backward(features, att_trace, grad_scores);
  for (std::size_t i = 0; i < grad_features.size(); ++i) grad_features[i] += agg.features[i];

  if (single_group && selected.size() == k) {
    embedder.backward(full_trace, grad_features);
  } else {
    // Only selected instances receive gradient: recompute their forward
    // pass group by group and backpropagate.
    for (std::size_t begin = 0; begin < selected.size(); begin += config_.sub_batch) {
      const std::size_t end = std::min(selected.size(), begin + config_.sub_batch);
      byteplot::Bag group;
      Tensor<T> grad_group({end - begin, kEmbedDim});
      for (std::size_t s = begin; s < end; ++s) {
        group.instances.push_back(bag.instances[selected[s]]);
        std::copy(grad_features.data() + selected[s] * kEmbedDim, grad_features.data() + (selected[s] + 1) * kEmbedDim,
                  grad_group.data() + (s - begin) * kEmbedDim);
      }
      typename Embedder<T>::Trace trace;
      embedder.forward(instances_tensor<T>(group, 0, group.size()), &trace);
      embedder.backward(trace, grad_group);
    }
  }

  if (output) {
    output->attention = nn::softmax(scores).storage();
    output->selected = selected;
    output->probabilities = nn::softmax(logits).storage();
    output->logits = logits;
  }
  return loss.loss;
}

template <typename T>
nn::ParamRefs<T> MilModel<T>::params() {
  nn::ParamRefs<T> out;
  embedder.collect(out);
  attention.collect(out);
  out.push_back(&classifier.weight);
  out.push_back(&classifier.bias);
  return out;
}

void write_attention_header(std::ostream& out) { out << "bag_id,instance_index,weight,selected\n"; }

template <typename T>
void write_attention_rows(std::ostream& out, const std::string& bag_id, const MilOutput<T>& output) {
  std::vector<bool> chosen(output.attention.size(), false);
  for (std::size_t j : output.selected) chosen[j] = true;
  for (std::size_t j = 0; j < output.attention.size(); ++j) {
    out << bag_id << ',' << j << ',' << output.attention[j] << ',' << (chosen[j] ? 1 : 0) << '\n';
  }
}

#define MILPLOT_INSTANTIATE_MIL(T)                                                                               \
  template Tensor<T> instances_tensor<T>(const byteplot::Bag&, std::size_t, std::size_t);                      \
  template class Embedder<T>;                                                                                    \
  template class AttentionHead<T>;                                                                               \
  template class MilModel<T>;                                                                                    \
  template Tensor<T> attention_weights<T>(const Tensor<T>&, const AttentionHead<T>&);                           \
  template std::vector<std::size_t> topk_select<T>(std::span<const T>, std::size_t);                            \
  template Tensor<T> aggregate<T>(const Tensor<T>&, const Tensor<T>&, std::span<const std::size_t>);            \
  template AggregateGrads<T> aggregate_backward<T>(const Tensor<T>&, const Tensor<T>&,                          \
                                                   std::span<const std::size_t>, const Tensor<T>&);             \
  template void write_attention_rows<T>(std::ostream&, const std::string&, const MilOutput<T>&);

MILPLOT_INSTANTIATE_MIL(float)
MILPLOT_INSTANTIATE_MIL(double)

#undef MILPLOT_INSTANTIATE_MIL

}  // namespace milplot::mil
