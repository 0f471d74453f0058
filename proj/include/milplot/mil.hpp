#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "milplot/byteplot.hpp"
#include "milplot/features.hpp"
#include "milplot/layers.hpp"

namespace milplot::mil {

inline constexpr std::size_t kEmbedDim = 512;
inline constexpr std::size_t kDefaultSubBatch = 60;
inline constexpr std::size_t kDefaultTopK = 12;

struct MilConfig {
  nn::ConvStackConfig embedder{{16, 32, 32}, 2, false, 4};
  std::size_t attention_dim = 128;
  bool gated = false;
  std::size_t classes = 5;
  std::size_t sub_batch = kDefaultSubBatch;
  // 0 disables selection (every instance is aggregated).
  std::size_t k_top = kDefaultTopK;
  std::size_t patch = byteplot::kPatchSide;
};

// Stacks bag instances [begin, end) into a [n, patch, patch, 1] tensor.
template <typename T>
nn::Tensor<T> instances_tensor(const byteplot::Bag& bag, std::size_t begin, std::size_t end);

// Per-instance CNN: conv stack followed by a dense projection to 512.
template <typename T>
class Embedder {
 public:
  struct Trace {
    typename nn::ConvStack<T>::Trace stack;
    nn::Tensor<T> stack_output;
  };

  Embedder() = default;
  explicit Embedder(const nn::ConvStackConfig& config);

  nn::Tensor<T> forward(const nn::Tensor<T>& instances, Trace* trace = nullptr) const;
  void backward(const Trace& trace, const nn::Tensor<T>& grad_output);

  void init(Rng& rng);
  void collect(nn::ParamRefs<T>& out);

  nn::ConvStack<T> stack;
  nn::Dense<T> projection;
};

// score_j = w^T tanh(V f_j)                      (plain)
// score_j = w^T (tanh(V f_j) * sigmoid(U f_j))   (gated)
template <typename T>
class AttentionHead {
 public:
  struct Trace {
    nn::Tensor<T> hidden;  // tanh branch
    nn::Tensor<T> gate;    // sigmoid branch (gated only)
    nn::Tensor<T> mixed;   // hidden * gate (gated only)
  };

  AttentionHead() = default;
  AttentionHead(std::size_t in_features, std::size_t hidden, bool gated);

  bool gated() const { return gated_; }

  // [k, in] -> [k]
  nn::Tensor<T> scores(const nn::Tensor<T>& features, Trace* trace = nullptr) const;
  // Returns d loss / d features; accumulates parameter gradients.
  nn::Tensor<T> backward(const nn::Tensor<T>& features, const Trace& trace, const nn::Tensor<T>& grad_scores);

  void init(Rng& rng);
  void collect(nn::ParamRefs<T>& out);

  nn::Dense<T> V;
  nn::Dense<T> U;
  nn::Dense<T> w;

 private:
  bool gated_ = false;
};

// softmax(scores) over the k instances of one bag.
template <typename T>
nn::Tensor<T> attention_weights(const nn::Tensor<T>& features, const AttentionHead<T>& head);

// Indices of the min(k_top, n) largest values, ties going to the lower
// index; returned in ascending index order. k_top == 0 selects everything.
template <typename T>
std::vector<std::size_t> topk_select(std::span<const T> values, std::size_t k_top);

// Weighted average of the selected feature rows, weights renormalised over
// the selection. features [k, d], weights [k] -> [d].
template <typename T>
nn::Tensor<T> aggregate(const nn::Tensor<T>& features, const nn::Tensor<T>& weights,
                        std::span<const std::size_t> selected);

template <typename T>
struct AggregateGrads {
  nn::Tensor<T> features;  // [k, d], zero outside the selection
  nn::Tensor<T> weights;   // [k], zero outside the selection
};

template <typename T>
AggregateGrads<T> aggregate_backward(const nn::Tensor<T>& features, const nn::Tensor<T>& weights,
                                     std::span<const std::size_t> selected, const nn::Tensor<T>& grad_output);

template <typename T>
struct MilOutput {
  std::vector<T> probabilities;
  std::vector<T> attention;  // softmax over all instances
  std::vector<std::size_t> selected;
  nn::Tensor<T> logits;
};

template <typename T>
class MilModel {
 public:
  MilModel() = default;
  explicit MilModel(MilConfig config);

  const MilConfig& config() const { return config_; }

  void init(std::uint64_t seed);

  // Runs the embedder over consecutive groups of at most `sub_batch`
  // instances. Rows do not depend on the grouping.
  nn::Tensor<T> embed_instances(const byteplot::Bag& bag, std::size_t sub_batch) const;

  MilOutput<T> forward(const byteplot::Bag& bag) const;
  MilOutput<T> forward_features(const nn::Tensor<T>& features) const;

  // Forward + backward for one bag; gradients are added to the parameters'
  // grad slots. Returns the cross-entropy loss.
  T accumulate_gradients(const byteplot::Bag& bag, std::size_t label, MilOutput<T>* output = nullptr);

  nn::ParamRefs<T> params();

  Embedder<T> embedder;
  AttentionHead<T> attention;
  nn::Dense<T> classifier;

 private:
  MilConfig config_;
};

// CSV rows `bag_id,instance_index,weight,selected`.
void write_attention_header(std::ostream& out);
template <typename T>
void write_attention_rows(std::ostream& out, const std::string& bag_id, const MilOutput<T>& output);

}  // namespace milplot::mil
