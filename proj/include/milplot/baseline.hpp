#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "milplot/byteplot.hpp"
#include "milplot/features.hpp"
#include "milplot/layers.hpp"

namespace milplot::baseline {

struct BaselineConfig {
  nn::ConvStackConfig stack{{16, 32}, 2, true, 4};
  std::size_t hidden = 512;
  std::size_t classes = 5;
  std::size_t side = byteplot::kPatchSide;
};

// square byteplot -> bilinear resize to side x side -> [0,1]
byteplot::Patch baseline_preprocess(std::span<const std::uint8_t> bytes, std::size_t side = byteplot::kPatchSide);

template <typename T>
class BaselineModel {
 public:
  BaselineModel() = default;
  explicit BaselineModel(BaselineConfig config);

  const BaselineConfig& config() const { return config_; }
  void init(std::uint64_t seed);

  nn::Tensor<T> logits(const byteplot::Patch& patch) const;
  std::vector<T> forward(const byteplot::Patch& patch) const;

  T accumulate_gradients(const byteplot::Patch& patch, std::size_t label, std::vector<T>* probabilities = nullptr);

  nn::ParamRefs<T> params();

  nn::ConvStack<T> stack;
  nn::Dense<T> hidden;
  nn::Dense<T> classifier;

 private:
  nn::Tensor<T> input_tensor(const byteplot::Patch& patch) const;

  BaselineConfig config_;
};

}  // namespace milplot::baseline
