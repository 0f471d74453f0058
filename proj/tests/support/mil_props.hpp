#pragma once

// Property experiments on the MIL aggregation, shared by the unit tests and
// the acceptance binary. Each returns the measured quantity; callers apply
// their own thresholds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "milplot/blas.hpp"
#include "milplot/mil.hpp"
#include "milplot/rng.hpp"

namespace milprops {

using milplot::Rng;
using milplot::byteplot::Bag;
using milplot::byteplot::Patch;
using milplot::mil::MilConfig;
using milplot::mil::MilModel;
using milplot::mil::MilOutput;

inline Patch noise_patch(Rng& rng, std::size_t side) {
  Patch p{side, side, std::vector<float>(side * side)};
  // Blocky content so the conv features are not all alike.
  const float base = static_cast<float>(rng.uniform01());
  for (auto& v : p.values) v = std::clamp(base + 0.3f * static_cast<float>(rng.normal()), 0.0f, 1.0f);
  return p;
}

inline Bag random_bag(Rng& rng, std::size_t instances, std::size_t side) {
  Bag bag;
  for (std::size_t i = 0; i < instances; ++i) bag.instances.push_back(noise_patch(rng, side));
  return bag;
}

inline MilConfig small_config(std::size_t k_top, bool gated = false) {
  MilConfig c;
  c.embedder = {{4, 8}, 1, false, 2};
  c.attention_dim = 16;
  c.gated = gated;
  c.k_top = k_top;
  c.sub_batch = 7;
  c.patch = 16;
  return c;
}

struct PermutationResult {
  double max_probability_diff = 0.0;
  double max_weight_sum_error = 0.0;  // |sum of attention - 1|, over all and selected weights
};

// Random bags of 1..30 instances; each bag is evaluated as given and after a
// random permutation of its instances.
inline PermutationResult permutation_experiment(std::size_t bags, std::uint64_t seed) {
  milplot::nn::blas::set_threads(1);
  PermutationResult r;
  Rng rng(seed);
  for (std::size_t b = 0; b < bags; ++b) {
    MilModel<float> model(small_config(b % 3 == 0 ? 0 : 12, b % 2 == 1));
    model.init(rng.next());
    const Bag bag = random_bag(rng, 1 + rng.below(30), 16);
    Bag shuffled = bag;
    rng.shuffle(std::span(shuffled.instances));
    const auto a = model.forward(bag), p = model.forward(shuffled);
    for (std::size_t c = 0; c < a.probabilities.size(); ++c) {
      r.max_probability_diff =
          std::max(r.max_probability_diff, std::abs(double(a.probabilities[c]) - double(p.probabilities[c])));
    }
    for (const auto* out : {&a, &p}) {
      const double all = std::accumulate(out->attention.begin(), out->attention.end(), 0.0);
      r.max_weight_sum_error = std::max(r.max_weight_sum_error, std::abs(all - 1.0));
      double sel = 0.0, sel_all = 0.0;
      for (std::size_t j : out->selected) sel_all += out->attention[j];
      // Renormalised selection weights.
      for (std::size_t j : out->selected) sel += out->attention[j] / sel_all;
      r.max_weight_sum_error = std::max(r.max_weight_sum_error, std::abs(sel - 1.0));
    }
  }
  return r;
}

struct DecoyResult {
  std::size_t bags = 0;
  std::size_t identical = 0;     // probabilities bit-identical
  std::size_t decoys_added = 0;
};

// Bags larger than k_top gain decoy instances whose attention score is
// strictly below the current k_top-th score, inserted at random positions.
inline DecoyResult decoy_experiment(std::size_t bags, std::uint64_t seed, std::size_t decoys_per_bag = 100) {
  milplot::nn::blas::set_threads(1);
  DecoyResult r;
  Rng rng(seed);
  const std::size_t k_top = 3;
  for (std::size_t b = 0; b < bags; ++b) {
    MilModel<float> model(small_config(k_top, b % 2 == 1));
    model.init(rng.next());
    const Bag bag = random_bag(rng, k_top + 1 + rng.below(8), 16);
    const MilOutput<float> before = model.forward(bag);
    const auto features = model.embed_instances(bag, 1);
    const auto scores = model.attention.scores(features);
    std::vector<float> sorted(scores.values().begin(), scores.values().end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const float threshold = sorted[k_top - 1];

    // Planted low scores: keep only candidates that score below the threshold.
    Bag enlarged = bag;
    std::size_t added = 0;
    for (std::size_t attempt = 0; attempt < 20 * decoys_per_bag && added < decoys_per_bag; ++attempt) {
      Bag one;
      one.instances.push_back(noise_patch(rng, 16));
      const auto s = model.attention.scores(model.embed_instances(one, 1));
      if (!(s[0] < threshold)) continue;
      const auto pos = static_cast<long>(rng.below(enlarged.size() + 1));
      enlarged.instances.insert(enlarged.instances.begin() + pos, one.instances[0]);
      ++added;
    }
    const MilOutput<float> after = model.forward(enlarged);
    ++r.bags;
    r.decoys_added += added;
    r.identical += before.probabilities == after.probabilities;
  }
  return r;
}

// Largest |difference| between embedding a 130-instance bag in groups of 60
// and in one pass.
inline double subbatch_max_diff(std::uint64_t seed, std::size_t instances = 130, std::size_t group = 60,
                                std::size_t side = milplot::byteplot::kPatchSide) {
  milplot::nn::blas::set_threads(1);
  Rng rng(seed);
  MilConfig c;
  c.patch = side;
  MilModel<float> model(c);
  model.init(seed);
  const Bag bag = random_bag(rng, instances, side);
  const auto grouped = model.embed_instances(bag, group);
  const auto single = model.embed_instances(bag, instances);
  double worst = 0.0;
  for (std::size_t i = 0; i < grouped.size(); ++i) worst = std::max(worst, std::abs(double(grouped[i]) - double(single[i])));
  return worst;
}

struct DilutionResult {
  double decoy_mass_without_topk = 0.0;
  std::size_t decoys_selected_with_topk = 0;
  std::size_t planted_selected_with_topk = 0;
};

// Feature-level bag: `planted` instances with a high attention score and
// `decoys` with uniformly low scores. The attention head reads only the
// first feature coordinate, score = gain * tanh(f0).
inline DilutionResult dilution_experiment(std::size_t decoys, std::size_t planted, std::size_t k_top,
                                          std::uint64_t seed) {
  Rng rng(seed);
  MilConfig c = small_config(0);
  auto build = [&](std::size_t k) {
    MilConfig ck = c;
    ck.k_top = k;
    MilModel<double> m(ck);
    m.init(seed);
    m.attention.V.weight.value.fill(0.0);
    m.attention.V.bias.value.fill(0.0);
    m.attention.V.weight.value[0] = 1.0;
    m.attention.w.weight.value.fill(0.0);
    m.attention.w.bias.value.fill(0.0);
    m.attention.w.weight.value[0] = 2.0;
    return m;
  };
  const std::size_t n = decoys + planted;
  std::vector<char> is_planted(n, 0);
  std::fill(is_planted.begin(), is_planted.begin() + static_cast<long>(planted), char{1});
  rng.shuffle(std::span(is_planted));
  milplot::nn::Tensor<double> features({n, milplot::mil::kEmbedDim});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < milplot::mil::kEmbedDim; ++d) features[i * milplot::mil::kEmbedDim + d] = rng.normal();
    features[i * milplot::mil::kEmbedDim] = is_planted[i] ? 3.0 : rng.uniform(-0.05, 0.05);
  }
  DilutionResult r;
  const auto all = build(0).forward_features(features);
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_planted[i]) r.decoy_mass_without_topk += all.attention[i];
  }
  const auto top = build(k_top).forward_features(features);
  for (std::size_t j : top.selected) (is_planted[j] ? r.planted_selected_with_topk : r.decoys_selected_with_topk)++;
  return r;
}

}  // namespace milprops
