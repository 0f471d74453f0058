#pragma once

// Library metrics against the brute-force oracles on random small
// instances. Returns the worst absolute error per metric.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "milplot/metrics.hpp"
#include "oracles.hpp"

namespace metricprops {

using milplot::Rng;
using milplot::byteplot::ByteImage;

// Images with a limited palette so joint histograms are not all singletons.
inline ByteImage random_image(Rng& rng, std::size_t w, std::size_t h, std::size_t levels) {
  ByteImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(levels) * (255 / std::max<std::size_t>(levels - 1, 1)));
  return img;
}

inline ByteImage perturb(Rng& rng, const ByteImage& a) {
  ByteImage b = a;
  for (auto& p : b.pixels) {
    if (rng.below(3) == 0) p = static_cast<std::uint8_t>(std::clamp<int>(p + static_cast<int>(rng.below(61)) - 30, 0, 255));
  }
  return b;
}

inline std::map<std::string, double> oracle_errors(std::size_t instances, std::uint64_t seed) {
  namespace m = milplot::metrics;
  std::map<std::string, double> worst{{"mse", 0}, {"ssim", 0}, {"entropy", 0}, {"mi", 0}, {"auroc", 0}, {"macro_f1", 0}};
  auto note = [&](const char* key, double got, double want) { worst[key] = std::max(worst[key], std::abs(got - want)); };
  Rng rng(seed);
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t w = 11 + rng.below(20), h = 11 + rng.below(20);
    const auto a = random_image(rng, w, h, 2 + rng.below(200));
    const auto b = perturb(rng, a);
    note("mse", m::mse(a, b), oracle::mse(a.pixels, b.pixels));
    note("ssim", m::ssim(a, b), oracle::ssim(a.pixels, b.pixels, w, h));
    note("entropy", m::entropy_bits(a), oracle::entropy(a.pixels));
    note("mi", m::mutual_information_bits(a, b), oracle::mutual_information(a.pixels, b.pixels));

    const std::size_t n = 5 + rng.below(40);
    std::vector<double> scores(n);
    std::vector<bool> positive(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.below(8)) / 8.0;  // coarse, so ties occur
      positive[i] = rng.below(2) == 1;
    }
    positive[0] = true;
    positive[1] = false;
    note("auroc", m::auroc_binary(scores, positive), oracle::auroc_pairs(scores, positive));

    const std::size_t classes = 2 + rng.below(5);
    std::vector<std::size_t> truth(n), pred(n);
    std::vector<std::vector<std::uint64_t>> confusion(classes, std::vector<std::uint64_t>(classes, 0));
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = rng.below(classes);
      pred[i] = rng.below(classes);
      ++confusion[truth[i]][pred[i]];
    }
    note("macro_f1", m::macro_f1(confusion), oracle::macro_f1(truth, pred, classes));
  }
  return worst;
}

inline double tolerance(const std::string& metric) { return metric == "ssim" ? 1e-3 : 1e-6; }

}  // namespace metricprops
