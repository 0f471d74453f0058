#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "milplot/error.hpp"

namespace milplot::nn {

// Components whose analytic and numeric gradients are both below this are
// compared in absolute terms.
inline constexpr double kGradCheckFloor = 1e-3;

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

// Central finite differences of a scalar function.
inline std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                            std::span<const double> x, double step = 1e-3) {
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + step;
    const double up = f(point);
    point[i] = saved - step;
    const double down = f(point);
    point[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// Max relative error between an analytic gradient and central differences.
inline double grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                         std::span<const double> analytic, double step = 1e-3) {
  if (analytic.size() != x.size()) throw Error(ErrorKind::LengthMismatch, "gradient length differs from input");
  const auto numeric = numeric_gradient(f, x, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i]));
  return worst;
}

}  // namespace milplot::nn
