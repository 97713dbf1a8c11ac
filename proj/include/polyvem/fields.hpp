#pragma once

#include "core.hpp"

#include <cmath>
#include <numbers>

namespace polyvem {

// A smooth scalar function with derivatives up to order two.
struct ScalarField {
  std::function<double(const Vec2&)> value;
  std::function<Vec2(const Vec2&)> grad;
  std::function<Eigen::Matrix2d(const Vec2&)> hess;

  double operator()(const Vec2& x) const { return value(x); }
};

// Convergence rates log(e_{i-1}/e_i)/log(h_{i-1}/h_i); the first is NaN.
inline std::vector<double> observed_rates(const std::vector<double>& h, const std::vector<double>& e) {
  std::vector<double> r(e.size(), std::nan(""));
  for (size_t i = 1; i < e.size(); ++i) r[i] = std::log(e[i - 1] / e[i]) / std::log(h[i - 1] / h[i]);
  return r;
}

}  // namespace polyvem
