#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tensor.hpp"

namespace wdistill::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

// Largest relative error between the analytic gradient of `loss` and central
// differences, over every element of every tensor in `wrt`. The relative
// error uses max(|analytic|, |numeric|, floor) as denominator.
inline double max_grad_error(const std::function<Tensor()>& loss, std::vector<Tensor> wrt, double step = 1e-6,
                             double floor = 1e-3) {
  for (auto& t : wrt) t.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : wrt) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.size(), 0.0);
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    auto data = wrt[i].mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + step;
      const double up = loss().item();
      data[j] = saved - step;
      const double down = loss().item();
      data[j] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i][j]), floor});
      worst = std::max(worst, std::abs(numeric - analytic[i][j]) / denom);
    }
  }
  for (auto& t : wrt) t.zero_grad();
  return worst;
}

}  // namespace wdistill::testing
