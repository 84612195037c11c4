#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "generator.hpp"

namespace wdistill::testing {

// Literal index sums, one axis at a time: rows, then columns, then layers.
// Missing matrices mean the axis is left alone (identity).
inline std::vector<double> naive_subset(const Tensor& stacked, const GeneratorParams& gp) {
  const std::size_t it = stacked.dim(0), ot = stacked.dim(1), lt = stacked.dim(2);
  const std::size_t is = gp.w_in ? gp.w_in->dim(1) : it;
  const std::size_t os = gp.w_out ? gp.w_out->dim(1) : ot;
  auto t = [&](std::size_t j, std::size_t k, std::size_t l) { return stacked.at((j * ot + k) * lt + l); };

  std::vector<double> a(is * ot * lt, 0.0);
  for (std::size_t x = 0; x < is; ++x)
    for (std::size_t k = 0; k < ot; ++k)
      for (std::size_t l = 0; l < lt; ++l) {
        double s = 0.0;
        if (gp.w_in) {
          for (std::size_t j = 0; j < it; ++j) s += t(j, k, l) * gp.w_in->at(j * is + x);
        } else {
          s = t(x, k, l);
        }
        a[(x * ot + k) * lt + l] = s;
      }

  std::vector<double> b(is * os * lt, 0.0);
  for (std::size_t x = 0; x < is; ++x)
    for (std::size_t y = 0; y < os; ++y)
      for (std::size_t l = 0; l < lt; ++l) {
        double s = 0.0;
        if (gp.w_out) {
          for (std::size_t k = 0; k < ot; ++k) s += a[(x * ot + k) * lt + l] * gp.w_out->at(k * os + y);
        } else {
          s = a[(x * ot + y) * lt + l];
        }
        b[(x * os + y) * lt + l] = s;
      }

  std::vector<double> out(is * os);
  for (std::size_t x = 0; x < is; ++x)
    for (std::size_t y = 0; y < os; ++y) {
      double s = 0.0;
      if (gp.w_layer) {
        for (std::size_t l = 0; l < lt; ++l) s += b[(x * os + y) * lt + l] * gp.w_layer->at(l);
      } else {
        s = b[(x * os + y) * lt];
      }
      const std::size_t i = x * os + y;
      out[i] = std::tanh(s) * gp.scale.at(i) + gp.shift.at(i);
    }
  return out;
}

// The same map written as one sum over all three teacher indices.
inline std::vector<double> fused_subset(const Tensor& stacked, const GeneratorParams& gp) {
  const std::size_t it = stacked.dim(0), ot = stacked.dim(1), lt = stacked.dim(2);
  const std::size_t is = gp.w_in->dim(1), os = gp.w_out->dim(1);
  std::vector<double> out(is * os);
  for (std::size_t a = 0; a < is; ++a)
    for (std::size_t b = 0; b < os; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < it; ++j)
        for (std::size_t k = 0; k < ot; ++k)
          for (std::size_t l = 0; l < lt; ++l)
            s += stacked.at((j * ot + k) * lt + l) * gp.w_in->at(j * is + a) * gp.w_out->at(k * os + b) *
                 gp.w_layer->at(l);
      out[a * os + b] = std::tanh(s) * gp.scale.at(a * os + b) + gp.shift.at(a * os + b);
    }
  return out;
}

inline std::vector<double> naive_vector(const Tensor& stacked, const GeneratorParams& gp) {
  const std::size_t ot = stacked.dim(0), lt = stacked.dim(1);
  const std::size_t os = gp.w_out ? gp.w_out->dim(1) : ot;
  std::vector<double> out(os);
  for (std::size_t y = 0; y < os; ++y) {
    double s = 0.0;
    for (std::size_t l = 0; l < lt; ++l) {
      double col = 0.0;
      if (gp.w_out) {
        for (std::size_t k = 0; k < ot; ++k) col += stacked.at(k * lt + l) * gp.w_out->at(k * os + y);
      } else {
        col = stacked.at(y * lt + l);
      }
      s += col * (gp.w_layer ? gp.w_layer->at(l) : 1.0);
    }
    out[y] = std::tanh(s) * gp.scale.at(y) + gp.shift.at(y);
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = a.size() == b.size() ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Multiset n-gram tally written without any shared helpers: clipped matches
// and totals for n = 1..4, then the geometric mean and brevity penalty.
inline double brute_force_bleu(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs) {
  double match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    hyp_len += static_cast<double>(hyps[s].size());
    ref_len += static_cast<double>(refs[s].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<int>, int> hc, rc;
      for (std::size_t i = 0; i + n <= hyps[s].size(); ++i)
        ++hc[std::vector<int>(hyps[s].begin() + i, hyps[s].begin() + i + n)];
      for (std::size_t i = 0; i + n <= refs[s].size(); ++i)
        ++rc[std::vector<int>(refs[s].begin() + i, refs[s].begin() + i + n)];
      for (const auto& [g, c] : hc) {
        total[n - 1] += c;
        match[n - 1] += std::min(c, rc.count(g) ? rc[g] : 0);
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (match[n] == 0) return 0.0;
    log_sum += std::log(match[n] / total[n]) / 4.0;
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return 100.0 * bp * std::exp(log_sum);
}

}  // namespace wdistill::testing
