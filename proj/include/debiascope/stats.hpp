#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

namespace debiascope {

inline double weighted_mean(std::span<const double> x, std::span<const double> w) {
  if (x.size() != w.size() || x.empty()) throw std::invalid_argument("weighted_mean: bad input");
  double sx = 0.0, sw = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += w[i] * x[i];
    sw += w[i];
  }
  if (sw <= 0.0) throw std::invalid_argument("weighted_mean: weights sum to zero");
  return sx / sw;
}

// Weighted sample variance with the n/(n-1) correction; reduces to the
// unbiased sample variance under equal weights.
inline double weighted_variance(std::span<const double> x, std::span<const double> w) {
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("weighted_variance: need at least 2 values");
  double m = weighted_mean(x, w);
  double s = 0.0, sw = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += w[i] * (x[i] - m) * (x[i] - m);
    sw += w[i];
  }
  return s / sw * (static_cast<double>(n) / static_cast<double>(n - 1));
}

inline double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean: empty");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("sample_variance: need at least 2 values");
  double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(n - 1);
}

}  // namespace debiascope
