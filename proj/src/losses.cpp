#include "debiascope/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace debiascope::nd {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double clamp_prob(double p) {
  constexpr double lo = 1e-7;
  return std::min(std::max(p, lo), 1.0 - lo);
}

double mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("mse: length mismatch");
  if (pred.empty()) throw std::invalid_argument("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double e = pred[i] - target[i];
    s += e * e;
  }
  return s / static_cast<double>(pred.size());
}

double bce(double prob, double label) {
  if (label != 0.0 && label != 1.0) throw std::invalid_argument("bce: label not in {0,1}");
  double p = clamp_prob(prob);
  return -label * std::log(p) - (1.0 - label) * std::log(1.0 - p);
}

double bce(std::span<const double> prob, std::span<const double> label) {
  if (prob.size() != label.size()) throw std::invalid_argument("bce: length mismatch");
  if (prob.empty()) throw std::invalid_argument("bce: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) s += bce(prob[i], label[i]);
  return s / static_cast<double>(prob.size());
}

}  // namespace debiascope::nd
