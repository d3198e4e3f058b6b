#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "debiascope/graph.hpp"
#include "debiascope/rng.hpp"
#include "debiascope/tensor.hpp"

namespace dbs_test {

using debiascope::Rng;
using debiascope::nd::Graph;
using debiascope::nd::IndexTensor;
using debiascope::nd::Shape;
using debiascope::nd::Tensor;

// Central finite differences against analytic gradients for every
// parameter of `g` at the scalar node `loss`. Returns the worst
// relative error across all parameter elements.
inline double max_grad_rel_err(Graph& g, int loss, double h = 1e-5) {
  g.forward();
  g.backward(loss);
  std::vector<Tensor> analytic;
  for (int p : g.params()) analytic.push_back(g.grad(p));
  double worst = 0.0;
  for (std::size_t k = 0; k < g.params().size(); ++k) {
    int p = g.params()[k];
    Tensor& theta = g.param_value(p);
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
      const double saved = theta.data[i];
      theta.data[i] = saved + h;
      g.forward();
      const double lp = g.value(loss).data[0];
      theta.data[i] = saved - h;
      g.forward();
      const double lm = g.value(loss).data[0];
      theta.data[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[k].data[i];
      const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      worst = std::max(worst, err);
    }
  }
  g.forward();
  return worst;
}

// Reduces an arbitrary-shaped node to a scalar through a fixed random
// linear functional, so gradient checks are sensitive to element order.
inline int random_functional(Graph& g, int node, Rng& rng) {
  g.forward();
  Tensor w = Tensor::randn(g.value(node).shape, 1.0, rng);
  return g.mean_all(g.mul(node, g.constant(w)));
}

// Ordinary least squares via normal equations; oracle for linear
// recovery tests. Returns coefficients for columns of X (n x p).
inline std::vector<double> ols(const std::vector<std::vector<double>>& X, const std::vector<double>& y) {
  const std::size_t n = X.size();
  const std::size_t p = X[0].size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < p; ++k) a[j][k] += X[i][j] * X[i][k];
      a[j][p] += X[i][j] * y[i];
    }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c || a[c][c] == 0.0) continue;
      double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> beta(p, 0.0);
  for (std::size_t c = 0; c < p; ++c) beta[c] = a[c][c] != 0.0 ? a[c][p] / a[c][c] : 0.0;
  return beta;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace dbs_test
