#pragma once

#include <span>

namespace debiascope::nd {

// Scalar loss helpers shared by training and evaluation code. The
// graph has fused equivalents; these are the plain definitional forms.

double sigmoid(double x);

// Mean squared error over equal-length spans.
double mse(std::span<const double> pred, std::span<const double> target);

// Binary cross-entropy of a probability against a {0,1} label.
// Probabilities are clamped to [1e-7, 1 - 1e-7] before the log.
double bce(double prob, double label);
double bce(std::span<const double> prob, std::span<const double> label);

double clamp_prob(double p);

}  // namespace debiascope::nd
