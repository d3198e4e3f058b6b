#pragma once

#include <vector>

#include "debiascope/tensor.hpp"

namespace debiascope::nd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam (Kingma & Ba). Moments are stored per parameter
// tensor; step_count advances by exactly one per update.
class Adam {
 public:
  Adam(AdamConfig cfg, const std::vector<const Tensor*>& params);

  // Applies one update in place. Throws on non-finite gradients; the
  // optimizer state and parameters are untouched in that case.
  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

  long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace debiascope::nd
