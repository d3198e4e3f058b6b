#include "debiascope/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace debiascope::nd {

Adam::Adam(AdamConfig cfg, const std::vector<const Tensor*>& params) : cfg_(cfg) {
  if (cfg_.lr < 0.0) throw std::invalid_argument("adam: negative learning rate");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor* p : params) {
    m_.emplace_back(p->shape);
    v_.emplace_back(p->shape);
  }
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("adam: parameter/gradient count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!same_shape(*params[k], m_[k]) || !same_shape(*grads[k], m_[k]))
      throw std::invalid_argument("adam: shape mismatch at parameter " + std::to_string(k));
    if (!grads[k]->all_finite())
      throw std::runtime_error("adam: non-finite gradient at parameter " + std::to_string(k) +
                               "; state unchanged");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* p = params[k]->data.data();
    const double* g = grads[k]->data.data();
    double* m = m_[k].data.data();
    double* v = v_[k].data.data();
    const std::size_t n = params[k]->data.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace debiascope::nd
