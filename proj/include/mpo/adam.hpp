// adam.hpp - adaptive-moment optimizer with bias correction
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mpo/errors.hpp"

namespace mpo {

class AdamOptimizer {
 public:
  AdamOptimizer(double learning_rate, std::size_t dim, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps),
        m_(dim, 0.0),
        v_(dim, 0.0) {}

  // One descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw ConfigError("optimizer dimension mismatch");
    ++t_;
    double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// Scales grad in place so its l2 norm is at most max_norm; returns the
// post-clip norm.
inline double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
    return max_norm;
  }
  return norm;
}

}  // namespace mpo
