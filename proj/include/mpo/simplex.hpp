// simplex.hpp - validated points on the probability simplex
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mpo/errors.hpp"
#include "mpo/rng.hpp"

namespace mpo {

inline constexpr double kSimplexSumTol = 1e-12;

// A probability vector: entries >= 0, sum within 1e-12 of 1.
class SimplexPoint {
 public:
  explicit SimplexPoint(std::vector<double> probs) : probs_(std::move(probs)) {
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0)) throw DomainError("simplex entry must be >= 0");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > kSimplexSumTol)
      throw DomainError("simplex entries must sum to 1");
  }

  static SimplexPoint uniform(std::size_t n) {
    return SimplexPoint(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  // Dirichlet(1) sample, entries bounded away from zero by min_prob.
  static SimplexPoint random(std::size_t n, Rng& rng, double min_prob = 0.0) {
    std::vector<double> v(n);
    double sum = 0.0;
    for (double& x : v) {
      x = -std::log(1.0 - rng.uniform()) + min_prob;
      sum += x;
    }
    for (double& x : v) x /= sum;
    return SimplexPoint(std::move(v));
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  bool strictly_positive() const {
    for (double p : probs_)
      if (p <= 0.0) return false;
    return true;
  }

 private:
  std::vector<double> probs_;
};

}  // namespace mpo
