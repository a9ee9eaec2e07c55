// potential.hpp - omega-potentials, their mirror maps and Bregman divergences
//
// A potential is described by the increasing scalar map phi and its inverse;
// phi^-1 is the primitive everywhere (it is what the objectives consume), so
// each kind is defined canonically through phi^-1:
//
//   kNegEntropy  phi(y) = e^(y-1)        phi^-1(x) = log(x) + 1
//   kEuclidean   phi(y) = y/2            phi^-1(x) = 2x
//   kLogOdds     phi(y) = sigmoid(y)     phi^-1(x) = log(x) - log(1-x)
//   kLearned     phi^-1 = monotone network (no closed forward map)
//
// The mirror map integrates phi^-1 per coordinate; additive constants in the
// antiderivative do not affect the divergence, and the closed forms below use
// the conventional normalizations (negative entropy, sum of squares, ...).
#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <string_view>

#include "mpo/autodiff.hpp"
#include "mpo/errors.hpp"
#include "mpo/loss_net.hpp"
#include "mpo/simplex.hpp"

namespace mpo {

inline constexpr double kProbClampEps = 1e-12;
inline constexpr double kQuadratureTol = 1e-8;

namespace detail {

// Adaptive trapezoid refinement with Richardson extrapolation: each panel
// carries its extrapolated (Simpson-order) value, and a split is accepted
// once the extrapolated halves agree with the parent within the local
// tolerance. Panels that hit the depth cap accumulate into the residual.
template <class F>
double trap_rec(const F& f, double a, double b, double fa, double fm,
                double fb, double whole, double tol, int depth,
                double& residual) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m);
  double rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double h = 0.5 * (b - a);
  // Richardson-extrapolated trapezoid over each half.
  double left = h / 6.0 * (fa + 4.0 * flm + fm);
  double right = h / 6.0 * (fm + 4.0 * frm + fb);
  double err = (left + right - whole) / 15.0;
  if (std::fabs(err) <= tol || depth <= 0) {
    if (std::fabs(err) > tol) residual += std::fabs(err);
    return left + right + err;
  }
  return trap_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, residual) +
         trap_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, residual);
}

template <class F>
double adaptive_trapezoid(const F& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  double sign = 1.0;
  if (a > b) {
    std::swap(a, b);
    sign = -1.0;
  }
  double fa = f(a), fb = f(b);
  double fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  double residual = 0.0;
  double v = trap_rec(f, a, b, fa, fm, fb, whole, tol, 48, residual);
  if (residual > tol)
    throw NumericalError("quadrature did not reach target accuracy", residual);
  return sign * v;
}

inline double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace detail

class OmegaPotential {
 public:
  enum class Kind { kNegEntropy, kEuclidean, kLogOdds, kLearned };

  static OmegaPotential neg_entropy() { return OmegaPotential(Kind::kNegEntropy); }
  static OmegaPotential euclidean() { return OmegaPotential(Kind::kEuclidean); }

  // clamp_inputs: inverse() clamps x into [eps, 1-eps] instead of raising a
  // DomainError; trajectory probabilities can round to 0/1.
  static OmegaPotential log_odds(bool clamp_inputs = true) {
    OmegaPotential p(Kind::kLogOdds);
    p.clamp_inputs_ = clamp_inputs;
    return p;
  }

  // phi^-1 given by the phi^-1 network of `net`, evaluated at fixed training
  // progress `progress`.
  static OmegaPotential learned(std::shared_ptr<const LossNetParams> net,
                                double progress = 0.0) {
    OmegaPotential p(Kind::kLearned);
    p.net_ = std::move(net);
    p.progress_ = progress;
    return p;
  }

  // Config-file names: "neg_entropy" | "euclidean" | "log_odds" |
  // "learned:<checkpoint path>".
  static OmegaPotential from_name(std::string_view name) {
    if (name == "neg_entropy") return neg_entropy();
    if (name == "euclidean") return euclidean();
    if (name == "log_odds") return log_odds();
    if (name.starts_with("learned:"))
      return learned(std::make_shared<LossNetParams>(
          load_loss_net_file(std::string(name.substr(8)))));
    throw ConfigError("unknown potential '" + std::string(name) + "'");
  }

  Kind kind() const { return kind_; }

  double omega() const {
    return kind_ == Kind::kEuclidean ? -std::numeric_limits<double>::infinity()
                                     : 0.0;
  }
  double domain_upper() const { return std::numeric_limits<double>::infinity(); }

  // phi(y). Closed-form kinds only.
  double forward(double y) const {
    switch (kind_) {
      case Kind::kNegEntropy:
        return std::exp(y - 1.0);
      case Kind::kEuclidean:
        return 0.5 * y;
      case Kind::kLogOdds:
        return sigmoid(y);
      case Kind::kLearned:
        throw DomainError("learned potential has no closed-form forward map");
    }
    throw ConfigError("unknown potential kind");
  }

  // phi^-1(x). Raises DomainError when x is outside the image of phi
  // (x <= omega, or outside (0,1) for kLogOdds/kLearned unless clamping).
  double inverse(double x) const {
    switch (kind_) {
      case Kind::kNegEntropy:
        if (x <= 0.0) throw DomainError("neg_entropy inverse requires x > 0");
        return std::log(x) + 1.0;
      case Kind::kEuclidean:
        return 2.0 * x;
      case Kind::kLogOdds:
        return logit(clamp_unit(x, "log_odds"));
      case Kind::kLearned:
        return net_apply(net_->phi_inv, clamp_unit(x, "learned"), progress_);
    }
    throw ConfigError("unknown potential kind");
  }

  // Differentiable phi^-1; clamped regions carry zero derivative.
  Var inverse(Var x) const {
    switch (kind_) {
      case Kind::kNegEntropy:
        if (val(x) <= 0.0) throw DomainError("neg_entropy inverse requires x > 0");
        return log(x) + 1.0;
      case Kind::kEuclidean:
        return 2.0 * x;
      case Kind::kLogOdds:
        if (!clamp_inputs_) clamp_unit(val(x), "log_odds");
        return logit_clipped(x, kProbClampEps);
      case Kind::kLearned: {
        Var xc = clip_band(x, kProbClampEps, 1.0 - kProbClampEps);
        Var t = x.tape->leaf(progress_);
        return net_apply(net_->phi_inv, xc, t);
      }
    }
    throw ConfigError("unknown potential kind");
  }

  // G(p) = integral of phi^-1 from 1 to p, up to the per-kind normalization
  // constant noted in the header comment.
  double antiderivative(double p) const {
    switch (kind_) {
      case Kind::kNegEntropy:
        return detail::xlogx(p);
      case Kind::kEuclidean:
        return p * p;
      case Kind::kLogOdds:
        return detail::xlogx(p) + detail::xlogx(1.0 - p);
      case Kind::kLearned: {
        double lo = std::max(p, kProbClampEps);
        return detail::adaptive_trapezoid([this](double t) { return inverse(t); },
                                          1.0 - kProbClampEps, lo, kQuadratureTol);
      }
    }
    throw ConfigError("unknown potential kind");
  }

  // h_phi(dist) = sum_a G(dist_a). Convex; minimized-over-simplex shapes the
  // update geometry.
  double mirror_map(const SimplexPoint& dist) const {
    double h = 0.0;
    for (std::size_t a = 0; a < dist.size(); ++a) h += antiderivative(dist[a]);
    return h;
  }

  // D_h(x, y) = sum_a [G(x_a) - G(y_a) - phi^-1(y_a) (x_a - y_a)]. Kinds
  // whose phi^-1 diverges at 0 (omega = 0) require y strictly positive; the
  // gradient of h is undefined there.
  double bregman(const SimplexPoint& x, const SimplexPoint& y) const {
    if (x.size() != y.size())
      throw ConfigError("bregman: dimension mismatch");
    if (kind_ == Kind::kNegEntropy && !y.strictly_positive())
      throw DomainError("bregman: y must be strictly positive entrywise");
    double d = 0.0;
    for (std::size_t a = 0; a < x.size(); ++a)
      d += antiderivative(x[a]) - antiderivative(y[a]) -
           inverse(y[a]) * (x[a] - y[a]);
    return d;
  }

  const LossNetParams* net() const { return net_.get(); }

 private:
  explicit OmegaPotential(Kind kind) : kind_(kind) {}

  double clamp_unit(double x, const char* what) const {
    if (x >= kProbClampEps && x <= 1.0 - kProbClampEps) return x;
    if (!clamp_inputs_ && (x <= 0.0 || x >= 1.0))
      throw DomainError(std::string(what) + " inverse requires x in (0,1)");
    return x < kProbClampEps ? kProbClampEps : 1.0 - kProbClampEps;
  }

  Kind kind_;
  bool clamp_inputs_ = true;
  std::shared_ptr<const LossNetParams> net_;
  double progress_ = 0.0;
};

inline std::string_view potential_kind_name(OmegaPotential::Kind k) {
  switch (k) {
    case OmegaPotential::Kind::kNegEntropy:
      return "neg_entropy";
    case OmegaPotential::Kind::kEuclidean:
      return "euclidean";
    case OmegaPotential::Kind::kLogOdds:
      return "log_odds";
    case OmegaPotential::Kind::kLearned:
      return "learned";
  }
  return "?";
}

}  // namespace mpo
