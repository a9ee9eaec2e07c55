// loss_net.hpp - constrained monotone networks parameterizing psi and phi^-1
//
// Each network is one hidden layer of 126 units, equally split across nine
// increasing activation families, with non-negative input and output kernels
// so the map x -> net(x, t) is non-decreasing for every fixed t in [0, 1].
// A residual term makes the zero-kernel network reduce exactly to the ORPO
// building blocks: a*log(x) for the psi network, b*(log(x) - log(1-x)) for
// the phi^-1 network.
//
// The optional temporal input enters as x*t; its weights w2 are lower-bounded
// by -w1 elementwise, which keeps the pre-activation slope w1*(1-t) + w2*t...
// >= 0, preserving monotonicity.
#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "mpo/autodiff.hpp"
#include "mpo/errors.hpp"
#include "mpo/rng.hpp"
#include "mpo/text.hpp"

namespace mpo {

inline constexpr int kHiddenUnits = 126;
inline constexpr int kActivationFamilies = 9;
inline constexpr int kUnitsPerFamily = kHiddenUnits / kActivationFamilies;
inline constexpr double kActivationEps = 1e-8;

enum class Activation {
  kIdentity,    // x
  kReluSquare,  // (x)_+^2
  kCube,        // x^3
  kReluSqrt,    // (x)_+^(1/2)
  kReluCbrt,    // (x)_+^(1/3)
  kLogRelu,     // log((x)_+), guarded as log(max(x, eps))
  kExp,         // e^x
  kTanh,        // tanh(x)
  kLogitClip,   // log(clip(x) / (1 - clip(x))), clip into [eps, 1-eps]
};

inline Activation unit_activation(int unit) {
  return static_cast<Activation>(unit / kUnitsPerFamily);
}

template <class S>
S activate(Activation a, S x) {
  switch (a) {
    case Activation::kIdentity:
      return x;
    case Activation::kReluSquare:
      return relu_pow(x, 2.0);
    case Activation::kCube:
      return pow(x, 3.0);
    case Activation::kReluSqrt:
      return relu_pow(x, 0.5);
    case Activation::kReluCbrt:
      return relu_pow(x, 1.0 / 3.0);
    case Activation::kLogRelu:
      return log_floor(x, kActivationEps);
    case Activation::kExp:
      return exp(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kLogitClip:
      return logit_clipped(x, kActivationEps);
  }
  throw ConfigError("unknown activation");
}

template <>
inline double activate<double>(Activation a, double x) {
  switch (a) {
    case Activation::kIdentity:
      return x;
    case Activation::kReluSquare:
      return relu_pow(x, 2.0);
    case Activation::kCube:
      return x * x * x;
    case Activation::kReluSqrt:
      return relu_pow(x, 0.5);
    case Activation::kReluCbrt:
      return relu_pow(x, 1.0 / 3.0);
    case Activation::kLogRelu:
      return log_floor(x, kActivationEps);
    case Activation::kExp:
      return std::exp(x);
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kLogitClip:
      return logit_clipped(x, kActivationEps);
  }
  throw ConfigError("unknown activation");
}

// Residual added to the network output; the choice decides whether the net
// plays the psi role or the phi^-1 role.
enum class ResidualKind { kLog, kLogit };

// One monotone network. The temporal flag decides whether w2 participates.
struct MonotoneNet {
  ResidualKind residual = ResidualKind::kLog;
  bool temporal = false;
  std::array<double, kHiddenUnits> w1{};  // input kernel, >= 0
  std::array<double, kHiddenUnits> w2{};  // temporal kernel, >= -w1
  std::array<double, kHiddenUnits> v{};   // output kernel, >= 0
  std::array<double, kHiddenUnits> c{};   // biases, unconstrained
  double coeff = 1.0;                     // residual coefficient a or b, >= 0

  int dim() const { return kHiddenUnits * (temporal ? 4 : 3) + 1; }
};

namespace detail {

// Parameter accessors let the same formula run with double weights (fast
// path) or with tape Vars (for gradients w.r.t. the parameters).
struct NetWeights {
  const MonotoneNet& n;
  double w1(int i) const { return n.w1[i]; }
  double w2(int i) const { return n.w2[i]; }
  double v(int i) const { return n.v[i]; }
  double c(int i) const { return n.c[i]; }
  double coeff() const { return n.coeff; }
};

struct NetWeightVars {
  std::span<const Var> flat;  // one net block, layout as in flatten()
  bool temporal;
  Var w1(int i) const { return flat[i]; }
  Var w2(int i) const { return flat[kHiddenUnits + i]; }
  Var v(int i) const { return flat[kHiddenUnits * (temporal ? 2 : 1) + i]; }
  Var c(int i) const { return flat[kHiddenUnits * (temporal ? 3 : 2) + i]; }
  Var coeff() const { return flat[kHiddenUnits * (temporal ? 4 : 3)]; }
};

template <class W, class S>
auto net_apply_core(const W& w, bool temporal, ResidualKind residual, S x, S t)
    -> decltype(w.v(0) * activate(Activation::kIdentity, w.w1(0) * x)) {
  using R = decltype(w.v(0) * activate(Activation::kIdentity, w.w1(0) * x));
  using std::log;
  auto xt = x * t;
  // The logit residual goes through the shared logit primitive so the
  // zero-kernel network reproduces the ORPO terms bit-for-bit.
  R out = (residual == ResidualKind::kLog) ? w.coeff() * log(x)
                                           : w.coeff() * logit(x);
  for (int i = 0; i < kHiddenUnits; ++i) {
    auto pre = temporal ? w.w1(i) * x + w.w2(i) * xt + w.c(i)
                        : w.w1(i) * x + w.c(i);
    out = out + w.v(i) * activate(unit_activation(i), pre);
  }
  return out;
}

}  // namespace detail

// Evaluates the network at x in (0, 1), training progress t in [0, 1].
// For a non-temporal net t is ignored.
inline double net_apply(const MonotoneNet& net, double x, double t) {
  return detail::net_apply_core(detail::NetWeights{net}, net.temporal,
                                net.residual, x, t);
}

// Tape version: gradient w.r.t. x (and t) with constant weights.
inline Var net_apply(const MonotoneNet& net, Var x, Var t) {
  return detail::net_apply_core(detail::NetWeights{net}, net.temporal,
                                net.residual, x, t);
}

// Tape version with the parameters themselves as leaves; `flat` is one net
// block in flatten() order.
inline Var net_apply_param_vars(std::span<const Var> flat, bool temporal,
                                ResidualKind residual, Var x, Var t) {
  return detail::net_apply_core(detail::NetWeightVars{flat, temporal}, temporal,
                                residual, x, t);
}

// Parameters of the psi network and the phi^-1 network, flattened psi-block
// first for evolution.
struct LossNetParams {
  bool temporal = false;
  MonotoneNet psi;      // residual a*log(x)
  MonotoneNet phi_inv;  // residual b*logit(x)

  int dim() const { return psi.dim() + phi_inv.dim(); }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(dim());
    for (const MonotoneNet* n : {&psi, &phi_inv}) {
      out.insert(out.end(), n->w1.begin(), n->w1.end());
      if (temporal) out.insert(out.end(), n->w2.begin(), n->w2.end());
      out.insert(out.end(), n->v.begin(), n->v.end());
      out.insert(out.end(), n->c.begin(), n->c.end());
      out.push_back(n->coeff);
    }
    return out;
  }

  static LossNetParams unflatten(std::span<const double> flat, bool temporal) {
    LossNetParams p = zeros(temporal);
    if (static_cast<int>(flat.size()) != p.dim())
      throw ConfigError("loss-net parameter vector has wrong dimension");
    std::size_t k = 0;
    for (MonotoneNet* n : {&p.psi, &p.phi_inv}) {
      for (double& w : n->w1) w = flat[k++];
      if (temporal)
        for (double& w : n->w2) w = flat[k++];
      for (double& w : n->v) w = flat[k++];
      for (double& w : n->c) w = flat[k++];
      n->coeff = flat[k++];
    }
    return p;
  }

  static LossNetParams zeros(bool temporal) {
    LossNetParams p;
    p.temporal = temporal;
    p.psi.residual = ResidualKind::kLog;
    p.phi_inv.residual = ResidualKind::kLogit;
    p.psi.temporal = p.phi_inv.temporal = temporal;
    p.psi.coeff = p.phi_inv.coeff = 0.0;
    return p;
  }

  // Zero kernels, unit residuals: generalized ORPO reduces exactly to ORPO.
  static LossNetParams orpo_equivalent(bool temporal) {
    LossNetParams p = zeros(temporal);
    p.psi.coeff = 1.0;
    p.phi_inv.coeff = 1.0;
    return p;
  }
};

// Clamps parameters back into the feasible set: w1, v, coeff >= 0 and
// w2 >= -w1. Idempotent.
inline LossNetParams project_params(LossNetParams p) {
  for (MonotoneNet* n : {&p.psi, &p.phi_inv}) {
    for (int i = 0; i < kHiddenUnits; ++i) {
      if (n->w1[i] < 0.0) n->w1[i] = 0.0;
      if (n->v[i] < 0.0) n->v[i] = 0.0;
      if (n->w2[i] < -n->w1[i]) n->w2[i] = -n->w1[i];
    }
    if (n->coeff < 0.0) n->coeff = 0.0;
  }
  return p;
}

inline bool params_feasible(const LossNetParams& p) {
  for (const MonotoneNet* n : {&p.psi, &p.phi_inv}) {
    if (n->coeff < 0.0) return false;
    for (int i = 0; i < kHiddenUnits; ++i)
      if (n->w1[i] < 0.0 || n->v[i] < 0.0 || n->w2[i] < -n->w1[i]) return false;
  }
  return true;
}

// Small random feasible start: unit residuals plus half-normal kernels.
inline LossNetParams init_params(Rng& rng, bool temporal) {
  LossNetParams p = LossNetParams::orpo_equivalent(temporal);
  for (MonotoneNet* n : {&p.psi, &p.phi_inv}) {
    for (double& w : n->w1) w = std::fabs(rng.normal(0.0, 0.05));
    for (double& w : n->v) w = std::fabs(rng.normal(0.0, 0.05));
    for (double& w : n->c) w = rng.normal(0.0, 0.05);
  }
  return p;
}

// --- checkpoint io -----------------------------------------------------------

inline void save_loss_net(std::ostream& os, const LossNetParams& p) {
  os << "mpo-lossnet v1 temporal=" << (p.temporal ? 1 : 0) << " dim=" << p.dim()
     << "\n";
  for (double v : p.flatten()) os << fmt_double(v) << "\n";
}

inline LossNetParams load_loss_net(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty loss-net file", 1);
  auto fields = split(trim(line), ' ');
  if (fields.size() != 4 || fields[0] != "mpo-lossnet" || fields[1] != "v1" ||
      !fields[2].starts_with("temporal=") || !fields[3].starts_with("dim="))
    throw ParseError("bad loss-net header", 1);
  bool temporal = parse_int(fields[2].substr(9), 1) != 0;
  int dim = static_cast<int>(parse_int(fields[3].substr(4), 1));
  std::vector<double> flat;
  flat.reserve(dim);
  for (int i = 0; i < dim; ++i) {
    if (!std::getline(is, line))
      throw ParseError("truncated loss-net file", i + 2);
    flat.push_back(parse_double(trim(line), i + 2));
  }
  return LossNetParams::unflatten(flat, temporal);
}

inline void save_loss_net_file(const std::string& path, const LossNetParams& p) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for write: " + path);
  save_loss_net(os, p);
}

inline LossNetParams load_loss_net_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open loss-net file: " + path);
  return load_loss_net(is);
}

}  // namespace mpo
