// objectives.hpp - preference-optimization losses
//
// All losses are per-row and meant to be minimized; the trainer averages them
// over the minibatch. log(sigmoid(.)) is computed as a softplus of the
// negated argument, so sigmoid arguments in the hundreds stay finite.
//
//   orpo:     -[log p_w + lambda log sigma(logit p_w - logit p_l)]
//   dpo:      -log sigma(beta (log(p_w/ref_w) - log(p_l/ref_l)))
//   gen_orpo: -[psi(p_w) + lambda log sigma(phi^-1(p_w) - phi^-1(p_l))]
//   gen_dpo:  -log sigma(beta (phi^-1(p_w) - phi^-1(ref_w)
//                              - phi^-1(p_l) + phi^-1(ref_l)))
//
// With psi = log and phi^-1 = logit, gen_orpo equals orpo exactly; with
// phi^-1 = log (or any phi^-1 differing from log by a constant), gen_dpo
// equals dpo.
#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "mpo/autodiff.hpp"
#include "mpo/errors.hpp"
#include "mpo/loss_net.hpp"

namespace mpo {

enum class ObjectiveKind { kDpo, kOrpo, kGenDpo, kGenOrpo };

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kOrpo;
  double beta = 1.0;     // DPO kinds
  double lambda = 0.5;   // ORPO kinds
  bool temporal = false;
  std::shared_ptr<const LossNetParams> net;  // generalized kinds

  bool needs_reference() const {
    return kind == ObjectiveKind::kDpo || kind == ObjectiveKind::kGenDpo;
  }
  bool is_generalized() const {
    return kind == ObjectiveKind::kGenDpo || kind == ObjectiveKind::kGenOrpo;
  }

  void validate() const {
    if ((kind == ObjectiveKind::kDpo || kind == ObjectiveKind::kGenDpo) &&
        !(beta > 0.0))
      throw ConfigError("beta must be positive for DPO objectives");
    if ((kind == ObjectiveKind::kOrpo || kind == ObjectiveKind::kGenOrpo) &&
        !(lambda >= 0.0))
      throw ConfigError("lambda must be non-negative for ORPO objectives");
    if (is_generalized()) {
      if (!net) throw ConfigError("generalized objective requires a loss net");
      if (net->temporal != temporal)
        throw ConfigError("temporal flag does not match loss-net checkpoint");
    }
  }

  std::string name() const {
    switch (kind) {
      case ObjectiveKind::kDpo:
        return "dpo";
      case ObjectiveKind::kOrpo:
        return "orpo";
      case ObjectiveKind::kGenDpo:
        return "gen_dpo";
      case ObjectiveKind::kGenOrpo:
        return "gen_orpo";
    }
    return "?";
  }

  // "orpo" | "dpo" | "gen_orpo:<checkpoint>" | "gen_dpo:<checkpoint>".
  static ObjectiveSpec parse(std::string_view s, double lambda = 0.5,
                             double beta = 1.0) {
    ObjectiveSpec spec;
    spec.lambda = lambda;
    spec.beta = beta;
    if (s == "orpo") {
      spec.kind = ObjectiveKind::kOrpo;
    } else if (s == "dpo") {
      spec.kind = ObjectiveKind::kDpo;
    } else if (s.starts_with("gen_orpo:") || s.starts_with("gen_dpo:")) {
      bool orpo = s.starts_with("gen_orpo:");
      spec.kind = orpo ? ObjectiveKind::kGenOrpo : ObjectiveKind::kGenDpo;
      std::string path(s.substr(orpo ? 9 : 8));
      spec.net = std::make_shared<LossNetParams>(load_loss_net_file(path));
      spec.temporal = spec.net->temporal;
    } else {
      throw ConfigError("unknown objective '" + std::string(s) + "'");
    }
    spec.validate();
    return spec;
  }

  static ObjectiveSpec with_net(ObjectiveKind kind, LossNetParams params,
                                double lambda = 0.5, double beta = 1.0) {
    ObjectiveSpec spec;
    spec.kind = kind;
    spec.lambda = lambda;
    spec.beta = beta;
    spec.temporal = params.temporal;
    spec.net = std::make_shared<LossNetParams>(std::move(params));
    spec.validate();
    return spec;
  }
};

template <class S>
S orpo_loss(S p_w, S p_l, double lambda) {
  using std::log;
  return -(log(p_w) + lambda * log_sigmoid(logit(p_w) - logit(p_l)));
}

template <class S>
S dpo_loss(S p_w, S p_l, S ref_p_w, S ref_p_l, double beta) {
  using std::log;
  return -log_sigmoid(beta * ((log(p_w) - log(ref_p_w)) -
                              (log(p_l) - log(ref_p_l))));
}

template <class S, class Psi, class PhiInv>
S generalized_orpo_loss(Psi&& psi, PhiInv&& phi_inv, S p_w, S p_l,
                        double lambda) {
  return -(psi(p_w) + lambda * log_sigmoid(phi_inv(p_w) - phi_inv(p_l)));
}

template <class S, class PhiInv>
S generalized_dpo_loss(PhiInv&& phi_inv, S p_w, S p_l, S ref_p_w, S ref_p_l,
                       double beta) {
  return -log_sigmoid(beta * (phi_inv(p_w) - phi_inv(ref_p_w) -
                              phi_inv(p_l) + phi_inv(ref_p_l)));
}

// Row inputs with optional frozen-reference probabilities; progress is
// t = n/N, zero for non-temporal objectives.
template <class S>
struct RowInputs {
  S p_w;
  S p_l;
  std::optional<S> ref_p_w;
  std::optional<S> ref_p_l;
  double progress = 0.0;
};

using RowLossInput = RowInputs<double>;
using RowLossVars = RowInputs<Var>;

namespace detail {

template <class S>
S make_progress(S like, double progress);
template <>
inline double make_progress<double>(double, double progress) {
  return progress;
}
template <>
inline Var make_progress<Var>(Var like, double progress) {
  return like.tape->leaf(progress);
}

template <class S>
void check_open_unit(const S& p);
template <>
inline void check_open_unit<double>(const double& p) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("trajectory probability must lie in (0, 1)");
}
template <>
inline void check_open_unit<Var>(const Var& p) {
  check_open_unit(val(p));
}

}  // namespace detail

// Dispatches one row through the configured objective.
template <class S>
S row_loss(const ObjectiveSpec& spec, const RowInputs<S>& in) {
  spec.validate();
  detail::check_open_unit(in.p_w);
  detail::check_open_unit(in.p_l);
  if (spec.needs_reference()) {
    if (!in.ref_p_w || !in.ref_p_l)
      throw ConfigError("DPO objectives require reference probabilities");
    detail::check_open_unit(*in.ref_p_w);
    detail::check_open_unit(*in.ref_p_l);
  }
  switch (spec.kind) {
    case ObjectiveKind::kOrpo:
      return orpo_loss(in.p_w, in.p_l, spec.lambda);
    case ObjectiveKind::kDpo:
      return dpo_loss(in.p_w, in.p_l, *in.ref_p_w, *in.ref_p_l, spec.beta);
    case ObjectiveKind::kGenOrpo: {
      S t = detail::make_progress(in.p_w, spec.temporal ? in.progress : 0.0);
      auto psi = [&](S x) { return net_apply(spec.net->psi, x, t); };
      auto phi_inv = [&](S x) { return net_apply(spec.net->phi_inv, x, t); };
      return generalized_orpo_loss(psi, phi_inv, in.p_w, in.p_l, spec.lambda);
    }
    case ObjectiveKind::kGenDpo: {
      S t = detail::make_progress(in.p_w, spec.temporal ? in.progress : 0.0);
      auto phi_inv = [&](S x) { return net_apply(spec.net->phi_inv, x, t); };
      return generalized_dpo_loss(phi_inv, in.p_w, in.p_l, *in.ref_p_w,
                                  *in.ref_p_l, spec.beta);
    }
  }
  throw ConfigError("unknown objective kind");
}

}  // namespace mpo
