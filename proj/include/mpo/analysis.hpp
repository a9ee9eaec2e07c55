// analysis.hpp - gradient-landscape grids and the mirror-solution oracle
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "mpo/autodiff.hpp"
#include "mpo/chain_env.hpp"
#include "mpo/errors.hpp"
#include "mpo/objectives.hpp"
#include "mpo/policy.hpp"
#include "mpo/potential.hpp"

namespace mpo {

// --- gradient landscapes -------------------------------------------------------

struct GridSpec {
  double log_p_min = -8.0;
  double log_p_max = -0.02;
  int points = 64;

  void validate() const {
    if (points < 2) throw ConfigError("grid needs at least 2 points");
    if (!(log_p_min < log_p_max) || !(log_p_max < 0.0) ||
        !(log_p_min > std::log(kProbClampEps)))
      throw ConfigError("grid range must lie inside the valid log-probability domain");
  }
};

// |dL/d log p_w| and |dL/d log p_l| on a grid of (log p_w, log p_l) points.
// For DPO kinds the frozen reference probabilities are fixed at 0.5 (the
// geometric-mean probability of a uniform two-action policy).
struct LandscapeGrid {
  std::vector<double> axis_w;      // log p_w grid values
  std::vector<double> axis_l;      // log p_l grid values
  std::vector<double> grad_w_abs;  // row-major [i_w * axis_l.size() + i_l]
  std::vector<double> grad_l_abs;
  double progress = 0.0;

  double at_w(std::size_t iw, std::size_t il) const {
    return grad_w_abs[iw * axis_l.size() + il];
  }
  double at_l(std::size_t iw, std::size_t il) const {
    return grad_l_abs[iw * axis_l.size() + il];
  }
};

// Gradients of one row loss w.r.t. (log p_w, log p_l) at one point.
inline std::pair<double, double> loss_log_prob_grads(const ObjectiveSpec& spec,
                                                     double log_p_w,
                                                     double log_p_l,
                                                     double progress) {
  Tape tape;
  Var lpw = tape.leaf(log_p_w);
  Var lpl = tape.leaf(log_p_l);
  RowLossVars in;
  in.p_w = exp(lpw);
  in.p_l = exp(lpl);
  if (spec.needs_reference()) {
    in.ref_p_w = tape.leaf(0.5);
    in.ref_p_l = tape.leaf(0.5);
  }
  in.progress = progress;
  Var loss = row_loss(spec, in);
  tape.backward(loss);
  return {tape.adjoint(lpw), tape.adjoint(lpl)};
}

inline LandscapeGrid landscape(const ObjectiveSpec& spec, const GridSpec& grid,
                               double progress) {
  grid.validate();
  spec.validate();
  LandscapeGrid out;
  out.progress = progress;
  out.axis_w.resize(grid.points);
  out.axis_l.resize(grid.points);
  double step = (grid.log_p_max - grid.log_p_min) / (grid.points - 1);
  for (int i = 0; i < grid.points; ++i)
    out.axis_w[i] = out.axis_l[i] = grid.log_p_min + step * i;
  out.grad_w_abs.resize(static_cast<std::size_t>(grid.points) * grid.points);
  out.grad_l_abs.resize(out.grad_w_abs.size());
  for (int iw = 0; iw < grid.points; ++iw) {
    for (int il = 0; il < grid.points; ++il) {
      auto [gw, gl] = loss_log_prob_grads(spec, out.axis_w[iw], out.axis_l[il],
                                          progress);
      out.grad_w_abs[static_cast<std::size_t>(iw) * grid.points + il] =
          std::fabs(gw);
      out.grad_l_abs[static_cast<std::size_t>(iw) * grid.points + il] =
          std::fabs(gl);
    }
  }
  return out;
}

// Counts the off-diagonal pairs where the chosen-side gradient magnitude is
// strictly larger at (log p_w, log p_l) with log p_w < log p_l than at the
// mirrored point.
struct AsymmetryStats {
  long total_pairs = 0;
  long holding_pairs = 0;
};

inline AsymmetryStats landscape_asymmetry(const LandscapeGrid& grid) {
  if (grid.axis_w != grid.axis_l)
    throw ConfigError("asymmetry check requires a square grid");
  AsymmetryStats stats;
  std::size_t n = grid.axis_w.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      ++stats.total_pairs;
      if (grid.at_w(i, j) > grid.at_w(j, i)) ++stats.holding_pairs;
    }
  }
  return stats;
}

// --- mirror-solution oracle ------------------------------------------------------
//
// Numerically maximizes   sum_tau pi(tau) r(tau) - beta D_h(pi, pi_ref)
// over the distribution on the enumerable trajectory space of each start
// state, then checks that r(tau) - beta * (phi^-1(pi*) - phi^-1(pi_ref)) is
// constant in tau. A small spread certifies the mirror-descent solution
// identity; the constant is the per-start normalization c(s0).

struct SolverOptions {
  double grad_tol = 1e-10;
  long max_iters = 200000;
};

struct MirrorSolutionStartReport {
  int start_state = 0;
  double residual_spread = 0.0;
  double constant = 0.0;  // c(s0)
  long iterations = 0;
  std::vector<double> optimal;    // pi* over trajectories
  std::vector<double> reference;  // pi_ref over trajectories
  std::vector<double> rewards;    // r(tau)
};

struct MirrorSolutionReport {
  double max_residual_spread = 0.0;
  std::vector<MirrorSolutionStartReport> per_start;
};

namespace detail {

inline void project_to_simplex(std::vector<double>& y) {
  std::vector<double> u(y);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    double candidate = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) theta = candidate;
  }
  for (double& x : y) x = std::max(x - theta, 0.0);
}

struct TrajectoryProblem {
  const OmegaPotential& pot;
  double beta;
  std::vector<double> rewards;
  std::vector<double> reference;

  double objective(const std::vector<double>& pi) const {
    double v = 0.0;
    for (std::size_t k = 0; k < pi.size(); ++k) {
      v += pi[k] * rewards[k];
      v -= beta * (pot.antiderivative(pi[k]) - pot.antiderivative(reference[k]) -
                   pot.inverse(reference[k]) * (pi[k] - reference[k]));
    }
    return v;
  }

  void gradient(const std::vector<double>& pi, std::vector<double>& g) const {
    for (std::size_t k = 0; k < pi.size(); ++k)
      g[k] = rewards[k] - beta * (pot.inverse(pi[k]) - pot.inverse(reference[k]));
  }

  // KKT residual: on the support the gradient must be constant; off the
  // support it must not exceed that constant.
  double kkt_residual(const std::vector<double>& pi,
                      const std::vector<double>& g) const {
    double lambda = 0.0;
    long support = 0;
    for (std::size_t k = 0; k < pi.size(); ++k)
      if (pi[k] > 0.0) {
        lambda += g[k];
        ++support;
      }
    lambda /= static_cast<double>(support);
    double r = 0.0;
    for (std::size_t k = 0; k < pi.size(); ++k)
      r = std::max(r, pi[k] > 0.0 ? std::fabs(g[k] - lambda)
                                  : std::max(g[k] - lambda, 0.0));
    return r;
  }
};

}  // namespace detail

inline MirrorSolutionReport verify_mirror_solution(const ChainEnv& env,
                                            const OmegaPotential& pot,
                                            double beta,
                                            const TabularPolicy& ref_policy,
                                            SolverOptions opts = {}) {
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  env.check_policy(ref_policy);
  const bool euclidean = pot.kind() == OmegaPotential::Kind::kEuclidean;

  MirrorSolutionReport report;
  for (int s0 = 0; s0 < env.num_states; ++s0) {
    std::vector<Trajectory> taus = enumerate_trajectories(env, s0);
    const std::size_t k_count = taus.size();
    detail::TrajectoryProblem prob{pot, beta, {}, {}};
    prob.rewards.reserve(k_count);
    prob.reference.reserve(k_count);
    double ref_sum = 0.0;
    for (const Trajectory& tau : taus) {
      prob.rewards.push_back(tau.cumulative_reward);
      double p = std::exp(ref_policy.log_prob(tau));
      if (!(p > 0.0))
        throw ConfigError("reference policy must be strictly positive");
      prob.reference.push_back(p);
      ref_sum += p;
    }
    for (double& p : prob.reference) p /= ref_sum;

    // Projected / exponentiated gradient ascent with a backtracking step.
    // Progress is measured on the KKT residual rather than the objective:
    // near the optimum the objective improvement (~ residual^2) falls below
    // double rounding long before the residual reaches the tolerance.
    std::vector<double> pi(prob.reference);  // warm start at the reference
    std::vector<double> g(k_count), gt(k_count), trial(k_count);
    const double step_cap = 4.0 / beta;
    double step = 0.7 / beta;
    double resid = 0.0;
    long iter = 0;
    for (; iter < opts.max_iters; ++iter) {
      prob.gradient(pi, g);
      resid = prob.kkt_residual(pi, g);
      if (resid <= opts.grad_tol) break;
      bool accepted = false;
      while (step > 1e-18) {
        if (euclidean) {
          for (std::size_t k = 0; k < k_count; ++k)
            trial[k] = pi[k] + step * g[k];
          detail::project_to_simplex(trial);
        } else {
          // Exponentiated ascent keeps zero-potential iterates interior.
          double mx = -std::numeric_limits<double>::infinity();
          for (double gk : g) mx = std::max(mx, gk);
          double z = 0.0;
          for (std::size_t k = 0; k < k_count; ++k) {
            trial[k] = pi[k] * std::exp(step * (g[k] - mx));
            z += trial[k];
          }
          for (double& x : trial) x /= z;
        }
        prob.gradient(trial, gt);
        if (prob.kkt_residual(trial, gt) < resid) {
          pi.swap(trial);
          step = std::min(step * 1.2, step_cap);
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;  // step underflow: gradient check decides below
    }
    prob.gradient(pi, g);
    resid = prob.kkt_residual(pi, g);
    if (resid > opts.grad_tol)
      throw NumericalError("mirror-solution solver did not converge", resid);

    MirrorSolutionStartReport sr;
    sr.start_state = s0;
    sr.iterations = iter;
    sr.optimal = pi;
    sr.reference = prob.reference;
    sr.rewards = prob.rewards;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo, mean = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      double residual = prob.rewards[k] -
                        beta * (pot.inverse(pi[k]) - pot.inverse(prob.reference[k]));
      lo = std::min(lo, residual);
      hi = std::max(hi, residual);
      mean += residual;
    }
    sr.residual_spread = hi - lo;
    sr.constant = mean / static_cast<double>(k_count);
    report.max_residual_spread =
        std::max(report.max_residual_spread, sr.residual_spread);
    report.per_start.push_back(std::move(sr));
  }
  return report;
}

}  // namespace mpo
