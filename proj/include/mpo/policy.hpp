// policy.hpp - trainable tabular softmax policy and trajectory probabilities
#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mpo/autodiff.hpp"
#include "mpo/errors.hpp"
#include "mpo/rng.hpp"
#include "mpo/simplex.hpp"
#include "mpo/text.hpp"
#include "mpo/trajectory.hpp"

namespace mpo {

// Guard against exp(log_prob / T) rounding up to exactly 1.0, which would
// put the sequence probability outside the open interval the objectives
// require.
inline constexpr double kMaxSeqLogProb = -1e-12;

// Per-state action logits; pi(.|s) = softmax(logits[s]) is strictly positive
// by construction.
class TabularPolicy {
 public:
  TabularPolicy(int num_states, int num_actions, double fill = 0.0)
      : num_states_(num_states),
        num_actions_(num_actions),
        logits_(static_cast<std::size_t>(num_states) * num_actions, fill) {
    if (num_states < 1 || num_actions < 1)
      throw ConfigError("policy dimensions must be positive");
  }

  // "From scratch" initialization: iid normal logits, mean 0, std 0.01.
  static TabularPolicy random_init(int num_states, int num_actions, Rng& rng,
                                   double stddev = 0.01) {
    TabularPolicy p(num_states, num_actions);
    for (double& l : p.logits_) l = rng.normal(0.0, stddev);
    return p;
  }

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }

  double logit(int s, int a) const { return logits_[index(s, a)]; }
  void set_logit(int s, int a, double v) { logits_[index(s, a)] = v; }
  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }

  double log_z(int s) const {
    double mx = logits_[index(s, 0)];
    for (int a = 1; a < num_actions_; ++a) mx = std::max(mx, logits_[index(s, a)]);
    double sum = 0.0;
    for (int a = 0; a < num_actions_; ++a)
      sum += std::exp(logits_[index(s, a)] - mx);
    return mx + std::log(sum);
  }

  double action_log_prob(int s, int a) const { return logit(s, a) - log_z(s); }

  SimplexPoint action_probs(int s) const {
    double lz = log_z(s);
    std::vector<double> p(num_actions_);
    double sum = 0.0;
    for (int a = 0; a < num_actions_; ++a) {
      p[a] = std::exp(logits_[index(s, a)] - lz);
      sum += p[a];
    }
    for (double& x : p) x /= sum;
    return SimplexPoint(std::move(p));
  }

  int sample_action(int s, Rng& rng) const {
    double lz = log_z(s);
    double u = rng.uniform();
    double acc = 0.0;
    for (int a = 0; a < num_actions_; ++a) {
      acc += std::exp(logits_[index(s, a)] - lz);
      if (u < acc) return a;
    }
    return num_actions_ - 1;
  }

  // log pi(tau) = sum_t log pi(a_t | s_t) <= 0.
  double log_prob(const Trajectory& tau) const {
    double lp = 0.0;
    for (const Step& st : tau.steps) {
      check_step(st);
      lp += action_log_prob(st.state, st.action);
    }
    return lp;
  }

  // Per-step geometric-mean probability exp(log_prob / T), strictly in (0,1).
  // raw = true uses the full product pi(tau) instead (short horizons only).
  double seq_prob(const Trajectory& tau, bool raw = false) const {
    double lp = log_prob(tau);
    if (!raw) lp /= static_cast<double>(tau.steps.size());
    return std::exp(min_cap(lp, kMaxSeqLogProb));
  }

  bool operator==(const TabularPolicy&) const = default;

 private:
  std::size_t index(int s, int a) const {
    return static_cast<std::size_t>(s) * num_actions_ + a;
  }
  void check_step(const Step& st) const {
    if (st.state < 0 || st.state >= num_states_ || st.action < 0 ||
        st.action >= num_actions_)
      throw ConfigError("trajectory step outside policy dimensions");
  }

  int num_states_, num_actions_;
  std::vector<double> logits_;
};

// Tape mirror of a policy: one leaf per logit plus cached per-state log
// normalizers, so trajectory log-probs cost one node per step.
struct PolicyVars {
  int num_states = 0;
  int num_actions = 0;
  std::vector<Var> logit_vars;  // [s * A + a]
  std::vector<Var> log_zs;      // [s]

  Var logit(int s, int a) const { return logit_vars[static_cast<std::size_t>(s) * num_actions + a]; }
};

inline PolicyVars make_policy_vars(Tape& tape, const TabularPolicy& policy) {
  PolicyVars pv;
  pv.num_states = policy.num_states();
  pv.num_actions = policy.num_actions();
  pv.logit_vars = tape.leaves(policy.logits());
  pv.log_zs.reserve(pv.num_states);
  for (int s = 0; s < pv.num_states; ++s) {
    double shift = policy.logit(s, 0);
    for (int a = 1; a < pv.num_actions; ++a)
      shift = std::max(shift, policy.logit(s, a));
    Var sum = exp(pv.logit(s, 0) - shift);
    for (int a = 1; a < pv.num_actions; ++a)
      sum = sum + exp(pv.logit(s, a) - shift);
    pv.log_zs.push_back(log(sum) + shift);
  }
  return pv;
}

inline Var log_prob_var(const PolicyVars& pv, const Trajectory& tau) {
  Var lp = pv.logit(tau.steps[0].state, tau.steps[0].action) -
           pv.log_zs[tau.steps[0].state];
  for (std::size_t t = 1; t < tau.steps.size(); ++t)
    lp = lp + (pv.logit(tau.steps[t].state, tau.steps[t].action) -
               pv.log_zs[tau.steps[t].state]);
  return lp;
}

inline Var seq_prob_var(const PolicyVars& pv, const Trajectory& tau,
                        bool raw = false) {
  Var lp = log_prob_var(pv, tau);
  if (!raw) lp = lp / static_cast<double>(tau.steps.size());
  return exp(min_cap(lp, kMaxSeqLogProb));
}

// --- checkpoint io -----------------------------------------------------------

inline void save_policy(std::ostream& os, const TabularPolicy& p) {
  os << "mpo-policy v1 states=" << p.num_states()
     << " actions=" << p.num_actions() << "\n";
  for (int s = 0; s < p.num_states(); ++s) {
    for (int a = 0; a < p.num_actions(); ++a) {
      if (a) os << ' ';
      os << fmt_double(p.logit(s, a));
    }
    os << "\n";
  }
}

inline TabularPolicy load_policy(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty policy file", 1);
  auto fields = split(trim(line), ' ');
  if (fields.size() != 4 || fields[0] != "mpo-policy" || fields[1] != "v1" ||
      !fields[2].starts_with("states=") || !fields[3].starts_with("actions="))
    throw ParseError("bad policy header", 1);
  int S = static_cast<int>(parse_int(fields[2].substr(7), 1));
  int A = static_cast<int>(parse_int(fields[3].substr(8), 1));
  TabularPolicy p(S, A);
  for (int s = 0; s < S; ++s) {
    if (!std::getline(is, line)) throw ParseError("truncated policy file", s + 2);
    auto vals = split(trim(line), ' ');
    if (static_cast<int>(vals.size()) != A)
      throw ParseError("wrong number of logits", s + 2);
    for (int a = 0; a < A; ++a)
      p.set_logit(s, a, parse_double(vals[a], s + 2));
  }
  return p;
}

inline void save_policy_file(const std::string& path, const TabularPolicy& p) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for write: " + path);
  save_policy(os, p);
}

inline TabularPolicy load_policy_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open policy file: " + path);
  return load_policy(is);
}

}  // namespace mpo
