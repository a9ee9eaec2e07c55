// chain_env.hpp - episodic ring-MDP with analytic values
//
// Deterministic transitions on a ring of states: action 1 advances, action 0
// stays. With the default "advance_unit" reward (1 for advancing, 0 for
// staying) a policy that advances with probability q in every state has exact
// value T*q, which gives clean skill-graded reference agents.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mpo/errors.hpp"
#include "mpo/policy.hpp"
#include "mpo/rng.hpp"
#include "mpo/simplex.hpp"
#include "mpo/trajectory.hpp"

namespace mpo {

inline constexpr int kActionStay = 0;
inline constexpr int kActionAdvance = 1;
inline constexpr double kRefPolicyProbClamp = 1e-6;

struct ChainEnv {
  int num_states = 8;
  int num_actions = 2;
  int horizon = 20;
  std::vector<double> reward;  // [s * num_actions + a], entries in [0, 1]
  SimplexPoint start_dist = SimplexPoint::uniform(8);
  std::string reward_name = "advance_unit";

  static ChainEnv make_default(int num_states = 8, int horizon = 20) {
    ChainEnv env;
    env.num_states = num_states;
    env.num_actions = 2;
    env.horizon = horizon;
    env.reward.assign(static_cast<std::size_t>(num_states) * 2, 0.0);
    for (int s = 0; s < num_states; ++s)
      env.reward[static_cast<std::size_t>(s) * 2 + kActionAdvance] = 1.0;
    env.start_dist = SimplexPoint::uniform(num_states);
    env.validate();
    return env;
  }

  // Tiny enumerable instance with uniform-random rewards, for the mirror-solution
  // identity oracle.
  static ChainEnv random_tiny(Rng& rng, int num_states = 2, int horizon = 2) {
    ChainEnv env;
    env.num_states = num_states;
    env.num_actions = 2;
    env.horizon = horizon;
    env.reward.resize(static_cast<std::size_t>(num_states) * 2);
    for (double& r : env.reward) r = rng.uniform();
    env.start_dist = SimplexPoint::uniform(num_states);
    env.reward_name = "random";
    env.validate();
    return env;
  }

  void validate() const {
    if (num_states < 1 || num_actions < 1 || horizon < 1)
      throw ConfigError("environment dimensions must be positive");
    if (reward.size() != static_cast<std::size_t>(num_states) * num_actions)
      throw ConfigError("reward table has wrong size");
    for (double r : reward)
      if (!(r >= 0.0 && r <= 1.0))
        throw ConfigError("rewards must lie in [0, 1]");
    if (start_dist.size() != static_cast<std::size_t>(num_states))
      throw ConfigError("start distribution has wrong size");
  }

  int next_state(int s, int a) const {
    return a == kActionAdvance ? (s + 1) % num_states : s;
  }

  double reward_at(int s, int a) const {
    return reward[static_cast<std::size_t>(s) * num_actions + a];
  }

  void check_policy(const TabularPolicy& policy) const {
    if (policy.num_states() != num_states || policy.num_actions() != num_actions)
      throw ConfigError("policy dimensions do not match environment");
  }
};

inline Trajectory sample_trajectory(const ChainEnv& env,
                                    const TabularPolicy& policy, int s0,
                                    Rng& rng) {
  env.check_policy(policy);
  if (s0 < 0 || s0 >= env.num_states) throw ConfigError("invalid start state");
  Trajectory tau;
  tau.steps.reserve(env.horizon);
  int s = s0;
  for (int t = 0; t < env.horizon; ++t) {
    int a = policy.sample_action(s, rng);
    tau.steps.push_back({s, a});
    tau.cumulative_reward += env.reward_at(s, a);
    s = env.next_state(s, a);
  }
  return tau;
}

inline int sample_start_state(const ChainEnv& env, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (int s = 0; s < env.num_states; ++s) {
    acc += env.start_dist[s];
    if (u < acc) return s;
  }
  return env.num_states - 1;
}

struct ValueEstimate {
  double mean = 0.0;
  double stderr = 0.0;
};

// Exact expected cumulative reward by backward dynamic programming.
inline ValueEstimate policy_value_exact(const ChainEnv& env,
                                        const TabularPolicy& policy) {
  env.check_policy(policy);
  if (static_cast<long long>(env.num_states) * env.num_actions * env.horizon >
      1000000LL)
    throw ConfigError("exact value: state-action-horizon product too large");
  std::vector<double> value(env.num_states, 0.0), next(env.num_states, 0.0);
  for (int t = env.horizon - 1; t >= 0; --t) {
    for (int s = 0; s < env.num_states; ++s) {
      SimplexPoint probs = policy.action_probs(s);
      double v = 0.0;
      for (int a = 0; a < env.num_actions; ++a)
        v += probs[a] * (env.reward_at(s, a) + next[env.next_state(s, a)]);
      value[s] = v;
    }
    std::swap(value, next);
  }
  double v0 = 0.0;
  for (int s = 0; s < env.num_states; ++s) v0 += env.start_dist[s] * next[s];
  return {v0, 0.0};
}

inline ValueEstimate policy_value_mc(const ChainEnv& env,
                                     const TabularPolicy& policy, int episodes,
                                     Rng& rng) {
  env.check_policy(policy);
  if (episodes < 1) throw ConfigError("episodes must be positive");
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < episodes; ++i) {
    int s0 = sample_start_state(env, rng);
    Trajectory tau = sample_trajectory(env, policy, s0, rng);
    sum += tau.cumulative_reward;
    sum_sq += tau.cumulative_reward * tau.cumulative_reward;
  }
  double mean = sum / episodes;
  double var = std::max(0.0, sum_sq / episodes - mean * mean);
  double se = episodes > 1 ? std::sqrt(var / (episodes - 1)) : 0.0;
  return {mean, se};
}

// Policy advancing with probability q in every state; exact value T*q under
// the default reward. Probabilities are clamped to [1e-6, 1-1e-6] before the
// logit transform so logits stay finite.
inline TabularPolicy make_reference_policy(const ChainEnv& env, double skill_q) {
  if (!(skill_q >= 0.0 && skill_q <= 1.0))
    throw ConfigError("skill must lie in [0, 1]");
  double q = std::min(std::max(skill_q, kRefPolicyProbClamp),
                      1.0 - kRefPolicyProbClamp);
  TabularPolicy policy(env.num_states, env.num_actions);
  for (int s = 0; s < env.num_states; ++s) {
    policy.set_logit(s, kActionStay, std::log(1.0 - q));
    policy.set_logit(s, kActionAdvance, std::log(q));
  }
  return policy;
}

// All |A|^T trajectories from s0, for identity verification on tiny instances.
inline std::vector<Trajectory> enumerate_trajectories(const ChainEnv& env,
                                                      int s0) {
  double count = std::pow(static_cast<double>(env.num_actions), env.horizon);
  if (count > 4096.0)
    throw ConfigError("trajectory space too large to enumerate");
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(count));
  std::vector<int> actions(env.horizon, 0);
  while (true) {
    Trajectory tau;
    tau.steps.reserve(env.horizon);
    int s = s0;
    for (int t = 0; t < env.horizon; ++t) {
      tau.steps.push_back({s, actions[t]});
      tau.cumulative_reward += env.reward_at(s, actions[t]);
      s = env.next_state(s, actions[t]);
    }
    out.push_back(std::move(tau));
    int t = env.horizon - 1;
    while (t >= 0 && actions[t] == env.num_actions - 1) actions[t--] = 0;
    if (t < 0) break;
    ++actions[t];
  }
  return out;
}

}  // namespace mpo
