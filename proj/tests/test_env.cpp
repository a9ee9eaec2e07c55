// Chain environment, tabular policy, exact values vs analytic oracles.
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mpo/chain_env.hpp"
#include "mpo/policy.hpp"
#include "test_support.hpp"

using namespace mpo;
namespace mt = mpo::test;

TEST_CASE("deterministic advance rollout collects one reward per step") {
  ChainEnv env = ChainEnv::make_default(8, 5);
  TabularPolicy always = make_reference_policy(env, 1.0);
  Rng rng(1);
  Trajectory tau = sample_trajectory(env, always, 0, rng);
  CHECK(tau.steps.size() == 5);
  CHECK(tau.cumulative_reward == doctest::Approx(5.0).epsilon(1e-9));
  for (std::size_t t = 0; t < tau.steps.size(); ++t)
    CHECK(tau.steps[t].action == kActionAdvance);
}

TEST_CASE("rollouts are deterministic given the seed") {
  ChainEnv env = ChainEnv::make_default();
  TabularPolicy pol = make_reference_policy(env, 0.6);
  Rng a(42), b(42);
  CHECK(sample_trajectory(env, pol, 3, a) == sample_trajectory(env, pol, 3, b));
}

TEST_CASE("cumulative reward equals the step sum and stays in [0, T]") {
  ChainEnv env = ChainEnv::make_default();
  TabularPolicy pol = make_reference_policy(env, 0.3);
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    Trajectory tau = sample_trajectory(env, pol, sample_start_state(env, rng), rng);
    double sum = 0.0;
    for (const Step& s : tau.steps) sum += env.reward_at(s.state, s.action);
    CHECK(std::fabs(sum - tau.cumulative_reward) < 1e-12);
    CHECK(tau.cumulative_reward >= 0.0);
    CHECK(tau.cumulative_reward <= env.horizon);
  }
}

TEST_CASE("monte-carlo mean approaches T*q") {
  ChainEnv env = ChainEnv::make_default(8, 10);
  TabularPolicy pol = make_reference_policy(env, 0.9);
  Rng rng(11);
  ValueEstimate v = policy_value_mc(env, pol, 100000, rng);
  CHECK(std::fabs(v.mean - 9.0) < 0.03);
}

TEST_CASE("exact value: uniform policy is T/2, skill policies are T*q") {
  ChainEnv env = ChainEnv::make_default(8, 20);
  TabularPolicy uniform(8, 2);
  CHECK(policy_value_exact(env, uniform).mean ==
        doctest::Approx(10.0).epsilon(1e-12));
  for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    TabularPolicy pol = make_reference_policy(env, q);
    double expect = 20.0 * std::min(std::max(q, 1e-6), 1.0 - 1e-6);
    CHECK(std::fabs(policy_value_exact(env, pol).mean - expect) < 1e-10);
  }
  ChainEnv env10 = ChainEnv::make_default(8, 10);
  CHECK(std::fabs(policy_value_exact(env10, make_reference_policy(env10, 0.9)).mean -
                  9.0) < 1e-9);
}

TEST_CASE("monte-carlo agrees with exact within 3 standard errors") {
  ChainEnv env = ChainEnv::make_default(6, 12);
  Rng rng(13);
  int misses = 0;
  for (int i = 0; i < 20; ++i) {
    TabularPolicy pol = TabularPolicy::random_init(6, 2, rng, 1.0);
    double exact = policy_value_exact(env, pol).mean;
    Rng mc_rng = rng.child("mc", i);
    ValueEstimate mc = policy_value_mc(env, pol, 100000, mc_rng);
    if (std::fabs(mc.mean - exact) > 3.0 * std::max(mc.stderr, 1e-9)) ++misses;
  }
  CHECK(misses <= 1);  // ~0.27% per trial; one outlier budgeted
}

TEST_CASE("reference-policy guards") {
  ChainEnv env = ChainEnv::make_default();
  CHECK_THROWS_AS(make_reference_policy(env, -0.1), ConfigError);
  CHECK_THROWS_AS(make_reference_policy(env, 1.5), ConfigError);
  TabularPolicy p0 = make_reference_policy(env, 0.0);
  TabularPolicy p1 = make_reference_policy(env, 1.0);
  for (int s = 0; s < env.num_states; ++s)
    for (int a = 0; a < 2; ++a) {
      CHECK(std::isfinite(p0.logit(s, a)));
      CHECK(std::isfinite(p1.logit(s, a)));
    }
}

TEST_CASE("dimension mismatches are configuration errors") {
  ChainEnv env = ChainEnv::make_default(8, 5);
  TabularPolicy wrong(4, 2);
  Rng rng(1);
  CHECK_THROWS_AS(sample_trajectory(env, wrong, 0, rng), ConfigError);
  CHECK_THROWS_AS(policy_value_exact(env, wrong), ConfigError);
  TabularPolicy ok(8, 2);
  CHECK_THROWS_AS(sample_trajectory(env, ok, 99, rng), ConfigError);
}

TEST_CASE("trajectory enumeration covers the action space") {
  Rng rng(3);
  ChainEnv tiny = ChainEnv::random_tiny(rng, 2, 2);
  std::vector<Trajectory> taus = enumerate_trajectories(tiny, 0);
  CHECK(taus.size() == 4);
  for (const Trajectory& tau : taus) CHECK(tau.steps[0].state == 0);
  ChainEnv big = ChainEnv::make_default(8, 20);
  CHECK_THROWS_AS(enumerate_trajectories(big, 0), ConfigError);
}

// --- policy probabilities ----------------------------------------------------

TEST_CASE("log_prob pinned values") {
  ChainEnv env = ChainEnv::make_default(8, 10);
  TabularPolicy uniform(8, 2);
  Rng rng(5);
  Trajectory tau = sample_trajectory(env, uniform, 0, rng);
  CHECK(uniform.log_prob(tau) == doctest::Approx(-6.93147).epsilon(1e-5));

  ChainEnv env5 = ChainEnv::make_default(8, 5);
  TabularPolicy match = make_reference_policy(env5, 1.0);
  Trajectory up = sample_trajectory(env5, match, 0, rng);
  CHECK(match.log_prob(up) ==
        doctest::Approx(5.0 * std::log(1.0 - 1e-6)).epsilon(1e-9));
}

TEST_CASE("log_prob equals the per-step sum") {
  ChainEnv env = ChainEnv::make_default();
  Rng rng(17);
  TabularPolicy pol = TabularPolicy::random_init(8, 2, rng, 1.0);
  Trajectory tau = sample_trajectory(env, pol, 2, rng);
  double sum = 0.0;
  for (const Step& s : tau.steps) sum += pol.action_log_prob(s.state, s.action);
  CHECK(std::fabs(pol.log_prob(tau) - sum) < 1e-12);
}

TEST_CASE("seq_prob: geometric mean, horizon invariance, open interval") {
  TabularPolicy uniform(8, 2);
  for (int T : {1, 5, 10, 20}) {
    ChainEnv env = ChainEnv::make_default(8, T);
    Rng rng(19);
    Trajectory tau = sample_trajectory(env, uniform, 0, rng);
    CHECK(uniform.seq_prob(tau) == doctest::Approx(0.5).epsilon(1e-12));
  }
  ChainEnv env5 = ChainEnv::make_default(8, 5);
  TabularPolicy match = make_reference_policy(env5, 1.0);
  Rng rng(23);
  Trajectory up = sample_trajectory(env5, match, 0, rng);
  double p = match.seq_prob(up);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(p == doctest::Approx(1.0 - 1e-6).epsilon(1e-9));
}

TEST_CASE("log_prob gradient w.r.t. logits matches finite differences") {
  ChainEnv env = ChainEnv::make_default(4, 6);
  Rng rng(29);
  TabularPolicy pol = TabularPolicy::random_init(4, 2, rng, 0.5);
  Trajectory tau = sample_trajectory(env, pol, 1, rng);

  Tape tape;
  PolicyVars pv = make_policy_vars(tape, pol);
  Var lp = log_prob_var(pv, tau);
  tape.backward(lp);

  for (int s = 0; s < 4; ++s) {
    for (int a = 0; a < 2; ++a) {
      TabularPolicy bumped = pol;
      auto eval = [&](double d) {
        bumped.set_logit(s, a, pol.logit(s, a) + d);
        return bumped.log_prob(tau);
      };
      double fd = (eval(mt::kFdStep) - eval(-mt::kFdStep)) / (2 * mt::kFdStep);
      CHECK(mt::close(tape.adjoint(pv.logit(s, a)), fd, 1e-5, 1e-9));
    }
  }
}

TEST_CASE("policy checkpoint io round trip") {
  Rng rng(31);
  TabularPolicy pol = TabularPolicy::random_init(5, 3, rng, 2.0);
  std::stringstream ss;
  save_policy(ss, pol);
  TabularPolicy back = load_policy(ss);
  CHECK(back == pol);
  std::stringstream bad("mpo-policy v1 states=3 actions=2\n0 0\n");
  CHECK_THROWS_AS(load_policy(bad), ParseError);
}
