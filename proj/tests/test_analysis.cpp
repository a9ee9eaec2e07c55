// Landscape grids and the mirror-solution oracle.
#include <cmath>

#include "doctest.h"
#include "mpo/analysis.hpp"
#include "test_support.hpp"

using namespace mpo;
namespace mt = mpo::test;

TEST_CASE("ORPO gradient magnitude at the symmetric half point is 1.5") {
  ObjectiveSpec orpo;  // lambda = 0.5
  auto [gw, gl] = loss_log_prob_grads(orpo, std::log(0.5), std::log(0.5), 0.0);
  CHECK(std::fabs(gw) == doctest::Approx(1.5).epsilon(1e-9));
  // Closed form: |dL/dlog p_w| = 1 + lambda (1 - sigma(0)) / (1 - p_w).
  double closed = 1.0 + 0.5 * 0.5 / 0.5;
  CHECK(std::fabs(gw) == doctest::Approx(closed).epsilon(1e-12));
}

TEST_CASE("landscape matches pointwise finite differences") {
  Rng rng(3);
  auto net = std::make_shared<LossNetParams>(init_params(rng, true));
  ObjectiveSpec orpo;
  ObjectiveSpec gen = ObjectiveSpec::with_net(ObjectiveKind::kGenOrpo, *net, 0.5);
  GridSpec grid;
  grid.points = 8;
  for (const ObjectiveSpec& spec : {orpo, gen}) {
    for (double t : {0.0, 0.5}) {
      LandscapeGrid g = landscape(spec, grid, t);
      for (std::size_t iw = 0; iw < g.axis_w.size(); ++iw) {
        for (std::size_t il = 0; il < g.axis_l.size(); ++il) {
          auto eval = [&](double w, double l) {
            RowLossInput in;
            in.p_w = std::exp(w);
            in.p_l = std::exp(l);
            in.progress = t;
            return row_loss(spec, in);
          };
          double w = g.axis_w[iw], l = g.axis_l[il];
          double fw = mt::central_diff([&](double x) { return eval(x, l); }, w);
          double fl = mt::central_diff([&](double x) { return eval(w, x); }, l);
          CHECK(mt::close(g.at_w(iw, il), std::fabs(fw), 1e-4, 1e-7));
          CHECK(mt::close(g.at_l(iw, il), std::fabs(fl), 1e-4, 1e-7));
          CHECK(g.at_w(iw, il) >= 0.0);
          CHECK(std::isfinite(g.at_w(iw, il)));
        }
      }
    }
  }
}

TEST_CASE("zero temporal weights make the grid progress-independent") {
  LossNetParams params = LossNetParams::orpo_equivalent(true);
  ObjectiveSpec gen = ObjectiveSpec::with_net(ObjectiveKind::kGenOrpo, params, 0.5);
  GridSpec grid;
  grid.points = 8;
  LandscapeGrid g0 = landscape(gen, grid, 0.0);
  LandscapeGrid g1 = landscape(gen, grid, 1.0);
  CHECK(g0.grad_w_abs == g1.grad_w_abs);
  CHECK(g0.grad_l_abs == g1.grad_l_abs);
}

TEST_CASE("ORPO chosen-side asymmetry holds on the full grid") {
  ObjectiveSpec orpo;
  GridSpec grid;
  grid.points = 16;
  LandscapeGrid g = landscape(orpo, grid, 0.0);
  AsymmetryStats st = landscape_asymmetry(g);
  CHECK(st.total_pairs == 16 * 15 / 2);
  CHECK(st.holding_pairs == st.total_pairs);  // strict inequality everywhere
}

TEST_CASE("grid spec validation") {
  GridSpec bad;
  bad.log_p_max = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  GridSpec tiny;
  tiny.points = 1;
  CHECK_THROWS_AS(tiny.validate(), ConfigError);
}

// --- mirror-solution oracle -----------------------------------------------------------

namespace {

// One-step, one-state environment with reward (1, 0) over the two actions.
ChainEnv bandit_env() {
  ChainEnv env;
  env.num_states = 1;
  env.num_actions = 2;
  env.horizon = 1;
  env.reward = {1.0, 0.0};  // action 0 pays 1, action 1 pays 0
  env.start_dist = SimplexPoint::uniform(1);
  env.reward_name = "custom";
  env.validate();
  return env;
}

}  // namespace

TEST_CASE("neg-entropy bandit: softmax solution and constant") {
  ChainEnv env = bandit_env();
  TabularPolicy ref(1, 2);  // uniform
  MirrorSolutionReport rep = verify_mirror_solution(env, OmegaPotential::neg_entropy(),
                                             1.0, ref);
  REQUIRE(rep.per_start.size() == 1);
  const MirrorSolutionStartReport& sr = rep.per_start[0];
  CHECK(sr.residual_spread <= 1e-4);
  // Closed form: pi* proportional to ref * e^r, c(s0) = ln((1+e)/2).
  CHECK(sr.optimal[0] == doctest::Approx(0.7311).epsilon(1e-3));
  CHECK(sr.optimal[1] == doctest::Approx(0.2689).epsilon(1e-3));
  CHECK(sr.constant ==
        doctest::Approx(std::log((1.0 + std::exp(1.0)) / 2.0)).epsilon(1e-4));
  CHECK(sr.constant == doctest::Approx(0.6201).epsilon(1e-3));
}

TEST_CASE("huge beta pins the solution to the reference") {
  ChainEnv env = bandit_env();
  TabularPolicy ref(1, 2);
  MirrorSolutionReport rep = verify_mirror_solution(env, OmegaPotential::neg_entropy(),
                                             1e3, ref);
  const MirrorSolutionStartReport& sr = rep.per_start[0];
  double tv = 0.5 * (std::fabs(sr.optimal[0] - 0.5) +
                     std::fabs(sr.optimal[1] - 0.5));
  CHECK(tv <= 1e-3);
}

TEST_CASE("euclidean bandit matches the interior quadratic solve") {
  ChainEnv env = bandit_env();
  TabularPolicy ref(1, 2);
  const double beta = 2.0;
  MirrorSolutionReport rep =
      verify_mirror_solution(env, OmegaPotential::euclidean(), beta, ref);
  const MirrorSolutionStartReport& sr = rep.per_start[0];
  CHECK(sr.residual_spread <= 1e-4);
  // Interior KKT solution: pi = ref + (r - mean r) / (2 beta).
  double mean_r = 0.5;
  CHECK(sr.optimal[0] ==
        doctest::Approx(0.5 + (1.0 - mean_r) / (2 * beta)).epsilon(1e-6));
  CHECK(sr.optimal[1] ==
        doctest::Approx(0.5 + (0.0 - mean_r) / (2 * beta)).epsilon(1e-6));
}

TEST_CASE("random tiny environments: residual spread within 1e-4") {
  Rng rng(17);
  for (int i = 0; i < 5; ++i) {
    Rng env_rng = rng.child("env", i);
    ChainEnv env = ChainEnv::random_tiny(env_rng, 2, 2);
    TabularPolicy ref = TabularPolicy::random_init(2, 2, rng, 0.3);
    for (auto [pot, beta] :
         {std::pair{OmegaPotential::neg_entropy(), 1.0},
          std::pair{OmegaPotential::euclidean(), 8.0}}) {
      MirrorSolutionReport rep = verify_mirror_solution(env, pot, beta, ref);
      CHECK(rep.max_residual_spread <= 1e-4);
      // The closed-form softmax oracle for the 0-potential case.
      if (pot.kind() == OmegaPotential::Kind::kNegEntropy) {
        for (const MirrorSolutionStartReport& sr : rep.per_start) {
          double z = 0.0;
          std::vector<double> closed(sr.reference.size());
          for (std::size_t k = 0; k < closed.size(); ++k) {
            closed[k] = sr.reference[k] * std::exp(sr.rewards[k] / beta);
            z += closed[k];
          }
          for (std::size_t k = 0; k < closed.size(); ++k)
            CHECK(sr.optimal[k] == doctest::Approx(closed[k] / z).epsilon(1e-6));
        }
      }
    }
  }
}

TEST_CASE("oracle rejects oversized trajectory spaces") {
  ChainEnv env = ChainEnv::make_default(8, 20);
  TabularPolicy ref(8, 2);
  CHECK_THROWS_AS(verify_mirror_solution(env, OmegaPotential::neg_entropy(),
                                         1.0, ref),
                  ConfigError);
}
