// Evolution strategy: estimator exactness, shaping invariance, sphere
// convergence, determinism.
#include <cmath>

#include "doctest.h"
#include "mpo/es.hpp"
#include "test_support.hpp"

using namespace mpo;

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double sphere(std::span<const double> z) {
  double s = 0.0;
  for (double x : z) s += x * x;
  return -s;
}

}  // namespace

TEST_CASE("antithetic differencing is exact for linear fitness") {
  // One pair with eps = 1 on F(z) = 3z.
  std::vector<double> eps = {1.0};
  std::vector<double> fp = {3.0 * (2.0 + 0.1)};
  std::vector<double> fm = {3.0 * (2.0 - 0.1)};
  auto g = estimate_from_pairs(eps, fp, fm, 1, 0.1);
  CHECK(g[0] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("constant fitness gives an exactly zero estimate") {
  std::vector<double> zeta = {0.4, -1.0, 2.0};
  Rng rng(3);
  auto g = es_gradient_estimate(
      zeta, [](std::span<const double>) { return 7.5; }, 0.05, 64, rng);
  for (double x : g) CHECK(x == 0.0);
}

TEST_CASE("sphere gradient estimate within 10% at unit norm") {
  const int dim = 10;
  std::vector<double> zeta(dim, 1.0 / std::sqrt(10.0));
  std::vector<double> mean_est(dim, 0.0);
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(3000 + s);
    auto g = es_gradient_estimate(zeta, sphere, 0.03, 128, rng);
    for (int k = 0; k < dim; ++k) mean_est[k] += g[k] / seeds;
  }
  double err = 0.0, ref = 0.0;
  for (int k = 0; k < dim; ++k) {
    double expected = -2.0 * zeta[k];
    err += (mean_est[k] - expected) * (mean_est[k] - expected);
    ref += expected * expected;
  }
  CHECK(std::sqrt(err / ref) < 0.10);
}

TEST_CASE("fitness shaping is invariant to constant shifts") {
  std::vector<double> f = {1.0, 4.0, -2.0, 0.5, 3.0, 3.0};
  std::vector<double> g = f;
  for (double& x : g) x += 1234.5;
  shape_fitnesses(f);
  shape_fitnesses(g);
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK(f[i] == doctest::Approx(g[i]).epsilon(1e-9));

  std::vector<double> constant(8, 3.3);
  shape_fitnesses(constant);  // std floor keeps this finite
  for (double x : constant) CHECK(std::fabs(x) < 1e-6);
}

TEST_CASE("sigma follows the exact geometric schedule") {
  EsConfig cfg;
  cfg.population = 8;
  cfg.generations = 50;
  cfg.seed = 5;
  std::vector<double> z0 = {1.0, -1.0};
  auto fit = [](std::span<const double> z, std::uint64_t) { return sphere(z); };
  EsResult r = evolve(cfg, z0, fit);
  CHECK(r.history.size() == 50);
  for (const GenerationStats& s : r.history) {
    double expect = cfg.sigma_init * std::pow(cfg.sigma_decay, s.generation);
    CHECK(std::fabs(s.sigma - expect) < 1e-12);
  }
}

TEST_CASE("zero generations returns the start point with empty history") {
  EsConfig cfg;
  cfg.population = 8;
  cfg.generations = 0;
  std::vector<double> z0 = {0.3, 0.4};
  EsResult r = evolve(cfg, z0, [](std::span<const double> z, std::uint64_t) {
    return sphere(z);
  });
  CHECK(r.history.empty());
  CHECK(r.mean_params == z0);
  CHECK(r.best_params == z0);
}

TEST_CASE("same seed reproduces the full history") {
  EsConfig cfg;
  cfg.population = 16;
  cfg.generations = 20;
  cfg.seed = 7;
  std::vector<double> z0(6, 0.5);
  auto fit = [](std::span<const double> z, std::uint64_t seed) {
    Rng rng(seed);
    return sphere(z) + 0.01 * rng.normal();
  };
  EsResult a = evolve(cfg, z0, fit);
  EsResult b = evolve(cfg, z0, fit);
  CHECK(a.mean_params == b.mean_params);
  CHECK(a.best_fitness == b.best_fitness);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].best_fitness == b.history[i].best_fitness);
    CHECK(a.history[i].mean_fitness == b.history[i].mean_fitness);
  }
}

TEST_CASE("non-finite fitness is zeroed and counted, never fatal") {
  EsConfig cfg;
  cfg.population = 8;
  cfg.generations = 3;
  cfg.seed = 9;
  std::vector<double> z0 = {1.0};
  int calls = 0;
  auto fit = [&calls](std::span<const double> z, std::uint64_t) {
    if (++calls % 3 == 0) return std::numeric_limits<double>::quiet_NaN();
    return sphere(z);
  };
  EsResult r = evolve(cfg, z0, fit);
  CHECK(r.nonfinite_fitness_count > 0);
  CHECK(r.history.size() == 3);
}

TEST_CASE("candidates are projected before evaluation") {
  EsConfig cfg;
  cfg.population = 8;
  cfg.generations = 5;
  cfg.seed = 11;
  std::vector<double> z0 = {-0.5, 0.5};
  auto project = [](std::span<double> z) {
    for (double& x : z) x = std::max(x, 0.0);
  };
  bool all_feasible = true;
  auto fit = [&](std::span<const double> z, std::uint64_t) {
    for (double x : z) all_feasible = all_feasible && x >= 0.0;
    return sphere(z);
  };
  EsResult r = evolve(cfg, z0, fit, project);
  CHECK(all_feasible);
  for (double x : r.best_params) CHECK(x >= 0.0);
}

TEST_CASE("sphere converges from unit norm with the paper's loop constants") {
  // Population 64, 200 generations, otherwise the defaults.
  EsConfig cfg;
  cfg.population = 64;
  cfg.generations = 200;
  int ok = 0;
  const int seeds = 3;  // acceptance runs the full 10-seed version
  for (int s = 0; s < seeds; ++s) {
    cfg.seed = 100 + s;
    std::vector<double> z0(10, 1.0 / std::sqrt(10.0));
    EsResult r = evolve(cfg, z0, [](std::span<const double> z, std::uint64_t) {
      return sphere(z);
    });
    if (norm(r.mean_params) <= 0.1) ++ok;
  }
  CHECK(ok == seeds);
}

TEST_CASE("generation-0 mean fitness matches the ORPO baseline on clean data") {
  ChainEnv env = ChainEnv::make_default();
  TabularPolicy expert = make_reference_policy(env, 1.0);
  TabularPolicy reference = make_reference_policy(env, 0.43);
  JudgeConfig judge = JudgeConfig::from_accuracy(0.95, 2.8);
  PreferenceDataset clean = generate_dataset(env, expert, reference, 64,
                                             DatasetMode::kBase, judge, 3, 1.0,
                                             0.43);
  DiscoveryFitnessSpec spec;
  spec.env = env;
  spec.data = clean;
  spec.trainer = TrainerHyper{};
  spec.lambda = 0.5;
  spec.temporal = false;
  spec.inner_seeds = 1;
  SeededFitnessFn fitness = make_discovery_fitness(spec);

  std::vector<double> zeta0 = LossNetParams::orpo_equivalent(false).flatten();
  double sum = 0.0, sumsq = 0.0;
  const int n = 12;
  for (int i = 0; i < n; ++i) {
    double f = fitness(zeta0, derive_seed(77, "baseline", i));
    sum += f;
    sumsq += f * f;
  }
  double base_mean = sum / n;
  double base_se =
      std::sqrt(std::max(0.0, sumsq / n - base_mean * base_mean) / (n - 1));

  EsConfig cfg;
  cfg.population = 8;
  cfg.generations = 1;
  cfg.seed = 13;
  EsResult r = evolve(cfg, zeta0, fitness, loss_net_projection(false));
  double gen0_se = r.history[0].std_fitness / std::sqrt(8.0);
  double tol = 3.0 * std::sqrt(gen0_se * gen0_se + base_se * base_se) + 1e-9;
  CHECK(std::fabs(r.history[0].mean_fitness - base_mean) <= tol);
}

TEST_CASE("config validation") {
  EsConfig odd;
  odd.population = 7;
  CHECK_THROWS_AS(odd.validate(), ConfigError);
  EsConfig neg;
  neg.sigma_init = -1.0;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
}
