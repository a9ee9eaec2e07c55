// es.hpp - OpenAI-style evolution strategy over loss-net parameters
//
// Antithetic Gaussian perturbations of the mean, gradient estimate
// eps/(2*sigma) * (F(zeta + sigma*eps) - F(zeta - sigma*eps)) averaged over
// pairs, Adam ascent on the mean, geometric sigma decay. Candidates are
// perturbed in unconstrained space and projected before evaluation; the
// estimator uses the raw eps. Fitness evaluations within a generation are
// independent and run on a worker pool; every candidate's rng seed derives
// from (seed, generation, slot), so results do not depend on scheduling.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <span>
#include <thread>
#include <vector>

#include "mpo/adam.hpp"
#include "mpo/chain_env.hpp"
#include "mpo/dataset.hpp"
#include "mpo/errors.hpp"
#include "mpo/loss_net.hpp"
#include "mpo/objectives.hpp"
#include "mpo/rng.hpp"
#include "mpo/trainer.hpp"

namespace mpo {

inline int worker_count() {
  if (const char* e = std::getenv("MPO_WORKERS")) {
    int n = std::atoi(e);
    if (n > 0) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

template <class F>
void parallel_for(std::size_t n, F&& f) {
  std::size_t workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) f(i);
    });
  for (std::thread& t : threads) t.join();
}

struct EsConfig {
  int population = 256;  // total candidates per generation; even
  int generations = 128;
  double sigma_init = 0.03;
  double sigma_decay = 0.999;
  double learning_rate = 0.02;
  bool fitness_shaping = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (population < 2 || population % 2 != 0)
      throw ConfigError("population must be even and >= 2");
    if (generations < 0) throw ConfigError("generations must be >= 0");
    if (!(sigma_init > 0.0) || !(sigma_decay > 0.0) || !(learning_rate > 0.0))
      throw ConfigError("ES step sizes must be positive");
  }
};

struct GenerationStats {
  int generation;
  double sigma;
  double best_fitness;
  double mean_fitness;
  double std_fitness;
};

struct EsResult {
  std::vector<double> best_params;  // projected candidate, highest fitness seen
  double best_fitness = -std::numeric_limits<double>::infinity();
  std::vector<double> mean_params;  // final ES mean (unconstrained)
  std::vector<GenerationStats> history;
  long nonfinite_fitness_count = 0;
};

// Fitness of a (projected) parameter vector; the seed drives any stochastic
// evaluation inside.
using SeededFitnessFn =
    std::function<double(std::span<const double>, std::uint64_t)>;
using ProjectFn = std::function<void(std::span<double>)>;

// In-place standardization (mean 0, std 1, std floored at 1e-8). Invariant to
// adding a constant to every fitness.
inline void shape_fitnesses(std::span<double> f) {
  if (f.empty()) return;
  double mean = 0.0;
  for (double x : f) mean += x;
  mean /= static_cast<double>(f.size());
  double var = 0.0;
  for (double x : f) var += (x - mean) * (x - mean);
  double sd = std::max(std::sqrt(var / static_cast<double>(f.size())), 1e-8);
  for (double& x : f) x = (x - mean) / sd;
}

// Mean over pairs of eps_i * (f_plus_i - f_minus_i) / (2 sigma); eps is
// row-major [pair][dim].
inline std::vector<double> estimate_from_pairs(std::span<const double> eps,
                                               std::span<const double> f_plus,
                                               std::span<const double> f_minus,
                                               std::size_t dim, double sigma) {
  std::size_t pairs = f_plus.size();
  std::vector<double> grad(dim, 0.0);
  for (std::size_t i = 0; i < pairs; ++i) {
    double scale = (f_plus[i] - f_minus[i]) / (2.0 * sigma * pairs);
    const double* e = eps.data() + i * dim;
    for (std::size_t k = 0; k < dim; ++k) grad[k] += scale * e[k];
  }
  return grad;
}

// Raw antithetic estimator of grad F at zeta (no shaping, no projection);
// non-finite candidate fitnesses contribute zero.
inline std::vector<double> es_gradient_estimate(
    std::span<const double> zeta,
    const std::function<double(std::span<const double>)>& fitness, double sigma,
    int population, Rng& rng) {
  if (population < 2 || population % 2 != 0)
    throw ConfigError("population must be even and >= 2");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  std::size_t dim = zeta.size();
  std::size_t pairs = static_cast<std::size_t>(population) / 2;
  std::vector<double> eps(pairs * dim);
  for (double& e : eps) e = rng.normal();
  std::vector<double> f_plus(pairs), f_minus(pairs);
  std::vector<double> candidate(dim);
  for (std::size_t i = 0; i < pairs; ++i) {
    for (int sign : {+1, -1}) {
      for (std::size_t k = 0; k < dim; ++k)
        candidate[k] = zeta[k] + sign * sigma * eps[i * dim + k];
      double f = fitness(candidate);
      if (!std::isfinite(f)) f = 0.0;
      (sign > 0 ? f_plus : f_minus)[i] = f;
    }
  }
  return estimate_from_pairs(eps, f_plus, f_minus, dim, sigma);
}

// Full outer loop. Maximizes fitness; returns the best projected candidate
// and per-generation statistics of the raw (unshaped) fitnesses.
inline EsResult evolve(const EsConfig& cfg, std::span<const double> zeta0,
                       const SeededFitnessFn& fitness,
                       const ProjectFn& project = nullptr) {
  cfg.validate();
  const std::size_t dim = zeta0.size();
  const std::size_t pairs = static_cast<std::size_t>(cfg.population) / 2;

  EsResult result;
  result.mean_params.assign(zeta0.begin(), zeta0.end());
  result.best_params = result.mean_params;
  if (cfg.generations == 0) return result;

  AdamOptimizer adam(cfg.learning_rate, dim);
  std::vector<double> eps(pairs * dim);
  std::vector<double> candidates(2 * pairs * dim);
  std::vector<double> fitnesses(2 * pairs);  // [2i] = plus, [2i+1] = minus
  std::atomic<long> nonfinite{0};

  for (int gen = 0; gen < cfg.generations; ++gen) {
    double sigma = cfg.sigma_init *
                   std::pow(cfg.sigma_decay, static_cast<double>(gen));
    Rng gen_rng(derive_seed(cfg.seed, "es-eps", static_cast<std::uint64_t>(gen)));
    for (double& e : eps) e = gen_rng.normal();
    for (std::size_t i = 0; i < pairs; ++i) {
      for (int half = 0; half < 2; ++half) {
        double sign = half == 0 ? 1.0 : -1.0;
        double* c = candidates.data() + (2 * i + half) * dim;
        for (std::size_t k = 0; k < dim; ++k)
          c[k] = result.mean_params[k] + sign * sigma * eps[i * dim + k];
        if (project) project(std::span<double>(c, dim));
      }
    }

    parallel_for(2 * pairs, [&](std::size_t slot) {
      std::span<const double> c(candidates.data() + slot * dim, dim);
      std::uint64_t eval_seed = derive_seed(
          cfg.seed, "es-fitness",
          static_cast<std::uint64_t>(gen) * cfg.population + slot);
      double f;
      try {
        f = fitness(c, eval_seed);
      } catch (const std::exception&) {
        f = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(f)) {
        f = 0.0;
        nonfinite.fetch_add(1);
      }
      fitnesses[slot] = f;
    });

    GenerationStats stats{gen, sigma,
                          -std::numeric_limits<double>::infinity(), 0.0, 0.0};
    for (std::size_t slot = 0; slot < 2 * pairs; ++slot) {
      double f = fitnesses[slot];
      stats.mean_fitness += f;
      if (f > stats.best_fitness) stats.best_fitness = f;
      if (f > result.best_fitness) {
        result.best_fitness = f;
        result.best_params.assign(candidates.begin() + slot * dim,
                                  candidates.begin() + (slot + 1) * dim);
      }
    }
    stats.mean_fitness /= static_cast<double>(2 * pairs);
    for (double f : fitnesses)
      stats.std_fitness +=
          (f - stats.mean_fitness) * (f - stats.mean_fitness);
    stats.std_fitness = std::sqrt(stats.std_fitness / (2.0 * pairs));
    result.history.push_back(stats);

    std::vector<double> shaped(fitnesses);
    if (cfg.fitness_shaping) shape_fitnesses(shaped);
    std::vector<double> f_plus(pairs), f_minus(pairs);
    for (std::size_t i = 0; i < pairs; ++i) {
      f_plus[i] = shaped[2 * i];
      f_minus[i] = shaped[2 * i + 1];
    }
    std::vector<double> grad =
        estimate_from_pairs(eps, f_plus, f_minus, dim, sigma);
    for (double& g : grad) g = -g;  // Adam descends; we maximize
    adam.step(result.mean_params, grad);
  }
  result.nonfinite_fitness_count = nonfinite.load();
  return result;
}

// --- discovery fitness --------------------------------------------------------

// Fitness of loss-net parameters: train `inner_seeds` fresh policies with the
// generalized-ORPO objective they induce, return the mean trained-policy
// value. eval_episodes = 0 uses the exact dynamic-programming value, removing
// evaluation noise.
struct DiscoveryFitnessSpec {
  ChainEnv env;
  PreferenceDataset data;
  TrainerHyper trainer;
  double lambda = 0.5;
  bool temporal = false;
  int inner_seeds = 3;
  int eval_episodes = 0;
};

inline SeededFitnessFn make_discovery_fitness(DiscoveryFitnessSpec spec) {
  if (spec.inner_seeds < 1) throw ConfigError("inner_seeds must be >= 1");
  auto shared = std::make_shared<const DiscoveryFitnessSpec>(std::move(spec));
  return [shared](std::span<const double> zeta, std::uint64_t seed) {
    const DiscoveryFitnessSpec& s = *shared;
    ObjectiveSpec objective = ObjectiveSpec::with_net(
        ObjectiveKind::kGenOrpo,
        LossNetParams::unflatten(zeta, s.temporal), s.lambda);
    double total = 0.0;
    for (int k = 0; k < s.inner_seeds; ++k) {
      TrainerHyper hyper = s.trainer;
      hyper.seed = derive_seed(seed, "inner-train", static_cast<std::uint64_t>(k));
      Rng init_rng(derive_seed(seed, "inner-init", static_cast<std::uint64_t>(k)));
      TabularPolicy init = TabularPolicy::random_init(
          s.env.num_states, s.env.num_actions, init_rng);
      TrainResult r = train(s.data, objective, hyper, init);
      if (s.eval_episodes > 0) {
        Rng eval_rng(derive_seed(seed, "inner-eval", static_cast<std::uint64_t>(k)));
        total += policy_value_mc(s.env, r.policy, s.eval_episodes, eval_rng).mean;
      } else {
        total += policy_value_exact(s.env, r.policy).mean;
      }
    }
    return total / s.inner_seeds;
  };
}

inline ProjectFn loss_net_projection(bool temporal) {
  return [temporal](std::span<double> zeta) {
    LossNetParams p =
        project_params(LossNetParams::unflatten(zeta, temporal));
    std::vector<double> flat = p.flatten();
    std::copy(flat.begin(), flat.end(), zeta.begin());
  };
}

}  // namespace mpo
