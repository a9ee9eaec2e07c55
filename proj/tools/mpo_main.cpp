// mpo_main.cpp - command-line entry point wiring all modules
//
// Subcommands: gen-data, train, evolve, landscape, verify-theorem, eval.
// Every run resolves its configuration (config file plus flag overrides),
// writes its artifacts atomically and drops a manifest with the resolved
// config, seeds, and artifact hashes; re-running with the same inputs
// reproduces every artifact bit-for-bit.
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mpo/analysis.hpp"
#include "mpo/artifacts.hpp"
#include "mpo/config.hpp"
#include "mpo/dataset.hpp"
#include "mpo/es.hpp"
#include "mpo/trainer.hpp"

namespace fs = std::filesystem;
using namespace mpo;

namespace {

// "0.95@2.8" -> (accuracy, gap)
std::pair<double, double> parse_accuracy_spec(const std::string& s) {
  std::size_t at = s.find('@');
  if (at == std::string::npos)
    throw ConfigError("--judge-accuracy expects q@gap, e.g. 0.95@2.8");
  return {parse_double(trim(std::string_view(s).substr(0, at))),
          parse_double(trim(std::string_view(s).substr(at + 1)))};
}

ChainEnv env_from_provenance(const DatasetProvenance& p) {
  if (p.env_reward != "advance_unit")
    throw ConfigError("dataset was generated on an unsupported reward spec");
  return ChainEnv::make_default(p.env_states, p.env_horizon);
}

ObjectiveSpec objective_from_config(const ExperimentConfig& cfg) {
  if (cfg.objective.kind == "orpo" || cfg.objective.kind == "dpo")
    return ObjectiveSpec::parse(cfg.objective.kind, cfg.objective.lambda,
                                cfg.objective.beta);
  return ObjectiveSpec::parse(cfg.objective.kind + ":" + cfg.objective.net,
                              cfg.objective.lambda, cfg.objective.beta);
}

struct CsvBuilder {
  std::ostringstream os;
  template <class... Ts>
  void row(const Ts&... fields) {
    bool first = true;
    ((os << (first ? "" : ","), first = false, put(fields)), ...);
    os << "\n";
  }
  void put(double v) { os << fmt_double(v); }
  void put(const std::string& s) { os << s; }
  void put(const char* s) { os << s; }
  void put(int v) { os << v; }
  void put(long v) { os << v; }
  void put(std::uint64_t v) { os << v; }
  std::string str() const { return os.str(); }
};

struct GenDataArgs {
  std::string config_path;
  std::optional<std::string> mode;
  std::optional<double> noise;
  std::optional<std::string> judge_accuracy;
  std::optional<int> size;
  std::optional<std::uint64_t> seed;
  std::string out = "out/dataset.txt";
};

int run_gen_data(const GenDataArgs& args) {
  ExperimentConfig cfg = args.config_path.empty()
                             ? ExperimentConfig{}
                             : ExperimentConfig::parse_file(args.config_path);
  if (args.mode) cfg.dataset.mode = *args.mode;
  if (args.noise) cfg.dataset.noise = *args.noise;
  if (args.size) cfg.dataset.size = *args.size;
  if (args.seed) cfg.dataset.seed = *args.seed;
  if (args.judge_accuracy) {
    auto [q, gap] = parse_accuracy_spec(*args.judge_accuracy);
    cfg.judge.accuracy = q;
    cfg.judge.gap = gap;
  }
  cfg.validate();

  ChainEnv env = cfg.make_env();
  TabularPolicy expert = make_reference_policy(env, cfg.policies.expert_skill);
  TabularPolicy reference =
      make_reference_policy(env, cfg.policies.reference_skill);
  JudgeConfig judge = cfg.make_judge();
  PreferenceDataset d = generate_dataset(
      env, expert, reference, cfg.dataset.size,
      mode_from_name(cfg.dataset.mode), judge, cfg.dataset.seed,
      cfg.policies.expert_skill, cfg.policies.reference_skill);
  if (cfg.dataset.noise > 0.0) {
    Rng noise_rng(derive_seed(cfg.dataset.seed, "noise"));
    d = corrupt_noise(std::move(d), cfg.dataset.noise, noise_rng);
  }

  std::ostringstream body;
  save_dataset(body, d);
  fs::path out(args.out);
  atomic_write_file(out, body.str());

  Manifest manifest("gen-data", cfg.render());
  manifest.add_seed("dataset", cfg.dataset.seed);
  manifest.add_artifact(out);
  manifest.write(out.string() + ".manifest.json");
  std::cout << "wrote " << out.string() << " (" << d.rows.size() << " rows, eta="
            << fmt_double(d.provenance.judge_eta) << ")\n";
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string data_path;
  std::optional<std::string> objective;
  std::optional<double> lambda;
  std::optional<double> beta;
  std::optional<int> seeds;
  std::optional<std::uint64_t> seed;
  bool raw_prob = false;
  bool save_policies = false;
  std::string out = "out/train";
};

int run_train(const TrainArgs& args) {
  ExperimentConfig cfg = args.config_path.empty()
                             ? ExperimentConfig{}
                             : ExperimentConfig::parse_file(args.config_path);
  if (args.objective) {
    std::string_view s = *args.objective;
    std::size_t colon = s.find(':');
    cfg.objective.kind = std::string(s.substr(0, colon));
    cfg.objective.net =
        colon == std::string_view::npos ? "" : std::string(s.substr(colon + 1));
  }
  if (args.lambda) cfg.objective.lambda = *args.lambda;
  if (args.beta) cfg.objective.beta = *args.beta;
  if (args.seeds) cfg.trainer.seeds = *args.seeds;
  if (args.seed) cfg.trainer.seed = *args.seed;
  if (args.raw_prob) cfg.trainer.raw_prob = true;

  PreferenceDataset data = load_dataset_file(args.data_path);
  ChainEnv env = env_from_provenance(data.provenance);
  cfg.env.states = env.num_states;
  cfg.env.horizon = env.horizon;
  cfg.validate();
  ObjectiveSpec objective = objective_from_config(cfg);
  cfg.objective.temporal = objective.temporal;
  TrainerHyper base_hyper = cfg.make_trainer_hyper();

  fs::path out_dir(args.out);
  fs::create_directories(out_dir);

  CsvBuilder summary;
  summary.row("seed", "final_value");
  std::vector<double> values;
  TrainingTrace first_trace;
  TabularPolicy first_policy(env.num_states, env.num_actions);

  for (int i = 0; i < cfg.trainer.seeds; ++i) {
    TrainerHyper hyper = base_hyper;
    hyper.seed = derive_seed(cfg.trainer.seed, "train-run", i);
    Rng init_rng(derive_seed(cfg.trainer.seed, "train-init", i));
    TabularPolicy init =
        TabularPolicy::random_init(env.num_states, env.num_actions, init_rng);
    TabularPolicy reference = init;  // frozen starting policy anchors DPO
    TrainResult res = train(data, objective, hyper, init,
                            objective.needs_reference() ? &reference : nullptr);
    double value = policy_value_exact(env, res.policy).mean;
    values.push_back(value);
    summary.row(i, value);
    if (i == 0) {
      first_trace = std::move(res.trace);
      first_policy = res.policy;
    }
    if (args.save_policies) {
      std::ostringstream ps;
      save_policy(ps, res.policy);
      atomic_write_file(out_dir / ("policy_seed" + std::to_string(i) + ".txt"),
                        ps.str());
    }
  }

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= values.size();
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  double stderr_v =
      values.size() > 1 ? std::sqrt(var / (values.size() - 1.0) /
                                    static_cast<double>(values.size()))
                        : 0.0;
  summary.row("mean", mean);
  summary.row("stderr", stderr_v);
  atomic_write_file(out_dir / "summary.csv", summary.str());

  CsvBuilder trace_csv;
  trace_csv.row("step", "log_p_w", "log_p_l", "t");
  std::vector<TraceRecord> thinned = replay_trace(first_trace);
  for (std::size_t i = 0; i < thinned.size(); ++i)
    trace_csv.row(static_cast<long>(i), thinned[i].log_p_w, thinned[i].log_p_l,
                  thinned[i].progress);
  atomic_write_file(out_dir / "trace.csv", trace_csv.str());

  std::ostringstream ps;
  save_policy(ps, first_policy);
  atomic_write_file(out_dir / "policy_seed0.txt", ps.str());

  Manifest manifest("train", cfg.render());
  manifest.add_seed("trainer", cfg.trainer.seed);
  manifest.add_input(args.data_path);
  manifest.add_artifact(out_dir / "summary.csv");
  manifest.add_artifact(out_dir / "trace.csv");
  manifest.add_artifact(out_dir / "policy_seed0.txt");
  manifest.write(out_dir / "manifest.json");

  std::cout << "trained " << cfg.trainer.seeds << " seeds: mean value "
            << fmt_double(mean) << " +/- " << fmt_double(stderr_v) << "\n";
  return 0;
}

struct EvolveArgs {
  std::string config_path;
  std::string data_path;
  std::string init = "orpo_equivalent";
  std::string out = "out/evolve";
};

int run_evolve(const EvolveArgs& args) {
  ExperimentConfig cfg = args.config_path.empty()
                             ? ExperimentConfig{}
                             : ExperimentConfig::parse_file(args.config_path);
  cfg.validate();

  ChainEnv env = cfg.make_env();
  PreferenceDataset data;
  if (!args.data_path.empty()) {
    data = load_dataset_file(args.data_path);
    env = env_from_provenance(data.provenance);
  } else {
    TabularPolicy expert = make_reference_policy(env, cfg.policies.expert_skill);
    TabularPolicy reference =
        make_reference_policy(env, cfg.policies.reference_skill);
    data = generate_dataset(env, expert, reference, cfg.dataset.size,
                            mode_from_name(cfg.dataset.mode), cfg.make_judge(),
                            cfg.dataset.seed, cfg.policies.expert_skill,
                            cfg.policies.reference_skill);
    if (cfg.dataset.noise > 0.0) {
      Rng noise_rng(derive_seed(cfg.dataset.seed, "noise"));
      data = corrupt_noise(std::move(data), cfg.dataset.noise, noise_rng);
    }
  }

  bool temporal = cfg.objective.temporal;
  DiscoveryFitnessSpec fitness_spec;
  fitness_spec.env = env;
  fitness_spec.data = data;
  fitness_spec.trainer = cfg.make_trainer_hyper();
  fitness_spec.lambda = cfg.objective.lambda;
  fitness_spec.temporal = temporal;
  fitness_spec.inner_seeds = cfg.es.inner_seeds;
  fitness_spec.eval_episodes = cfg.es.eval_episodes;
  SeededFitnessFn fitness = make_discovery_fitness(std::move(fitness_spec));

  if (args.init != "random" && args.init != "orpo_equivalent")
    throw ConfigError("--init must be 'random' or 'orpo_equivalent'");
  LossNetParams zeta0 = LossNetParams::orpo_equivalent(temporal);
  if (args.init == "random") {
    Rng rng(derive_seed(cfg.es.seed, "zeta0"));
    zeta0 = init_params(rng, temporal);
  }

  EsResult result = evolve(cfg.make_es_config(), zeta0.flatten(), fitness,
                           loss_net_projection(temporal));

  fs::path out_dir(args.out);
  fs::create_directories(out_dir);

  CsvBuilder evo;
  evo.row("generation", "sigma", "best_fitness", "mean_fitness");
  for (const GenerationStats& s : result.history)
    evo.row(s.generation, s.sigma, s.best_fitness, s.mean_fitness);
  atomic_write_file(out_dir / "evolution.csv", evo.str());

  LossNetParams best = LossNetParams::unflatten(result.best_params, temporal);
  std::ostringstream ns;
  save_loss_net(ns, best);
  atomic_write_file(out_dir / "best_lossnet.txt", ns.str());

  Manifest manifest("evolve", cfg.render());
  manifest.add_seed("es", cfg.es.seed);
  manifest.add_param("init", args.init);
  if (!args.data_path.empty()) manifest.add_input(args.data_path);
  manifest.add_artifact(out_dir / "evolution.csv");
  manifest.add_artifact(out_dir / "best_lossnet.txt");
  manifest.write(out_dir / "manifest.json");

  std::cout << "evolved " << result.history.size() << " generations, best fitness "
            << fmt_double(result.best_fitness)
            << " (non-finite evals: " << result.nonfinite_fitness_count << ")\n";
  return 0;
}

struct LandscapeArgs {
  std::string config_path;
  std::optional<std::string> objective;
  std::optional<double> lambda;
  std::optional<double> beta;
  double t = 0.0;
  int points = 64;
  double log_p_min = -8.0;
  double log_p_max = -0.02;
  std::string out = "out/landscape";
};

int run_landscape(const LandscapeArgs& args) {
  ExperimentConfig cfg = args.config_path.empty()
                             ? ExperimentConfig{}
                             : ExperimentConfig::parse_file(args.config_path);
  if (args.objective) {
    std::string_view s = *args.objective;
    std::size_t colon = s.find(':');
    cfg.objective.kind = std::string(s.substr(0, colon));
    cfg.objective.net =
        colon == std::string_view::npos ? "" : std::string(s.substr(colon + 1));
  }
  if (args.lambda) cfg.objective.lambda = *args.lambda;
  if (args.beta) cfg.objective.beta = *args.beta;
  cfg.validate();
  ObjectiveSpec objective = objective_from_config(cfg);
  cfg.objective.temporal = objective.temporal;

  GridSpec grid;
  grid.points = args.points;
  grid.log_p_min = args.log_p_min;
  grid.log_p_max = args.log_p_max;
  LandscapeGrid g = landscape(objective, grid, args.t);

  CsvBuilder csv;
  csv.row("t", "lambda", "objective");
  csv.row(args.t, objective.lambda, objective.name());
  csv.row("log_p_w", "log_p_l", "grad_w_abs", "grad_l_abs");
  for (std::size_t iw = 0; iw < g.axis_w.size(); ++iw)
    for (std::size_t il = 0; il < g.axis_l.size(); ++il)
      csv.row(g.axis_w[iw], g.axis_l[il], g.at_w(iw, il), g.at_l(iw, il));

  fs::path out_dir(args.out);
  fs::create_directories(out_dir);
  atomic_write_file(out_dir / "landscape.csv", csv.str());

  Manifest manifest("landscape", cfg.render());
  manifest.add_param("t", fmt_double(args.t));
  manifest.add_param("points", std::to_string(args.points));
  manifest.add_param("log_p_min", fmt_double(args.log_p_min));
  manifest.add_param("log_p_max", fmt_double(args.log_p_max));
  manifest.add_artifact(out_dir / "landscape.csv");
  manifest.write(out_dir / "manifest.json");
  std::cout << "wrote " << (out_dir / "landscape.csv").string() << " ("
            << g.axis_w.size() << "x" << g.axis_l.size() << " points)\n";
  return 0;
}

struct VerifyArgs {
  std::string potential = "neg_entropy";
  double beta = 0.0;  // 0 = per-potential default
  int envs = 5;
  int states = 2;
  int horizon = 2;
  std::uint64_t seed = 1;
  std::string out = "out/verify";
};

int run_verify(const VerifyArgs& args) {
  OmegaPotential pot = OmegaPotential::from_name(args.potential);
  // Default betas keep the optimal trajectory distribution interior, which
  // the identity requires; the euclidean map is not a 0-potential and needs
  // a stronger regularizer.
  double beta = args.beta > 0.0
                    ? args.beta
                    : (pot.kind() == OmegaPotential::Kind::kEuclidean ? 8.0 : 1.0);

  CsvBuilder csv;
  csv.row("potential", "beta", "env", "start_state", "residual_spread",
          "constant");
  Rng rng(args.seed);
  double worst = 0.0;
  for (int e = 0; e < args.envs; ++e) {
    Rng env_rng = rng.child("env", e);
    ChainEnv env = ChainEnv::random_tiny(env_rng, args.states, args.horizon);
    TabularPolicy ref = TabularPolicy::random_init(env.num_states,
                                                   env.num_actions, rng, 0.3);
    MirrorSolutionReport rep = verify_mirror_solution(env, pot, beta, ref);
    for (const MirrorSolutionStartReport& sr : rep.per_start)
      csv.row(args.potential, beta, e, sr.start_state, sr.residual_spread,
              sr.constant);
    worst = std::max(worst, rep.max_residual_spread);
    std::cout << "env " << e << ": residual spread "
              << fmt_double(rep.max_residual_spread) << "\n";
  }

  fs::path out_dir(args.out);
  fs::create_directories(out_dir);
  atomic_write_file(out_dir / "verify.csv", csv.str());

  ExperimentConfig cfg;
  Manifest manifest("verify-theorem", cfg.render());
  manifest.add_seed("verify", args.seed);
  manifest.add_param("potential", args.potential);
  manifest.add_param("beta", fmt_double(beta));
  manifest.add_param("envs", std::to_string(args.envs));
  manifest.add_param("states", std::to_string(args.states));
  manifest.add_param("horizon", std::to_string(args.horizon));
  manifest.add_artifact(out_dir / "verify.csv");
  manifest.write(out_dir / "manifest.json");

  std::cout << "max residual spread " << fmt_double(worst) << "\n";
  if (worst > 1e-4) {
    std::cerr << "error: residual spread exceeds 1e-4\n";
    return 1;
  }
  return 0;
}

struct EvalArgs {
  std::string config_path;
  std::string policy_path;
  int episodes = 100000;
  std::uint64_t seed = 0;
  std::string out = "out/eval";
};

int run_eval(const EvalArgs& args) {
  ExperimentConfig cfg = args.config_path.empty()
                             ? ExperimentConfig{}
                             : ExperimentConfig::parse_file(args.config_path);
  cfg.validate();
  ChainEnv env = cfg.make_env();
  TabularPolicy policy = load_policy_file(args.policy_path);
  ValueEstimate exact = policy_value_exact(env, policy);
  Rng rng(derive_seed(args.seed, "eval"));
  ValueEstimate mc = policy_value_mc(env, policy, args.episodes, rng);

  CsvBuilder csv;
  csv.row("mode", "value", "stderr");
  csv.row("exact", exact.mean, exact.stderr);
  csv.row("monte_carlo", mc.mean, mc.stderr);
  fs::path out_dir(args.out);
  fs::create_directories(out_dir);
  atomic_write_file(out_dir / "eval.csv", csv.str());

  Manifest manifest("eval", cfg.render());
  manifest.add_seed("eval", args.seed);
  manifest.add_param("episodes", std::to_string(args.episodes));
  manifest.add_input(args.policy_path);
  manifest.add_artifact(out_dir / "eval.csv");
  manifest.write(out_dir / "manifest.json");

  std::cout << "exact value " << fmt_double(exact.mean) << ", monte-carlo "
            << fmt_double(mc.mean) << " +/- " << fmt_double(mc.stderr) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mirror-descent preference optimization toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a preference dataset");
  gen->add_option("--config", gen_args.config_path, "experiment config file");
  gen->add_option("--mode", gen_args.mode, "base|shuffled");
  gen->add_option("--noise", gen_args.noise, "label flip fraction in [0,1]");
  gen->add_option("--judge-accuracy", gen_args.judge_accuracy,
                  "q@gap, e.g. 0.95@2.8");
  gen->add_option("--size", gen_args.size, "number of rows");
  gen->add_option("--seed", gen_args.seed, "generation seed");
  gen->add_option("--out", gen_args.out, "output dataset path");

  TrainArgs train_args;
  CLI::App* tr = app.add_subcommand("train", "train policies on a dataset");
  tr->add_option("--config", train_args.config_path, "experiment config file");
  tr->add_option("--data", train_args.data_path, "dataset path")->required();
  tr->add_option("--objective", train_args.objective,
                 "orpo|dpo|gen_orpo:<ckpt>|gen_dpo:<ckpt>");
  tr->add_option("--lambda", train_args.lambda, "preference weight");
  tr->add_option("--beta", train_args.beta, "DPO regularization strength");
  tr->add_option("--seeds", train_args.seeds, "independent training runs");
  tr->add_option("--seed", train_args.seed, "base seed");
  tr->add_flag("--raw-prob", train_args.raw_prob,
               "feed raw trajectory products instead of per-step means");
  tr->add_flag("--save-policies", train_args.save_policies,
               "write a checkpoint per seed");
  tr->add_option("--out", train_args.out, "output directory");

  EvolveArgs evolve_args;
  CLI::App* ev = app.add_subcommand("evolve", "discover loss nets with ES");
  ev->add_option("--config", evolve_args.config_path, "experiment config file");
  ev->add_option("--data", evolve_args.data_path,
                 "dataset path (generated from config when omitted)");
  ev->add_option("--init", evolve_args.init, "orpo_equivalent|random");
  ev->add_option("--out", evolve_args.out, "output directory");

  LandscapeArgs land_args;
  CLI::App* la = app.add_subcommand("landscape", "export gradient landscapes");
  la->add_option("--config", land_args.config_path, "experiment config file");
  la->add_option("--objective", land_args.objective,
                 "orpo|dpo|gen_orpo:<ckpt>|gen_dpo:<ckpt>");
  la->add_option("--lambda", land_args.lambda, "preference weight");
  la->add_option("--beta", land_args.beta, "DPO regularization strength");
  la->add_option("--t", land_args.t, "training progress in [0,1]");
  la->add_option("--points", land_args.points, "grid points per axis");
  la->add_option("--min", land_args.log_p_min, "log-probability lower bound");
  la->add_option("--max", land_args.log_p_max, "log-probability upper bound");
  la->add_option("--out", land_args.out, "output directory");

  VerifyArgs verify_args;
  CLI::App* ve =
      app.add_subcommand("verify-theorem", "mirror-solution residual oracle");
  ve->add_option("--potential", verify_args.potential,
                 "neg_entropy|euclidean|log_odds|learned:<ckpt>");
  ve->add_option("--beta", verify_args.beta, "regularization strength");
  ve->add_option("--envs", verify_args.envs, "number of random tiny MDPs");
  ve->add_option("--states", verify_args.states, "tiny MDP state count");
  ve->add_option("--horizon", verify_args.horizon, "tiny MDP horizon");
  ve->add_option("--seed", verify_args.seed, "environment seed");
  ve->add_option("--out", verify_args.out, "output directory");

  EvalArgs eval_args;
  CLI::App* ex = app.add_subcommand("eval", "evaluate a policy checkpoint");
  ex->add_option("--config", eval_args.config_path, "experiment config file");
  ex->add_option("--policy", eval_args.policy_path, "policy checkpoint")
      ->required();
  ex->add_option("--episodes", eval_args.episodes, "monte-carlo episodes");
  ex->add_option("--seed", eval_args.seed, "evaluation seed");
  ex->add_option("--out", eval_args.out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen_data(gen_args);
    if (tr->parsed()) return run_train(train_args);
    if (ev->parsed()) return run_evolve(evolve_args);
    if (la->parsed()) return run_landscape(land_args);
    if (ve->parsed()) return run_verify(verify_args);
    if (ex->parsed()) return run_eval(eval_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
