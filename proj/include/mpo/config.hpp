// config.hpp - experiment configuration: flat key/value text with sections
//
// Unknown keys are rejected and validation reports every violation at once,
// not just the first. render() emits the fully resolved configuration in
// canonical form; a file parsed from render() output reproduces the struct.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mpo/chain_env.hpp"
#include "mpo/dataset.hpp"
#include "mpo/errors.hpp"
#include "mpo/es.hpp"
#include "mpo/text.hpp"
#include "mpo/trainer.hpp"

namespace mpo {

struct ExperimentConfig {
  int version = 1;

  struct Env {
    int states = 8;
    int actions = 2;
    int horizon = 20;
    std::string reward = "advance_unit";
  } env;

  struct Policies {
    double expert_skill = 1.0;
    double reference_skill = 0.43;
  } policies;

  struct Judge {
    double accuracy = 0.95;  // correct-ranking probability...
    double gap = 2.8;        // ...at this reward gap (expert vs 0.86-skill value gap)
  } judge;

  struct Dataset {
    std::string mode = "base";
    int size = 512;
    double noise = 0.0;
    std::uint64_t seed = 7;
  } dataset;

  struct Objective {
    std::string kind = "orpo";
    double lambda = 0.5;
    double beta = 1.0;
    bool temporal = false;
    std::string net;  // loss-net checkpoint path for gen_* kinds
  } objective;

  struct Trainer {
    int epochs = 12;
    int minibatch = 2;
    double learning_rate = 1e-3;
    double max_grad_norm = 1.3;
    int seeds = 25;
    std::uint64_t seed = 0;
    bool raw_prob = false;
  } trainer;

  struct Es {
    int population = 256;
    int generations = 128;
    double sigma_init = 0.03;
    double sigma_decay = 0.999;
    double learning_rate = 0.02;
    int inner_seeds = 3;
    int eval_episodes = 0;  // 0 = exact dynamic-programming value
    bool fitness_shaping = true;
    std::uint64_t seed = 0;
  } es;

  struct Output {
    std::string dir = "out";
  } output;

  ChainEnv make_env() const {
    if (env.reward != "advance_unit")
      throw ConfigError("unknown reward spec '" + env.reward + "'");
    if (env.actions != 2)
      throw ConfigError("the chain environment supports exactly 2 actions");
    return ChainEnv::make_default(env.states, env.horizon);
  }

  JudgeConfig make_judge() const {
    return JudgeConfig::from_accuracy(judge.accuracy, judge.gap);
  }

  TrainerHyper make_trainer_hyper() const {
    TrainerHyper h;
    h.epochs = trainer.epochs;
    h.minibatch = trainer.minibatch;
    h.learning_rate = trainer.learning_rate;
    h.max_grad_norm = trainer.max_grad_norm;
    h.seed = trainer.seed;
    h.raw_prob = trainer.raw_prob;
    return h;
  }

  EsConfig make_es_config() const {
    EsConfig c;
    c.population = es.population;
    c.generations = es.generations;
    c.sigma_init = es.sigma_init;
    c.sigma_decay = es.sigma_decay;
    c.learning_rate = es.learning_rate;
    c.fitness_shaping = es.fitness_shaping;
    c.seed = es.seed;
    return c;
  }

  std::vector<std::string> validation_errors() const {
    std::vector<std::string> errs;
    auto require = [&](bool ok, std::string_view msg) {
      if (!ok) errs.emplace_back(msg);
    };
    require(version == 1, "version: only version 1 is supported");
    require(env.states >= 1, "env.states must be >= 1");
    require(env.actions == 2, "env.actions must be 2");
    require(env.horizon >= 1, "env.horizon must be >= 1");
    require(env.reward == "advance_unit", "env.reward must be 'advance_unit'");
    require(policies.expert_skill >= 0.0 && policies.expert_skill <= 1.0,
            "policies.expert_skill must lie in [0,1]");
    require(policies.reference_skill >= 0.0 && policies.reference_skill <= 1.0,
            "policies.reference_skill must lie in [0,1]");
    require(judge.accuracy > 0.5 && judge.accuracy < 1.0,
            "judge.accuracy must lie in (0.5, 1)");
    require(judge.gap > 0.0, "judge.gap must be positive");
    require(dataset.mode == "base" || dataset.mode == "shuffled",
            "dataset.mode must be 'base' or 'shuffled'");
    require(dataset.size > 0, "dataset.size must be positive");
    require(dataset.mode != "shuffled" || dataset.size % 4 == 0,
            "dataset.size must be divisible by 4 in shuffled mode");
    require(dataset.noise >= 0.0 && dataset.noise <= 1.0,
            "dataset.noise must lie in [0,1]");
    require(objective.kind == "orpo" || objective.kind == "dpo" ||
                objective.kind == "gen_orpo" || objective.kind == "gen_dpo",
            "objective.kind must be orpo|dpo|gen_orpo|gen_dpo");
    require(objective.lambda >= 0.0, "objective.lambda must be >= 0");
    require(objective.beta > 0.0, "objective.beta must be > 0");
    require((objective.kind != "gen_orpo" && objective.kind != "gen_dpo") ||
                !objective.net.empty(),
            "objective.net is required for generalized objectives");
    require(trainer.epochs >= 1, "trainer.epochs must be >= 1");
    require(trainer.minibatch >= 1, "trainer.minibatch must be >= 1");
    require(trainer.learning_rate > 0.0, "trainer.learning_rate must be > 0");
    require(trainer.max_grad_norm > 0.0, "trainer.max_grad_norm must be > 0");
    require(trainer.seeds >= 1, "trainer.seeds must be >= 1");
    require(!trainer.raw_prob || env.horizon <= 20,
            "trainer.raw_prob requires env.horizon <= 20");
    require(es.population >= 2 && es.population % 2 == 0,
            "es.population must be even and >= 2");
    require(es.generations >= 0, "es.generations must be >= 0");
    require(es.sigma_init > 0.0, "es.sigma_init must be > 0");
    require(es.sigma_decay > 0.0, "es.sigma_decay must be > 0");
    require(es.learning_rate > 0.0, "es.learning_rate must be > 0");
    require(es.inner_seeds >= 1, "es.inner_seeds must be >= 1");
    require(es.eval_episodes >= 0, "es.eval_episodes must be >= 0");
    require(!output.dir.empty(), "output.dir must be non-empty");
    return errs;
  }

  void validate() const {
    std::vector<std::string> errs = validation_errors();
    if (errs.empty()) return;
    std::string all = "invalid config:";
    for (const std::string& e : errs) all += "\n  - " + e;
    throw ConfigError(all);
  }

  std::string render() const {
    std::ostringstream os;
    os << "version = " << version << "\n\n";
    os << "[env]\n"
       << "states = " << env.states << "\n"
       << "actions = " << env.actions << "\n"
       << "horizon = " << env.horizon << "\n"
       << "reward = " << env.reward << "\n\n";
    os << "[policies]\n"
       << "expert_skill = " << fmt_double(policies.expert_skill) << "\n"
       << "reference_skill = " << fmt_double(policies.reference_skill) << "\n\n";
    os << "[judge]\n"
       << "accuracy = " << fmt_double(judge.accuracy) << "\n"
       << "gap = " << fmt_double(judge.gap) << "\n\n";
    os << "[dataset]\n"
       << "mode = " << dataset.mode << "\n"
       << "size = " << dataset.size << "\n"
       << "noise = " << fmt_double(dataset.noise) << "\n"
       << "seed = " << dataset.seed << "\n\n";
    os << "[objective]\n"
       << "kind = " << objective.kind << "\n"
       << "lambda = " << fmt_double(objective.lambda) << "\n"
       << "beta = " << fmt_double(objective.beta) << "\n"
       << "temporal = " << (objective.temporal ? "true" : "false") << "\n";
    if (!objective.net.empty()) os << "net = " << objective.net << "\n";
    os << "\n[trainer]\n"
       << "epochs = " << trainer.epochs << "\n"
       << "minibatch = " << trainer.minibatch << "\n"
       << "learning_rate = " << fmt_double(trainer.learning_rate) << "\n"
       << "max_grad_norm = " << fmt_double(trainer.max_grad_norm) << "\n"
       << "seeds = " << trainer.seeds << "\n"
       << "seed = " << trainer.seed << "\n"
       << "raw_prob = " << (trainer.raw_prob ? "true" : "false") << "\n\n";
    os << "[es]\n"
       << "population = " << es.population << "\n"
       << "generations = " << es.generations << "\n"
       << "sigma_init = " << fmt_double(es.sigma_init) << "\n"
       << "sigma_decay = " << fmt_double(es.sigma_decay) << "\n"
       << "learning_rate = " << fmt_double(es.learning_rate) << "\n"
       << "inner_seeds = " << es.inner_seeds << "\n"
       << "eval_episodes = " << es.eval_episodes << "\n"
       << "fitness_shaping = " << (es.fitness_shaping ? "true" : "false")
       << "\n"
       << "seed = " << es.seed << "\n\n";
    os << "[output]\n"
       << "dir = " << output.dir << "\n";
    return os.str();
  }

  static ExperimentConfig parse(std::istream& is);
  static ExperimentConfig parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    return parse(is);
  }
};

inline ExperimentConfig ExperimentConfig::parse(std::istream& is) {
  ExperimentConfig cfg;
  std::vector<std::string> errs;
  std::string section;
  std::string line;
  int lineno = 0;

  auto parse_bool = [&](std::string_view v, bool& out) {
    if (v == "true" || v == "1") out = true;
    else if (v == "false" || v == "0") out = false;
    else errs.push_back("line " + std::to_string(lineno) + ": bad boolean '" +
                        std::string(v) + "'");
  };
  auto num = [&](std::string_view v, auto& out) {
    try {
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(out)>>)
        out = parse_double(v, lineno);
      else
        out = static_cast<std::decay_t<decltype(out)>>(parse_int(v, lineno));
    } catch (const ParseError& e) {
      errs.push_back(e.what());
    }
  };

  while (std::getline(is, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    if (sv.front() == '[') {
      if (sv.back() != ']') {
        errs.push_back("line " + std::to_string(lineno) + ": unterminated section");
        continue;
      }
      section = std::string(sv.substr(1, sv.size() - 2));
      continue;
    }
    std::size_t eq = sv.find('=');
    if (eq == std::string_view::npos) {
      errs.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    std::string key = std::string(trim(sv.substr(0, eq)));
    std::string_view value = trim(sv.substr(eq + 1));
    std::string qualified = section.empty() ? key : section + "." + key;

    if (qualified == "version") num(value, cfg.version);
    else if (qualified == "env.states") num(value, cfg.env.states);
    else if (qualified == "env.actions") num(value, cfg.env.actions);
    else if (qualified == "env.horizon") num(value, cfg.env.horizon);
    else if (qualified == "env.reward") cfg.env.reward = value;
    else if (qualified == "policies.expert_skill") num(value, cfg.policies.expert_skill);
    else if (qualified == "policies.reference_skill") num(value, cfg.policies.reference_skill);
    else if (qualified == "judge.accuracy") num(value, cfg.judge.accuracy);
    else if (qualified == "judge.gap") num(value, cfg.judge.gap);
    else if (qualified == "dataset.mode") cfg.dataset.mode = value;
    else if (qualified == "dataset.size") num(value, cfg.dataset.size);
    else if (qualified == "dataset.noise") num(value, cfg.dataset.noise);
    else if (qualified == "dataset.seed") num(value, cfg.dataset.seed);
    else if (qualified == "objective.kind") cfg.objective.kind = value;
    else if (qualified == "objective.lambda") num(value, cfg.objective.lambda);
    else if (qualified == "objective.beta") num(value, cfg.objective.beta);
    else if (qualified == "objective.temporal") parse_bool(value, cfg.objective.temporal);
    else if (qualified == "objective.net") cfg.objective.net = value;
    else if (qualified == "trainer.epochs") num(value, cfg.trainer.epochs);
    else if (qualified == "trainer.minibatch") num(value, cfg.trainer.minibatch);
    else if (qualified == "trainer.learning_rate") num(value, cfg.trainer.learning_rate);
    else if (qualified == "trainer.max_grad_norm") num(value, cfg.trainer.max_grad_norm);
    else if (qualified == "trainer.seeds") num(value, cfg.trainer.seeds);
    else if (qualified == "trainer.seed") num(value, cfg.trainer.seed);
    else if (qualified == "trainer.raw_prob") parse_bool(value, cfg.trainer.raw_prob);
    else if (qualified == "es.population") num(value, cfg.es.population);
    else if (qualified == "es.generations") num(value, cfg.es.generations);
    else if (qualified == "es.sigma_init") num(value, cfg.es.sigma_init);
    else if (qualified == "es.sigma_decay") num(value, cfg.es.sigma_decay);
    else if (qualified == "es.learning_rate") num(value, cfg.es.learning_rate);
    else if (qualified == "es.inner_seeds") num(value, cfg.es.inner_seeds);
    else if (qualified == "es.eval_episodes") num(value, cfg.es.eval_episodes);
    else if (qualified == "es.fitness_shaping") parse_bool(value, cfg.es.fitness_shaping);
    else if (qualified == "es.seed") num(value, cfg.es.seed);
    else if (qualified == "output.dir") cfg.output.dir = value;
    else
      errs.push_back("line " + std::to_string(lineno) + ": unknown key '" +
                     qualified + "'");
  }

  std::vector<std::string> sem = cfg.validation_errors();
  errs.insert(errs.end(), sem.begin(), sem.end());
  if (!errs.empty()) {
    std::string all = "invalid config:";
    for (const std::string& e : errs) all += "\n  - " + e;
    throw ConfigError(all);
  }
  return cfg;
}

}  // namespace mpo
