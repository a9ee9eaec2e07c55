// dataset.hpp - Bradley-Terry judge, preference-dataset generation and io
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mpo/autodiff.hpp"
#include "mpo/chain_env.hpp"
#include "mpo/errors.hpp"
#include "mpo/rng.hpp"
#include "mpo/text.hpp"

namespace mpo {

// Stochastic ranker: prefers trajectory a over b with probability
// sigmoid((r_a - r_b) / eta).
struct JudgeConfig {
  double eta = 1.0;

  // Calibrated so the judge ranks correctly with probability `correct_prob`
  // at reward gap `reward_gap`; the accuracy-at-gap form transfers across
  // reward scales.
  static JudgeConfig from_accuracy(double correct_prob, double reward_gap) {
    if (!(correct_prob > 0.5 && correct_prob < 1.0))
      throw ConfigError("judge accuracy must lie in (0.5, 1)");
    if (!(reward_gap > 0.0)) throw ConfigError("reward gap must be positive");
    return {reward_gap / logit(correct_prob)};
  }

  void validate() const {
    if (!(eta > 0.0)) throw ConfigError("judge temperature must be positive");
  }
};

inline double preference_probability(const JudgeConfig& j, double r_a,
                                     double r_b) {
  j.validate();
  return sigmoid((r_a - r_b) / j.eta);
}

inline bool judge_prefers(const JudgeConfig& j, double r_a, double r_b,
                          Rng& rng) {
  return rng.uniform() < preference_probability(j, r_a, r_b);
}

enum class TrajectorySource { kExpert, kReference };

inline std::string_view source_name(TrajectorySource s) {
  return s == TrajectorySource::kExpert ? "expert" : "reference";
}

inline TrajectorySource source_from_name(std::string_view s, int line = 0) {
  if (s == "expert") return TrajectorySource::kExpert;
  if (s == "reference") return TrajectorySource::kReference;
  throw ParseError("unknown trajectory source '" + std::string(s) + "'", line);
}

enum class DatasetMode { kBase, kShuffled };

inline std::string_view mode_name(DatasetMode m) {
  return m == DatasetMode::kBase ? "base" : "shuffled";
}

inline DatasetMode mode_from_name(std::string_view s, int line = 0) {
  if (s == "base") return DatasetMode::kBase;
  if (s == "shuffled") return DatasetMode::kShuffled;
  throw ParseError("unknown dataset mode '" + std::string(s) + "'", line);
}

struct PreferenceRow {
  int start_state = 0;
  Trajectory chosen;    // tau_w
  Trajectory rejected;  // tau_l
  TrajectorySource chosen_source = TrajectorySource::kExpert;
  TrajectorySource rejected_source = TrajectorySource::kReference;
  bool flipped = false;

  bool operator==(const PreferenceRow&) const = default;
};

struct DatasetProvenance {
  int env_states = 0;
  int env_actions = 0;
  int env_horizon = 0;
  std::string env_reward;
  double expert_skill = 0.0;
  double reference_skill = 0.0;
  double judge_eta = 0.0;
  DatasetMode mode = DatasetMode::kBase;
  double noise_p = 0.0;
  std::uint64_t seed = 0;
  int size = 0;

  bool operator==(const DatasetProvenance&) const = default;
};

struct PreferenceDataset {
  std::vector<PreferenceRow> rows;
  DatasetProvenance provenance;

  bool operator==(const PreferenceDataset&) const = default;
};

// Generates `size` rows. Base mode pairs one expert rollout with one
// reference rollout from a shared start state; shuffled mode draws the pair
// sources as exactly 25% expert-expert, 50% expert-reference, 25%
// reference-reference. The judge orients each pair.
inline PreferenceDataset generate_dataset(const ChainEnv& env,
                                          const TabularPolicy& expert,
                                          const TabularPolicy& reference,
                                          int size, DatasetMode mode,
                                          const JudgeConfig& judge,
                                          std::uint64_t seed,
                                          double expert_skill = 0.0,
                                          double reference_skill = 0.0) {
  if (size <= 0) throw ConfigError("dataset size must be positive");
  if (mode == DatasetMode::kShuffled && size % 4 != 0)
    throw ConfigError("shuffled mode requires size divisible by 4");
  env.check_policy(expert);
  env.check_policy(reference);
  judge.validate();

  Rng rng(seed);
  // Pair types: 0 = expert/expert, 1 = expert/reference, 2 = ref/ref.
  std::vector<int> pair_types(size, 1);
  if (mode == DatasetMode::kShuffled) {
    for (int i = 0; i < size / 4; ++i) pair_types[i] = 0;
    for (int i = size / 4; i < size / 2; ++i) pair_types[i] = 2;
    rng.shuffle(pair_types);
  }

  PreferenceDataset d;
  d.rows.reserve(size);
  for (int i = 0; i < size; ++i) {
    int s0 = sample_start_state(env, rng);
    const TabularPolicy& first =
        pair_types[i] == 2 ? reference : expert;
    const TabularPolicy& second =
        pair_types[i] == 0 ? expert : reference;
    TrajectorySource first_src = pair_types[i] == 2
                                     ? TrajectorySource::kReference
                                     : TrajectorySource::kExpert;
    TrajectorySource second_src = pair_types[i] == 0
                                      ? TrajectorySource::kExpert
                                      : TrajectorySource::kReference;
    Trajectory tau_a = sample_trajectory(env, first, s0, rng);
    Trajectory tau_b = sample_trajectory(env, second, s0, rng);
    PreferenceRow row;
    row.start_state = s0;
    if (judge_prefers(judge, tau_a.cumulative_reward, tau_b.cumulative_reward,
                      rng)) {
      row.chosen = std::move(tau_a);
      row.rejected = std::move(tau_b);
      row.chosen_source = first_src;
      row.rejected_source = second_src;
    } else {
      row.chosen = std::move(tau_b);
      row.rejected = std::move(tau_a);
      row.chosen_source = second_src;
      row.rejected_source = first_src;
    }
    d.rows.push_back(std::move(row));
  }

  d.provenance.env_states = env.num_states;
  d.provenance.env_actions = env.num_actions;
  d.provenance.env_horizon = env.horizon;
  d.provenance.env_reward = env.reward_name;
  d.provenance.expert_skill = expert_skill;
  d.provenance.reference_skill = reference_skill;
  d.provenance.judge_eta = judge.eta;
  d.provenance.mode = mode;
  d.provenance.noise_p = 0.0;
  d.provenance.seed = seed;
  d.provenance.size = size;
  return d;
}

// Swaps chosen/rejected in exactly round(p * size) rows, drawn uniformly
// without replacement. Swapping toggles the `flipped` flag, so applying a
// full flip twice restores the original orientation.
inline PreferenceDataset corrupt_noise(PreferenceDataset d, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("noise level must lie in [0,1]");
  auto n = static_cast<std::size_t>(d.rows.size());
  auto flips = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < flips; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n - i));
    std::swap(order[i], order[j]);
  }
  for (std::size_t i = 0; i < flips; ++i) {
    PreferenceRow& row = d.rows[order[i]];
    std::swap(row.chosen, row.rejected);
    std::swap(row.chosen_source, row.rejected_source);
    row.flipped = !row.flipped;
  }
  d.provenance.noise_p = p;
  return d;
}

// --- file format -------------------------------------------------------------
//
//   mpo-dataset v1 rows=<n>
//   provenance <json>
//   <s0>|<s:a ...>|<reward>|<source>|<s:a ...>|<reward>|<source>|<flipped>

namespace detail {

inline nlohmann::json provenance_to_json(const DatasetProvenance& p) {
  return nlohmann::json{{"env_states", p.env_states},
                        {"env_actions", p.env_actions},
                        {"env_horizon", p.env_horizon},
                        {"env_reward", p.env_reward},
                        {"expert_skill", p.expert_skill},
                        {"reference_skill", p.reference_skill},
                        {"judge_eta", p.judge_eta},
                        {"mode", std::string(mode_name(p.mode))},
                        {"noise_p", p.noise_p},
                        {"seed", p.seed},
                        {"size", p.size}};
}

inline DatasetProvenance provenance_from_json(const nlohmann::json& j, int line) {
  try {
    DatasetProvenance p;
    p.env_states = j.at("env_states").get<int>();
    p.env_actions = j.at("env_actions").get<int>();
    p.env_horizon = j.at("env_horizon").get<int>();
    p.env_reward = j.at("env_reward").get<std::string>();
    p.expert_skill = j.at("expert_skill").get<double>();
    p.reference_skill = j.at("reference_skill").get<double>();
    p.judge_eta = j.at("judge_eta").get<double>();
    p.mode = mode_from_name(j.at("mode").get<std::string>(), line);
    p.noise_p = j.at("noise_p").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.size = j.at("size").get<int>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad provenance: ") + e.what(), line);
  }
}

inline void write_trajectory(std::ostream& os, const Trajectory& tau) {
  for (std::size_t i = 0; i < tau.steps.size(); ++i) {
    if (i) os << ' ';
    os << tau.steps[i].state << ':' << tau.steps[i].action;
  }
  os << '|' << fmt_double(tau.cumulative_reward);
}

inline Trajectory parse_trajectory(std::string_view steps_field,
                                   std::string_view reward_field, int line) {
  Trajectory tau;
  for (std::string_view pair : split(steps_field, ' ')) {
    auto sa = split(pair, ':');
    if (sa.size() != 2) throw ParseError("bad step '" + std::string(pair) + "'", line);
    tau.steps.push_back({static_cast<int>(parse_int(sa[0], line)),
                         static_cast<int>(parse_int(sa[1], line))});
  }
  tau.cumulative_reward = parse_double(reward_field, line);
  return tau;
}

}  // namespace detail

inline void save_dataset(std::ostream& os, const PreferenceDataset& d) {
  os << "mpo-dataset v1 rows=" << d.rows.size() << "\n";
  os << "provenance " << detail::provenance_to_json(d.provenance).dump() << "\n";
  for (const PreferenceRow& row : d.rows) {
    os << row.start_state << '|';
    detail::write_trajectory(os, row.chosen);
    os << '|' << source_name(row.chosen_source) << '|';
    detail::write_trajectory(os, row.rejected);
    os << '|' << source_name(row.rejected_source) << '|'
       << (row.flipped ? 1 : 0) << "\n";
  }
}

inline DatasetProvenance load_provenance(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty dataset file", 1);
  auto fields = split(trim(line), ' ');
  if (fields.size() != 3 || fields[0] != "mpo-dataset" || fields[1] != "v1" ||
      !fields[2].starts_with("rows="))
    throw ParseError("bad dataset header", 1);
  if (!std::getline(is, line)) throw ParseError("missing provenance line", 2);
  std::string_view pv = trim(line);
  if (!pv.starts_with("provenance "))
    throw ParseError("missing provenance line", 2);
  nlohmann::json j = nlohmann::json::parse(pv.substr(11), nullptr, false);
  if (j.is_discarded()) throw ParseError("provenance is not valid json", 2);
  return detail::provenance_from_json(j, 2);
}

inline PreferenceDataset load_dataset(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ParseError("empty dataset file", 1);
  auto fields = split(trim(header), ' ');
  if (fields.size() != 3 || fields[0] != "mpo-dataset" || fields[1] != "v1" ||
      !fields[2].starts_with("rows="))
    throw ParseError("bad dataset header", 1);
  auto expected_rows = parse_int(fields[2].substr(5), 1);

  std::string line;
  if (!std::getline(is, line)) throw ParseError("missing provenance line", 2);
  std::string_view pv = trim(line);
  if (!pv.starts_with("provenance "))
    throw ParseError("missing provenance line", 2);
  nlohmann::json j = nlohmann::json::parse(pv.substr(11), nullptr, false);
  if (j.is_discarded()) throw ParseError("provenance is not valid json", 2);

  PreferenceDataset d;
  d.provenance = detail::provenance_from_json(j, 2);
  for (long long i = 0; i < expected_rows; ++i) {
    int lineno = static_cast<int>(i) + 3;
    if (!std::getline(is, line))
      throw ParseError("truncated dataset: expected " +
                           std::to_string(expected_rows) + " rows",
                       lineno);
    auto f = split(trim(line), '|');
    if (f.size() != 8) throw ParseError("row must have 8 fields", lineno);
    PreferenceRow row;
    row.start_state = static_cast<int>(parse_int(f[0], lineno));
    row.chosen = detail::parse_trajectory(f[1], f[2], lineno);
    row.chosen_source = source_from_name(f[3], lineno);
    row.rejected = detail::parse_trajectory(f[4], f[5], lineno);
    row.rejected_source = source_from_name(f[6], lineno);
    row.flipped = parse_int(f[7], lineno) != 0;
    d.rows.push_back(std::move(row));
  }
  return d;
}

inline void save_dataset_file(const std::string& path,
                              const PreferenceDataset& d) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for write: " + path);
  save_dataset(os, d);
}

inline PreferenceDataset load_dataset_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open dataset file: " + path);
  return load_dataset(is);
}

inline DatasetProvenance load_provenance_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open dataset file: " + path);
  return load_provenance(is);
}

}  // namespace mpo
