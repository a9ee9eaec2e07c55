// trainer.hpp - inner-loop preference optimization of a tabular policy
//
// Shuffled-minibatch first-order training with Adam and global gradient-norm
// clipping. Training progress t = n/N (0-based epoch) feeds temporally-aware
// objectives; reference probabilities for DPO kinds come from a frozen
// reference policy and are precomputed per row.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpo/adam.hpp"
#include "mpo/autodiff.hpp"
#include "mpo/dataset.hpp"
#include "mpo/errors.hpp"
#include "mpo/objectives.hpp"
#include "mpo/policy.hpp"
#include "mpo/rng.hpp"

namespace mpo {

struct TrainerHyper {
  int epochs = 12;
  int minibatch = 2;  // preference rows (4 trajectories) per update
  double learning_rate = 1e-3;
  double max_grad_norm = 1.3;
  std::uint64_t seed = 0;
  bool raw_prob = false;  // disable geometric-mean length normalization

  void validate(int horizon = 0) const {
    if (epochs < 1 || minibatch < 1 || !(learning_rate > 0.0) ||
        !(max_grad_norm > 0.0))
      throw ConfigError("trainer hyper-parameters must be positive");
    if (raw_prob && horizon > 20)
      throw ConfigError("--raw-prob is limited to horizons <= 20");
  }
};

struct TraceRecord {
  double log_p_w;
  double log_p_l;
  double loss;
  double progress;
};

struct TrainingTrace {
  std::vector<TraceRecord> records;    // one per row visit
  std::vector<double> grad_norms;      // post-clip, one per update
};

struct TrainResult {
  TabularPolicy policy;
  TrainingTrace trace;
};

inline TrainResult train(const PreferenceDataset& data,
                         const ObjectiveSpec& objective,
                         const TrainerHyper& hyper, const TabularPolicy& init,
                         const TabularPolicy* reference = nullptr) {
  objective.validate();
  if (data.rows.empty()) throw ConfigError("training dataset is empty");
  int horizon = static_cast<int>(data.rows.front().chosen.steps.size());
  hyper.validate(horizon);
  if (objective.needs_reference() && reference == nullptr)
    throw ConfigError("DPO objectives require a reference policy");

  TabularPolicy policy = init;
  const std::size_t n_rows = data.rows.size();

  // Frozen-reference sequence probabilities, constant across training.
  std::vector<double> ref_p_w, ref_p_l;
  if (objective.needs_reference()) {
    ref_p_w.reserve(n_rows);
    ref_p_l.reserve(n_rows);
    for (const PreferenceRow& row : data.rows) {
      ref_p_w.push_back(reference->seq_prob(row.chosen, hyper.raw_prob));
      ref_p_l.push_back(reference->seq_prob(row.rejected, hyper.raw_prob));
    }
  }

  AdamOptimizer adam(hyper.learning_rate, policy.logits().size());
  Rng rng = Rng(hyper.seed).child("trainer");
  std::vector<std::size_t> order(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) order[i] = i;

  TrainResult result{policy, {}};
  result.trace.records.reserve(static_cast<std::size_t>(hyper.epochs) * n_rows);
  Tape tape;
  std::vector<double> grad(policy.logits().size());
  long step_index = 0;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    double progress = static_cast<double>(epoch) / hyper.epochs;
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < n_rows; begin += hyper.minibatch) {
      std::size_t end = std::min(begin + hyper.minibatch, n_rows);
      tape.clear();
      PolicyVars pv = make_policy_vars(tape, policy);
      Var batch_loss = tape.leaf(0.0);
      for (std::size_t k = begin; k < end; ++k) {
        const PreferenceRow& row = data.rows[order[k]];
        Var lp_w = log_prob_var(pv, row.chosen);
        Var lp_l = log_prob_var(pv, row.rejected);
        RowLossVars in;
        in.p_w = seq_prob_var(pv, row.chosen, hyper.raw_prob);
        in.p_l = seq_prob_var(pv, row.rejected, hyper.raw_prob);
        if (objective.needs_reference()) {
          in.ref_p_w = tape.leaf(ref_p_w[order[k]]);
          in.ref_p_l = tape.leaf(ref_p_l[order[k]]);
        }
        in.progress = progress;
        Var loss = row_loss(objective, in);
        batch_loss = batch_loss + loss;
        result.trace.records.push_back(
            {val(lp_w), val(lp_l), val(loss), progress});
      }
      batch_loss = batch_loss / static_cast<double>(end - begin);
      if (!std::isfinite(val(batch_loss)))
        throw TrainingError(
            "non-finite loss at update " + std::to_string(step_index) +
            " (epoch " + std::to_string(epoch) + ", rows " +
            std::to_string(begin) + ".." + std::to_string(end - 1) + ")");
      tape.backward(batch_loss);
      for (std::size_t i = 0; i < grad.size(); ++i)
        grad[i] = tape.adjoint(pv.logit_vars[i]);
      result.trace.grad_norms.push_back(
          clip_grad_norm(grad, hyper.max_grad_norm));
      adam.step(policy.logits(), grad);
      ++step_index;
    }
  }
  result.policy = std::move(policy);
  return result;
}

// Uniformly thins the trace to at most max_points row visits, preserving
// order, for landscape overlays.
inline std::vector<TraceRecord> replay_trace(const TrainingTrace& trace,
                                             std::size_t max_points = 1000) {
  const std::size_t n = trace.records.size();
  if (n == 0) throw ConfigError("trace is empty");
  if (n <= max_points) return trace.records;
  std::vector<TraceRecord> out;
  out.reserve(max_points);
  for (std::size_t i = 0; i < max_points; ++i)
    out.push_back(trace.records[i * n / max_points]);
  return out;
}

// Full-dataset mean loss at fixed progress; used by tests and diagnostics.
inline double full_batch_loss(const PreferenceDataset& data,
                              const ObjectiveSpec& objective,
                              const TabularPolicy& policy, double progress,
                              const TabularPolicy* reference = nullptr,
                              bool raw_prob = false) {
  double total = 0.0;
  for (const PreferenceRow& row : data.rows) {
    RowLossInput in;
    in.p_w = policy.seq_prob(row.chosen, raw_prob);
    in.p_l = policy.seq_prob(row.rejected, raw_prob);
    if (objective.needs_reference()) {
      in.ref_p_w = reference->seq_prob(row.chosen, raw_prob);
      in.ref_p_l = reference->seq_prob(row.rejected, raw_prob);
    }
    in.progress = progress;
    total += row_loss(objective, in);
  }
  return total / static_cast<double>(data.rows.size());
}

}  // namespace mpo
