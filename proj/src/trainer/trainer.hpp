// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Optimization loops: pretraining, SFT / SFT-KL / PSFT fine-tuning with
// warm-up and old-policy refresh, GRPO-style RL, and DPO.
//
// Determinism contract: everything downstream of (config, seed, corpus) is
// reproducible bit for bit, including the serialized JSONL log. Wallclock
// timing therefore never goes into the run log; it is written to a separate
// timing sidecar when a run directory is given.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "objectives/objectives.hpp"
#include "policy/policy.hpp"
#include "tasks/tasks.hpp"

namespace proxlab {

enum class Method { kPretrain, kSft, kSftKl, kPsft, kGrpo, kDpo };
enum class SnapshotRefresh { kPerTrainBatch, kPerStep, kPerEpoch };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
std::string refresh_name(SnapshotRefresh r);
SnapshotRefresh refresh_from_name(const std::string& name);

struct TrainConfig {
  Method method = Method::kSft;
  int train_batch = 32;
  int mini_batch = 8;
  double lr = 1e-3;          // desk defaults: sft 1e-3, psft 3e-4
  int epochs = 10;
  int warmup_epochs = 1;     // plain-SFT epochs before the clipped objective
  SnapshotRefresh snapshot_refresh = SnapshotRefresh::kPerTrainBatch;
  std::uint64_t seed = 0;
  ObjectiveConfig objective;
  int eval_every = 0;        // optimizer steps between evals; 0 = per epoch

  // RL settings (method == grpo)
  int rollout_n = 8;
  int rl_iterations = 20;
  int prompts_per_iteration = 16;
  int max_new_tokens = 24;
  double temperature = 1.0;

  double weight_decay = 0.1;
  void validate() const;
};

// Adam with decoupled weight decay.
struct OptimState {
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Slot> slots;
  std::int64_t step = 0;
  void init(const Policy& policy);
};

void adam_step(Policy& policy, OptimState& opt, double lr, double weight_decay,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct EvalMetrics {
  double indomain_nll = 0.0;
  double indomain_accuracy = 0.0;
  double ood_nll = 0.0;
};

struct EvalSets {
  const Corpus* indomain = nullptr;  // expert-form held-out data
  const Corpus* ood = nullptr;       // pretraining-domain held-out data
  const TeacherSpec* spec = nullptr;
};

// Deterministic; accuracy uses greedy decoding against the expert validator.
EvalMetrics evaluate(const Policy& policy, const EvalSets& evals);

struct RunLogRecord {
  int schema = 1;
  int step = 0;   // optimizer step, 0 = pre-training eval record
  int epoch = 0;  // rl: iteration index
  std::string method;
  double loss = 0.0;
  double mean_entropy = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
  // sparse clip accounting: (token_id, count) over the mini-batch
  std::vector<std::pair<int, int>> clips;
  std::vector<std::pair<int, int>> occurrences;  // mask-true token counts
  int masked_tokens = 0;
  std::optional<EvalMetrics> eval;
  // rl
  std::optional<double> mean_reward;
  std::optional<int> dropped_groups;
  std::optional<bool> iteration_skipped;
  // dpo
  std::optional<double> chosen_reward;
  std::optional<double> rejected_reward;

  std::string to_json() const;  // stable key order, one line
  static RunLogRecord from_json(const std::string& line);
};

struct RunResult {
  Policy policy;
  std::vector<RunLogRecord> log;
};

// run_dir == "": no file output. Otherwise writes log.jsonl, timing.jsonl,
// epoch_{k}.ckpt and final.ckpt into run_dir (which must already exist).
RunResult run_finetune(const Policy& init, const Corpus& corpus,
                       const TrainConfig& cfg, const EvalSets& evals,
                       const std::string& run_dir = "");

RunResult run_pretrain(const Policy& init, const Corpus& corpus,
                       const TrainConfig& cfg, const EvalSets& evals,
                       const std::string& run_dir = "");

RunResult run_rl(const Policy& init, const TeacherSpec& spec,
                 const TrainConfig& cfg, const std::string& run_dir = "");

RunResult run_dpo(const Policy& init, const DpoCorpus& pairs,
                  const TrainConfig& cfg, const std::string& run_dir = "");

// CSV metric export: one row per eval point, self-describing header.
void export_metrics_csv(const std::vector<RunLogRecord>& log,
                        const std::string& path);

}  // namespace proxlab
