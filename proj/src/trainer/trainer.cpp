// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#include "trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace proxlab {

namespace {

using json = nlohmann::json;

double masked_mean(const std::vector<double>& per_token,
                   const TokenBatch& batch) {
  double acc = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < batch.response_mask.size(); ++i)
    if (batch.response_mask[i]) {
      acc += per_token[i];
      ++n;
    }
  return n ? acc / n : 0.0;
}

double grad_l2_norm(const Policy& policy) {
  double acc = 0.0;
  for (const auto& [name, t] : policy.params())
    for (double g : t.grad()) acc += g * g;
  return std::sqrt(acc);
}

void fill_clip_accounting(const LossOutput& out, const TokenBatch& batch,
                          RunLogRecord* rec) {
  std::vector<int> occ, clips;
  for (std::size_t i = 0; i < batch.response_mask.size(); ++i) {
    if (!batch.response_mask[i]) continue;
    int tk = batch.tokens[i];
    if (tk >= static_cast<int>(occ.size())) {
      occ.resize(tk + 1, 0);
      clips.resize(tk + 1, 0);
    }
    ++occ[tk];
    if (i < out.clip_mask.size() && out.clip_mask[i]) ++clips[tk];
    ++rec->masked_tokens;
  }
  for (int id = 0; id < static_cast<int>(occ.size()); ++id) {
    if (occ[id]) rec->occurrences.emplace_back(id, occ[id]);
    if (clips[id]) rec->clips.emplace_back(id, clips[id]);
  }
}

// Rebuilds the per-row token vectors of a padded batch (row length =
// prompt_len + number of mask-true positions).
std::vector<int> batch_row(const TokenBatch& batch, int b) {
  int len = batch.prompt_len[b];
  for (int t = 0; t < batch.T; ++t)
    if (batch.masked(b, t)) ++len;
  return std::vector<int>(
      batch.tokens.begin() + static_cast<std::size_t>(b) * batch.T,
      batch.tokens.begin() + static_cast<std::size_t>(b) * batch.T + len);
}

TokenBatch make_batch(const std::vector<const Sequence*>& rows,
                      const VocabSpec& vocab) {
  std::vector<std::vector<int>> seqs;
  std::vector<int> plens;
  for (const Sequence* s : rows) {
    seqs.push_back(s->tokens);
    plens.push_back(s->prompt_len);
  }
  return TokenBatch::from_sequences(seqs, plens, vocab);
}

class RunWriter {
 public:
  RunWriter(const std::string& run_dir, std::vector<RunLogRecord>* sink)
      : sink_(sink) {
    if (!run_dir.empty()) {
      log_.open(run_dir + "/log.jsonl");
      if (!log_)
        throw std::runtime_error("cannot open log file in " + run_dir);
      timing_.open(run_dir + "/timing.jsonl");
      start_ = std::chrono::steady_clock::now();
    }
  }

  void emit(const RunLogRecord& rec) {
    if (log_.is_open()) {
      log_ << rec.to_json() << '\n';
      auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - start_)
                    .count();
      timing_ << "{\"step\":" << rec.step << ",\"wallclock_ms\":" << ms
              << "}\n";
    }
    sink_->push_back(rec);
  }

  void flush() {
    if (log_.is_open()) {
      log_.flush();
      timing_.flush();
    }
  }

 private:
  std::vector<RunLogRecord>* sink_;
  std::ofstream log_, timing_;
  std::chrono::steady_clock::time_point start_;
};

double corpus_nll(const Policy& policy, const Corpus& corpus) {
  const int kChunk = 32;
  double total = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < corpus.seqs.size(); i += kChunk) {
    std::vector<const Sequence*> rows;
    for (std::size_t j = i; j < corpus.seqs.size() && j < i + kChunk; ++j)
      rows.push_back(&corpus.seqs[j]);
    TokenBatch batch = make_batch(rows, policy.vocab());
    ad::Tape tape(false);
    LossOutput out = sft_loss(tape, policy, batch);
    int n = batch.masked_count();
    total += out.aggregate * n;
    count += n;
  }
  return count ? total / count : 0.0;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kPretrain: return "pretrain";
    case Method::kSft: return "sft";
    case Method::kSftKl: return "sft_kl";
    case Method::kPsft: return "psft";
    case Method::kGrpo: return "grpo";
    case Method::kDpo: return "dpo";
  }
  throw std::logic_error("unknown method");
}

Method method_from_name(const std::string& name) {
  if (name == "pretrain") return Method::kPretrain;
  if (name == "sft") return Method::kSft;
  if (name == "sft_kl") return Method::kSftKl;
  if (name == "psft") return Method::kPsft;
  if (name == "grpo") return Method::kGrpo;
  if (name == "dpo") return Method::kDpo;
  throw std::invalid_argument("unknown method: " + name);
}

std::string refresh_name(SnapshotRefresh r) {
  switch (r) {
    case SnapshotRefresh::kPerTrainBatch: return "per_train_batch";
    case SnapshotRefresh::kPerStep: return "per_step";
    case SnapshotRefresh::kPerEpoch: return "per_epoch";
  }
  throw std::logic_error("unknown refresh");
}

SnapshotRefresh refresh_from_name(const std::string& name) {
  if (name == "per_train_batch") return SnapshotRefresh::kPerTrainBatch;
  if (name == "per_step") return SnapshotRefresh::kPerStep;
  if (name == "per_epoch") return SnapshotRefresh::kPerEpoch;
  throw std::invalid_argument("unknown snapshot_refresh: " + name);
}

void TrainConfig::validate() const {
  if (mini_batch < 1) throw std::invalid_argument("mini_batch must be >= 1");
  if (train_batch < 1 || train_batch % mini_batch != 0)
    throw std::invalid_argument("train_batch must be divisible by mini_batch");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (warmup_epochs < 0)
    throw std::invalid_argument("warmup_epochs must be >= 0");
  if (eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
  if (weight_decay < 0.0)
    throw std::invalid_argument("weight_decay must be >= 0");
  if (method == Method::kGrpo) {
    if (rollout_n < 2) throw std::invalid_argument("rollout_n must be >= 2");
    if (rl_iterations < 0)
      throw std::invalid_argument("rl_iterations must be >= 0");
    if (prompts_per_iteration < 1)
      throw std::invalid_argument("prompts_per_iteration must be >= 1");
    if (max_new_tokens < 1)
      throw std::invalid_argument("max_new_tokens must be >= 1");
    if (!(temperature > 0.0))
      throw std::invalid_argument("rl temperature must be > 0");
  }
  objective.validate();
}

void OptimState::init(const Policy& policy) {
  slots.clear();
  step = 0;
  for (const auto& [name, t] : policy.params()) {
    Slot s;
    s.m.assign(t.value().size(), 0.0);
    s.v.assign(t.value().size(), 0.0);
    slots.push_back(std::move(s));
  }
}

void adam_step(Policy& policy, OptimState& opt, double lr, double weight_decay,
               double beta1, double beta2, double eps) {
  if (opt.slots.size() != policy.params().size())
    throw std::invalid_argument("optimizer state does not match policy");
  ++opt.step;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(opt.step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(opt.step));
  for (std::size_t p = 0; p < opt.slots.size(); ++p) {
    auto& [name, t] = policy.params()[p];
    auto& slot = opt.slots[p];
    auto val = t.mutable_value();
    const auto g = t.grad();
    if (slot.m.size() != val.size())
      throw std::invalid_argument("optimizer slot shape mismatch");
    for (std::size_t i = 0; i < val.size(); ++i) {
      slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g[i];
      slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g[i] * g[i];
      double mhat = slot.m[i] / bc1;
      double vhat = slot.v[i] / bc2;
      val[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * val[i]);
    }
  }
}

EvalMetrics evaluate(const Policy& policy, const EvalSets& evals) {
  EvalMetrics m;
  if (evals.indomain) {
    m.indomain_nll = corpus_nll(policy, *evals.indomain);
    if (evals.spec) {
      const int kChunk = 32;
      int correct = 0, total = 0;
      for (std::size_t i = 0; i < evals.indomain->seqs.size(); i += kChunk) {
        std::vector<std::vector<int>> prompts;
        std::vector<const Sequence*> chunk;
        for (std::size_t j = i;
             j < evals.indomain->seqs.size() && j < i + kChunk; ++j) {
          const Sequence& s = evals.indomain->seqs[j];
          prompts.emplace_back(s.tokens.begin(),
                               s.tokens.begin() + s.prompt_len);
          chunk.push_back(&s);
        }
        TokenBatch dec = policy.sample(
            prompts, evals.spec->max_seq_len, /*temperature=*/0.0, /*seed=*/0);
        for (int b = 0; b < dec.B; ++b) {
          std::vector<int> row = batch_row(dec, b);
          if (expert_response_valid(*evals.spec, row, dec.prompt_len[b]))
            ++correct;
          ++total;
        }
      }
      m.indomain_accuracy =
          total ? static_cast<double>(correct) / total : 0.0;
    }
  }
  if (evals.ood) m.ood_nll = corpus_nll(policy, *evals.ood);
  return m;
}

std::string RunLogRecord::to_json() const {
  json j;
  j["schema"] = schema;
  j["step"] = step;
  j["epoch"] = epoch;
  j["method"] = method;
  j["loss"] = loss;
  j["mean_entropy"] = mean_entropy;
  j["grad_norm"] = grad_norm;
  j["clip_fraction"] = clip_fraction;
  j["masked_tokens"] = masked_tokens;
  if (!clips.empty()) {
    json c = json::array();
    for (auto [id, n] : clips) c.push_back({id, n});
    j["clips"] = c;
  }
  if (!occurrences.empty()) {
    json c = json::array();
    for (auto [id, n] : occurrences) c.push_back({id, n});
    j["occurrences"] = c;
  }
  if (eval) {
    j["eval"] = {{"indomain_nll", eval->indomain_nll},
                 {"indomain_accuracy", eval->indomain_accuracy},
                 {"ood_nll", eval->ood_nll}};
  }
  if (mean_reward) j["mean_reward"] = *mean_reward;
  if (dropped_groups) j["dropped_groups"] = *dropped_groups;
  if (iteration_skipped) j["iteration_skipped"] = *iteration_skipped;
  if (chosen_reward) j["chosen_reward"] = *chosen_reward;
  if (rejected_reward) j["rejected_reward"] = *rejected_reward;
  return j.dump();
}

RunLogRecord RunLogRecord::from_json(const std::string& line) {
  json j = json::parse(line);
  RunLogRecord r;
  r.schema = j.value("schema", 1);
  r.step = j.at("step").get<int>();
  r.epoch = j.at("epoch").get<int>();
  r.method = j.value("method", "");
  r.loss = j.value("loss", 0.0);
  r.mean_entropy = j.value("mean_entropy", 0.0);
  r.grad_norm = j.value("grad_norm", 0.0);
  r.clip_fraction = j.value("clip_fraction", 0.0);
  r.masked_tokens = j.value("masked_tokens", 0);
  if (j.contains("clips"))
    for (const auto& c : j["clips"])
      r.clips.emplace_back(c[0].get<int>(), c[1].get<int>());
  if (j.contains("occurrences"))
    for (const auto& c : j["occurrences"])
      r.occurrences.emplace_back(c[0].get<int>(), c[1].get<int>());
  if (j.contains("eval")) {
    EvalMetrics m;
    m.indomain_nll = j["eval"].value("indomain_nll", 0.0);
    m.indomain_accuracy = j["eval"].value("indomain_accuracy", 0.0);
    m.ood_nll = j["eval"].value("ood_nll", 0.0);
    r.eval = m;
  }
  if (j.contains("mean_reward")) r.mean_reward = j["mean_reward"].get<double>();
  if (j.contains("dropped_groups"))
    r.dropped_groups = j["dropped_groups"].get<int>();
  if (j.contains("iteration_skipped"))
    r.iteration_skipped = j["iteration_skipped"].get<bool>();
  if (j.contains("chosen_reward"))
    r.chosen_reward = j["chosen_reward"].get<double>();
  if (j.contains("rejected_reward"))
    r.rejected_reward = j["rejected_reward"].get<double>();
  return r;
}

namespace {

RunResult run_sft_family(const Policy& init, const Corpus& corpus,
                         const TrainConfig& cfg, const EvalSets& evals,
                         const std::string& run_dir) {
  cfg.validate();
  if (corpus.seqs.empty()) throw std::invalid_argument("empty corpus");
  int N = static_cast<int>(corpus.seqs.size());
  if (N < cfg.train_batch)
    throw std::invalid_argument("corpus smaller than train_batch");

  RunResult res;
  res.policy = init.clone();
  Policy& policy = res.policy;
  RunWriter writer(run_dir, &res.log);

  OptimState opt;
  opt.init(policy);
  bool any_eval = evals.indomain || evals.ood;
  std::string mname = method_name(cfg.method);

  if (any_eval) {
    RunLogRecord rec;
    rec.step = 0;
    rec.epoch = 0;
    rec.method = mname;
    rec.eval = evaluate(policy, evals);
    writer.emit(rec);
  }

  // fixed reference for sft_kl: the input policy
  PolicySnapshot kl_ref;
  if (cfg.method == Method::kSftKl) kl_ref = init.snapshot();

  PolicySnapshot snap;
  int n_tb = N / cfg.train_batch;
  int steps_per_tb = cfg.train_batch / cfg.mini_batch;
  int steps_per_epoch = n_tb * steps_per_tb;
  int step = 0;
  Rng shuffle_root = Rng(cfg.seed).split("shuffle");

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    Rng erng = shuffle_root.split(static_cast<std::uint64_t>(epoch));
    erng.shuffle(order);

    bool clipped_phase =
        cfg.method == Method::kPsft && epoch >= cfg.warmup_epochs;
    if (clipped_phase && cfg.snapshot_refresh == SnapshotRefresh::kPerEpoch)
      snap = policy.snapshot();

    for (int tb = 0; tb < n_tb; ++tb) {
      if (clipped_phase &&
          cfg.snapshot_refresh == SnapshotRefresh::kPerTrainBatch)
        snap = policy.snapshot();
      for (int mb = 0; mb < steps_per_tb; ++mb) {
        std::vector<const Sequence*> rows;
        int base = tb * cfg.train_batch + mb * cfg.mini_batch;
        for (int k = 0; k < cfg.mini_batch; ++k)
          rows.push_back(&corpus.seqs[order[base + k]]);
        TokenBatch batch = make_batch(rows, policy.vocab());

        if (clipped_phase &&
            cfg.snapshot_refresh == SnapshotRefresh::kPerStep)
          snap = policy.snapshot();

        ad::Tape tape;
        LossOutput out;
        if (clipped_phase) {
          out = psft_loss(tape, policy, snap, batch, cfg.objective.epsilon);
        } else if (cfg.method == Method::kSftKl) {
          out = sft_kl_loss(tape, policy, kl_ref, batch, cfg.objective.kl_coef,
                            cfg.objective.kl_reverse);
        } else {
          out = sft_loss(tape, policy, batch);
        }
        policy.zero_grad();
        tape.backward(out.loss);

        RunLogRecord rec;
        rec.step = ++step;
        rec.epoch = epoch;
        rec.method = mname;
        rec.loss = out.aggregate;
        rec.mean_entropy = masked_mean(out.token_entropy, batch);
        rec.grad_norm = grad_l2_norm(policy);
        rec.clip_fraction = out.clip_fraction;
        fill_clip_accounting(out, batch, &rec);

        adam_step(policy, opt, cfg.lr, cfg.weight_decay);

        bool eval_now =
            any_eval && ((cfg.eval_every > 0 && step % cfg.eval_every == 0) ||
                         (cfg.eval_every == 0 && step % steps_per_epoch == 0));
        if (eval_now) rec.eval = evaluate(policy, evals);
        writer.emit(rec);
      }
    }
    if (!run_dir.empty())
      policy.save(run_dir + "/epoch_" + std::to_string(epoch) + ".ckpt");
  }
  if (!run_dir.empty()) policy.save(run_dir + "/final.ckpt");
  writer.flush();
  return res;
}

}  // namespace

RunResult run_finetune(const Policy& init, const Corpus& corpus,
                       const TrainConfig& cfg, const EvalSets& evals,
                       const std::string& run_dir) {
  if (cfg.method != Method::kSft && cfg.method != Method::kSftKl &&
      cfg.method != Method::kPsft)
    throw std::invalid_argument("run_finetune: method must be sft|sft_kl|psft");
  return run_sft_family(init, corpus, cfg, evals, run_dir);
}

RunResult run_pretrain(const Policy& init, const Corpus& corpus,
                       const TrainConfig& cfg, const EvalSets& evals,
                       const std::string& run_dir) {
  if (cfg.method != Method::kPretrain)
    throw std::invalid_argument("run_pretrain: method must be pretrain");
  return run_sft_family(init, corpus, cfg, evals, run_dir);
}

RunResult run_rl(const Policy& init, const TeacherSpec& spec,
                 const TrainConfig& cfg, const std::string& run_dir) {
  if (cfg.method != Method::kGrpo)
    throw std::invalid_argument("run_rl: method must be grpo");
  cfg.validate();
  spec.validate();

  RunResult res;
  res.policy = init.clone();
  Policy& policy = res.policy;
  RunWriter writer(run_dir, &res.log);
  OptimState opt;
  opt.init(policy);
  Rng root(cfg.seed);
  int step = 0;

  for (int iter = 0; iter < cfg.rl_iterations; ++iter) {
    std::uint64_t prompt_seed =
        root.split("rl-prompts").split(static_cast<std::uint64_t>(iter)).next_u64();
    auto prompts =
        reward_prompts(spec, cfg.prompts_per_iteration, prompt_seed);
    std::vector<std::vector<int>> replicated;
    for (const auto& p : prompts)
      for (int g = 0; g < cfg.rollout_n; ++g) replicated.push_back(p);

    std::uint64_t sample_seed =
        root.split("rl-rollout").split(static_cast<std::uint64_t>(iter)).next_u64();
    TokenBatch rollouts = policy.sample(replicated, cfg.max_new_tokens,
                                        cfg.temperature, sample_seed);
    PolicySnapshot snap = policy.snapshot();

    std::vector<std::vector<int>> rows;
    std::vector<double> rewards;
    for (int b = 0; b < rollouts.B; ++b) {
      std::vector<int> row = batch_row(rollouts, b);
      int target = tok::digit_value(row[2]);
      std::vector<int> completion(row.begin() + rollouts.prompt_len[b],
                                  row.end());
      rewards.push_back(reward(completion, target));
      rows.push_back(std::move(row));
    }
    double mean_reward =
        std::accumulate(rewards.begin(), rewards.end(), 0.0) / rewards.size();

    std::vector<std::vector<double>> groups;
    for (int p = 0; p < cfg.prompts_per_iteration; ++p)
      groups.emplace_back(rewards.begin() + p * cfg.rollout_n,
                          rewards.begin() + (p + 1) * cfg.rollout_n);
    GrpoResult grpo =
        grpo_advantages(groups, cfg.objective.advantage_std_floor);

    std::vector<int> kept_rows;
    std::vector<double> kept_adv;
    for (int b = 0; b < rollouts.B; ++b) {
      if (!grpo.kept[b / cfg.rollout_n]) continue;
      kept_rows.push_back(b);
      kept_adv.push_back(grpo.advantages[b]);
    }

    if (kept_rows.empty()) {
      // all groups had identical rewards; nothing to optimize this iteration
      RunLogRecord rec;
      rec.step = step;
      rec.epoch = iter;
      rec.method = "grpo";
      rec.mean_reward = mean_reward;
      rec.dropped_groups = grpo.dropped_groups;
      rec.iteration_skipped = true;
      writer.emit(rec);
      continue;
    }

    for (std::size_t base = 0; base < kept_rows.size();
         base += cfg.mini_batch) {
      std::vector<std::vector<int>> mb_rows;
      std::vector<int> mb_plens;
      std::vector<double> mb_row_adv;
      for (std::size_t k = base;
           k < kept_rows.size() && k < base + cfg.mini_batch; ++k) {
        int b = kept_rows[k];
        mb_rows.push_back(rows[b]);
        mb_plens.push_back(rollouts.prompt_len[b]);
        mb_row_adv.push_back(kept_adv[k]);
      }
      TokenBatch batch =
          TokenBatch::from_sequences(mb_rows, mb_plens, policy.vocab());
      std::vector<double> adv(batch.tokens.size(), 0.0);
      for (int b = 0; b < batch.B; ++b)
        for (int t = 0; t < batch.T; ++t)
          adv[static_cast<std::size_t>(b) * batch.T + t] = mb_row_adv[b];

      ad::Tape tape;
      LossOutput out =
          ppo_clip_loss(tape, policy, snap, batch, adv,
                        cfg.objective.clip_low, cfg.objective.clip_high);
      policy.zero_grad();
      tape.backward(out.loss);

      RunLogRecord rec;
      rec.step = ++step;
      rec.epoch = iter;
      rec.method = "grpo";
      rec.loss = out.aggregate;
      rec.mean_entropy = masked_mean(out.token_entropy, batch);
      rec.grad_norm = grad_l2_norm(policy);
      rec.clip_fraction = out.clip_fraction;
      rec.mean_reward = mean_reward;
      rec.dropped_groups = grpo.dropped_groups;
      fill_clip_accounting(out, batch, &rec);

      adam_step(policy, opt, cfg.lr, cfg.weight_decay);
      writer.emit(rec);
    }
    if (!run_dir.empty())
      policy.save(run_dir + "/epoch_" + std::to_string(iter) + ".ckpt");
  }
  if (!run_dir.empty()) policy.save(run_dir + "/final.ckpt");
  writer.flush();
  return res;
}

RunResult run_dpo(const Policy& init, const DpoCorpus& pairs,
                  const TrainConfig& cfg, const std::string& run_dir) {
  if (cfg.method != Method::kDpo)
    throw std::invalid_argument("run_dpo: method must be dpo");
  cfg.validate();
  if (pairs.pairs.empty()) throw std::invalid_argument("empty pair corpus");

  RunResult res;
  res.policy = init.clone();
  Policy& policy = res.policy;
  RunWriter writer(run_dir, &res.log);
  OptimState opt;
  opt.init(policy);
  PolicySnapshot ref = init.snapshot();
  int N = static_cast<int>(pairs.pairs.size());
  int step = 0;
  Rng shuffle_root = Rng(cfg.seed).split("shuffle");

  auto full_seq = [](const DpoPair& p, bool chosen) {
    Sequence s;
    s.tokens = p.prompt;
    const auto& c = chosen ? p.chosen : p.rejected;
    s.tokens.insert(s.tokens.end(), c.begin(), c.end());
    s.prompt_len = static_cast<int>(p.prompt.size());
    return s;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    Rng erng = shuffle_root.split(static_cast<std::uint64_t>(epoch));
    erng.shuffle(order);
    for (int base = 0; base < N; base += cfg.mini_batch) {
      std::vector<std::vector<int>> cs, rs;
      std::vector<int> cp, rp;
      for (int k = base; k < N && k < base + cfg.mini_batch; ++k) {
        const DpoPair& p = pairs.pairs[order[k]];
        Sequence c = full_seq(p, true), r = full_seq(p, false);
        cs.push_back(c.tokens);
        cp.push_back(c.prompt_len);
        rs.push_back(r.tokens);
        rp.push_back(r.prompt_len);
      }
      TokenBatch chosen = TokenBatch::from_sequences(cs, cp, policy.vocab());
      TokenBatch rejected = TokenBatch::from_sequences(rs, rp, policy.vocab());

      ad::Tape tape;
      DpoOutput out =
          dpo_loss(tape, policy, ref, chosen, rejected, cfg.objective.dpo_beta);
      policy.zero_grad();
      tape.backward(out.loss);

      RunLogRecord rec;
      rec.step = ++step;
      rec.epoch = epoch;
      rec.method = "dpo";
      rec.loss = out.loss.item();
      rec.mean_entropy = policy.masked_mean_entropy(chosen);
      rec.grad_norm = grad_l2_norm(policy);
      double cm = 0.0, rm = 0.0;
      for (double x : out.chosen_reward) cm += x;
      for (double x : out.rejected_reward) rm += x;
      rec.chosen_reward = cm / out.chosen_reward.size();
      rec.rejected_reward = rm / out.rejected_reward.size();

      adam_step(policy, opt, cfg.lr, cfg.weight_decay);
      writer.emit(rec);
    }
    if (!run_dir.empty())
      policy.save(run_dir + "/epoch_" + std::to_string(epoch) + ".ckpt");
  }
  if (!run_dir.empty()) policy.save(run_dir + "/final.ckpt");
  writer.flush();
  return res;
}

void export_metrics_csv(const std::vector<RunLogRecord>& log,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "step,epoch,loss,mean_entropy,grad_norm,clip_fraction,"
         "indomain_nll,indomain_accuracy,ood_nll\n";
  out.precision(17);
  for (const auto& r : log) {
    if (!r.eval) continue;
    out << r.step << ',' << r.epoch << ',' << r.loss << ',' << r.mean_entropy
        << ',' << r.grad_norm << ',' << r.clip_fraction << ','
        << r.eval->indomain_nll << ',' << r.eval->indomain_accuracy << ','
        << r.eval->ood_nll << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace proxlab
