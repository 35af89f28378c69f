// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "trainer/trainer.hpp"

using namespace proxlab;

namespace {

TeacherSpec default_spec() { return TeacherSpec{}; }

Policy fresh_bigram(std::uint64_t seed, double scale = 0.1) {
  TeacherSpec spec;
  PolicyConfig cfg;
  cfg.arch = Arch::kBigram;
  cfg.init_scale = scale;
  Rng rng(seed);
  return Policy::init(spec.vocab, cfg, rng);
}

bool params_equal(const Policy& a, const Policy& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params()[i].second.value();
    const auto& y = b.params()[i].second.value();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

std::vector<std::string> log_lines(const RunResult& r) {
  std::vector<std::string> out;
  for (const auto& rec : r.log) out.push_back(rec.to_json());
  return out;
}

struct TmpDir {
  std::filesystem::path path;
  explicit TmpDir(const std::string& name) : path(name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TmpDir() { std::filesystem::remove_all(path); }
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.train_batch = 10;
  cfg.mini_batch = 4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.method = Method::kGrpo;
  cfg.rollout_n = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("adam first step matches the closed form") {
  Policy p = fresh_bigram(3);
  TeacherSpec spec;
  auto set = gen_corpora(spec, {8, 8, 4, 4}, 5);
  std::vector<std::vector<int>> seqs;
  std::vector<int> plens;
  for (const auto& s : set.expert_train.seqs) {
    seqs.push_back(s.tokens);
    plens.push_back(s.prompt_len);
  }
  TokenBatch batch = TokenBatch::from_sequences(seqs, plens, spec.vocab);
  ad::Tape tape;
  auto out = sft_loss(tape, p, batch);
  p.zero_grad();
  tape.backward(out.loss);
  std::vector<double> g(p.params()[0].second.grad().begin(),
                        p.params()[0].second.grad().end());
  std::vector<double> x0(p.params()[0].second.value().begin(),
                         p.params()[0].second.value().end());
  OptimState opt;
  opt.init(p);
  double lr = 1e-3, wd = 0.1, eps = 1e-8;
  adam_step(p, opt, lr, wd);
  // at step 1 the bias-corrected moments are exactly g and g^2
  for (std::size_t i = 0; i < g.size(); ++i) {
    double want = x0[i] - lr * (g[i] / (std::abs(g[i]) + eps) + wd * x0[i]);
    CHECK(p.params()[0].second.value()[i] == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(opt.step == 1);
}

TEST_CASE("record count matches the config arithmetic") {
  TeacherSpec spec;
  auto set = gen_corpora(spec, {16, 16, 4, 4}, 11);
  Policy p = fresh_bigram(1);
  TrainConfig cfg;
  cfg.method = Method::kSft;
  cfg.train_batch = 8;
  cfg.mini_batch = 2;
  cfg.epochs = 3;
  cfg.seed = 7;
  auto res = run_finetune(p, set.expert_train, cfg, EvalSets{});
  // epochs * (N / train_batch) * (train_batch / mini_batch)
  CHECK(res.log.size() == 3 * (16 / 8) * (8 / 2));
  int prev = 0;
  for (const auto& r : res.log) {
    CHECK(r.step == prev + 1);  // monotone, one record per optimizer step
    prev = r.step;
    CHECK(r.method == "sft");
    CHECK(std::isfinite(r.loss));
    CHECK(std::isfinite(r.grad_norm));
  }
}

TEST_CASE("determinism: same config and seed, identical logs and params") {
  TeacherSpec spec;
  auto set = gen_corpora(spec, {16, 16, 4, 4}, 13);
  Policy p = fresh_bigram(2);
  TrainConfig cfg;
  cfg.method = Method::kPsft;
  cfg.lr = 3e-4;
  cfg.train_batch = 8;
  cfg.mini_batch = 4;
  cfg.epochs = 3;
  cfg.warmup_epochs = 1;
  cfg.seed = 21;
  EvalSets evals{&set.indomain_eval, &set.ood_eval, &spec};
  auto a = run_finetune(p, set.expert_train, cfg, evals);
  auto b = run_finetune(p, set.expert_train, cfg, evals);
  CHECK(log_lines(a) == log_lines(b));
  CHECK(params_equal(a.policy, b.policy));
  TrainConfig cfg2 = cfg;
  cfg2.seed = 22;
  auto c = run_finetune(p, set.expert_train, cfg2, evals);
  CHECK_FALSE(log_lines(a) == log_lines(c));
}

TEST_CASE("psft with warmup covering all epochs matches sft bit for bit") {
  TeacherSpec spec;
  auto set = gen_corpora(spec, {16, 16, 4, 4}, 17);
  Policy p = fresh_bigram(4);
  TrainConfig sft_cfg;
  sft_cfg.method = Method::kSft;
  sft_cfg.train_batch = 8;
  sft_cfg.mini_batch = 2;
  sft_cfg.epochs = 2;
  sft_cfg.lr = 1e-3;
  sft_cfg.seed = 5;
  TrainConfig psft_cfg = sft_cfg;
  psft_cfg.method = Method::kPsft;
  psft_cfg.warmup_epochs = 2;  // == epochs: never leaves the warm-up phase
  auto a = run_finetune(p, set.expert_train, sft_cfg, EvalSets{});
  auto b = run_finetune(p, set.expert_train, psft_cfg, EvalSets{});
  CHECK(params_equal(a.policy, b.policy));
}

TEST_CASE("psft with per-step refresh matches sft bit for bit") {
  TeacherSpec spec;
  auto set = gen_corpora(spec, {16, 16, 4, 4}, 19);
  Policy p = fresh_bigram(6);
  TrainConfig sft_cfg;
  sft_cfg.method = Method::kSft;
  sft_cfg.train_batch = 8;
  sft_cfg.mini_batch = 2;
  sft_cfg.epochs = 2;
  sft_cfg.lr = 1e-3;
  sft_cfg.seed = 9;
  TrainConfig psft_cfg = sft_cfg;
  psft_cfg.method = Method::kPsft;
  psft_cfg.warmup_epochs = 0;
  psft_cfg.snapshot_refresh = SnapshotRefresh::kPerStep;
  auto a = run_finetune(p, set.expert_train, sft_cfg, EvalSets{});
  auto b = run_finetune(p, set.expert_train, psft_cfg, EvalSets{});
  CHECK(params_equal(a.policy, b.policy));
  // every compute-time ratio is 1, so nothing ever clips
  for (const auto& r : b.log) CHECK(r.clip_fraction == 0.0);
}

TEST_CASE("psft clip accounting is internally consistent") {
  TeacherSpec spec;
  auto set = gen_corpora(spec, {16, 16, 4, 4}, 23);
  Policy p = fresh_bigram(8, 0.5);
  TrainConfig cfg;
  cfg.method = Method::kPsft;
  cfg.train_batch = 8;
  cfg.mini_batch = 2;
  cfg.epochs = 3;
  cfg.warmup_epochs = 1;
  cfg.lr = 0.05;  // big enough steps that some tokens actually clip
  cfg.snapshot_refresh = SnapshotRefresh::kPerEpoch;
  cfg.seed = 31;
  auto res = run_finetune(p, set.expert_train, cfg, EvalSets{});
  bool saw_clip = false;
  for (const auto& r : res.log) {
    CHECK(r.clip_fraction >= 0.0);
    CHECK(r.clip_fraction <= 1.0);
    int clip_total = 0;
    for (auto [id, n] : r.clips) clip_total += n;
    int occ_total = 0;
    for (auto [id, n] : r.occurrences) occ_total += n;
    CHECK(occ_total == r.masked_tokens);
    CHECK(r.clip_fraction ==
          doctest::Approx(static_cast<double>(clip_total) /
                          std::max(1, r.masked_tokens))
              .epsilon(1e-12));
    if (clip_total > 0) saw_clip = true;
  }
  CHECK(saw_clip);
}

TEST_CASE("sft_kl runs and penalizes divergence from the reference") {
  TeacherSpec spec;
  auto set = gen_corpora(spec, {16, 16, 4, 4}, 29);
  Policy p = fresh_bigram(10);
  TrainConfig cfg;
  cfg.method = Method::kSftKl;
  cfg.train_batch = 8;
  cfg.mini_batch = 2;
  cfg.epochs = 2;
  cfg.seed = 3;
  cfg.objective.kl_coef = 0.5;
  auto kl = run_finetune(p, set.expert_train, cfg, EvalSets{});
  TrainConfig sft_cfg = cfg;
  sft_cfg.method = Method::kSft;
  auto sft = run_finetune(p, set.expert_train, sft_cfg, EvalSets{});
  // the KL term holds the policy closer to the init
  auto drift = [&](const Policy& trained) {
    double acc = 0.0;
    const auto& a = trained.params()[0].second.value();
    const auto& b = p.params()[0].second.value();
    for (std::size_t i = 0; i < a.size(); ++i)
      acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc;
  };
  CHECK(drift(kl.policy) < drift(sft.policy));
}

TEST_CASE("evaluate") {
  TeacherSpec spec;
  auto set = gen_corpora(spec, {16, 16, 8, 8}, 37);
  SUBCASE("uniform policy gives ln V in-domain NLL") {
    Policy p = fresh_bigram(1);
    for (auto& x : p.params()[0].second.mutable_value()) x = 0.0;
    EvalSets evals{&set.indomain_eval, &set.ood_eval, &spec};
    auto m = evaluate(p, evals);
    CHECK(m.indomain_nll == doctest::Approx(std::log(32.0)).epsilon(1e-12));
    CHECK(m.ood_nll == doctest::Approx(std::log(32.0)).epsilon(1e-12));
  }
  SUBCASE("repeated calls are identical") {
    Policy p = fresh_bigram(2, 0.5);
    EvalSets evals{&set.indomain_eval, &set.ood_eval, &spec};
    auto m1 = evaluate(p, evals);
    auto m2 = evaluate(p, evals);
    CHECK(m1.indomain_nll == m2.indomain_nll);
    CHECK(m1.indomain_accuracy == m2.indomain_accuracy);
    CHECK(m1.ood_nll == m2.ood_nll);
  }
  SUBCASE("domain-B teacher policy NLL matches the teacher entropy rate") {
    auto big = gen_corpora(spec, {16, 16, 8, 200}, 41);
    Policy teacher = domain_b_teacher_policy(spec);
    EvalSets evals{nullptr, &big.ood_eval, &spec};
    auto m = evaluate(teacher, evals);
    // closed-form reference: token-weighted mean teacher log-likelihood
    double total = 0.0;
    long count = 0;
    for (const auto& s : big.ood_eval.seqs) {
      int n = static_cast<int>(s.tokens.size()) - 1;
      total += teacher_log_likelihood(spec, Domain::kB, s) * n;
      count += n;
    }
    double want = -total / count;
    CHECK(m.ood_nll == doctest::Approx(want).epsilon(0.02));
  }
}

TEST_CASE("run files: log, checkpoints, metrics csv") {
  TeacherSpec spec;
  auto set = gen_corpora(spec, {16, 16, 4, 4}, 43);
  Policy p = fresh_bigram(12);
  TrainConfig cfg;
  cfg.method = Method::kSft;
  cfg.train_batch = 8;
  cfg.mini_batch = 4;
  cfg.epochs = 2;
  cfg.seed = 77;
  EvalSets evals{&set.indomain_eval, &set.ood_eval, &spec};
  TmpDir dir("trainer_test_run");
  auto res = run_finetune(p, set.expert_train, cfg, evals, dir.path.string());
  CHECK(std::filesystem::exists(dir.path / "log.jsonl"));
  CHECK(std::filesystem::exists(dir.path / "timing.jsonl"));
  CHECK(std::filesystem::exists(dir.path / "epoch_0.ckpt"));
  CHECK(std::filesystem::exists(dir.path / "epoch_1.ckpt"));
  CHECK(std::filesystem::exists(dir.path / "final.ckpt"));
  // log file contents equal the in-memory records
  std::string text = read_file(dir.path / "log.jsonl");
  std::string want;
  for (const auto& r : res.log) want += r.to_json() + "\n";
  CHECK(text == want);
  // byte-identical on rerun
  TmpDir dir2("trainer_test_run2");
  run_finetune(p, set.expert_train, cfg, evals, dir2.path.string());
  CHECK(read_file(dir2.path / "log.jsonl") == text);
  CHECK(read_file(dir2.path / "final.ckpt") ==
        read_file(dir.path / "final.ckpt"));
  // final checkpoint loads back to the final params
  Policy re = Policy::load((dir.path / "final.ckpt").string());
  CHECK(params_equal(re, res.policy));
  // csv export has one row per eval record plus a header
  export_metrics_csv(res.log, (dir.path / "metrics.csv").string());
  std::string csv = read_file(dir.path / "metrics.csv");
  int rows = static_cast<int>(std::count(csv.begin(), csv.end(), '\n'));
  int eval_records = 0;
  for (const auto& r : res.log)
    if (r.eval) ++eval_records;
  CHECK(rows == eval_records + 1);
}

TEST_CASE("run log record json round trip") {
  RunLogRecord r;
  r.step = 42;
  r.epoch = 3;
  r.method = "psft";
  r.loss = -1.0625;
  r.mean_entropy = 2.5;
  r.grad_norm = 0.125;
  r.clip_fraction = 0.25;
  r.masked_tokens = 64;
  r.clips = {{13, 5}, {14, 2}};
  r.occurrences = {{3, 10}, {13, 20}};
  r.eval = EvalMetrics{1.5, 0.75, 2.25};
  r.mean_reward = 0.5;
  r.dropped_groups = 2;
  auto back = RunLogRecord::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(back.step == 42);
  CHECK(back.clips == r.clips);
  CHECK(back.eval->indomain_accuracy == 0.75);
}

TEST_CASE("run_rl") {
  TeacherSpec spec;
  TrainConfig cfg;
  cfg.method = Method::kGrpo;
  cfg.lr = 1e-3;
  cfg.mini_batch = 8;
  cfg.train_batch = 8;
  cfg.rl_iterations = 3;
  cfg.prompts_per_iteration = 4;
  cfg.rollout_n = 4;
  cfg.max_new_tokens = 8;
  cfg.seed = 51;
  SUBCASE("all-zero rewards drop every group and leave params unchanged") {
    // a policy that deterministically emits domain-B symbols never scores
    Policy p = fresh_bigram(1);
    auto table = p.params()[0].second.mutable_value();
    std::fill(table.begin(), table.end(), 0.0);
    for (int row = 0; row < spec.vocab.size; ++row)
      table[row * spec.vocab.size + tok::kSymbol0] = 40.0;
    auto res = run_rl(p, spec, cfg);
    CHECK(params_equal(res.policy, p));
    REQUIRE(res.log.size() == 3);  // one skip record per iteration
    for (const auto& r : res.log) {
      CHECK(r.iteration_skipped.value_or(false));
      CHECK(*r.mean_reward == 0.0);
      CHECK(*r.dropped_groups == cfg.prompts_per_iteration);
    }
  }
  SUBCASE("determinism and reward logging on a live policy") {
    // pretrain briefly so rollouts contain digits and rewards vary
    auto set = gen_corpora(spec, {16, 16, 4, 4}, 53);
    Policy p0 = fresh_bigram(3);
    TrainConfig pre;
    pre.method = Method::kPretrain;
    pre.train_batch = 16;
    pre.mini_batch = 4;
    pre.epochs = 8;
    pre.seed = 1;
    auto pretrained = run_pretrain(p0, set.pretrain, pre, EvalSets{});
    auto a = run_rl(pretrained.policy, spec, cfg);
    auto b = run_rl(pretrained.policy, spec, cfg);
    CHECK(log_lines(a) == log_lines(b));
    CHECK(params_equal(a.policy, b.policy));
    bool any_update = false;
    for (const auto& r : a.log)
      if (!r.iteration_skipped.value_or(false)) any_update = true;
    CHECK(any_update);
  }
}

TEST_CASE("run_dpo") {
  TeacherSpec spec;
  auto pairs = gen_dpo_pairs(spec, 32, 61);
  Policy p = fresh_bigram(5, 0.3);
  TrainConfig cfg;
  cfg.method = Method::kDpo;
  cfg.train_batch = 8;
  cfg.mini_batch = 8;
  cfg.epochs = 1;
  cfg.lr = 1e-3;
  cfg.seed = 2;
  cfg.objective.dpo_beta = 0.1;
  SUBCASE("zero epochs leave the policy unchanged") {
    TrainConfig z = cfg;
    z.epochs = 0;
    auto res = run_dpo(p, pairs, z);
    CHECK(params_equal(res.policy, p));
    CHECK(res.log.empty());
  }
  SUBCASE("training separates the implicit rewards") {
    TrainConfig t = cfg;
    t.epochs = 8;
    auto res = run_dpo(p, pairs, t);
    const auto& last = res.log.back();
    CHECK(*last.chosen_reward > *last.rejected_reward);
    CHECK(last.loss < std::log(2.0));  // below the indifference point
  }
  SUBCASE("determinism") {
    auto a = run_dpo(p, pairs, cfg);
    auto b = run_dpo(p, pairs, cfg);
    CHECK(log_lines(a) == log_lines(b));
    CHECK(params_equal(a.policy, b.policy));
  }
  SUBCASE("empty corpus rejected") {
    DpoCorpus empty;
    CHECK_THROWS_AS(run_dpo(p, empty, cfg), std::invalid_argument);
  }
}
