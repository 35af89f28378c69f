// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "policy/checkpoint.hpp"
#include "policy/policy.hpp"

using namespace proxlab;
using ad::Tape;

namespace {

VocabSpec small_vocab(int size = 8) {
  VocabSpec v;
  v.size = size;
  return v;
}

TokenBatch tiny_batch(const VocabSpec& v) {
  // rows: bos a b eos ; bos b a eos (a=3, b=4), prompt = bos only
  return TokenBatch::from_sequences({{v.bos, 3, 4, v.eos}, {v.bos, 4, 3, v.eos}},
                                    {1, 1}, v);
}

Policy bigram_with_table(const VocabSpec& v, const std::vector<double>& table) {
  Rng rng(0);
  PolicyConfig cfg;
  cfg.arch = Arch::kBigram;
  Policy p = Policy::init(v, cfg, rng);
  std::copy(table.begin(), table.end(),
            p.params()[0].second.mutable_value().begin());
  return p;
}

Policy small_transformer(const VocabSpec& v, std::uint64_t seed = 1,
                         int max_len = 16) {
  Rng rng(seed);
  PolicyConfig cfg;
  cfg.arch = Arch::kTransformer;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.max_seq_len = max_len;
  return Policy::init(v, cfg, rng);
}

}  // namespace

TEST_CASE("uniform bigram log_prob is -ln V everywhere") {
  VocabSpec v = small_vocab(4);
  Policy p = bigram_with_table(v, std::vector<double>(16, 0.0));
  auto batch = TokenBatch::from_sequences({{v.bos, 3, 3, v.eos}}, {1}, v);
  Tape t;
  auto lp = p.log_prob(t, batch);
  for (auto x : lp.value())
    CHECK(x == doctest::Approx(-std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("masked log_prob sum equals log of product of token probs") {
  VocabSpec v = small_vocab(6);
  Rng rng(5);
  PolicyConfig cfg;
  cfg.arch = Arch::kBigram;
  cfg.init_scale = 0.7;
  Policy p = Policy::init(v, cfg, rng);
  auto batch = tiny_batch(v);
  Tape t;
  auto lp = p.log_prob(t, batch);
  for (int b = 0; b < batch.B; ++b) {
    double sum_masked = 0.0, prod = 1.0;
    for (int tt = 0; tt < batch.T; ++tt)
      if (batch.masked(b, tt)) {
        sum_masked += lp.value()[b * batch.T + tt];
        prod *= std::exp(lp.value()[b * batch.T + tt]);
      }
    CHECK(sum_masked == doctest::Approx(std::log(prod)).epsilon(1e-9));
  }
}

TEST_CASE("bigram log_prob matches brute-force softmax oracle") {
  VocabSpec v = small_vocab(6);
  std::vector<double> table(36);
  Rng rng(9);
  for (auto& x : table) x = rng.next_gaussian();
  Policy p = bigram_with_table(v, table);
  auto batch = tiny_batch(v);
  Tape t;
  auto lp = p.log_prob(t, batch);
  for (int b = 0; b < batch.B; ++b)
    for (int tt = 0; tt < batch.T; ++tt) {
      int prev = tt == 0 ? v.bos : batch.tok(b, tt - 1);
      double lse = 0.0;
      for (int j = 0; j < 6; ++j) lse += std::exp(table[prev * 6 + j]);
      double expect = table[prev * 6 + batch.tok(b, tt)] - std::log(lse);
      CHECK(lp.value()[b * batch.T + tt] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("transformer log_prob matches independent softmax path and is <= 0") {
  VocabSpec v = small_vocab(8);
  Policy p = small_transformer(v, 3);
  auto batch = tiny_batch(v);
  Tape t;
  auto lp = p.log_prob(t, batch);
  CHECK(lp.shape() == ad::Shape{2, 4});
  for (int b = 0; b < 2; ++b)
    for (int tt = 0; tt < 4; ++tt)
      CHECK(lp.value()[b * 4 + tt] <= 1e-15);
  // independent path: exp of log_probs of all tokens at a state sums to 1
  // (probe by substituting each candidate token at position 2)
  double total = 0.0;
  for (int cand = 0; cand < 8; ++cand) {
    auto probe =
        TokenBatch::from_sequences({{v.bos, 3, 4, v.eos}}, {3}, v);
    probe.tokens[2] = cand;  // same prefix, candidate target (prompt position)
    Tape tp;
    total += std::exp(p.log_prob(tp, probe).value()[2]);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("entropy bounds and direct-evaluation oracle") {
  VocabSpec v = small_vocab(10);
  SUBCASE("uniform gives ln V") {
    Policy p = bigram_with_table(v, std::vector<double>(100, 0.0));
    auto batch = TokenBatch::from_sequences({{v.bos, 3, v.eos}}, {1}, v);
    Tape t;
    auto ent = p.entropy(t, batch);
    for (auto h : ent.value())
      CHECK(h == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(p.masked_mean_entropy(batch) ==
          doctest::Approx(std::log(10.0)).epsilon(1e-12));
  }
  SUBCASE("near-one-hot logits give near-zero entropy") {
    std::vector<double> table(100, 0.0);
    for (int r = 0; r < 10; ++r) table[r * 10] = 50.0;
    Policy p = bigram_with_table(v, table);
    auto batch = TokenBatch::from_sequences({{v.bos, 3, v.eos}}, {1}, v);
    Tape t;
    auto ent = p.entropy(t, batch);
    for (auto h : ent.value()) {
      CHECK(h >= 0.0);
      CHECK(h < 1e-9);
    }
  }
  SUBCASE("random logits match scalar loop oracle") {
    std::vector<double> table(100);
    Rng rng(13);
    for (auto& x : table) x = 2.0 * rng.next_gaussian();
    Policy p = bigram_with_table(v, table);
    auto batch = TokenBatch::from_sequences({{v.bos, 4, 7, v.eos}}, {1}, v);
    Tape t;
    auto ent = p.entropy(t, batch);
    for (int tt = 0; tt < batch.T; ++tt) {
      int prev = tt == 0 ? v.bos : batch.tok(0, tt - 1);
      double lse = 0.0;
      for (int j = 0; j < 10; ++j) lse += std::exp(table[prev * 10 + j]);
      double h = 0.0;
      for (int j = 0; j < 10; ++j) {
        double pr = std::exp(table[prev * 10 + j]) / lse;
        h -= pr * std::log(pr);
      }
      CHECK(ent.value()[tt] == doctest::Approx(h).epsilon(1e-10));
      CHECK(ent.value()[tt] >= 0.0);
      CHECK(ent.value()[tt] <= std::log(10.0) + 1e-12);
    }
  }
}

TEST_CASE("causal mask: logits at t are invariant to future tokens") {
  VocabSpec v = small_vocab(8);
  Policy p = small_transformer(v, 21);
  auto b1 = TokenBatch::from_sequences({{v.bos, 3, 4, 5, v.eos}}, {1}, v);
  auto b2 = TokenBatch::from_sequences({{v.bos, 3, 4, 6, 7}}, {1}, v);
  Tape t1, t2;
  auto lp1 = p.log_prob(t1, b1);
  auto lp2 = p.log_prob(t2, b2);
  // prefixes agree through position 2, so conditionals at t=1..3 agree for
  // the shared targets at t<=2; compare t=1 and t=2 (same targets)
  for (int tt = 1; tt <= 2; ++tt)
    CHECK(lp1.value()[tt] == doctest::Approx(lp2.value()[tt]).epsilon(1e-12));
}

TEST_CASE("sampling") {
  VocabSpec v = small_vocab(8);
  SUBCASE("same seed gives identical batches") {
    Policy p = small_transformer(v, 31);
    auto a = p.sample({{v.bos, 3}, {v.bos, 4}}, 6, 1.0, 99);
    auto b = p.sample({{v.bos, 3}, {v.bos, 4}}, 6, 1.0, 99);
    CHECK(a.tokens == b.tokens);
    CHECK(a.response_mask == b.response_mask);
  }
  SUBCASE("temperature 0 is greedy argmax") {
    std::vector<double> table(64, 0.0);
    for (int r = 0; r < 8; ++r) table[r * 8 + ((r + 1) % 8)] = 10.0;
    Policy p = bigram_with_table(v, table);
    auto s = p.sample({{v.bos, 3}}, 4, 0.0, 7);
    // deterministic walk 3 -> 4 -> 5 -> 6 -> 7
    CHECK(s.tok(0, 2) == 4);
    CHECK(s.tok(0, 3) == 5);
  }
  SUBCASE("empirical frequencies match softmax within 3 sigma") {
    std::vector<double> table(16, 0.0);
    // V=4: row for token 3 has logits [0, 0.5, 1.0, -0.5]
    VocabSpec v4 = small_vocab(4);
    table[3 * 4 + 0] = 0.0;
    table[3 * 4 + 1] = 0.5;
    table[3 * 4 + 2] = 1.0;
    table[3 * 4 + 3] = -0.5;
    Policy p = bigram_with_table(v4, table);
    const int N = 100000;
    std::vector<int> counts(4, 0);
    // one-step samples from state 3 via max_new=1
    for (int rep = 0; rep < 1; ++rep) {
      std::vector<std::vector<int>> prompts(N, {v4.bos, 3});
      auto s = p.sample(prompts, 1, 1.0, 1234);
      for (int b = 0; b < N; ++b) ++counts[s.tok(b, 2)];
    }
    double lse = 0.0;
    for (int j = 0; j < 4; ++j) lse += std::exp(table[3 * 4 + j]);
    for (int j = 0; j < 4; ++j) {
      double pj = std::exp(table[3 * 4 + j]) / lse;
      double sigma = std::sqrt(N * pj * (1 - pj));
      CHECK(std::abs(counts[j] - N * pj) <= 3.0 * sigma);
    }
  }
}

TEST_CASE("snapshot isolation and round trip") {
  VocabSpec v = small_vocab(8);
  Policy p = small_transformer(v, 41);
  auto snap = p.snapshot();
  auto batch = tiny_batch(v);
  Tape t;
  auto lp_before = p.log_prob(t, batch);
  // perturb the live policy
  p.params()[0].second.mutable_value()[0] += 1.0;
  auto snap_lp = snap.log_prob_values(batch);
  for (int i = 0; i < batch.B * batch.T; ++i)
    CHECK(snap_lp[i] == doctest::Approx(lp_before.value()[i]).epsilon(1e-15));
  // snapshot params produce gradients to nothing
  Tape t2;
  auto lp2 = snap.policy().log_prob(t2, batch);
  CHECK_FALSE(lp2.requires_grad());
}

TEST_CASE("checkpoint save/load") {
  namespace fs = std::filesystem;
  VocabSpec v = small_vocab(8);
  Policy p = small_transformer(v, 51);
  auto path = fs::temp_directory_path() / "proxlab_test.ckpt";
  p.save(path.string());
  Policy q = Policy::load(path.string());
  SUBCASE("byte-exact parameters and identical log_prob") {
    REQUIRE(q.params().size() == p.params().size());
    for (std::size_t i = 0; i < p.params().size(); ++i)
      for (std::int64_t j = 0; j < p.params()[i].second.size(); ++j)
        CHECK(q.params()[i].second.value()[j] == p.params()[i].second.value()[j]);
    auto batch = tiny_batch(v);
    Tape ta, tb;
    auto lpa = p.log_prob(ta, batch);
    auto lpb = q.log_prob(tb, batch);
    for (int i = 0; i < batch.B * batch.T; ++i)
      CHECK(lpa.value()[i] == doctest::Approx(lpb.value()[i]).epsilon(1e-15));
  }
  SUBCASE("corrupted file fails the checksum") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    char c = 'x';
    f.write(&c, 1);
    f.close();
    CHECK_THROWS_AS(Policy::load(path.string()), CheckpointError);
  }
  fs::remove(path);
}

TEST_CASE("validation errors") {
  VocabSpec v = small_vocab(8);
  SUBCASE("sequence longer than max_seq_len") {
    Policy p = small_transformer(v, 61, /*max_len=*/4);
    auto batch = TokenBatch::from_sequences({{v.bos, 3, 4, 3, 4, v.eos}}, {1}, v);
    Tape t;
    CHECK_THROWS_AS(p.log_prob(t, batch), std::invalid_argument);
  }
  SUBCASE("token out of range") {
    CHECK_THROWS_AS(TokenBatch::from_sequences({{v.bos, 9, v.eos}}, {1}, v),
                    std::invalid_argument);
  }
  SUBCASE("d_model not divisible by heads") {
    PolicyConfig cfg;
    cfg.arch = Arch::kTransformer;
    cfg.d_model = 10;
    cfg.heads = 3;
    Rng rng(0);
    CHECK_THROWS_AS(Policy::init(v, cfg, rng), std::invalid_argument);
  }
}

TEST_CASE("parameter count is a deterministic function of config") {
  VocabSpec v = small_vocab(8);
  Policy a = small_transformer(v, 1);
  Policy b = small_transformer(v, 999);
  CHECK(a.param_count() == b.param_count());
  // tok_emb + pos_emb + 2 layers + final ln + out
  std::int64_t D = 16, F = 32, V = 8, L = 16;
  std::int64_t per_layer = 2 * (D + D) + 4 * (D * D + D) + D * F + F + F * D + D;
  CHECK(a.param_count() == V * D + L * D + 2 * per_layer + 2 * D + D * V);
}
