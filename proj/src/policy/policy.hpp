// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Autoregressive token policies: a tabular bigram model and a small pre-norm
// transformer. Conventions:
//   - every sequence starts with bos; position 0 is always a prompt position
//   - log_prob/entropy return [B, T]; for the transformer the t=0 entry is a
//     defined placeholder (0.0) and is never mask-true; the bigram conditions
//     position 0 on bos so all its entries are real conditionals
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "autodiff/tensor.hpp"
#include "rng.hpp"

namespace proxlab {

struct VocabSpec {
  int size = 32;
  int pad = 0;
  int bos = 1;
  int eos = 2;
  void validate() const;
  bool operator==(const VocabSpec&) const = default;
};

enum class Arch { kBigram, kTransformer };

struct PolicyConfig {
  Arch arch = Arch::kBigram;
  int layers = 2;
  int heads = 2;
  int d_model = 64;
  int d_ff = 256;
  int max_seq_len = 64;
  double init_scale = 0.02;
  void validate() const;
  bool operator==(const PolicyConfig&) const = default;
};

// Padded batch of (prompt, response) token rows with a response mask.
struct TokenBatch {
  int B = 0;
  int T = 0;
  std::vector<int> tokens;              // B*T, row-major
  std::vector<int> prompt_len;          // per row, >= 1
  std::vector<std::uint8_t> response_mask;  // B*T; true only on response tokens

  static TokenBatch from_sequences(const std::vector<std::vector<int>>& seqs,
                                   const std::vector<int>& prompt_lens,
                                   const VocabSpec& vocab);

  int tok(int b, int t) const { return tokens[static_cast<std::size_t>(b) * T + t]; }
  bool masked(int b, int t) const {
    return response_mask[static_cast<std::size_t>(b) * T + t] != 0;
  }
  int masked_count() const;
  void validate(const VocabSpec& vocab) const;
};

class PolicySnapshot;

class Policy {
 public:
  Policy() = default;
  static Policy init(const VocabSpec& vocab, const PolicyConfig& cfg, Rng& rng);

  const VocabSpec& vocab() const { return vocab_; }
  const PolicyConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, ad::Tensor>>& params() { return params_; }
  const std::vector<std::pair<std::string, ad::Tensor>>& params() const {
    return params_;
  }
  std::int64_t param_count() const;
  void zero_grad();

  // log pi(token_{b,t} | tokens_{b,<t}) for all positions, shape [B, T].
  // token_entropy, when given, receives the per-position full-vocab entropy
  // (flat B*T, no-grad) computed from the same logits.
  ad::Tensor log_prob(ad::Tape& tape, const TokenBatch& batch,
                      std::vector<double>* token_entropy = nullptr) const;
  // Full-vocab log-softmax rows aligned to predicted positions
  // [offset .. T-1]; shape [B, T-offset, V]. offset is 0 for the bigram and 1
  // for the transformer.
  ad::Tensor full_log_softmax(ad::Tape& tape, const TokenBatch& batch,
                              int* offset) const;
  // Per-position full-vocab entropy in nats, shape [B, T].
  ad::Tensor entropy(ad::Tape& tape, const TokenBatch& batch) const;
  // Mean entropy over mask-true positions (no-grad path).
  double masked_mean_entropy(const TokenBatch& batch) const;

  // Ancestral sampling; temperature 0 means greedy argmax decoding.
  TokenBatch sample(const std::vector<std::vector<int>>& prompts, int max_new,
                    double temperature, std::uint64_t seed) const;

  PolicySnapshot snapshot() const;
  // Deep, independently trainable copy.
  Policy clone() const;

  void save(const std::string& path) const;
  static Policy load(const std::string& path);

 private:
  friend class PolicySnapshot;
  // Distribution logits for the token following each input position:
  // ids [B, Ti] -> logits [B, Ti, V].
  ad::Tensor next_token_logits(ad::Tape& tape, const std::vector<int>& ids,
                               int B, int Ti) const;
  const ad::Tensor& find(const std::string& name) const;

  VocabSpec vocab_;
  PolicyConfig cfg_;
  std::vector<std::pair<std::string, ad::Tensor>> params_;
};

// Frozen, gradient-detached copy of a policy. Shares no mutable state with
// the live policy.
class PolicySnapshot {
 public:
  PolicySnapshot() = default;
  explicit PolicySnapshot(const Policy& live);

  const Policy& policy() const { return frozen_; }
  const VocabSpec& vocab() const { return frozen_.vocab(); }
  const PolicyConfig& config() const { return frozen_.config(); }

  // No-grad per-token log-probs, flat B*T.
  std::vector<double> log_prob_values(const TokenBatch& batch) const;

 private:
  Policy frozen_;  // params are plain constants (requires_grad = false)
};

}  // namespace proxlab
