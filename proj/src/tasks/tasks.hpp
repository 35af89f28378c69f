// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic two-domain corpora.
//
// Token layout (V = 32): pad=0 bos=1 eos=2, digits 0..9 at 3..12, STEP=13,
// TGT=14, domain-B symbols at 15..24, ids 25..31 reserved.
//
// Domain A ("expert" domain): modular-arithmetic sequences
//   bos TGT t d_1 d_2 ... d_k eos          (plain form, pretraining)
//   bos TGT t (d_i STEP s_i)+ eos          (expert form, s_i = running sum)
// where all terminated sequences satisfy sum(d_i) == t (mod 10). Both forms
// are emitted by one explicit autoregressive process, so exact per-token
// log-likelihoods are available. The STEP/running-sum markers only appear in
// expert data, never in the pretraining mixture; they are the off-distribution
// tokens the clipped objectives are expected to flag.
//
// Domain B ("general" domain): a frozen first-order Markov chain over the
// symbol tokens, with seeded transition structure and per-symbol stop
// probabilities.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "policy/policy.hpp"
#include "rng.hpp"

namespace proxlab {

namespace tok {
constexpr int kDigit0 = 3;
constexpr int kNumDigits = 10;
constexpr int kStep = 13;
constexpr int kTgt = 14;
constexpr int kSymbol0 = 15;
constexpr int kNumSymbols = 10;

inline int digit(int d) { return kDigit0 + d; }
inline bool is_digit(int t) { return t >= kDigit0 && t < kDigit0 + kNumDigits; }
inline int digit_value(int t) { return t - kDigit0; }
inline bool is_symbol(int t) {
  return t >= kSymbol0 && t < kSymbol0 + kNumSymbols;
}
}  // namespace tok

struct TeacherSpec {
  VocabSpec vocab;              // defaults to size 32
  double mix_weight_a = 0.5;    // share of domain A in the pretraining mixture
  double p_close = 0.4;         // chance of emitting the closing digit early
  double p_stop = 0.6;          // chance of stopping once the target is met
  int max_digits = 6;
  int max_seq_len = 64;
  std::uint64_t markov_seed = 1234;  // freezes the domain-B chain
  double dpo_noise = 0.15;      // per-token corruption rate for pair sampling
  void validate() const;
};

enum class Domain { kA, kAExpert, kB };

struct Sequence {
  std::vector<int> tokens;  // starts with bos
  int prompt_len = 1;
};

struct Corpus {
  std::string split;
  std::string domain;  // "A", "A_expert", "B", "mix"
  std::uint64_t seed = 0;
  std::vector<Sequence> seqs;

  // One sequence per line (whitespace-separated token ids, prompt_len first),
  // plus a <path>.meta.json sidecar.
  void save(const std::string& path) const;
  static Corpus load(const std::string& path);
};

struct CorporaSizes {
  int pretrain = 256;
  int expert_train = 256;
  int indomain_eval = 64;
  int ood_eval = 64;
};

struct CorporaSet {
  Corpus pretrain, expert_train, indomain_eval, ood_eval;
};

// Disjoint RNG streams per split; regenerating with the same seed is
// bit-identical.
CorporaSet gen_corpora(const TeacherSpec& spec, const CorporaSizes& sizes,
                       std::uint64_t seed);

Sequence sample_domain_a(const TeacherSpec& spec, Rng& rng, bool expert);
Sequence sample_domain_b(const TeacherSpec& spec, Rng& rng);

// Structural + arithmetic validity; plain and expert forms both count as A.
bool validate_domain_a(const TeacherSpec& spec, const std::vector<int>& tokens);
bool validate_domain_b(const TeacherSpec& spec, const std::vector<int>& tokens);

// Is `tokens[prompt_len..]` a correct expert-form completion of the prompt's
// target? Used as the in-domain task-accuracy check.
bool expert_response_valid(const TeacherSpec& spec,
                           const std::vector<int>& tokens, int prompt_len);

// Mean per-token log-likelihood of the sequence under the named teacher
// process. Tokens impossible under the process contribute a floor of -30
// nats each (keeps cross-domain averages finite).
double teacher_log_likelihood(const TeacherSpec& spec, Domain domain,
                              const Sequence& seq);

// Exact bigram rendering of the domain-B Markov chain (the chain is first
// order, so a bigram table represents it exactly away from the length cap).
// Useful as a closed-form NLL reference.
Policy domain_b_teacher_policy(const TeacherSpec& spec);

// Rule reward for the verifiable task: completion must be >= 1 digit tokens,
// terminated by eos, no other tokens, digits summing to target mod 10.
int reward(const std::vector<int>& completion, int target);

// Prompts of the form [bos, TGT, t] with uniform random targets.
std::vector<std::vector<int>> reward_prompts(const TeacherSpec& spec, int n,
                                             std::uint64_t seed);

struct DpoPair {
  std::vector<int> prompt;    // [bos, TGT, t]
  std::vector<int> chosen;    // completion tokens (response only)
  std::vector<int> rejected;
  double chosen_score = 0.0;  // total expert-teacher log-likelihood
  double rejected_score = 0.0;
};

struct DpoCorpus {
  std::vector<DpoPair> pairs;
  std::uint64_t seed = 0;
  int resampled_ties = 0;
  void save(const std::string& path) const;
  static DpoCorpus load(const std::string& path);
};

// Two noised-teacher samples per prompt, ranked by expert-teacher
// log-likelihood; exact ties are resampled (and counted).
DpoCorpus gen_dpo_pairs(const TeacherSpec& spec, int size, std::uint64_t seed);

}  // namespace proxlab
