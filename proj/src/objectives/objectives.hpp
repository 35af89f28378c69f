// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives as pure functions (policies, batch, config) ->
// LossOutput, all under a single minimization convention. Per-batch scalars
// use token-mean aggregation: masked sum / masked count.
#pragma once

#include <vector>

#include "policy/policy.hpp"

namespace proxlab {

struct ObjectiveConfig {
  double epsilon = 0.28;      // clip half-width; +infinity = unclipped
  double clip_low = 0.2;      // asymmetric RL bounds: [1-clip_low, 1+clip_high]
  double clip_high = 0.28;
  double kl_coef = 0.5;
  bool kl_reverse = false;    // true: KL(pi_ref || pi_theta)
  double dpo_beta = 0.01;
  double advantage_std_floor = 1e-8;
  void validate() const;
};

struct LossOutput {
  ad::Tensor loss;                        // scalar, to minimize
  std::vector<double> ratios;             // flat B*T, 1.0 where not applicable
  std::vector<std::uint8_t> clip_mask;    // true where the token gets no gradient
  std::vector<double> token_entropy;      // flat B*T, no-grad
  double clip_fraction = 0.0;             // clipped / mask-true tokens
  double aggregate = 0.0;                 // loss value (token-mean)
};

// L = -token_mean(log pi(a|s))
LossOutput sft_loss(ad::Tape& tape, const Policy& policy, const TokenBatch& batch);

// L = -token_mean(log pi(a|s) * A); adv is flat B*T aligned with batch.
LossOutput pg_loss(ad::Tape& tape, const Policy& policy, const TokenBatch& batch,
                   const std::vector<double>& adv);

// r_t = exp(log pi_theta - log pi_theta_old), snapshot side detached.
// Returns flat B*T values (entries outside the mask are still computed).
std::vector<double> importance_ratios(const Policy& policy,
                                      const PolicySnapshot& snap,
                                      const TokenBatch& batch);

// L = -token_mean( min(r*A, clip(r, 1-clip_low, 1+clip_high)*A) )
LossOutput ppo_clip_loss(ad::Tape& tape, const Policy& policy,
                         const PolicySnapshot& snap, const TokenBatch& batch,
                         const std::vector<double>& adv, double clip_low,
                         double clip_high);

// L = -token_mean( min(r, clip(r, 1-eps, 1+eps)) ); epsilon may be +infinity.
LossOutput psft_loss(ad::Tape& tape, const Policy& policy,
                     const PolicySnapshot& snap, const TokenBatch& batch,
                     double epsilon);

// L = sft + kl_coef * token_mean( KL(pi_theta || pi_ref) ) over masked
// positions, full vocabulary; kl_reverse flips the direction.
LossOutput sft_kl_loss(ad::Tape& tape, const Policy& policy,
                       const PolicySnapshot& ref, const TokenBatch& batch,
                       double kl_coef, bool kl_reverse = false);

struct GrpoResult {
  std::vector<double> advantages;   // flat, one per rollout, group-major
  std::vector<std::uint8_t> kept;   // per group; zero-variance groups dropped
  int dropped_groups = 0;
};

// Group-relative advantages: A_i = (r_i - mean) / (std + floor) per group.
GrpoResult grpo_advantages(const std::vector<std::vector<double>>& reward_groups,
                           double std_floor = 1e-8);

struct DpoOutput {
  ad::Tensor loss;  // scalar, mean over pairs
  std::vector<double> chosen_reward;    // beta * (logpi - logref), per pair
  std::vector<double> rejected_reward;
};

// -log sigmoid( beta * [(logpi-logref)(chosen) - (logpi-logref)(rejected)] ),
// sequence-summed log-probs over each batch's response mask.
DpoOutput dpo_loss(ad::Tape& tape, const Policy& policy,
                   const PolicySnapshot& ref, const TokenBatch& chosen,
                   const TokenBatch& rejected, double beta);

}  // namespace proxlab
