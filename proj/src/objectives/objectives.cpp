// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#include "objectives/objectives.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace proxlab {

using ad::Tape;
using ad::Tensor;

void ObjectiveConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (!std::isinf(epsilon) && epsilon >= 1.0)
    throw std::invalid_argument("finite epsilon must be in (0, 1)");
  if (!(clip_low > 0.0 && clip_low < 1.0))
    throw std::invalid_argument("clip_low must be in (0, 1)");
  if (!(clip_high > 0.0)) throw std::invalid_argument("clip_high must be > 0");
  if (kl_coef < 0.0) throw std::invalid_argument("kl_coef must be >= 0");
  if (!(dpo_beta > 0.0)) throw std::invalid_argument("dpo_beta must be > 0");
}

namespace {

// Structural compatibility: same shapes, ignoring init_scale.
bool compatible(const Policy& a, const Policy& b) {
  const auto& x = a.config();
  const auto& y = b.config();
  return a.vocab() == b.vocab() && x.arch == y.arch && x.layers == y.layers &&
         x.heads == y.heads && x.d_model == y.d_model && x.d_ff == y.d_ff &&
         x.max_seq_len == y.max_seq_len;
}

Tensor mask_const(const TokenBatch& batch) {
  std::vector<double> m(batch.response_mask.begin(), batch.response_mask.end());
  return Tensor::constant({batch.B, batch.T}, std::move(m));
}

// token-mean contract: masked sum / masked count
Tensor masked_token_mean(Tape& tape, const Tensor& per_token,
                         const TokenBatch& batch) {
  int count = batch.masked_count();
  if (count == 0) throw std::invalid_argument("empty response mask");
  return tape.scale(tape.sum(tape.mul(per_token, mask_const(batch))),
                    1.0 / static_cast<double>(count));
}

Tensor adv_const(const TokenBatch& batch, const std::vector<double>& adv) {
  if (adv.size() != batch.tokens.size())
    throw std::invalid_argument("advantage shape misaligned with batch");
  for (double a : adv)
    if (!std::isfinite(a)) throw std::invalid_argument("non-finite advantage");
  return Tensor::constant({batch.B, batch.T}, adv);
}

// Ratio tensor r = exp(log pi - log pi_old) plus its plain values.
Tensor ratio_tensor(Tape& tape, const Policy& policy, const PolicySnapshot& snap,
                    const TokenBatch& batch, std::vector<double>* entropy_out) {
  if (!compatible(policy, snap.policy()))
    throw std::invalid_argument("snapshot/policy config mismatch");
  Tensor lp = policy.log_prob(tape, batch, entropy_out);
  Tensor lp_old = Tensor::constant({batch.B, batch.T},
                                   snap.log_prob_values(batch));
  return tape.exp(tape.sub(lp, lp_old));
}

}  // namespace

LossOutput sft_loss(Tape& tape, const Policy& policy, const TokenBatch& batch) {
  LossOutput out;
  Tensor lp = policy.log_prob(tape, batch, &out.token_entropy);
  out.loss = tape.scale(masked_token_mean(tape, lp, batch), -1.0);
  out.ratios.assign(batch.tokens.size(), 1.0);
  out.clip_mask.assign(batch.tokens.size(), 0);
  out.clip_fraction = 0.0;
  out.aggregate = out.loss.item();
  return out;
}

LossOutput pg_loss(Tape& tape, const Policy& policy, const TokenBatch& batch,
                   const std::vector<double>& adv) {
  LossOutput out;
  Tensor lp = policy.log_prob(tape, batch, &out.token_entropy);
  Tensor weighted = tape.mul(lp, adv_const(batch, adv));
  out.loss = tape.scale(masked_token_mean(tape, weighted, batch), -1.0);
  out.ratios.assign(batch.tokens.size(), 1.0);
  out.clip_mask.assign(batch.tokens.size(), 0);
  out.clip_fraction = 0.0;
  out.aggregate = out.loss.item();
  return out;
}

std::vector<double> importance_ratios(const Policy& policy,
                                      const PolicySnapshot& snap,
                                      const TokenBatch& batch) {
  Tape tape(false);
  Tensor r = ratio_tensor(tape, policy, snap, batch, nullptr);
  return std::vector<double>(r.value().begin(), r.value().end());
}

LossOutput ppo_clip_loss(Tape& tape, const Policy& policy,
                         const PolicySnapshot& snap, const TokenBatch& batch,
                         const std::vector<double>& adv, double clip_low,
                         double clip_high) {
  LossOutput out;
  Tensor r = ratio_tensor(tape, policy, snap, batch, &out.token_entropy);
  Tensor a = adv_const(batch, adv);
  Tensor clipped = tape.clip(r, 1.0 - clip_low, 1.0 + clip_high);
  Tensor objective = tape.minimum(tape.mul(r, a), tape.mul(clipped, a));
  out.loss = tape.scale(masked_token_mean(tape, objective, batch), -1.0);
  out.ratios.assign(r.value().begin(), r.value().end());
  out.clip_mask.assign(batch.tokens.size(), 0);
  int clipped_n = 0, masked_n = 0;
  for (std::size_t i = 0; i < out.ratios.size(); ++i) {
    if (!batch.response_mask[i]) continue;
    ++masked_n;
    // zero-gradient tokens: the min selects the flat clipped branch
    bool flat = (adv[i] > 0.0 && out.ratios[i] > 1.0 + clip_high) ||
                (adv[i] < 0.0 && out.ratios[i] < 1.0 - clip_low);
    if (flat) {
      out.clip_mask[i] = 1;
      ++clipped_n;
    }
  }
  out.clip_fraction = masked_n ? static_cast<double>(clipped_n) / masked_n : 0.0;
  out.aggregate = out.loss.item();
  return out;
}

LossOutput psft_loss(Tape& tape, const Policy& policy,
                     const PolicySnapshot& snap, const TokenBatch& batch,
                     double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  LossOutput out;
  Tensor r = ratio_tensor(tape, policy, snap, batch, &out.token_entropy);
  double lo = std::isinf(epsilon) ? -std::numeric_limits<double>::infinity()
                                  : 1.0 - epsilon;
  double hi = 1.0 + epsilon;  // +inf when epsilon is inf
  Tensor objective = tape.minimum(r, tape.clip(r, lo, hi));
  out.loss = tape.scale(masked_token_mean(tape, objective, batch), -1.0);
  out.ratios.assign(r.value().begin(), r.value().end());
  out.clip_mask.assign(batch.tokens.size(), 0);
  int clipped_n = 0, masked_n = 0;
  for (std::size_t i = 0; i < out.ratios.size(); ++i) {
    if (!batch.response_mask[i]) continue;
    ++masked_n;
    if (out.ratios[i] > hi) {
      out.clip_mask[i] = 1;
      ++clipped_n;
    }
  }
  out.clip_fraction = masked_n ? static_cast<double>(clipped_n) / masked_n : 0.0;
  out.aggregate = out.loss.item();
  return out;
}

LossOutput sft_kl_loss(Tape& tape, const Policy& policy,
                       const PolicySnapshot& ref, const TokenBatch& batch,
                       double kl_coef, bool kl_reverse) {
  if (!compatible(policy, ref.policy()))
    throw std::invalid_argument("reference/policy config mismatch");
  if (kl_coef < 0.0) throw std::invalid_argument("kl_coef must be >= 0");
  LossOutput out = sft_loss(tape, policy, batch);
  if (kl_coef == 0.0) return out;

  int offset = 0;
  Tensor lsm = policy.full_log_softmax(tape, batch, &offset);
  int Tp = batch.T - offset;
  int V = policy.vocab().size;
  Tensor lsm_ref;
  {
    ad::Tape ref_tape(false);
    int ref_offset = 0;
    lsm_ref = Tape::detach(
        ref.policy().full_log_softmax(ref_tape, batch, &ref_offset));
  }
  // per-position KL over the full vocabulary
  Tensor diff = tape.sub(lsm, lsm_ref);
  Tensor kl_rows;  // [B, Tp]
  if (!kl_reverse) {
    kl_rows = tape.row_sum(tape.mul(tape.exp(lsm), diff));
  } else {
    kl_rows = tape.row_sum(tape.scale(tape.mul(tape.exp(lsm_ref), diff), -1.0));
  }
  // mask over predicted positions (t >= offset), token-mean over masked count
  std::vector<double> m(static_cast<std::size_t>(batch.B) * Tp, 0.0);
  for (int b = 0; b < batch.B; ++b)
    for (int t = offset; t < batch.T; ++t)
      if (batch.masked(b, t))
        m[static_cast<std::size_t>(b) * Tp + t - offset] = 1.0;
  Tensor kl_mean = tape.scale(
      tape.sum(tape.mul(kl_rows, Tensor::constant({batch.B, Tp}, std::move(m)))),
      1.0 / batch.masked_count());
  out.loss = tape.add(out.loss, tape.scale(kl_mean, kl_coef));
  out.aggregate = out.loss.item();
  (void)V;
  return out;
}

GrpoResult grpo_advantages(const std::vector<std::vector<double>>& reward_groups,
                           double std_floor) {
  GrpoResult res;
  for (const auto& g : reward_groups) {
    if (g.size() < 2)
      throw std::invalid_argument("grpo_advantages: group size must be >= 2");
    double mean = 0.0;
    for (double r : g) mean += r;
    mean /= static_cast<double>(g.size());
    double var = 0.0;
    for (double r : g) var += (r - mean) * (r - mean);
    var /= static_cast<double>(g.size());
    double sd = std::sqrt(var);
    bool keep = sd > 0.0;  // dynamic sampling: drop zero-variance groups
    res.kept.push_back(keep ? 1 : 0);
    if (!keep) ++res.dropped_groups;
    for (double r : g)
      res.advantages.push_back(keep ? (r - mean) / (sd + std_floor) : 0.0);
  }
  return res;
}

namespace {

// Sequence-summed masked log-prob, one entry per row.
Tensor seq_log_prob(Tape& tape, const Policy& policy, const TokenBatch& batch) {
  Tensor lp = policy.log_prob(tape, batch);
  return tape.row_sum(tape.mul(lp, mask_const(batch)));
}

std::vector<double> seq_log_prob_ref(const PolicySnapshot& ref,
                                     const TokenBatch& batch) {
  std::vector<double> lp = ref.log_prob_values(batch);
  std::vector<double> out(batch.B, 0.0);
  for (int b = 0; b < batch.B; ++b)
    for (int t = 0; t < batch.T; ++t)
      if (batch.masked(b, t)) out[b] += lp[static_cast<std::size_t>(b) * batch.T + t];
  return out;
}

}  // namespace

DpoOutput dpo_loss(Tape& tape, const Policy& policy, const PolicySnapshot& ref,
                   const TokenBatch& chosen, const TokenBatch& rejected,
                   double beta) {
  if (chosen.B != rejected.B)
    throw std::invalid_argument("dpo_loss: chosen/rejected row-count mismatch");
  Tensor lp_c = seq_log_prob(tape, policy, chosen);
  Tensor lp_r = seq_log_prob(tape, policy, rejected);
  Tensor ref_c = Tensor::constant({chosen.B}, seq_log_prob_ref(ref, chosen));
  Tensor ref_r = Tensor::constant({rejected.B}, seq_log_prob_ref(ref, rejected));
  Tensor margin =
      tape.scale(tape.sub(tape.sub(lp_c, ref_c), tape.sub(lp_r, ref_r)), beta);
  DpoOutput out;
  out.loss = tape.scale(tape.mean(tape.logsigmoid(margin)), -1.0);
  out.chosen_reward.resize(chosen.B);
  out.rejected_reward.resize(chosen.B);
  for (int b = 0; b < chosen.B; ++b) {
    out.chosen_reward[b] = beta * (lp_c.value()[b] - ref_c.value()[b]);
    out.rejected_reward[b] = beta * (lp_r.value()[b] - ref_r.value()[b]);
  }
  return out;
}

}  // namespace proxlab
