// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#include "policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace proxlab {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

void VocabSpec::validate() const {
  if (size < 4) throw std::invalid_argument("VocabSpec: size must be >= 4");
  if (pad >= size || bos >= size || eos >= size || pad < 0 || bos < 0 || eos < 0)
    throw std::invalid_argument("VocabSpec: special ids out of range");
  if (pad == bos || pad == eos || bos == eos)
    throw std::invalid_argument("VocabSpec: special ids must be distinct");
}

void PolicyConfig::validate() const {
  if (arch == Arch::kTransformer) {
    if (layers < 1 || heads < 1 || d_model < 1 || d_ff < 1 || max_seq_len < 2)
      throw std::invalid_argument("PolicyConfig: invalid transformer dims");
    if (d_model % heads != 0)
      throw std::invalid_argument("PolicyConfig: d_model must divide by heads");
  }
  if (init_scale <= 0.0)
    throw std::invalid_argument("PolicyConfig: init_scale must be > 0");
}

TokenBatch TokenBatch::from_sequences(const std::vector<std::vector<int>>& seqs,
                                      const std::vector<int>& prompt_lens,
                                      const VocabSpec& vocab) {
  if (seqs.empty()) throw std::invalid_argument("TokenBatch: empty batch");
  if (prompt_lens.size() != seqs.size())
    throw std::invalid_argument("TokenBatch: prompt_len count mismatch");
  TokenBatch b;
  b.B = static_cast<int>(seqs.size());
  b.T = 0;
  for (const auto& s : seqs) b.T = std::max<int>(b.T, static_cast<int>(s.size()));
  b.tokens.assign(static_cast<std::size_t>(b.B) * b.T, vocab.pad);
  b.response_mask.assign(static_cast<std::size_t>(b.B) * b.T, 0);
  b.prompt_len = prompt_lens;
  for (int r = 0; r < b.B; ++r) {
    const auto& s = seqs[r];
    int pl = prompt_lens[r];
    if (pl < 1 || pl >= static_cast<int>(s.size()))
      throw std::invalid_argument(
          "TokenBatch: prompt_len must leave >=1 response token");
    for (std::size_t t = 0; t < s.size(); ++t) {
      b.tokens[static_cast<std::size_t>(r) * b.T + t] = s[t];
      if (static_cast<int>(t) >= pl)
        b.response_mask[static_cast<std::size_t>(r) * b.T + t] = 1;
    }
  }
  b.validate(vocab);
  return b;
}

int TokenBatch::masked_count() const {
  int c = 0;
  for (auto m : response_mask) c += m;
  return c;
}

void TokenBatch::validate(const VocabSpec& vocab) const {
  if (B < 1 || T < 1) throw std::invalid_argument("TokenBatch: empty");
  for (int t : tokens)
    if (t < 0 || t >= vocab.size)
      throw std::invalid_argument("TokenBatch: token out of vocab range");
  for (int r = 0; r < B; ++r) {
    bool any = false;
    for (int t = 0; t < T; ++t) {
      if (masked(r, t)) {
        any = true;
        if (t < prompt_len[r])
          throw std::invalid_argument("TokenBatch: mask true on prompt position");
      }
    }
    if (!any) throw std::invalid_argument("TokenBatch: row with empty mask");
  }
}

// ---------------------------------------------------------------------------

Policy Policy::init(const VocabSpec& vocab, const PolicyConfig& cfg, Rng& rng) {
  vocab.validate();
  cfg.validate();
  Policy p;
  p.vocab_ = vocab;
  p.cfg_ = cfg;
  Rng r = rng.split("policy-init");
  auto gauss = [&r, &cfg](Shape shape) {
    std::vector<double> d(static_cast<std::size_t>(ad::numel(shape)));
    for (auto& v : d) v = cfg.init_scale * r.next_gaussian();
    return Tensor::param(std::move(shape), std::move(d));
  };
  auto zeros = [](Shape shape) {
    std::vector<double> d(static_cast<std::size_t>(ad::numel(shape)), 0.0);
    return Tensor::param(std::move(shape), std::move(d));
  };
  auto ones = [](Shape shape) {
    std::vector<double> d(static_cast<std::size_t>(ad::numel(shape)), 1.0);
    return Tensor::param(std::move(shape), std::move(d));
  };
  std::int64_t V = vocab.size;
  if (cfg.arch == Arch::kBigram) {
    p.params_.emplace_back("table", gauss({V, V}));
    return p;
  }
  std::int64_t D = cfg.d_model, F = cfg.d_ff, L = cfg.max_seq_len;
  p.params_.emplace_back("tok_emb", gauss({V, D}));
  p.params_.emplace_back("pos_emb", gauss({L, D}));
  for (int l = 0; l < cfg.layers; ++l) {
    std::string pre = "l" + std::to_string(l) + ".";
    p.params_.emplace_back(pre + "ln1.g", ones({D}));
    p.params_.emplace_back(pre + "ln1.b", zeros({D}));
    p.params_.emplace_back(pre + "wq", gauss({D, D}));
    p.params_.emplace_back(pre + "bq", zeros({D}));
    p.params_.emplace_back(pre + "wk", gauss({D, D}));
    p.params_.emplace_back(pre + "bk", zeros({D}));
    p.params_.emplace_back(pre + "wv", gauss({D, D}));
    p.params_.emplace_back(pre + "bv", zeros({D}));
    p.params_.emplace_back(pre + "wo", gauss({D, D}));
    p.params_.emplace_back(pre + "bo", zeros({D}));
    p.params_.emplace_back(pre + "ln2.g", ones({D}));
    p.params_.emplace_back(pre + "ln2.b", zeros({D}));
    p.params_.emplace_back(pre + "fc1", gauss({D, F}));
    p.params_.emplace_back(pre + "b1", zeros({F}));
    p.params_.emplace_back(pre + "fc2", gauss({F, D}));
    p.params_.emplace_back(pre + "b2", zeros({D}));
  }
  p.params_.emplace_back("lnf.g", ones({D}));
  p.params_.emplace_back("lnf.b", zeros({D}));
  p.params_.emplace_back("out", gauss({D, V}));
  return p;
}

std::int64_t Policy::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void Policy::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

const Tensor& Policy::find(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw std::logic_error("Policy: missing parameter " + name);
}

Tensor Policy::next_token_logits(Tape& tape, const std::vector<int>& ids, int B,
                                 int Ti) const {
  std::int64_t V = vocab_.size;
  if (cfg_.arch == Arch::kBigram) {
    return tape.embed(find("table"), ids, {B, Ti});
  }
  if (Ti > cfg_.max_seq_len)
    throw std::invalid_argument("Policy: sequence longer than max_seq_len");
  std::int64_t D = cfg_.d_model;
  int H = cfg_.heads;
  std::int64_t dh = D / H;

  std::vector<int> pos(static_cast<std::size_t>(B) * Ti);
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < Ti; ++t) pos[static_cast<std::size_t>(b) * Ti + t] = t;
  Tensor x = tape.add(tape.embed(find("tok_emb"), ids, {B, Ti}),
                      tape.embed(find("pos_emb"), pos, {B, Ti}));

  // additive causal mask, shared across batch and heads
  std::vector<double> maskv(static_cast<std::size_t>(Ti) * Ti, 0.0);
  for (int i = 0; i < Ti; ++i)
    for (int j = i + 1; j < Ti; ++j)
      maskv[static_cast<std::size_t>(i) * Ti + j] = -1e9;
  Tensor causal = Tensor::constant({Ti, Ti}, std::move(maskv));

  for (int l = 0; l < cfg_.layers; ++l) {
    std::string pre = "l" + std::to_string(l) + ".";
    Tensor h = tape.layer_norm(x, find(pre + "ln1.g"), find(pre + "ln1.b"));
    auto heads_of = [&](const char* w, const char* b) {
      Tensor y = tape.add(tape.matmul(h, find(pre + w)), find(pre + b));
      return tape.transpose_12(tape.reshape(y, {B, Ti, H, dh}));  // [B,H,Ti,dh]
    };
    Tensor q = heads_of("wq", "bq");
    Tensor k = heads_of("wk", "bk");
    Tensor v = heads_of("wv", "bv");
    Tensor scores = tape.scale(tape.matmul(q, k, /*transpose_b=*/true),
                               1.0 / std::sqrt(static_cast<double>(dh)));
    scores = tape.add(scores, causal);
    Tensor probs = tape.exp(tape.log_softmax(scores));
    Tensor ctx = tape.matmul(probs, v);                 // [B,H,Ti,dh]
    ctx = tape.reshape(tape.transpose_12(ctx), {B, Ti, D});
    Tensor attn = tape.add(tape.matmul(ctx, find(pre + "wo")), find(pre + "bo"));
    x = tape.add(x, attn);
    Tensor m = tape.layer_norm(x, find(pre + "ln2.g"), find(pre + "ln2.b"));
    Tensor ff = tape.gelu(tape.add(tape.matmul(m, find(pre + "fc1")),
                                   find(pre + "b1")));
    ff = tape.add(tape.matmul(ff, find(pre + "fc2")), find(pre + "b2"));
    x = tape.add(x, ff);
  }
  x = tape.layer_norm(x, find("lnf.g"), find("lnf.b"));
  return tape.matmul(x, find("out"));  // [B, Ti, V]
}

namespace {

// For the bigram: id of the conditioning token at each position (bos at t=0).
std::vector<int> prev_ids(const TokenBatch& batch, int bos) {
  std::vector<int> prev(batch.tokens.size());
  for (int b = 0; b < batch.B; ++b)
    for (int t = 0; t < batch.T; ++t)
      prev[static_cast<std::size_t>(b) * batch.T + t] =
          t == 0 ? bos : batch.tok(b, t - 1);
  return prev;
}

std::vector<int> shifted_inputs(const TokenBatch& batch) {
  std::vector<int> ids(static_cast<std::size_t>(batch.B) * (batch.T - 1));
  for (int b = 0; b < batch.B; ++b)
    for (int t = 0; t + 1 < batch.T; ++t)
      ids[static_cast<std::size_t>(b) * (batch.T - 1) + t] = batch.tok(b, t);
  return ids;
}

}  // namespace

Tensor Policy::full_log_softmax(Tape& tape, const TokenBatch& batch,
                                int* offset) const {
  batch.validate(vocab_);
  if (cfg_.arch == Arch::kBigram) {
    *offset = 0;
    return tape.log_softmax(next_token_logits(
        tape, prev_ids(batch, vocab_.bos), batch.B, batch.T));
  }
  if (batch.T > cfg_.max_seq_len)
    throw std::invalid_argument("Policy: sequence longer than max_seq_len");
  if (batch.T == 1) throw std::invalid_argument("Policy: batch of length 1");
  *offset = 1;
  return tape.log_softmax(
      next_token_logits(tape, shifted_inputs(batch), batch.B, batch.T - 1));
}

namespace {

// -sum(p log p) per row from log-softmax values, prepended with `offset`
// zero placeholders per batch row.
std::vector<double> entropy_from_lsm(std::span<const double> lsm, int B, int Tp,
                                     int V, int offset) {
  std::vector<double> out(static_cast<std::size_t>(B) * (Tp + offset), 0.0);
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < Tp; ++t) {
      const double* row =
          lsm.data() + (static_cast<std::size_t>(b) * Tp + t) * V;
      double h = 0.0;
      for (int j = 0; j < V; ++j) h -= std::exp(row[j]) * row[j];
      out[static_cast<std::size_t>(b) * (Tp + offset) + t + offset] = h;
    }
  return out;
}

}  // namespace

Tensor Policy::log_prob(Tape& tape, const TokenBatch& batch,
                        std::vector<double>* token_entropy) const {
  int offset = 0;
  Tensor lsm = full_log_softmax(tape, batch, &offset);
  int Tp = batch.T - offset;
  if (token_entropy)
    *token_entropy =
        entropy_from_lsm(lsm.value(), batch.B, Tp, vocab_.size, offset);
  std::vector<int> targets(static_cast<std::size_t>(batch.B) * Tp);
  for (int b = 0; b < batch.B; ++b)
    for (int t = offset; t < batch.T; ++t)
      targets[static_cast<std::size_t>(b) * Tp + t - offset] = batch.tok(b, t);
  Tensor g = tape.gather(lsm, targets);
  return offset ? tape.pad_front_zero(g) : g;
}

Tensor Policy::entropy(Tape& tape, const TokenBatch& batch) const {
  batch.validate(vocab_);
  Tensor logits;
  bool padded;
  if (cfg_.arch == Arch::kBigram) {
    logits = next_token_logits(tape, prev_ids(batch, vocab_.bos), batch.B,
                               batch.T);
    padded = false;
  } else {
    if (batch.T == 1) throw std::invalid_argument("Policy: batch of length 1");
    logits = next_token_logits(tape, shifted_inputs(batch), batch.B,
                               batch.T - 1);
    padded = true;
  }
  Tensor lsm = tape.log_softmax(logits);
  Tensor ent = tape.scale(tape.row_sum(tape.mul(lsm, tape.exp(lsm))), -1.0);
  return padded ? tape.pad_front_zero(ent) : ent;
}

double Policy::masked_mean_entropy(const TokenBatch& batch) const {
  Tape tape(false);
  Tensor ent = entropy(tape, batch);
  double acc = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < batch.response_mask.size(); ++i)
    if (batch.response_mask[i]) {
      acc += ent.value()[i];
      ++n;
    }
  return n ? acc / n : 0.0;
}

TokenBatch Policy::sample(const std::vector<std::vector<int>>& prompts,
                          int max_new, double temperature,
                          std::uint64_t seed) const {
  if (prompts.empty()) throw std::invalid_argument("sample: no prompts");
  if (temperature < 0.0)
    throw std::invalid_argument("sample: temperature must be >= 0");
  if (max_new < 1) throw std::invalid_argument("sample: max_new must be >= 1");
  int B = static_cast<int>(prompts.size());
  std::vector<std::vector<int>> rows = prompts;
  std::vector<int> prompt_lens(B);
  for (int b = 0; b < B; ++b) {
    if (prompts[b].empty() || prompts[b][0] != vocab_.bos)
      throw std::invalid_argument("sample: prompts must start with bos");
    prompt_lens[b] = static_cast<int>(prompts[b].size());
  }
  Rng base(seed);
  std::vector<Rng> row_rng;
  row_rng.reserve(B);
  for (int b = 0; b < B; ++b)
    row_rng.push_back(base.split("sample-row").split(static_cast<std::uint64_t>(b)));
  std::vector<bool> done(B, false);
  std::int64_t V = vocab_.size;

  for (int step = 0; step < max_new; ++step) {
    bool all_done = true;
    for (int b = 0; b < B; ++b) all_done = all_done && done[b];
    if (all_done) break;
    int Ti = 0;
    for (int b = 0; b < B; ++b) Ti = std::max<int>(Ti, static_cast<int>(rows[b].size()));
    std::vector<int> ids(static_cast<std::size_t>(B) * Ti, vocab_.pad);
    for (int b = 0; b < B; ++b)
      std::copy(rows[b].begin(), rows[b].end(),
                ids.begin() + static_cast<std::size_t>(b) * Ti);
    Tape tape(false);
    Tensor logits = next_token_logits(tape, ids, B, Ti);
    for (int b = 0; b < B; ++b) {
      if (done[b]) continue;
      std::size_t off =
          (static_cast<std::size_t>(b) * Ti + rows[b].size() - 1) * V;
      const double* lg = logits.value().data() + off;
      int next;
      if (temperature == 0.0) {
        next = 0;
        for (int j = 1; j < V; ++j)
          if (lg[j] > lg[next]) next = j;
      } else {
        double m = lg[0];
        for (int j = 1; j < V; ++j) m = std::max(m, lg[j]);
        std::vector<double> w(static_cast<std::size_t>(V));
        for (int j = 0; j < V; ++j)
          w[j] = std::exp((lg[j] - m) / temperature);
        next = static_cast<int>(row_rng[b].sample_categorical(w));
      }
      rows[b].push_back(next);
      if (next == vocab_.eos) done[b] = true;
      if (cfg_.arch == Arch::kTransformer &&
          static_cast<int>(rows[b].size()) >= cfg_.max_seq_len)
        done[b] = true;
    }
  }
  return TokenBatch::from_sequences(rows, prompt_lens, vocab_);
}

PolicySnapshot Policy::snapshot() const { return PolicySnapshot(*this); }

Policy Policy::clone() const {
  Policy out;
  out.vocab_ = vocab_;
  out.cfg_ = cfg_;
  for (const auto& [name, t] : params_) {
    out.params_.emplace_back(
        name, Tensor::param(t.shape(), std::vector<double>(t.value().begin(),
                                                           t.value().end())));
  }
  return out;
}

PolicySnapshot::PolicySnapshot(const Policy& live) {
  frozen_.vocab_ = live.vocab_;
  frozen_.cfg_ = live.cfg_;
  for (const auto& [name, t] : live.params_) {
    frozen_.params_.emplace_back(
        name, Tensor::constant(t.shape(), std::vector<double>(
                                              t.value().begin(), t.value().end())));
  }
}

std::vector<double> PolicySnapshot::log_prob_values(const TokenBatch& batch) const {
  Tape tape(false);
  Tensor lp = frozen_.log_prob(tape, batch);
  return std::vector<double>(lp.value().begin(), lp.value().end());
}

}  // namespace proxlab
