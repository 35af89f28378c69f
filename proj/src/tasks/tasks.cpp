// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#include "tasks/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace proxlab {

namespace {

using json = nlohmann::json;

constexpr double kLogFloor = -30.0;  // per-token penalty for impossible events

// ---- domain A: modular arithmetic chains -----------------------------------
//
// Response process given target t (running sum s, digits emitted c):
//   - c == max_digits: emit eos (prob 1)
//   - c >= 1 and s == t: emit eos w.p. p_stop, otherwise a digit (below)
//   - digit: if c == max_digits - 1 the closing digit (t - s) mod 10 is
//     forced; otherwise p(d) = p_close * [d == closing] + (1 - p_close) / 10
//   - expert form: each digit is followed by STEP and the running-sum digit,
//     both with probability 1

struct AState {
  int target = 0;
  int sum = 0;
  int count = 0;
};

double digit_prob(const TeacherSpec& spec, const AState& st, int d) {
  int closing = ((st.target - st.sum) % 10 + 10) % 10;
  if (st.count == spec.max_digits - 1) return d == closing ? 1.0 : 0.0;
  double base = (1.0 - spec.p_close) / 10.0;
  return d == closing ? spec.p_close + base : base;
}

// Probability that the process stops before the next digit. -1: eos illegal
// here; 1: eos forced.
double stop_prob(const TeacherSpec& spec, const AState& st) {
  if (st.count >= spec.max_digits) return 1.0;
  if (st.count >= 1 && st.sum == st.target) return spec.p_stop;
  return -1.0;
}

Sequence sample_domain_a_impl(const TeacherSpec& spec, Rng& rng, bool expert) {
  const VocabSpec& v = spec.vocab;
  AState st;
  st.target = static_cast<int>(rng.next_index(10));
  Sequence seq;
  seq.tokens = {v.bos, tok::kTgt, tok::digit(st.target)};
  seq.prompt_len = 3;
  for (;;) {
    double ps = stop_prob(spec, st);
    if (ps >= 1.0 || (ps > 0.0 && rng.next_double() < ps)) {
      seq.tokens.push_back(v.eos);
      return seq;
    }
    std::vector<double> probs(10);
    for (int d = 0; d < 10; ++d) probs[d] = digit_prob(spec, st, d);
    int d = static_cast<int>(rng.sample_categorical(probs));
    seq.tokens.push_back(tok::digit(d));
    st.sum = (st.sum + d) % 10;
    ++st.count;
    if (expert) {
      seq.tokens.push_back(tok::kStep);
      seq.tokens.push_back(tok::digit(st.sum));
    }
  }
}

// Walks tokens[1..] under the domain-A process, accumulating total
// log-likelihood; impossible tokens take the floor and advance heuristically.
void walk_domain_a(const TeacherSpec& spec, bool expert,
                   const std::vector<int>& tokens, double* total, int* count) {
  const VocabSpec& v = spec.vocab;
  *total = 0.0;
  *count = 0;
  std::size_t i = 1;  // skip bos
  auto penal = [&](std::size_t n) {
    *total += kLogFloor * static_cast<double>(n);
    *count += static_cast<int>(n);
  };
  if (i >= tokens.size() || tokens[i] != tok::kTgt) {
    penal(tokens.size() - i);
    return;
  }
  *count += 1;  // TGT, probability 1
  ++i;
  AState st;
  if (i >= tokens.size() || !tok::is_digit(tokens[i])) {
    penal(tokens.size() - i);
    return;
  }
  st.target = tok::digit_value(tokens[i]);
  *total += std::log(0.1);  // uniform target
  *count += 1;
  ++i;
  while (i < tokens.size()) {
    double ps = stop_prob(spec, st);
    int t = tokens[i];
    if (t == v.eos) {
      *total += ps > 0.0 ? std::log(ps) : kLogFloor;
      *count += 1;
      ++i;
      if (i < tokens.size()) penal(tokens.size() - i);  // trailing garbage
      return;
    }
    double cont = ps >= 1.0 ? kLogFloor : (ps > 0.0 ? std::log1p(-ps) : 0.0);
    if (!tok::is_digit(t)) {
      penal(1);
      ++i;
      continue;
    }
    int d = tok::digit_value(t);
    double pd = digit_prob(spec, st, d);
    *total += (pd > 0.0 ? std::log(pd) + cont : kLogFloor);
    *count += 1;
    ++i;
    st.sum = (st.sum + d) % 10;
    st.count = std::min(st.count + 1, spec.max_digits);
    if (expert) {
      if (i < tokens.size()) {
        if (tokens[i] == tok::kStep) *count += 1;  // probability 1
        else penal(1);
        ++i;
      }
      if (i < tokens.size()) {
        if (tokens[i] == tok::digit(st.sum)) *count += 1;  // probability 1
        else penal(1);
        ++i;
      }
    }
  }
}

// ---- domain B: frozen Markov chain over symbol tokens ----------------------

struct MarkovChain {
  std::vector<double> start;                // [S]
  std::vector<std::vector<double>> trans;   // [S][S]
  std::vector<double> stop;                 // per-symbol stop probability
};

MarkovChain build_chain(const TeacherSpec& spec) {
  const int S = tok::kNumSymbols;
  Rng rng(spec.markov_seed);
  MarkovChain c;
  auto softmax = [](std::vector<double> logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& x : logits) {
      x = std::exp(x - mx);
      z += x;
    }
    for (double& x : logits) x /= z;
    return logits;
  };
  std::vector<double> sl(S);
  for (auto& x : sl) x = 1.5 * rng.next_gaussian();
  c.start = softmax(sl);
  for (int i = 0; i < S; ++i) {
    std::vector<double> tl(S);
    for (auto& x : tl) x = 1.5 * rng.next_gaussian();
    c.trans.push_back(softmax(tl));
  }
  for (int i = 0; i < S; ++i) c.stop.push_back(0.08 + 0.24 * rng.next_double());
  return c;
}

Sequence sample_domain_b_impl(const TeacherSpec& spec, Rng& rng) {
  const VocabSpec& v = spec.vocab;
  MarkovChain c = build_chain(spec);
  Sequence seq;
  seq.tokens = {v.bos};
  seq.prompt_len = 1;
  int cur = static_cast<int>(rng.sample_categorical(c.start));
  seq.tokens.push_back(tok::kSymbol0 + cur);
  while (static_cast<int>(seq.tokens.size()) < spec.max_seq_len - 1) {
    if (rng.next_double() < c.stop[cur]) break;
    cur = static_cast<int>(rng.sample_categorical(c.trans[cur]));
    seq.tokens.push_back(tok::kSymbol0 + cur);
  }
  seq.tokens.push_back(v.eos);
  return seq;
}

void walk_domain_b(const TeacherSpec& spec, const std::vector<int>& tokens,
                   double* total, int* count) {
  const VocabSpec& v = spec.vocab;
  MarkovChain c = build_chain(spec);
  *total = 0.0;
  *count = 0;
  auto penal = [&](std::size_t n) {
    *total += kLogFloor * static_cast<double>(n);
    *count += static_cast<int>(n);
  };
  std::size_t i = 1;
  if (i >= tokens.size() || !tok::is_symbol(tokens[i])) {
    penal(tokens.size() - i);
    return;
  }
  int cur = tokens[i] - tok::kSymbol0;
  *total += std::log(c.start[cur]);
  *count += 1;
  ++i;
  while (i < tokens.size()) {
    int t = tokens[i];
    bool at_cap = static_cast<int>(i) >= spec.max_seq_len - 1;
    if (t == v.eos) {
      *total += at_cap ? 0.0 : std::log(c.stop[cur]);
      *count += 1;
      ++i;
      if (i < tokens.size()) penal(tokens.size() - i);
      return;
    }
    if (at_cap || !tok::is_symbol(t)) {
      penal(1);
      ++i;
      continue;
    }
    int nxt = t - tok::kSymbol0;
    *total += std::log1p(-c.stop[cur]) + std::log(c.trans[cur][nxt]);
    *count += 1;
    cur = nxt;
    ++i;
  }
}

void walk(const TeacherSpec& spec, Domain domain,
          const std::vector<int>& tokens, double* total, int* count) {
  switch (domain) {
    case Domain::kA:
      walk_domain_a(spec, false, tokens, total, count);
      return;
    case Domain::kAExpert:
      walk_domain_a(spec, true, tokens, total, count);
      return;
    case Domain::kB:
      walk_domain_b(spec, tokens, total, count);
      return;
  }
  throw std::logic_error("unknown domain");
}

}  // namespace

void TeacherSpec::validate() const {
  vocab.validate();
  if (vocab.size < tok::kSymbol0 + tok::kNumSymbols)
    throw std::invalid_argument("vocab too small for the token layout");
  if (!(mix_weight_a > 0.0 && mix_weight_a < 1.0))
    throw std::invalid_argument("mix_weight_a must be in (0, 1)");
  if (!(p_close > 0.0 && p_close < 1.0) || !(p_stop > 0.0 && p_stop < 1.0))
    throw std::invalid_argument("p_close and p_stop must be in (0, 1)");
  if (max_digits < 1) throw std::invalid_argument("max_digits must be >= 1");
  if (max_seq_len < 8) throw std::invalid_argument("max_seq_len too small");
  if (!(dpo_noise >= 0.0 && dpo_noise < 1.0))
    throw std::invalid_argument("dpo_noise must be in [0, 1)");
  // worst-case expert sequence must fit
  if (3 + 3 * max_digits + 1 > max_seq_len)
    throw std::invalid_argument("max_digits too large for max_seq_len");
}

Sequence sample_domain_a(const TeacherSpec& spec, Rng& rng, bool expert) {
  return sample_domain_a_impl(spec, rng, expert);
}

Sequence sample_domain_b(const TeacherSpec& spec, Rng& rng) {
  return sample_domain_b_impl(spec, rng);
}

bool validate_domain_a(const TeacherSpec& spec, const std::vector<int>& tokens) {
  const VocabSpec& v = spec.vocab;
  if (tokens.size() < 5) return false;
  if (tokens[0] != v.bos || tokens[1] != tok::kTgt) return false;
  if (!tok::is_digit(tokens[2])) return false;
  if (tokens.back() != v.eos) return false;
  int target = tok::digit_value(tokens[2]);
  std::vector<int> body(tokens.begin() + 3, tokens.end() - 1);
  if (body.empty()) return false;
  bool expert = std::find(body.begin(), body.end(), tok::kStep) != body.end();
  int sum = 0, count = 0;
  if (expert) {
    if (body.size() % 3 != 0) return false;
    for (std::size_t i = 0; i < body.size(); i += 3) {
      if (!tok::is_digit(body[i]) || body[i + 1] != tok::kStep) return false;
      sum = (sum + tok::digit_value(body[i])) % 10;
      if (body[i + 2] != tok::digit(sum)) return false;
      ++count;
    }
  } else {
    for (int t : body) {
      if (!tok::is_digit(t)) return false;
      sum = (sum + tok::digit_value(t)) % 10;
      ++count;
    }
  }
  return count >= 1 && count <= spec.max_digits && sum == target;
}

bool validate_domain_b(const TeacherSpec& spec, const std::vector<int>& tokens) {
  const VocabSpec& v = spec.vocab;
  if (tokens.size() < 3 ||
      static_cast<int>(tokens.size()) > spec.max_seq_len)
    return false;
  if (tokens.front() != v.bos || tokens.back() != v.eos) return false;
  for (std::size_t i = 1; i + 1 < tokens.size(); ++i)
    if (!tok::is_symbol(tokens[i])) return false;
  return true;
}

bool expert_response_valid(const TeacherSpec& spec,
                           const std::vector<int>& tokens, int prompt_len) {
  if (prompt_len != 3) return false;
  if (tokens.size() < 4) return false;
  if (tokens[0] != spec.vocab.bos || tokens[1] != tok::kTgt ||
      !tok::is_digit(tokens[2]))
    return false;
  // require the expert (STEP-marked) form, not the plain one
  if (std::find(tokens.begin() + 3, tokens.end(), tok::kStep) == tokens.end())
    return false;
  return validate_domain_a(spec, tokens);
}

double teacher_log_likelihood(const TeacherSpec& spec, Domain domain,
                              const Sequence& seq) {
  double total = 0.0;
  int count = 0;
  walk(spec, domain, seq.tokens, &total, &count);
  if (count == 0) return kLogFloor;
  return total / count;
}

Policy domain_b_teacher_policy(const TeacherSpec& spec) {
  spec.validate();
  MarkovChain c = build_chain(spec);
  PolicyConfig cfg;
  cfg.arch = Arch::kBigram;
  cfg.init_scale = 1e-12;  // overwritten below
  cfg.max_seq_len = spec.max_seq_len;
  Rng rng(0);
  Policy p = Policy::init(spec.vocab, cfg, rng);
  auto table = p.params()[0].second.mutable_value();
  const int V = spec.vocab.size;
  const double kNeg = -1e9;
  std::fill(table.begin(), table.end(), kNeg);
  // unreachable rows: keep a defined distribution (all mass on eos)
  for (int row = 0; row < V; ++row) table[row * V + spec.vocab.eos] = 0.0;
  for (int s = 0; s < tok::kNumSymbols; ++s) {
    double* brow = table.data() + static_cast<std::size_t>(spec.vocab.bos) * V;
    brow[tok::kSymbol0 + s] = std::log(c.start[s]);
    double* row = table.data() + static_cast<std::size_t>(tok::kSymbol0 + s) * V;
    row[spec.vocab.eos] = std::log(c.stop[s]);
    for (int s2 = 0; s2 < tok::kNumSymbols; ++s2)
      row[tok::kSymbol0 + s2] =
          std::log1p(-c.stop[s]) + std::log(c.trans[s][s2]);
  }
  // bos row: no eos mass
  table[static_cast<std::size_t>(spec.vocab.bos) * V + spec.vocab.eos] = kNeg;
  return p;
}

int reward(const std::vector<int>& completion, int target) {
  int sum = 0, digits = 0;
  for (int t : completion) {
    if (t == 2) {  // eos: everything after is padding
      return (digits >= 1 && sum % 10 == target) ? 1 : 0;
    }
    if (!tok::is_digit(t)) return 0;
    sum += tok::digit_value(t);
    ++digits;
  }
  return 0;  // never terminated
}

std::vector<std::vector<int>> reward_prompts(const TeacherSpec& spec, int n,
                                             std::uint64_t seed) {
  Rng rng = Rng(seed).split("reward_prompts");
  std::vector<std::vector<int>> prompts;
  prompts.reserve(n);
  for (int i = 0; i < n; ++i) {
    int t = static_cast<int>(rng.next_index(10));
    prompts.push_back({spec.vocab.bos, tok::kTgt, tok::digit(t)});
  }
  return prompts;
}

CorporaSet gen_corpora(const TeacherSpec& spec, const CorporaSizes& sizes,
                       std::uint64_t seed) {
  spec.validate();
  if (sizes.pretrain <= 0 || sizes.expert_train <= 0 ||
      sizes.indomain_eval <= 0 || sizes.ood_eval <= 0)
    throw std::invalid_argument("corpus sizes must be positive");
  Rng root(seed);
  CorporaSet set;

  {
    Rng rng = root.split("pretrain");
    set.pretrain = {"pretrain", "mix", seed, {}};
    for (int i = 0; i < sizes.pretrain; ++i) {
      Sequence s = rng.next_double() < spec.mix_weight_a
                       ? sample_domain_a(spec, rng, false)
                       : sample_domain_b(spec, rng);
      s.prompt_len = 1;  // pretraining trains on every position
      set.pretrain.seqs.push_back(std::move(s));
    }
  }
  {
    Rng rng = root.split("expert_train");
    set.expert_train = {"expert_train", "A_expert", seed, {}};
    for (int i = 0; i < sizes.expert_train; ++i)
      set.expert_train.seqs.push_back(sample_domain_a(spec, rng, true));
  }
  {
    Rng rng = root.split("indomain_eval");
    set.indomain_eval = {"indomain_eval", "A_expert", seed, {}};
    for (int i = 0; i < sizes.indomain_eval; ++i)
      set.indomain_eval.seqs.push_back(sample_domain_a(spec, rng, true));
  }
  {
    Rng rng = root.split("ood_eval");
    set.ood_eval = {"ood_eval", "B", seed, {}};
    for (int i = 0; i < sizes.ood_eval; ++i)
      set.ood_eval.seqs.push_back(sample_domain_b(spec, rng));
  }
  return set;
}

void Corpus::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& s : seqs) {
    out << s.prompt_len;
    for (int t : s.tokens) out << ' ' << t;
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
  json meta = {{"split", split},
               {"domain", domain},
               {"seed", seed},
               {"size", seqs.size()}};
  std::ofstream mo(path + ".meta.json");
  mo << meta.dump(2) << '\n';
  if (!mo) throw std::runtime_error("write failed: " + path + ".meta.json");
}

Corpus Corpus::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  Corpus c;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Sequence s;
    if (!(ls >> s.prompt_len)) throw std::runtime_error("bad corpus line");
    int t;
    while (ls >> t) s.tokens.push_back(t);
    if (s.tokens.empty()) throw std::runtime_error("bad corpus line");
    c.seqs.push_back(std::move(s));
  }
  std::ifstream mi(path + ".meta.json");
  if (mi) {
    json meta = json::parse(mi);
    c.split = meta.value("split", "");
    c.domain = meta.value("domain", "");
    c.seed = meta.value("seed", 0ULL);
  }
  return c;
}

namespace {

// Expert-process sample with per-token corruption; used only for DPO pairs.
std::vector<int> sample_noised_completion(const TeacherSpec& spec, Rng& rng,
                                          int target) {
  const VocabSpec& v = spec.vocab;
  AState st;
  st.target = target;
  std::vector<int> out;
  auto emit = [&](int planned) {
    if (spec.dpo_noise > 0.0 && rng.next_double() < spec.dpo_noise) {
      // uniform over digits, STEP, eos
      std::size_t k = rng.next_index(12);
      if (k < 10) return tok::digit(static_cast<int>(k));
      return k == 10 ? tok::kStep : v.eos;
    }
    return planned;
  };
  int cap = spec.max_seq_len - 4;  // leave room for prompt + eos
  while (static_cast<int>(out.size()) < cap) {
    double ps = stop_prob(spec, st);
    if (ps >= 1.0 || (ps > 0.0 && rng.next_double() < ps)) {
      out.push_back(emit(v.eos));
      if (out.back() == v.eos) return out;
      continue;
    }
    std::vector<double> probs(10);
    for (int d = 0; d < 10; ++d) probs[d] = digit_prob(spec, st, d);
    int d = static_cast<int>(rng.sample_categorical(probs));
    int tk = emit(tok::digit(d));
    out.push_back(tk);
    if (tk == v.eos) return out;
    if (tok::is_digit(tk)) {
      st.sum = (st.sum + tok::digit_value(tk)) % 10;
      st.count = std::min(st.count + 1, spec.max_digits);
    }
    int planned_step = emit(tok::kStep);
    out.push_back(planned_step);
    if (planned_step == v.eos) return out;
    int planned_sum = emit(tok::digit(st.sum));
    out.push_back(planned_sum);
    if (planned_sum == v.eos) return out;
  }
  out.push_back(v.eos);
  return out;
}

double total_expert_ll(const TeacherSpec& spec, const std::vector<int>& prompt,
                       const std::vector<int>& completion) {
  Sequence s;
  s.tokens = prompt;
  s.tokens.insert(s.tokens.end(), completion.begin(), completion.end());
  s.prompt_len = static_cast<int>(prompt.size());
  double total = 0.0;
  int count = 0;
  walk_domain_a(spec, true, s.tokens, &total, &count);
  return total;
}

}  // namespace

DpoCorpus gen_dpo_pairs(const TeacherSpec& spec, int size, std::uint64_t seed) {
  spec.validate();
  if (size <= 0) throw std::invalid_argument("size must be positive");
  Rng rng = Rng(seed).split("dpo_pairs");
  DpoCorpus out;
  out.seed = seed;
  for (int i = 0; i < size; ++i) {
    int target = static_cast<int>(rng.next_index(10));
    std::vector<int> prompt = {spec.vocab.bos, tok::kTgt, tok::digit(target)};
    for (;;) {
      std::vector<int> a = sample_noised_completion(spec, rng, target);
      std::vector<int> b = sample_noised_completion(spec, rng, target);
      double sa = total_expert_ll(spec, prompt, a);
      double sb = total_expert_ll(spec, prompt, b);
      if (sa == sb) {
        ++out.resampled_ties;
        continue;
      }
      DpoPair p;
      p.prompt = prompt;
      p.chosen = sa > sb ? a : b;
      p.rejected = sa > sb ? b : a;
      p.chosen_score = std::max(sa, sb);
      p.rejected_score = std::min(sa, sb);
      out.pairs.push_back(std::move(p));
      break;
    }
  }
  return out;
}

void DpoCorpus::save(const std::string& path) const {
  json root;
  root["seed"] = seed;
  root["resampled_ties"] = resampled_ties;
  root["pairs"] = json::array();
  for (const auto& p : pairs)
    root["pairs"].push_back({{"prompt", p.prompt},
                             {"chosen", p.chosen},
                             {"rejected", p.rejected},
                             {"chosen_score", p.chosen_score},
                             {"rejected_score", p.rejected_score}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << root.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

DpoCorpus DpoCorpus::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json root = json::parse(in);
  DpoCorpus c;
  c.seed = root.value("seed", 0ULL);
  c.resampled_ties = root.value("resampled_ties", 0);
  for (const auto& p : root["pairs"]) {
    DpoPair pair;
    pair.prompt = p["prompt"].get<std::vector<int>>();
    pair.chosen = p["chosen"].get<std::vector<int>>();
    pair.rejected = p["rejected"].get<std::vector<int>>();
    pair.chosen_score = p["chosen_score"].get<double>();
    pair.rejected_score = p["rejected_score"].get<double>();
    c.pairs.push_back(std::move(pair));
  }
  return c;
}

}  // namespace proxlab
