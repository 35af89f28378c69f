// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "diagnostics/diagnostics.hpp"
#include "tasks/tasks.hpp"
#include "trainer/trainer.hpp"

namespace proxlab {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_keys(const json& j, const char* where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected object");
  for (const auto& [key, val] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw ConfigError(std::string(where) + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
  }
}

std::string require_string(const json& j, const char* key) {
  if (!j.contains(key))
    throw ConfigError(std::string("missing required key \"") + key + "\"");
  if (!j.at(key).is_string())
    throw ConfigError(std::string("\"") + key + "\" must be a string");
  return j.at(key).get<std::string>();
}

// ---- sub-config (de)serialization ------------------------------------------

TeacherSpec teacher_from_json(const json& j) {
  check_keys(j, "teacher",
             {"vocab_size", "mix_weight_a", "p_close", "p_stop", "max_digits",
              "max_seq_len", "markov_seed", "dpo_noise"});
  TeacherSpec s;
  s.vocab.size = get_or(j, "vocab_size", s.vocab.size);
  s.mix_weight_a = get_or(j, "mix_weight_a", s.mix_weight_a);
  s.p_close = get_or(j, "p_close", s.p_close);
  s.p_stop = get_or(j, "p_stop", s.p_stop);
  s.max_digits = get_or(j, "max_digits", s.max_digits);
  s.max_seq_len = get_or(j, "max_seq_len", s.max_seq_len);
  s.markov_seed = get_or(j, "markov_seed", s.markov_seed);
  s.dpo_noise = get_or(j, "dpo_noise", s.dpo_noise);
  return s;
}

json teacher_to_json(const TeacherSpec& s) {
  return {{"vocab_size", s.vocab.size}, {"mix_weight_a", s.mix_weight_a},
          {"p_close", s.p_close},       {"p_stop", s.p_stop},
          {"max_digits", s.max_digits}, {"max_seq_len", s.max_seq_len},
          {"markov_seed", s.markov_seed}, {"dpo_noise", s.dpo_noise}};
}

PolicyConfig policy_from_json(const json& j) {
  check_keys(j, "policy",
             {"arch", "layers", "heads", "d_model", "d_ff", "max_seq_len",
              "init_scale"});
  PolicyConfig c;
  std::string arch = get_or<std::string>(j, "arch", "bigram");
  if (arch == "bigram") c.arch = Arch::kBigram;
  else if (arch == "transformer") c.arch = Arch::kTransformer;
  else throw ConfigError("policy.arch must be bigram or transformer");
  c.layers = get_or(j, "layers", c.layers);
  c.heads = get_or(j, "heads", c.heads);
  c.d_model = get_or(j, "d_model", c.d_model);
  c.d_ff = get_or(j, "d_ff", c.d_ff);
  c.max_seq_len = get_or(j, "max_seq_len", c.max_seq_len);
  c.init_scale = get_or(j, "init_scale", c.init_scale);
  return c;
}

json policy_to_json(const PolicyConfig& c) {
  return {{"arch", c.arch == Arch::kBigram ? "bigram" : "transformer"},
          {"layers", c.layers},
          {"heads", c.heads},
          {"d_model", c.d_model},
          {"d_ff", c.d_ff},
          {"max_seq_len", c.max_seq_len},
          {"init_scale", c.init_scale}};
}

double epsilon_from_json(const json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "inf")
      return std::numeric_limits<double>::infinity();
    throw ConfigError("objective.epsilon: only \"inf\" is accepted as a string");
  }
  if (v.is_number()) return v.get<double>();
  throw ConfigError("objective.epsilon must be a number or \"inf\"");
}

ObjectiveConfig objective_from_json(const json& j) {
  check_keys(j, "objective",
             {"epsilon", "clip_low", "clip_high", "kl_coef", "kl_reverse",
              "dpo_beta", "advantage_std_floor"});
  ObjectiveConfig c;
  if (j.contains("epsilon")) c.epsilon = epsilon_from_json(j.at("epsilon"));
  c.clip_low = get_or(j, "clip_low", c.clip_low);
  c.clip_high = get_or(j, "clip_high", c.clip_high);
  c.kl_coef = get_or(j, "kl_coef", c.kl_coef);
  c.kl_reverse = get_or(j, "kl_reverse", c.kl_reverse);
  c.dpo_beta = get_or(j, "dpo_beta", c.dpo_beta);
  c.advantage_std_floor =
      get_or(j, "advantage_std_floor", c.advantage_std_floor);
  return c;
}

json objective_to_json(const ObjectiveConfig& c) {
  json eps;
  if (std::isinf(c.epsilon)) eps = "inf";
  else eps = c.epsilon;
  return {{"epsilon", eps},
          {"clip_low", c.clip_low},
          {"clip_high", c.clip_high},
          {"kl_coef", c.kl_coef},
          {"kl_reverse", c.kl_reverse},
          {"dpo_beta", c.dpo_beta},
          {"advantage_std_floor", c.advantage_std_floor}};
}

// Method-dependent defaults: lr (sft 1e-3, psft 3e-4), epochs (dpo 1).
TrainConfig train_from_json(const json& j, Method method) {
  check_keys(j, "train",
             {"train_batch", "mini_batch", "lr", "epochs", "warmup_epochs",
              "snapshot_refresh", "eval_every", "rollout_n", "rl_iterations",
              "prompts_per_iteration", "max_new_tokens", "temperature",
              "weight_decay"});
  TrainConfig c;
  c.method = method;
  if (method == Method::kPsft) c.lr = 3e-4;
  if (method == Method::kDpo) c.epochs = 1;
  c.train_batch = get_or(j, "train_batch", c.train_batch);
  c.mini_batch = get_or(j, "mini_batch", c.mini_batch);
  c.lr = get_or(j, "lr", c.lr);
  c.epochs = get_or(j, "epochs", c.epochs);
  c.warmup_epochs = get_or(j, "warmup_epochs", c.warmup_epochs);
  if (j.contains("snapshot_refresh"))
    c.snapshot_refresh =
        refresh_from_name(j.at("snapshot_refresh").get<std::string>());
  c.eval_every = get_or(j, "eval_every", c.eval_every);
  c.rollout_n = get_or(j, "rollout_n", c.rollout_n);
  c.rl_iterations = get_or(j, "rl_iterations", c.rl_iterations);
  c.prompts_per_iteration =
      get_or(j, "prompts_per_iteration", c.prompts_per_iteration);
  c.max_new_tokens = get_or(j, "max_new_tokens", c.max_new_tokens);
  c.temperature = get_or(j, "temperature", c.temperature);
  c.weight_decay = get_or(j, "weight_decay", c.weight_decay);
  return c;
}

json train_to_json(const TrainConfig& c) {
  return {{"train_batch", c.train_batch},
          {"mini_batch", c.mini_batch},
          {"lr", c.lr},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"snapshot_refresh", refresh_name(c.snapshot_refresh)},
          {"eval_every", c.eval_every},
          {"rollout_n", c.rollout_n},
          {"rl_iterations", c.rl_iterations},
          {"prompts_per_iteration", c.prompts_per_iteration},
          {"max_new_tokens", c.max_new_tokens},
          {"temperature", c.temperature},
          {"weight_decay", c.weight_decay}};
}

// ---- filesystem helpers ----------------------------------------------------

std::string output_root(const json& cfg) {
  if (cfg.contains("output_dir")) return cfg.at("output_dir").get<std::string>();
  if (const char* env = std::getenv("PROXLAB_OUTPUT_ROOT")) return env;
  return "runs";
}

fs::path fresh_run_dir(const json& cfg) {
  std::string run_id = require_string(cfg, "run_id");
  fs::path dir = fs::path(output_root(cfg)) / run_id;
  if (fs::exists(dir))
    throw ConfigError("run directory already exists (refusing to overwrite): " +
                      dir.string());
  fs::create_directories(dir);
  return dir;
}

void write_echo(const fs::path& run_dir, const std::string& command,
                const json& effective) {
  json echo = {{"command", command}, {"config", effective}};
  std::ofstream out(run_dir / "config.json");
  out << echo.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write config echo");
}

Policy load_checkpoint(const json& cfg) {
  std::string path = require_string(cfg, "checkpoint");
  if (!fs::exists(path)) throw MissingInputError("missing checkpoint: " + path);
  return Policy::load(path);
}

Corpus load_corpus_file(const fs::path& path) {
  if (!fs::exists(path))
    throw MissingInputError("missing corpus file: " + path.string());
  return Corpus::load(path.string());
}

// gen-data echoes its teacher spec; downstream commands read it back so the
// whole pipeline agrees on one teacher.
TeacherSpec teacher_for(const json& cfg) {
  if (cfg.contains("teacher")) return teacher_from_json(cfg.at("teacher"));
  if (cfg.contains("data_dir")) {
    fs::path echo = fs::path(cfg.at("data_dir").get<std::string>()) /
                    "config.json";
    if (fs::exists(echo)) {
      std::ifstream in(echo);
      json j = json::parse(in);
      if (j.contains("config") && j["config"].contains("teacher"))
        return teacher_from_json(j["config"]["teacher"]);
    }
  }
  return TeacherSpec{};
}

json eval_to_json(const EvalMetrics& m) {
  return {{"indomain_nll", m.indomain_nll},
          {"indomain_accuracy", m.indomain_accuracy},
          {"ood_nll", m.ood_nll}};
}

json final_summary(const RunResult& res, const fs::path& run_dir) {
  json s;
  s["run_dir"] = run_dir.string();
  s["steps"] = res.log.empty() ? 0 : res.log.back().step;
  for (auto it = res.log.rbegin(); it != res.log.rend(); ++it) {
    if (it->eval) {
      s["final_eval"] = eval_to_json(*it->eval);
      break;
    }
  }
  if (!res.log.empty()) {
    const auto& last = res.log.back();
    s["final_loss"] = last.loss;
    s["final_entropy"] = last.mean_entropy;
    if (last.mean_reward) s["final_mean_reward"] = *last.mean_reward;
    if (last.chosen_reward) s["final_chosen_reward"] = *last.chosen_reward;
    if (last.rejected_reward)
      s["final_rejected_reward"] = *last.rejected_reward;
  }
  return s;
}

// ---- commands --------------------------------------------------------------

json cmd_gen_data(const json& cfg) {
  check_keys(cfg, "gen-data",
             {"output_dir", "seed", "sizes", "dpo_pairs", "teacher"});
  TeacherSpec spec = cfg.contains("teacher")
                         ? teacher_from_json(cfg.at("teacher"))
                         : TeacherSpec{};
  spec.validate();
  CorporaSizes sizes;
  if (cfg.contains("sizes")) {
    const json& s = cfg.at("sizes");
    check_keys(s, "sizes",
               {"pretrain", "expert_train", "indomain_eval", "ood_eval"});
    sizes.pretrain = get_or(s, "pretrain", sizes.pretrain);
    sizes.expert_train = get_or(s, "expert_train", sizes.expert_train);
    sizes.indomain_eval = get_or(s, "indomain_eval", sizes.indomain_eval);
    sizes.ood_eval = get_or(s, "ood_eval", sizes.ood_eval);
  }
  std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 0);
  int n_pairs = get_or(cfg, "dpo_pairs", 128);

  fs::path dir = output_root(cfg);
  if (fs::exists(dir / "pretrain.txt"))
    throw ConfigError("data directory already populated (refusing to overwrite): " +
                      dir.string());
  fs::create_directories(dir);

  CorporaSet set = gen_corpora(spec, sizes, seed);
  set.pretrain.save((dir / "pretrain.txt").string());
  set.expert_train.save((dir / "expert_train.txt").string());
  set.indomain_eval.save((dir / "indomain_eval.txt").string());
  set.ood_eval.save((dir / "ood_eval.txt").string());
  DpoCorpus pairs = gen_dpo_pairs(spec, n_pairs, seed + 1);
  pairs.save((dir / "dpo_pairs.json").string());

  json effective = {{"output_dir", dir.string()},
                    {"seed", seed},
                    {"dpo_pairs", n_pairs},
                    {"sizes",
                     {{"pretrain", sizes.pretrain},
                      {"expert_train", sizes.expert_train},
                      {"indomain_eval", sizes.indomain_eval},
                      {"ood_eval", sizes.ood_eval}}},
                    {"teacher", teacher_to_json(spec)}};
  write_echo(dir, "gen-data", effective);
  return {{"data_dir", dir.string()},
          {"pretrain", sizes.pretrain},
          {"expert_train", sizes.expert_train},
          {"indomain_eval", sizes.indomain_eval},
          {"ood_eval", sizes.ood_eval},
          {"dpo_pairs", n_pairs},
          {"dpo_resampled_ties", pairs.resampled_ties}};
}

json cmd_pretrain(const json& cfg) {
  check_keys(cfg, "pretrain",
             {"data_dir", "output_dir", "run_id", "seed", "policy", "train",
              "teacher"});
  std::string data_dir = require_string(cfg, "data_dir");
  TeacherSpec spec = teacher_for(cfg);
  spec.validate();
  Corpus pretrain = load_corpus_file(fs::path(data_dir) / "pretrain.txt");
  Corpus indomain = load_corpus_file(fs::path(data_dir) / "indomain_eval.txt");
  Corpus ood = load_corpus_file(fs::path(data_dir) / "ood_eval.txt");

  PolicyConfig pcfg = cfg.contains("policy")
                          ? policy_from_json(cfg.at("policy"))
                          : PolicyConfig{};
  TrainConfig tcfg = train_from_json(
      cfg.contains("train") ? cfg.at("train") : json::object(),
      Method::kPretrain);
  tcfg.epochs = cfg.contains("train") && cfg.at("train").contains("epochs")
                    ? tcfg.epochs
                    : 15;
  tcfg.seed = get_or<std::uint64_t>(cfg, "seed", 0);

  fs::path run_dir = fresh_run_dir(cfg);
  json effective = {{"data_dir", data_dir},
                    {"output_dir", output_root(cfg)},
                    {"run_id", require_string(cfg, "run_id")},
                    {"seed", tcfg.seed},
                    {"policy", policy_to_json(pcfg)},
                    {"train", train_to_json(tcfg)},
                    {"teacher", teacher_to_json(spec)}};
  write_echo(run_dir, "pretrain", effective);

  Rng rng(tcfg.seed);
  Policy init = Policy::init(spec.vocab, pcfg, rng);
  EvalSets evals{&indomain, &ood, &spec};
  RunResult res = run_pretrain(init, pretrain, tcfg, evals, run_dir.string());
  export_metrics_csv(res.log, (run_dir / "metrics.csv").string());
  return final_summary(res, run_dir);
}

json cmd_finetune(const json& cfg) {
  check_keys(cfg, "finetune",
             {"data_dir", "checkpoint", "output_dir", "run_id", "seed",
              "method", "train", "objective", "teacher"});
  std::string data_dir = require_string(cfg, "data_dir");
  Method method = method_from_name(get_or<std::string>(cfg, "method", "psft"));
  if (method != Method::kSft && method != Method::kSftKl &&
      method != Method::kPsft)
    throw ConfigError("finetune method must be sft, sft_kl, or psft");
  TeacherSpec spec = teacher_for(cfg);
  spec.validate();
  Corpus expert = load_corpus_file(fs::path(data_dir) / "expert_train.txt");
  Corpus indomain = load_corpus_file(fs::path(data_dir) / "indomain_eval.txt");
  Corpus ood = load_corpus_file(fs::path(data_dir) / "ood_eval.txt");
  Policy init = load_checkpoint(cfg);

  TrainConfig tcfg = train_from_json(
      cfg.contains("train") ? cfg.at("train") : json::object(), method);
  tcfg.seed = get_or<std::uint64_t>(cfg, "seed", 0);
  tcfg.objective = cfg.contains("objective")
                       ? objective_from_json(cfg.at("objective"))
                       : ObjectiveConfig{};

  fs::path run_dir = fresh_run_dir(cfg);
  json effective = {{"data_dir", data_dir},
                    {"checkpoint", require_string(cfg, "checkpoint")},
                    {"output_dir", output_root(cfg)},
                    {"run_id", require_string(cfg, "run_id")},
                    {"seed", tcfg.seed},
                    {"method", method_name(method)},
                    {"train", train_to_json(tcfg)},
                    {"objective", objective_to_json(tcfg.objective)},
                    {"teacher", teacher_to_json(spec)}};
  write_echo(run_dir, "finetune", effective);

  EvalSets evals{&indomain, &ood, &spec};
  RunResult res = run_finetune(init, expert, tcfg, evals, run_dir.string());
  export_metrics_csv(res.log, (run_dir / "metrics.csv").string());
  return final_summary(res, run_dir);
}

json cmd_rl(const json& cfg) {
  check_keys(cfg, "rl",
             {"data_dir", "checkpoint", "output_dir", "run_id", "seed",
              "train", "objective", "teacher"});
  TeacherSpec spec = teacher_for(cfg);
  spec.validate();
  Policy init = load_checkpoint(cfg);
  TrainConfig tcfg = train_from_json(
      cfg.contains("train") ? cfg.at("train") : json::object(), Method::kGrpo);
  tcfg.seed = get_or<std::uint64_t>(cfg, "seed", 0);
  tcfg.objective = cfg.contains("objective")
                       ? objective_from_json(cfg.at("objective"))
                       : ObjectiveConfig{};
  tcfg.objective.kl_coef = 0.0;  // no KL penalty in the RL stage

  fs::path run_dir = fresh_run_dir(cfg);
  json effective = {{"checkpoint", require_string(cfg, "checkpoint")},
                    {"output_dir", output_root(cfg)},
                    {"run_id", require_string(cfg, "run_id")},
                    {"seed", tcfg.seed},
                    {"train", train_to_json(tcfg)},
                    {"objective", objective_to_json(tcfg.objective)},
                    {"teacher", teacher_to_json(spec)}};
  if (cfg.contains("data_dir")) effective["data_dir"] = cfg.at("data_dir");
  write_echo(run_dir, "rl", effective);

  RunResult res = run_rl(init, spec, tcfg, run_dir.string());
  export_metrics_csv(res.log, (run_dir / "metrics.csv").string());
  json s = final_summary(res, run_dir);
  double mean_reward = 0.0;
  int n = 0;
  for (const auto& r : res.log)
    if (r.mean_reward) {
      mean_reward += *r.mean_reward;
      ++n;
    }
  if (n) s["mean_reward_over_training"] = mean_reward / n;
  return s;
}

json cmd_dpo(const json& cfg) {
  check_keys(cfg, "dpo",
             {"checkpoint", "pairs", "output_dir", "run_id", "seed", "train",
              "objective"});
  Policy init = load_checkpoint(cfg);
  std::string pairs_path = require_string(cfg, "pairs");
  if (!fs::exists(pairs_path))
    throw MissingInputError("missing pair corpus: " + pairs_path);
  DpoCorpus pairs = DpoCorpus::load(pairs_path);

  TrainConfig tcfg = train_from_json(
      cfg.contains("train") ? cfg.at("train") : json::object(), Method::kDpo);
  tcfg.seed = get_or<std::uint64_t>(cfg, "seed", 0);
  tcfg.objective = cfg.contains("objective")
                       ? objective_from_json(cfg.at("objective"))
                       : ObjectiveConfig{};

  fs::path run_dir = fresh_run_dir(cfg);
  json effective = {{"checkpoint", require_string(cfg, "checkpoint")},
                    {"pairs", pairs_path},
                    {"output_dir", output_root(cfg)},
                    {"run_id", require_string(cfg, "run_id")},
                    {"seed", tcfg.seed},
                    {"train", train_to_json(tcfg)},
                    {"objective", objective_to_json(tcfg.objective)}};
  write_echo(run_dir, "dpo", effective);

  RunResult res = run_dpo(init, pairs, tcfg, run_dir.string());
  export_metrics_csv(res.log, (run_dir / "metrics.csv").string());
  return final_summary(res, run_dir);
}

json cmd_eval(const json& cfg) {
  check_keys(cfg, "eval", {"checkpoint", "data_dir", "output", "teacher"});
  std::string data_dir = require_string(cfg, "data_dir");
  TeacherSpec spec = teacher_for(cfg);
  spec.validate();
  Policy policy = load_checkpoint(cfg);
  Corpus indomain = load_corpus_file(fs::path(data_dir) / "indomain_eval.txt");
  Corpus ood = load_corpus_file(fs::path(data_dir) / "ood_eval.txt");
  EvalSets evals{&indomain, &ood, &spec};
  EvalMetrics m = evaluate(policy, evals);
  if (cfg.contains("output")) {
    std::string out_path = cfg.at("output").get<std::string>();
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out.precision(17);
    out << "metric,value\n";
    out << "indomain_nll," << m.indomain_nll << '\n';
    out << "indomain_accuracy," << m.indomain_accuracy << '\n';
    out << "ood_nll," << m.ood_nll << '\n';
  }
  return eval_to_json(m);
}

json cmd_report(const json& cfg) {
  check_keys(cfg, "report",
             {"run_dir", "quantity", "smooth_window", "top_k", "window_lo",
              "window_hi", "output_dir"});
  std::string run_dir = require_string(cfg, "run_dir");
  fs::path log_path = fs::path(run_dir) / "log.jsonl";
  if (!fs::exists(log_path))
    throw MissingInputError("missing run log: " + log_path.string());
  std::vector<RunLogRecord> log;
  {
    std::ifstream in(log_path);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) log.push_back(RunLogRecord::from_json(line));
  }
  fs::path out_dir = cfg.contains("output_dir")
                         ? fs::path(cfg.at("output_dir").get<std::string>())
                         : fs::path(run_dir);
  fs::create_directories(out_dir);
  int smooth = get_or(cfg, "smooth_window", 0);
  std::vector<std::string> quantities;
  if (cfg.contains("quantity"))
    quantities.push_back(cfg.at("quantity").get<std::string>());
  else
    quantities = {"entropy", "grad_norm", "clip_fraction", "eval"};
  json traces = json::object();
  for (const auto& q : quantities) {
    fs::path p = out_dir / ("trace_" + q + ".csv");
    trace_export(log, q, p.string(), smooth);
    traces[q] = p.string();
  }
  int lo = get_or(cfg, "window_lo", 1);
  int hi = get_or(cfg, "window_hi",
                  log.empty() ? 0 : log.back().step);
  int top_k = get_or(cfg, "top_k", 5);
  ClipReport rep = clip_report(log, lo, hi);
  json top = json::array();
  for (const auto& e : rep.top(top_k))
    top.push_back({{"token_id", e.token_id},
                   {"clip_count", e.clip_count},
                   {"occurrences", e.occurrences},
                   {"rate", e.rate}});
  json clip = {{"window_lo", lo},
               {"window_hi", hi},
               {"total_clips", rep.total_clips},
               {"total_tokens", rep.total_tokens},
               {"total_clip_fraction", rep.total_clip_fraction},
               {"top", top}};
  {
    std::ofstream out(out_dir / "clip_report.json");
    out << clip.dump(2) << '\n';
  }
  return {{"traces", traces},
          {"clip_report", (out_dir / "clip_report.json").string()},
          {"clip_top", top}};
}

json run_command_json(const std::string& command, const json& cfg);

json cmd_sweep(const json& cfg) {
  if (!cfg.contains("param") || !cfg.contains("values"))
    throw ConfigError("sweep requires \"param\" and \"values\"");
  std::string param = cfg.at("param").get<std::string>();
  if (param != "epsilon" && param != "method")
    throw ConfigError("sweep param must be epsilon or method");
  json values = cfg.at("values");
  if (!values.is_array() || values.empty())
    throw ConfigError("sweep values must be a nonempty array");
  std::string run_id = require_string(cfg, "run_id");

  fs::path sweep_dir = fs::path(output_root(cfg)) / run_id;
  if (fs::exists(sweep_dir))
    throw ConfigError("run directory already exists (refusing to overwrite): " +
                      sweep_dir.string());
  fs::create_directories(sweep_dir);

  json base = cfg;
  base.erase("param");
  base.erase("values");

  json rows = json::array();
  for (const auto& v : values) {
    json sub = base;
    std::string label;
    if (param == "epsilon") {
      sub["method"] = "psft";
      if (!sub.contains("objective")) sub["objective"] = json::object();
      sub["objective"]["epsilon"] = v;
      label = v.is_string() ? v.get<std::string>()
                            : json(v).dump();
    } else {
      sub["method"] = v.get<std::string>();
      label = v.get<std::string>();
    }
    sub["run_id"] = run_id + "/" + param + "_" + label;
    json summary = run_command_json("finetune", sub);
    json row = {{"value", v}, {"summary", summary}};
    rows.push_back(row);
  }

  // combined comparison CSV over final eval points
  fs::path csv_path = sweep_dir / "comparison.csv";
  {
    std::ofstream out(csv_path);
    out.precision(17);
    out << param
        << ",final_loss,final_entropy,indomain_nll,indomain_accuracy,ood_nll\n";
    for (const auto& row : rows) {
      const json& s = row["summary"];
      std::string label = row["value"].is_string()
                              ? row["value"].get<std::string>()
                              : row["value"].dump();
      out << label << ',' << s.value("final_loss", 0.0) << ','
          << s.value("final_entropy", 0.0) << ',';
      if (s.contains("final_eval")) {
        out << s["final_eval"].value("indomain_nll", 0.0) << ','
            << s["final_eval"].value("indomain_accuracy", 0.0) << ','
            << s["final_eval"].value("ood_nll", 0.0) << '\n';
      } else {
        out << ",,\n";
      }
    }
  }
  return {{"sweep_dir", sweep_dir.string()},
          {"comparison_csv", csv_path.string()},
          {"runs", rows}};
}

json run_command_json(const std::string& command, const json& cfg) {
  if (command == "gen-data") return cmd_gen_data(cfg);
  if (command == "pretrain") return cmd_pretrain(cfg);
  if (command == "finetune") return cmd_finetune(cfg);
  if (command == "rl") return cmd_rl(cfg);
  if (command == "dpo") return cmd_dpo(cfg);
  if (command == "eval") return cmd_eval(cfg);
  if (command == "report") return cmd_report(cfg);
  if (command == "sweep") return cmd_sweep(cfg);
  throw ConfigError("unknown command: " + command);
}

}  // namespace

CommandResult run_command(const std::string& command,
                          const std::string& config_json) {
  CommandResult res;
  json cfg;
  try {
    cfg = config_json.empty() ? json::object() : json::parse(config_json);
  } catch (const json::exception& e) {
    res.status = 2;
    res.error = std::string("config parse error: ") + e.what();
    return res;
  }
  try {
    res.summary_json = run_command_json(command, cfg).dump();
    res.status = 0;
  } catch (const ConfigError& e) {
    res.status = 2;
    res.error = e.what();
  } catch (const std::invalid_argument& e) {
    res.status = 2;
    res.error = e.what();
  } catch (const MissingInputError& e) {
    res.status = 3;
    res.error = e.what();
  } catch (const std::exception& e) {
    res.status = 4;
    res.error = e.what();
  }
  return res;
}

}  // namespace proxlab
