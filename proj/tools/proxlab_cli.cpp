// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Parses flags into the JSON config of the command
// layer and drives it through the shared library's C API. Flags override
// values from --config; every training run echoes its effective config, and
// `replay` reruns such an echo under a new run id.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "proxlab/proxlab.h"

namespace {

using json = nlohmann::json;

int execute(const std::string& command, const json& cfg) {
  proxlab_job* job = nullptr;
  std::string cfg_str = cfg.dump();
  proxlab_status st = proxlab_job_create(command.c_str(), cfg_str.c_str(), &job);
  if (st != PROXLAB_OK) {
    std::fprintf(stderr, "error: failed to create job\n");
    return static_cast<int>(st);
  }
  st = proxlab_job_run(job);
  if (st == PROXLAB_OK) {
    std::printf("%s\n", proxlab_job_summary_json(job));
  } else {
    std::fprintf(stderr, "error: %s\n", proxlab_job_error(job));
  }
  proxlab_job_free(job);
  return static_cast<int>(st);
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  return json::parse(in);
}

// Sets cfg at a (possibly nested) json-pointer path when the flag was given.
template <typename T>
void set_if(const CLI::Option* opt, json& cfg, const char* ptr, const T& val) {
  if (opt && opt->count()) cfg[json::json_pointer(ptr)] = val;
}

struct CommonState {
  std::string config_file;
  std::string output_dir;
};

void add_common(CLI::App* sub, CommonState& st, json& cfg) {
  sub->add_option("--config", st.config_file,
                  "JSON config file; flags override its values");
  auto* out = sub->add_option(
      "--output-dir", st.output_dir,
      "output root (default: $PROXLAB_OUTPUT_ROOT or ./runs)");
  sub->parse_complete_callback([sub, &st, &cfg, out]() {
    if (!st.config_file.empty()) {
      json base = load_json_file(st.config_file);
      base.merge_patch(cfg);  // flag values win
      cfg = std::move(base);
    }
    set_if(out, cfg, "/output_dir", st.output_dir);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"proxlab: desk-scale fine-tuning laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", []() {
    return std::string(proxlab_version());
  });

  json cfg = json::object();
  CommonState common;
  std::string command;

  // gen-data ----------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("gen-data", "generate the synthetic corpora");
    static std::uint64_t seed = 0;
    static int pretrain = 256, expert = 256, indomain = 64, ood = 64,
               dpo_pairs = 128, vocab = 32, max_digits = 6, max_seq_len = 64;
    static double mix_a = 0.5, p_close = 0.4, p_stop = 0.6, dpo_noise = 0.15;
    static std::uint64_t markov_seed = 1234;
    auto* o_seed = sub->add_option("--seed", seed, "corpus seed (default 0)");
    auto* o_pre = sub->add_option("--pretrain-size", pretrain, "default 256");
    auto* o_exp = sub->add_option("--expert-size", expert, "default 256");
    auto* o_ind = sub->add_option("--indomain-eval-size", indomain, "default 64");
    auto* o_ood = sub->add_option("--ood-eval-size", ood, "default 64");
    auto* o_dpo = sub->add_option("--dpo-pairs", dpo_pairs, "default 128");
    auto* o_voc = sub->add_option("--vocab-size", vocab, "default 32");
    auto* o_mix = sub->add_option("--mix-weight-a", mix_a,
                                  "domain-A share of pretrain (default 0.5)");
    auto* o_pc = sub->add_option("--p-close", p_close, "default 0.4");
    auto* o_ps = sub->add_option("--p-stop", p_stop, "default 0.6");
    auto* o_md = sub->add_option("--max-digits", max_digits, "default 6");
    auto* o_ms = sub->add_option("--max-seq-len", max_seq_len, "default 64");
    auto* o_mk = sub->add_option("--markov-seed", markov_seed, "default 1234");
    auto* o_dn = sub->add_option("--dpo-noise", dpo_noise, "default 0.15");
    add_common(sub, common, cfg);
    sub->callback([=, &cfg, &command]() {
      command = "gen-data";
      set_if(o_seed, cfg, "/seed", seed);
      set_if(o_pre, cfg, "/sizes/pretrain", pretrain);
      set_if(o_exp, cfg, "/sizes/expert_train", expert);
      set_if(o_ind, cfg, "/sizes/indomain_eval", indomain);
      set_if(o_ood, cfg, "/sizes/ood_eval", ood);
      set_if(o_dpo, cfg, "/dpo_pairs", dpo_pairs);
      set_if(o_voc, cfg, "/teacher/vocab_size", vocab);
      set_if(o_mix, cfg, "/teacher/mix_weight_a", mix_a);
      set_if(o_pc, cfg, "/teacher/p_close", p_close);
      set_if(o_ps, cfg, "/teacher/p_stop", p_stop);
      set_if(o_md, cfg, "/teacher/max_digits", max_digits);
      set_if(o_ms, cfg, "/teacher/max_seq_len", max_seq_len);
      set_if(o_mk, cfg, "/teacher/markov_seed", markov_seed);
      set_if(o_dn, cfg, "/teacher/dpo_noise", dpo_noise);
    });
  }

  // pretrain ----------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("pretrain", "train a policy on the mixture");
    static std::string data_dir, run_id, arch = "bigram";
    static std::uint64_t seed = 0;
    static int layers = 2, heads = 2, d_model = 64, d_ff = 256, train_batch = 32,
               mini_batch = 8, epochs = 15, eval_every = 0;
    static double init_scale = 0.02, lr = 1e-3, weight_decay = 0.1;
    sub->add_option("--data-dir", data_dir, "gen-data output directory")
        ->required();
    sub->add_option("--run-id", run_id, "run identifier")->required();
    auto* o_seed = sub->add_option("--seed", seed, "default 0");
    auto* o_arch = sub->add_option("--arch", arch, "bigram|transformer (default bigram)");
    auto* o_lay = sub->add_option("--layers", layers, "default 2");
    auto* o_hd = sub->add_option("--heads", heads, "default 2");
    auto* o_dm = sub->add_option("--d-model", d_model, "default 64");
    auto* o_dff = sub->add_option("--d-ff", d_ff, "default 256");
    auto* o_is = sub->add_option("--init-scale", init_scale, "default 0.02");
    auto* o_tb = sub->add_option("--train-batch", train_batch, "default 32");
    auto* o_mb = sub->add_option("--mini-batch", mini_batch, "default 8");
    auto* o_lr = sub->add_option("--lr", lr, "default 1e-3");
    auto* o_ep = sub->add_option("--epochs", epochs, "default 15");
    auto* o_ev = sub->add_option("--eval-every", eval_every,
                                 "steps between evals; 0 = per epoch");
    auto* o_wd = sub->add_option("--weight-decay", weight_decay, "default 0.1");
    add_common(sub, common, cfg);
    sub->callback([=, &cfg, &command]() {
      command = "pretrain";
      cfg["data_dir"] = data_dir;
      cfg["run_id"] = run_id;
      set_if(o_seed, cfg, "/seed", seed);
      set_if(o_arch, cfg, "/policy/arch", arch);
      set_if(o_lay, cfg, "/policy/layers", layers);
      set_if(o_hd, cfg, "/policy/heads", heads);
      set_if(o_dm, cfg, "/policy/d_model", d_model);
      set_if(o_dff, cfg, "/policy/d_ff", d_ff);
      set_if(o_is, cfg, "/policy/init_scale", init_scale);
      set_if(o_tb, cfg, "/train/train_batch", train_batch);
      set_if(o_mb, cfg, "/train/mini_batch", mini_batch);
      set_if(o_lr, cfg, "/train/lr", lr);
      set_if(o_ep, cfg, "/train/epochs", epochs);
      set_if(o_ev, cfg, "/train/eval_every", eval_every);
      set_if(o_wd, cfg, "/train/weight_decay", weight_decay);
    });
  }

  // finetune ----------------------------------------------------------------
  {
    auto* sub = app.add_subcommand(
        "finetune", "SFT / SFT-KL / PSFT fine-tuning from a checkpoint");
    static std::string data_dir, run_id, checkpoint, method = "psft",
                       epsilon = "0.28", refresh = "per_train_batch";
    static std::uint64_t seed = 0;
    static int train_batch = 32, mini_batch = 8, epochs = 10, warmup = 1,
               eval_every = 0;
    static double lr = 0.0, kl_coef = 0.5, weight_decay = 0.1;
    sub->add_option("--data-dir", data_dir, "gen-data output directory")
        ->required();
    sub->add_option("--checkpoint", checkpoint, "pretrained checkpoint")
        ->required();
    sub->add_option("--run-id", run_id, "run identifier")->required();
    auto* o_m = sub->add_option("--method", method,
                                "sft|sft_kl|psft (default psft)");
    auto* o_eps = sub->add_option(
        "--epsilon", epsilon, "clip half-width, number or inf (default 0.28)");
    auto* o_wu = sub->add_option("--warmup-epochs", warmup,
                                 "plain-SFT epochs before clipping (default 1)");
    auto* o_sr = sub->add_option(
        "--snapshot-refresh", refresh,
        "per_train_batch|per_step|per_epoch (default per_train_batch)");
    auto* o_kl = sub->add_option("--kl-coef", kl_coef,
                                 "sft_kl penalty weight (default 0.5)");
    auto* o_seed = sub->add_option("--seed", seed, "default 0");
    auto* o_tb = sub->add_option("--train-batch", train_batch, "default 32");
    auto* o_mb = sub->add_option("--mini-batch", mini_batch, "default 8");
    auto* o_lr = sub->add_option("--lr", lr,
                                 "default: sft/sft_kl 1e-3, psft 3e-4");
    auto* o_ep = sub->add_option("--epochs", epochs, "default 10");
    auto* o_ev = sub->add_option("--eval-every", eval_every,
                                 "steps between evals; 0 = per epoch");
    auto* o_wd = sub->add_option("--weight-decay", weight_decay, "default 0.1");
    add_common(sub, common, cfg);
    sub->callback([=, &cfg, &command]() {
      command = "finetune";
      cfg["data_dir"] = data_dir;
      cfg["checkpoint"] = checkpoint;
      cfg["run_id"] = run_id;
      set_if(o_m, cfg, "/method", method);
      if (o_eps->count()) {
        if (epsilon == "inf")
          cfg[json::json_pointer("/objective/epsilon")] = "inf";
        else
          cfg[json::json_pointer("/objective/epsilon")] = std::stod(epsilon);
      }
      set_if(o_wu, cfg, "/train/warmup_epochs", warmup);
      set_if(o_sr, cfg, "/train/snapshot_refresh", refresh);
      set_if(o_kl, cfg, "/objective/kl_coef", kl_coef);
      set_if(o_seed, cfg, "/seed", seed);
      set_if(o_tb, cfg, "/train/train_batch", train_batch);
      set_if(o_mb, cfg, "/train/mini_batch", mini_batch);
      set_if(o_lr, cfg, "/train/lr", lr);
      set_if(o_ep, cfg, "/train/epochs", epochs);
      set_if(o_ev, cfg, "/train/eval_every", eval_every);
      set_if(o_wd, cfg, "/train/weight_decay", weight_decay);
    });
  }

  // rl ----------------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("rl", "GRPO-style RL on the reward task");
    static std::string run_id, checkpoint, data_dir;
    static std::uint64_t seed = 0;
    static int rollout_n = 8, iterations = 20, prompts = 16, max_new = 24,
               mini_batch = 8;
    static double temperature = 1.0, lr = 1e-3, clip_low = 0.2,
                  clip_high = 0.28;
    sub->add_option("--checkpoint", checkpoint, "starting checkpoint")
        ->required();
    sub->add_option("--run-id", run_id, "run identifier")->required();
    auto* o_dd = sub->add_option("--data-dir", data_dir,
                                 "optional; reuses gen-data's teacher spec");
    auto* o_seed = sub->add_option("--seed", seed, "default 0");
    auto* o_rn = sub->add_option("--rollout-n", rollout_n,
                                 "group size (default 8)");
    auto* o_it = sub->add_option("--rl-iterations", iterations, "default 20");
    auto* o_pp = sub->add_option("--prompts-per-iteration", prompts,
                                 "default 16");
    auto* o_mn = sub->add_option("--max-new-tokens", max_new, "default 24");
    auto* o_tm = sub->add_option("--temperature", temperature, "default 1.0");
    auto* o_lr = sub->add_option("--lr", lr, "default 1e-3");
    auto* o_mb = sub->add_option("--mini-batch", mini_batch, "default 8");
    auto* o_cl = sub->add_option("--clip-low", clip_low, "default 0.2");
    auto* o_ch = sub->add_option("--clip-high", clip_high,
                                 "clip-higher bound (default 0.28)");
    add_common(sub, common, cfg);
    sub->callback([=, &cfg, &command]() {
      command = "rl";
      cfg["checkpoint"] = checkpoint;
      cfg["run_id"] = run_id;
      set_if(o_dd, cfg, "/data_dir", data_dir);
      set_if(o_seed, cfg, "/seed", seed);
      set_if(o_rn, cfg, "/train/rollout_n", rollout_n);
      set_if(o_it, cfg, "/train/rl_iterations", iterations);
      set_if(o_pp, cfg, "/train/prompts_per_iteration", prompts);
      set_if(o_mn, cfg, "/train/max_new_tokens", max_new);
      set_if(o_tm, cfg, "/train/temperature", temperature);
      set_if(o_lr, cfg, "/train/lr", lr);
      set_if(o_mb, cfg, "/train/mini_batch", mini_batch);
      set_if(o_cl, cfg, "/objective/clip_low", clip_low);
      set_if(o_ch, cfg, "/objective/clip_high", clip_high);
    });
  }

  // dpo ---------------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("dpo", "preference tuning on ranked pairs");
    static std::string run_id, checkpoint, pairs;
    static std::uint64_t seed = 0;
    static int epochs = 1, mini_batch = 8;
    static double beta = 0.01, lr = 1e-3;
    sub->add_option("--checkpoint", checkpoint, "starting checkpoint")
        ->required();
    sub->add_option("--pairs", pairs, "dpo_pairs.json from gen-data")
        ->required();
    sub->add_option("--run-id", run_id, "run identifier")->required();
    auto* o_seed = sub->add_option("--seed", seed, "default 0");
    auto* o_b = sub->add_option("--beta", beta, "default 0.01");
    auto* o_lr = sub->add_option("--lr", lr, "default 1e-3");
    auto* o_ep = sub->add_option("--epochs", epochs, "default 1");
    auto* o_mb = sub->add_option("--mini-batch", mini_batch, "default 8");
    add_common(sub, common, cfg);
    sub->callback([=, &cfg, &command]() {
      command = "dpo";
      cfg["checkpoint"] = checkpoint;
      cfg["pairs"] = pairs;
      cfg["run_id"] = run_id;
      set_if(o_seed, cfg, "/seed", seed);
      set_if(o_b, cfg, "/objective/dpo_beta", beta);
      set_if(o_lr, cfg, "/train/lr", lr);
      set_if(o_ep, cfg, "/train/epochs", epochs);
      set_if(o_mb, cfg, "/train/mini_batch", mini_batch);
    });
  }

  // eval --------------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("eval", "evaluate a checkpoint");
    static std::string checkpoint, data_dir, output;
    sub->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")
        ->required();
    sub->add_option("--data-dir", data_dir, "gen-data output directory")
        ->required();
    auto* o_out = sub->add_option("--output", output, "metrics CSV path");
    add_common(sub, common, cfg);
    sub->callback([=, &cfg, &command]() {
      command = "eval";
      cfg["checkpoint"] = checkpoint;
      cfg["data_dir"] = data_dir;
      set_if(o_out, cfg, "/output", output);
    });
  }

  // report ------------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("report", "export traces and clip report");
    static std::string run_dir, quantity;
    static int smooth = 0, top_k = 5, lo = 0, hi = 0;
    sub->add_option("--run-dir", run_dir, "completed run directory")
        ->required();
    auto* o_q = sub->add_option(
        "--quantity", quantity,
        "entropy|grad_norm|clip_fraction|eval (default: all)");
    auto* o_s = sub->add_option("--smooth-window", smooth,
                                "centered moving average length (default off)");
    auto* o_k = sub->add_option("--top-k", top_k,
                                "clip report size (default 5)");
    auto* o_lo = sub->add_option("--window-lo", lo, "first step (default 1)");
    auto* o_hi = sub->add_option("--window-hi", hi, "last step (default end)");
    add_common(sub, common, cfg);
    sub->callback([=, &cfg, &command]() {
      command = "report";
      cfg["run_dir"] = run_dir;
      set_if(o_q, cfg, "/quantity", quantity);
      set_if(o_s, cfg, "/smooth_window", smooth);
      set_if(o_k, cfg, "/top_k", top_k);
      set_if(o_lo, cfg, "/window_lo", lo);
      set_if(o_hi, cfg, "/window_hi", hi);
    });
  }

  // sweep -------------------------------------------------------------------
  {
    auto* sub = app.add_subcommand(
        "sweep", "run finetune across parameter values and compare");
    static std::string data_dir, run_id, checkpoint, param = "epsilon";
    static std::vector<std::string> values;
    static std::uint64_t seed = 0;
    static int epochs = 10, train_batch = 32, mini_batch = 8, warmup = 1;
    static double lr = 0.0;
    sub->add_option("--data-dir", data_dir, "gen-data output directory")
        ->required();
    sub->add_option("--checkpoint", checkpoint, "pretrained checkpoint")
        ->required();
    sub->add_option("--run-id", run_id, "sweep identifier")->required();
    sub->add_option("--param", param, "epsilon|method (default epsilon)");
    sub->add_option("--values", values,
                    "comma-separated values, e.g. 0.1,0.2,0.28,0.4,inf or "
                    "sft,sft_kl,psft")
        ->required()
        ->delimiter(',');
    auto* o_seed = sub->add_option("--seed", seed, "default 0");
    auto* o_ep = sub->add_option("--epochs", epochs, "default 10");
    auto* o_tb = sub->add_option("--train-batch", train_batch, "default 32");
    auto* o_mb = sub->add_option("--mini-batch", mini_batch, "default 8");
    auto* o_wu = sub->add_option("--warmup-epochs", warmup, "default 1");
    auto* o_lr = sub->add_option("--lr", lr,
                                 "default: method-dependent as in finetune");
    add_common(sub, common, cfg);
    sub->callback([=, &cfg, &command]() {
      command = "sweep";
      cfg["data_dir"] = data_dir;
      cfg["checkpoint"] = checkpoint;
      cfg["run_id"] = run_id;
      cfg["param"] = param;
      json vals = json::array();
      for (const auto& v : values) {
        if (param == "epsilon" && v != "inf")
          vals.push_back(std::stod(v));
        else
          vals.push_back(v);
      }
      cfg["values"] = vals;
      set_if(o_seed, cfg, "/seed", seed);
      set_if(o_ep, cfg, "/train/epochs", epochs);
      set_if(o_tb, cfg, "/train/train_batch", train_batch);
      set_if(o_mb, cfg, "/train/mini_batch", mini_batch);
      set_if(o_wu, cfg, "/train/warmup_epochs", warmup);
      set_if(o_lr, cfg, "/train/lr", lr);
    });
  }

  // replay ------------------------------------------------------------------
  {
    auto* sub = app.add_subcommand(
        "replay", "rerun a completed run from its config echo");
    static std::string run_dir, run_id, out_dir;
    sub->add_option("run_dir", run_dir, "directory containing config.json")
        ->required();
    sub->add_option("--run-id", run_id, "run id for the replay")->required();
    auto* o_out = sub->add_option("--output-dir", out_dir,
                                  "output root for the replay");
    sub->callback([=, &cfg, &command]() {
      json echo = load_json_file(run_dir + "/config.json");
      command = echo.at("command").get<std::string>();
      cfg = echo.at("config");
      cfg["run_id"] = run_id;
      if (o_out->count()) cfg["output_dir"] = out_dir;
    });
  }

  CLI11_PARSE(app, argc, argv);
  return execute(command, cfg);
}
