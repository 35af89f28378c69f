// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Exercises the shared library strictly through the C API, the same way the
// CLI does: lifecycle, status codes, and a small end-to-end pipeline with a
// byte-identical replay from the config echo.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "proxlab/proxlab.h"

using json = nlohmann::json;

namespace {

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

// Runs one command, checks the status, returns the parsed summary.
json run(const std::string& command, const json& cfg,
         proxlab_status expect = PROXLAB_OK) {
  proxlab_job* job = nullptr;
  REQUIRE(proxlab_job_create(command.c_str(), cfg.dump().c_str(), &job) ==
          PROXLAB_OK);
  proxlab_status st = proxlab_job_run(job);
  INFO("command=" << command << " error=" << proxlab_job_error(job));
  CHECK(st == expect);
  CHECK(proxlab_job_status(job) == st);
  json summary = json::object();
  if (st == PROXLAB_OK) {
    summary = json::parse(proxlab_job_summary_json(job));
    CHECK(std::string(proxlab_job_error(job)).empty());
  } else {
    CHECK_FALSE(std::string(proxlab_job_error(job)).empty());
  }
  proxlab_job_free(job);
  return summary;
}

}  // namespace

TEST_CASE("create argument validation") {
  proxlab_job* job = nullptr;
  CHECK(proxlab_job_create(nullptr, "{}", &job) == PROXLAB_ERR_CONFIG);
  CHECK(job == nullptr);
  CHECK(proxlab_job_create("eval", "{}", nullptr) == PROXLAB_ERR_CONFIG);
  // NULL config means all defaults; creation succeeds, it never runs anything.
  REQUIRE(proxlab_job_create("eval", nullptr, &job) == PROXLAB_OK);
  REQUIRE(job != nullptr);
  CHECK(proxlab_job_status(job) == PROXLAB_OK);
  CHECK(std::string(proxlab_job_summary_json(job)).empty());
  proxlab_job_free(job);
  proxlab_job_free(nullptr);  // must be a no-op
}

TEST_CASE("version string") {
  std::string v = proxlab_version();
  CHECK_FALSE(v.empty());
  CHECK(v.find('.') != std::string::npos);
}

TEST_CASE("status codes") {
  TmpDir tmp("capi_status_tmp");
  SUBCASE("unknown command is a config error") {
    run("frobnicate", json::object(), PROXLAB_ERR_CONFIG);
  }
  SUBCASE("unknown key is a config error") {
    run("gen-data", {{"bogus", 1}}, PROXLAB_ERR_CONFIG);
  }
  SUBCASE("malformed json is a config error") {
    proxlab_job* job = nullptr;
    REQUIRE(proxlab_job_create("eval", "{nope", &job) == PROXLAB_OK);
    CHECK(proxlab_job_run(job) == PROXLAB_ERR_CONFIG);
    proxlab_job_free(job);
  }
  SUBCASE("missing checkpoint") {
    run("eval",
        {{"checkpoint", (tmp.path / "nope.ckpt").string()},
         {"data_dir", tmp.path.string()}},
        PROXLAB_ERR_MISSING_INPUT);
  }
  SUBCASE("running twice fails") {
    proxlab_job* job = nullptr;
    REQUIRE(proxlab_job_create("frobnicate", "{}", &job) == PROXLAB_OK);
    CHECK(proxlab_job_run(job) == PROXLAB_ERR_CONFIG);
    CHECK(proxlab_job_run(job) == PROXLAB_ERR_RUNTIME);
    proxlab_job_free(job);
  }
}

TEST_CASE("end-to-end pipeline with byte-identical replay") {
  TmpDir tmp("capi_pipeline_tmp");
  const std::string root = tmp.path.string();
  const std::string data = root + "/data";

  json gen = run("gen-data", {{"seed", 11},
                              {"output_dir", data},
                              {"sizes",
                               {{"pretrain", 32},
                                {"expert_train", 32},
                                {"indomain_eval", 8},
                                {"ood_eval", 8}}},
                              {"dpo_pairs", 8}});
  CHECK(gen.at("pretrain") == 32);
  CHECK(std::filesystem::exists(data + "/pretrain.txt"));
  CHECK(std::filesystem::exists(data + "/dpo_pairs.json"));
  // Refusing to overwrite an existing corpus is reported as a config error.
  run("gen-data", {{"seed", 11}, {"output_dir", data}}, PROXLAB_ERR_CONFIG);

  json pre = run("pretrain", {{"data_dir", data},
                              {"run_id", "pre"},
                              {"output_dir", root},
                              {"train", {{"epochs", 2}}}});
  const std::string pre_ckpt = root + "/pre/final.ckpt";
  REQUIRE(std::filesystem::exists(pre_ckpt));
  CHECK(pre.at("steps") == 8);  // 2 epochs x 1 train batch x 4 mini-batches

  json ft = run("finetune", {{"data_dir", data},
                             {"checkpoint", pre_ckpt},
                             {"run_id", "ft"},
                             {"output_dir", root},
                             {"method", "psft"},
                             {"train", {{"epochs", 2}}}});
  CHECK(ft.at("steps") == 8);
  const std::string ft_dir = root + "/ft";
  REQUIRE(std::filesystem::exists(ft_dir + "/config.json"));
  REQUIRE(std::filesystem::exists(ft_dir + "/log.jsonl"));

  // Run dirs refuse overwrite.
  run("finetune", {{"data_dir", data},
                   {"checkpoint", pre_ckpt},
                   {"run_id", "ft"},
                   {"output_dir", root}},
      PROXLAB_ERR_CONFIG);

  // Replay: the echoed config reproduces the run byte for byte.
  json echo = json::parse(read_file(ft_dir + "/config.json"));
  REQUIRE(echo.at("command") == "finetune");
  json cfg2 = echo.at("config");
  cfg2["run_id"] = "ft_replay";
  json ft2 = run("finetune", cfg2);
  json a = ft, b = ft2;
  a.erase("run_dir");
  b.erase("run_dir");
  CHECK(a == b);  // identical summaries up to the run directory
  const std::string ft2_dir = root + "/ft_replay";
  CHECK(read_file(ft_dir + "/log.jsonl") == read_file(ft2_dir + "/log.jsonl"));
  CHECK(read_file(ft_dir + "/final.ckpt") ==
        read_file(ft2_dir + "/final.ckpt"));
  CHECK(read_file(ft_dir + "/metrics.csv") ==
        read_file(ft2_dir + "/metrics.csv"));

  json rep = run("report", {{"run_dir", ft_dir}});
  CHECK(std::filesystem::exists(ft_dir + "/trace_entropy.csv"));
  CHECK(std::filesystem::exists(ft_dir + "/clip_report.json"));
  CHECK(rep.at("traces").size() == 4);

  json ev = run("eval", {{"checkpoint", ft_dir + "/final.ckpt"},
                         {"data_dir", data}});
  CHECK(ev.contains("indomain_nll"));
  CHECK(ev.contains("ood_nll"));
  CHECK(ev.contains("indomain_accuracy"));
}
