// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "diagnostics/diagnostics.hpp"

using namespace proxlab;

namespace {

RunLogRecord rec(int step, std::vector<std::pair<int, int>> occ,
                 std::vector<std::pair<int, int>> clips) {
  RunLogRecord r;
  r.step = step;
  r.method = "psft";
  r.occurrences = std::move(occ);
  r.clips = std::move(clips);
  for (auto [id, n] : r.occurrences) r.masked_tokens += n;
  int c = 0;
  for (auto [id, n] : r.clips) c += n;
  r.clip_fraction =
      r.masked_tokens ? static_cast<double>(c) / r.masked_tokens : 0.0;
  return r;
}

}  // namespace

TEST_CASE("clip_report") {
  std::vector<RunLogRecord> log = {
      rec(1, {{3, 4}, {13, 2}}, {{13, 2}}),
      rec(2, {{3, 4}, {13, 1}}, {{13, 1}, {3, 1}}),
      rec(3, {{5, 10}}, {}),
  };
  SUBCASE("empty window gives an empty report") {
    auto rep = clip_report(log, 10, 20);
    CHECK(rep.per_token.empty());
    CHECK(rep.total_clip_fraction == 0.0);
    CHECK(rep.top(5).empty());
  }
  SUBCASE("no clipped events in window") {
    auto rep = clip_report(log, 3, 3);
    CHECK(rep.total_clips == 0);
    CHECK(rep.total_clip_fraction == 0.0);
    REQUIRE(rep.per_token.size() == 1);
    CHECK(rep.per_token[0].token_id == 5);
    CHECK(rep.per_token[0].rate == 0.0);
  }
  SUBCASE("rate 1.0 aggregation") {
    auto rep = clip_report(log, 1, 2);
    // token 13: 3 occurrences, 3 clips -> rate 1.0
    REQUIRE(rep.per_token.size() == 2);
    CHECK(rep.per_token[0].token_id == 3);
    CHECK(rep.per_token[0].clip_count == 1);
    CHECK(rep.per_token[0].occurrences == 8);
    CHECK(rep.per_token[1].token_id == 13);
    CHECK(rep.per_token[1].clip_count == 3);
    CHECK(rep.per_token[1].rate == 1.0);
    CHECK(rep.total_tokens == 11);
    CHECK(rep.total_clips == 4);
  }
  SUBCASE("total fraction equals windowed recomputation from raw counts") {
    auto rep = clip_report(log, 1, 3);
    int clips = 0, tokens = 0;
    for (const auto& r : log) {
      tokens += r.masked_tokens;
      for (auto [id, n] : r.clips) clips += n;
    }
    CHECK(rep.total_clip_fraction ==
          doctest::Approx(static_cast<double>(clips) / tokens).epsilon(1e-15));
  }
  SUBCASE("top-k ordered by rate then id") {
    std::vector<RunLogRecord> l2 = {
        rec(1, {{3, 2}, {4, 2}, {5, 4}}, {{3, 1}, {4, 1}, {5, 1}}),
    };
    auto top = clip_report(l2, 1, 1).top(2);
    REQUIRE(top.size() == 2);
    CHECK(top[0].token_id == 3);  // rate 0.5, tie with 4 broken by id
    CHECK(top[1].token_id == 4);
  }
}

TEST_CASE("trace_series and export") {
  std::vector<RunLogRecord> log;
  for (int s = 1; s <= 6; ++s) {
    RunLogRecord r;
    r.step = s;
    r.method = "sft";
    r.mean_entropy = 2.0;  // constant
    r.grad_norm = 0.5 * s;
    r.clip_fraction = 0.0;
    if (s % 3 == 0) r.eval = EvalMetrics{1.0 + s, 0.5, 2.0};
    log.push_back(r);
  }
  SUBCASE("constant entropy gives a constant column") {
    auto series = trace_series(log, "entropy");
    REQUIRE(series.size() == 6);
    for (auto [s, v] : series) CHECK(v == 2.0);
  }
  SUBCASE("row count equals record count") {
    CHECK(trace_series(log, "grad_norm").size() == log.size());
    CHECK(trace_series(log, "eval").size() == 2);
  }
  SUBCASE("unknown quantity throws") {
    CHECK_THROWS_AS(trace_series(log, "wallclock"), std::invalid_argument);
  }
  SUBCASE("export round trip is exact") {
    std::string path = "test_trace_roundtrip.csv";
    trace_export(log, "grad_norm", path);
    auto back = trace_parse(path);
    CHECK(back == trace_series(log, "grad_norm"));
    std::remove(path.c_str());
  }
  SUBCASE("smoothed export states the window and averages centered") {
    std::string path = "test_trace_smooth.csv";
    trace_export(log, "grad_norm", path, 3);
    auto back = trace_parse(path);
    REQUIRE(back.size() == 6);
    // interior point: mean of the 3-neighborhood
    CHECK(back[2].second == doctest::Approx((1.0 + 1.5 + 2.0) / 3).epsilon(1e-15));
    // edge: shrunken window
    CHECK(back[0].second == doctest::Approx((0.5 + 1.0) / 2).epsilon(1e-15));
    // window recorded in the header
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.find("window=3") != std::string::npos);
    std::remove(path.c_str());
  }
  SUBCASE("skipped rl iterations are excluded from step traces") {
    RunLogRecord skip;
    skip.step = 6;
    skip.method = "grpo";
    skip.iteration_skipped = true;
    auto l2 = log;
    l2.push_back(skip);
    CHECK(trace_series(l2, "entropy").size() == log.size());
  }
}
