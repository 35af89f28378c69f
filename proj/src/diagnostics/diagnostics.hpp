// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Post-hoc log analysis: per-token clip reports and CSV trace export.
#pragma once

#include <string>
#include <vector>

#include "trainer/trainer.hpp"

namespace proxlab {

struct ClipReport {
  struct Entry {
    int token_id = 0;
    int clip_count = 0;
    int occurrences = 0;
    double rate = 0.0;  // clips per occurrence, in [0, 1]
  };
  std::vector<Entry> per_token;  // ascending token id, only ids seen
  int total_clips = 0;
  int total_tokens = 0;              // mask-true tokens in the window
  double total_clip_fraction = 0.0;  // total_clips / total_tokens

  // Ordered by rate (descending), ties by ascending id.
  std::vector<Entry> top(int k) const;
};

// Aggregates the sparse per-step clip events of records with
// step_lo <= step <= step_hi. Empty window yields an empty report.
ClipReport clip_report(const std::vector<RunLogRecord>& log, int step_lo,
                       int step_hi);

// Quantities: "entropy", "grad_norm", "clip_fraction", "eval" (in-domain NLL
// of eval records; the other quantities use every optimizer-step record).
// Unknown names throw.
std::vector<std::pair<int, double>> trace_series(
    const std::vector<RunLogRecord>& log, const std::string& quantity);

// (step, value) CSV; smooth_window > 1 applies a centered moving average of
// that length (window shrinks at the edges) and states it in the header.
// Unsmoothed exports re-parse to the in-memory series exactly.
void trace_export(const std::vector<RunLogRecord>& log,
                  const std::string& quantity, const std::string& path,
                  int smooth_window = 0);

std::vector<std::pair<int, double>> trace_parse(const std::string& path);

}  // namespace proxlab
