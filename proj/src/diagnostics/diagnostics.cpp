// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#include "diagnostics/diagnostics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace proxlab {

std::vector<ClipReport::Entry> ClipReport::top(int k) const {
  std::vector<Entry> out = per_token;
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
    if (a.rate != b.rate) return a.rate > b.rate;
    return a.token_id < b.token_id;
  });
  if (static_cast<int>(out.size()) > k) out.resize(k);
  return out;
}

ClipReport clip_report(const std::vector<RunLogRecord>& log, int step_lo,
                       int step_hi) {
  std::map<int, ClipReport::Entry> acc;
  ClipReport rep;
  for (const auto& r : log) {
    if (r.step < step_lo || r.step > step_hi) continue;
    for (auto [id, n] : r.occurrences) {
      auto& e = acc[id];
      e.token_id = id;
      e.occurrences += n;
      rep.total_tokens += n;
    }
    for (auto [id, n] : r.clips) {
      auto& e = acc[id];
      e.token_id = id;
      e.clip_count += n;
      rep.total_clips += n;
    }
  }
  for (auto& [id, e] : acc) {
    e.rate = e.occurrences ? static_cast<double>(e.clip_count) / e.occurrences
                           : 0.0;
    rep.per_token.push_back(e);
  }
  rep.total_clip_fraction =
      rep.total_tokens ? static_cast<double>(rep.total_clips) / rep.total_tokens
                       : 0.0;
  return rep;
}

std::vector<std::pair<int, double>> trace_series(
    const std::vector<RunLogRecord>& log, const std::string& quantity) {
  std::vector<std::pair<int, double>> out;
  if (quantity == "entropy") {
    for (const auto& r : log)
      if (!r.iteration_skipped.value_or(false) && r.step > 0)
        out.emplace_back(r.step, r.mean_entropy);
  } else if (quantity == "grad_norm") {
    for (const auto& r : log)
      if (!r.iteration_skipped.value_or(false) && r.step > 0)
        out.emplace_back(r.step, r.grad_norm);
  } else if (quantity == "clip_fraction") {
    for (const auto& r : log)
      if (!r.iteration_skipped.value_or(false) && r.step > 0)
        out.emplace_back(r.step, r.clip_fraction);
  } else if (quantity == "eval") {
    for (const auto& r : log)
      if (r.eval) out.emplace_back(r.step, r.eval->indomain_nll);
  } else {
    throw std::invalid_argument("unknown trace quantity: " + quantity);
  }
  return out;
}

void trace_export(const std::vector<RunLogRecord>& log,
                  const std::string& quantity, const std::string& path,
                  int smooth_window) {
  auto series = trace_series(log, quantity);
  std::vector<double> vals;
  for (auto& [s, v] : series) vals.push_back(v);
  if (smooth_window > 1) {
    std::vector<double> sm(vals.size());
    int half = smooth_window / 2;
    for (int i = 0; i < static_cast<int>(vals.size()); ++i) {
      int lo = std::max(0, i - half);
      int hi = std::min(static_cast<int>(vals.size()) - 1, i + half);
      double acc = 0.0;
      for (int j = lo; j <= hi; ++j) acc += vals[j];
      sm[i] = acc / (hi - lo + 1);
    }
    vals = sm;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "# quantity=" << quantity;
  if (smooth_window > 1)
    out << " smoothing=centered_moving_average window=" << smooth_window;
  else
    out << " smoothing=none";
  out << '\n';
  out << "step,value\n";
  out.precision(17);
  for (std::size_t i = 0; i < series.size(); ++i)
    out << series[i].first << ',' << vals[i] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::pair<int, double>> trace_parse(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<std::pair<int, double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("step,", 0) == 0)
      continue;
    std::istringstream ls(line);
    int step;
    char comma;
    double value;
    if (!(ls >> step >> comma >> value))
      throw std::runtime_error("bad trace line: " + line);
    out.emplace_back(step, value);
  }
  return out;
}

}  // namespace proxlab
