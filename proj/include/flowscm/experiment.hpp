// Copyright 2026 The flowscm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "flowscm/attribution.hpp"
#include "flowscm/claims.hpp"
#include "flowscm/stats.hpp"

namespace flowscm::claims {

struct ExperimentConfig {
  enum class Kind { FaultInjection, DataShift, Control };

  Kind kind = Kind::FaultInjection;
  std::size_t repeats = 30;
  std::size_t records = 1000;  // per window
  std::uint64_t seed = 0;
  AttributionOptions attribution;
  PipelineParams params;
  double shift_factor = 1.5;  // DataShift amount scaling
};

inline const char* experiment_kind_name(ExperimentConfig::Kind k) {
  switch (k) {
    case ExperimentConfig::Kind::FaultInjection: return "fault";
    case ExperimentConfig::Kind::DataShift: return "shift";
    case ExperimentConfig::Kind::Control: return "control";
  }
  return "?";
}

struct StreamStat {
  std::vector<double> runs;  // signed score per repeat
  double mean_score = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double mean_abs = 0.0;
  double abs_ci_lo = 0.0;
  double abs_ci_hi = 0.0;
};

struct ComponentStat {
  std::vector<double> p_values;  // per repeat, Bonferroni-combined within run
  double mean_delta = 0.0;
  double median_p = 1.0;
  bool flagged = false;  // median p < 0.05
};

struct ExperimentReport {
  ExperimentConfig::Kind kind = ExperimentConfig::Kind::FaultInjection;
  std::uint64_t master_seed = 0;
  std::size_t repeats = 0;
  std::size_t records = 0;
  std::string method;

  std::map<StreamId, StreamStat> streams;
  std::map<ComponentId, ComponentStat> components;
  StreamId top;
  StreamId runner_up;
  double welch_t = 0.0;
  double welch_p = 1.0;
  std::size_t shift_flags = 0;  // repeats where detect_shift fired
  bool significant = false;     // shift in a majority of repeats and p < 0.05
  std::vector<std::string> warnings;
};

// Runs the full two-window experiment `repeats` times on freshly seeded data:
// a healthy run supplies the old window, the perturbed run (buggy classifier
// or scaled amounts) the new one, and the target shift on the payout stream
// is attributed each time. Per-stream scores are aggregated with confidence
// intervals; the top stream is compared against the runner-up with Welch's
// t-test on the absolute scores.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.repeats < 2) throw Error(Errc::Usage, "experiment needs repeats >= 2");
  const TransformRegistry registry = make_claims_registry(cfg.params);
  const ValidatedGraph healthy = build_claims_graph();
  const ValidatedGraph perturbed_graph =
      cfg.kind == ExperimentConfig::Kind::FaultInjection ? inject_fault(healthy) : healthy;

  ExperimentReport report;
  report.kind = cfg.kind;
  report.master_seed = cfg.seed;
  report.repeats = cfg.repeats;
  report.records = cfg.records;
  report.method = attribution_method_name(cfg.attribution.method);
  for (const auto& var : healthy.causal().variables()) report.streams[var.id];
  for (const auto& comp : healthy.graph().components) report.components[comp.id];

  const GeneratorPtr gen = std::make_shared<ClaimsGenerator>(cfg.params);
  const GeneratorPtr shifted = inject_data_shift(gen, cfg.shift_factor);

  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t run_seed = derive_seed(cfg.seed, {0xe59ULL, r});
    StreamLog old_log = run(healthy, {{kNewClaims, gen}}, cfg.records,
                            derive_seed(run_seed, {1}), "old", registry);
    StreamLog new_log;
    switch (cfg.kind) {
      case ExperimentConfig::Kind::FaultInjection:
        new_log = run(perturbed_graph, {{kNewClaims, gen}}, cfg.records,
                      derive_seed(run_seed, {2}), "new", registry);
        break;
      case ExperimentConfig::Kind::DataShift:
        new_log = run(healthy, {{kNewClaims, shifted}}, cfg.records, derive_seed(run_seed, {2}),
                      "new", registry);
        break;
      case ExperimentConfig::Kind::Control:
        new_log = run(healthy, {{kNewClaims, gen}}, cfg.records, derive_seed(run_seed, {2}),
                      "new", registry);
        break;
    }

    AttributionOptions opt = cfg.attribution;
    opt.seed = derive_seed(run_seed, {3});
    ChangeWindows windows{std::move(old_log), std::move(new_log), kPayout};
    AttributionResult res;
    try {
      res = attribute_change(healthy, windows, opt);
    } catch (const Error& e) {
      throw Error(e.code(), "repeat " + std::to_string(r) + ": " + e.what());
    }

    for (auto& [id, stat] : report.streams) {
      auto it = res.attribution.scores.find(id);
      stat.runs.push_back(it == res.attribution.scores.end() ? 0.0 : it->second);
    }
    std::map<ComponentId, double> run_p;
    for (const auto& [stream, dev] : res.deviations) {
      auto it = run_p.find(dev.component);
      // a multi-output component counts through its most-shifted output
      if (it == run_p.end() || dev.p_value < it->second) run_p[dev.component] = dev.p_value;
    }
    for (auto& [comp, stat] : report.components) {
      stat.p_values.push_back(run_p.count(comp) ? run_p[comp] : 1.0);
    }
    report.shift_flags += res.shift.shifted ? 1 : 0;
    for (const auto& wmsg : res.warnings) {
      report.warnings.push_back("repeat " + std::to_string(r) + ": " + wmsg);
    }
  }

  for (auto& [id, stat] : report.streams) {
    stat.mean_score = stats::mean(stat.runs);
    const auto ci = stats::confidence_interval(stat.runs);
    stat.ci_lo = ci.lo;
    stat.ci_hi = ci.hi;
    std::vector<double> abs_runs;
    for (double v : stat.runs) abs_runs.push_back(std::abs(v));
    stat.mean_abs = stats::mean(abs_runs);
    const auto aci = stats::confidence_interval(abs_runs);
    stat.abs_ci_lo = aci.lo;
    stat.abs_ci_hi = aci.hi;
  }
  for (auto& [comp, stat] : report.components) {
    std::vector<double> deltas;
    for (double p : stat.p_values) deltas.push_back(-std::log10(std::max(p, 1e-300)));
    stat.mean_delta = stats::mean(deltas);
    std::vector<double> sorted = stat.p_values;
    std::sort(sorted.begin(), sorted.end());
    stat.median_p = sorted[sorted.size() / 2];
    stat.flagged = stat.median_p < 0.05;
  }

  std::vector<std::pair<double, StreamId>> ranked;
  for (const auto& [id, stat] : report.streams) ranked.push_back({stat.mean_abs, id});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  report.top = ranked.at(0).second;
  report.runner_up = ranked.at(1).second;

  std::vector<double> top_abs, runner_abs;
  for (double v : report.streams[report.top].runs) top_abs.push_back(std::abs(v));
  for (double v : report.streams[report.runner_up].runs) runner_abs.push_back(std::abs(v));
  try {
    const auto test = stats::welch_t_test(top_abs, runner_abs);
    report.welch_t = test.statistic;
    report.welch_p = test.p_value;
  } catch (const Error& e) {
    if (e.code() != Errc::DegenerateSample) throw;
    report.welch_t = 0.0;
    report.welch_p = 1.0;
    report.warnings.push_back("top/runner-up comparison degenerate (all scores identical)");
  }
  report.significant = (report.shift_flags * 2 > report.repeats) && report.welch_p < 0.05;
  return report;
}

}  // namespace flowscm::claims
