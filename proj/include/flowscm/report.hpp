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

#include <iomanip>
#include <sstream>
#include <string>

#include "flowscm/attribution.hpp"
#include "flowscm/experiment.hpp"
#include "flowscm/graph.hpp"

namespace flowscm {

namespace detail {

inline std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

inline std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

}  // namespace detail

// Aligned per-stream table: node, score, probability; deviations listed below.
inline std::string render_attribution_table(const AttributionResult& result) {
  std::ostringstream os;
  os << "shift: delta=" << detail::fixed(result.shift.delta, 6)
     << " threshold=" << detail::fixed(result.shift.threshold, 6)
     << " shifted=" << (result.shift.shifted ? "yes" : "no") << "\n";
  os << "method: " << attribution_method_name(result.attribution.method) << "\n\n";

  std::size_t width = 4;
  for (const auto& [id, s] : result.attribution.scores) width = std::max(width, id.size());
  os << std::left << std::setw(static_cast<int>(width) + 2) << "node" << std::right
     << std::setw(12) << "score" << std::setw(14) << "probability" << "\n";
  if (result.no_signal) {
    os << "  (no signal: all attribution scores are ~0)\n";
  }
  for (const auto& [id, s] : result.attribution.scores) {
    os << std::left << std::setw(static_cast<int>(width) + 2) << id << std::right << std::setw(12)
       << detail::fixed(s, 6);
    auto it = result.probabilities.find(id);
    os << std::setw(14) << (it == result.probabilities.end() ? "-" : detail::fixed(it->second, 2))
       << "\n";
  }

  if (!result.deviations.empty()) {
    os << "\ncomponent deviations (per output stream):\n";
    std::size_t cw = 9;
    for (const auto& [stream, dev] : result.deviations) {
      cw = std::max(cw, dev.component.size() + stream.size() + 3);
    }
    for (const auto& [stream, dev] : result.deviations) {
      os << std::left << std::setw(static_cast<int>(cw) + 2) << (dev.component + " (" + stream + ")")
         << std::right << " delta=" << detail::fixed(dev.delta, 3)
         << "  p=" << detail::sci(dev.p_value) << "\n";
    }
  }
  for (const auto& wmsg : result.warnings) os << "warning: " << wmsg << "\n";
  return os.str();
}

// CSV columns: node,score,probability,deviation,p_value,method. The deviation
// columns belong to the stream's producing component (blank for sources).
inline std::string render_attribution_csv(const AttributionResult& result) {
  std::ostringstream os;
  os << "node,score,probability,deviation,p_value,method\n";
  for (const auto& [id, s] : result.attribution.scores) {
    os << id << "," << detail::fixed(s, 9) << ",";
    auto pit = result.probabilities.find(id);
    os << (pit == result.probabilities.end() ? "" : detail::fixed(pit->second, 6)) << ",";
    auto dit = result.deviations.find(id);
    if (dit == result.deviations.end()) {
      os << ",,";
    } else {
      os << detail::fixed(dit->second.delta, 6) << "," << detail::sci(dit->second.p_value) << ",";
    }
    os << attribution_method_name(result.attribution.method) << "\n";
  }
  return os.str();
}

inline std::string render_experiment_table(const claims::ExperimentReport& report) {
  std::ostringstream os;
  os << "experiment: " << claims::experiment_kind_name(report.kind)
     << "  master seed: " << report.master_seed << "\n";
  os << "repeats: " << report.repeats << "  records/window: " << report.records
     << "  method: " << report.method << "\n";
  os << "shift flagged in " << report.shift_flags << "/" << report.repeats << " repeats\n\n";

  std::size_t width = 6;
  for (const auto& [id, s] : report.streams) width = std::max(width, id.size());
  os << std::left << std::setw(static_cast<int>(width) + 2) << "stream" << std::right
     << std::setw(12) << "mean" << std::setw(12) << "ci_lo" << std::setw(12) << "ci_hi"
     << std::setw(12) << "mean|s|" << "\n";
  for (const auto& [id, s] : report.streams) {
    os << std::left << std::setw(static_cast<int>(width) + 2) << id << std::right << std::setw(12)
       << detail::fixed(s.mean_score, 6) << std::setw(12) << detail::fixed(s.ci_lo, 6)
       << std::setw(12) << detail::fixed(s.ci_hi, 6) << std::setw(12)
       << detail::fixed(s.mean_abs, 6) << "\n";
  }

  os << "\ncomponent deviations:\n";
  for (const auto& [comp, s] : report.components) {
    os << "  " << comp << ": median p=" << detail::sci(s.median_p)
       << (s.flagged ? "  ** functionality change" : "") << "\n";
  }

  os << "\ntop: " << report.top << "  runner-up: " << report.runner_up << "\n";
  os << "welch t=" << detail::fixed(report.welch_t, 3) << "  p=" << detail::sci(report.welch_p)
     << "  significant=" << (report.significant ? "yes" : "no") << "\n";
  return os.str();
}

inline std::string render_experiment_csv(const claims::ExperimentReport& report) {
  std::ostringstream os;
  os << "# experiment=" << claims::experiment_kind_name(report.kind)
     << " master_seed=" << report.master_seed << " repeats=" << report.repeats
     << " records=" << report.records << " method=" << report.method << "\n";
  os << "stream,mean_score,ci_lo,ci_hi\n";
  for (const auto& [id, s] : report.streams) {
    os << id << "," << detail::fixed(s.mean_score, 9) << "," << detail::fixed(s.ci_lo, 9) << ","
       << detail::fixed(s.ci_hi, 9) << "\n";
  }
  return os.str();
}

// One row per (repeat, stream) for external plotting.
inline std::string render_experiment_runs_csv(const claims::ExperimentReport& report) {
  std::ostringstream os;
  os << "# experiment=" << claims::experiment_kind_name(report.kind)
     << " master_seed=" << report.master_seed << "\n";
  os << "run,stream,score\n";
  for (const auto& [id, s] : report.streams) {
    for (std::size_t r = 0; r < s.runs.size(); ++r) {
      os << r << "," << id << "," << detail::fixed(s.runs[r], 9) << "\n";
    }
  }
  return os.str();
}

}  // namespace flowscm
