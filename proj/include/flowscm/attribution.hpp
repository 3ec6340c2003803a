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
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowscm/error.hpp"
#include "flowscm/graph.hpp"
#include "flowscm/log.hpp"
#include "flowscm/rng.hpp"
#include "flowscm/scm.hpp"
#include "flowscm/stats.hpp"

namespace flowscm {

// The two observation windows being compared and the stream whose shift is to
// be explained. By convention p is the new window and q the old one.
struct ChangeWindows {
  StreamLog old_log;
  StreamLog new_log;
  StreamId target;
};

enum class AttributionMethod { Shapley, ProportionalKl };

inline const char* attribution_method_name(AttributionMethod m) {
  return m == AttributionMethod::Shapley ? "shapley" : "proportional-kl";
}

struct AttributionOptions {
  AttributionMethod method = AttributionMethod::Shapley;
  std::size_t min_samples = 50;
  FitOptions fit;
  stats::KlEstimator numeric_estimator = stats::HistogramKl{};
  double discrete_alpha = 0.5;      // smoothing for level-valued stream KLs
  std::size_t value_samples = 4000; // per-coalition ancestral samples
  std::size_t bootstrap = 200;      // null resamples behind the shift flag
  std::size_t max_exact_players = stats::kMaxExactShapleyPlayers;
  std::size_t permutation_samples = 2000;
  std::uint64_t seed = 0;
};

// Deviation of one component's functionality on one of its output streams.
struct DeviationEntry {
  ComponentId component;
  StreamId output;
  double delta = 0.0;          // -log10(p), comparable across components
  double p_value = 1.0;
  double raw_statistic = 0.0;  // statistic of the strongest sub-test
  std::size_t n_old = 0;
  std::size_t n_new = 0;
};

using DeviationMap = std::map<StreamId, DeviationEntry>;  // keyed by output stream

struct AttributionScores {
  AttributionMethod method = AttributionMethod::Shapley;
  std::map<StreamId, double> scores;  // signed
};

struct ShiftDetection {
  double delta = 0.0;      // KL(p(y) || q(y))
  double threshold = 0.0;  // bootstrap null 95th percentile
  bool shifted = false;
};

struct AttributionResult {
  ShiftDetection shift;
  DeviationMap deviations;
  AttributionScores attribution;
  std::map<StreamId, double> probabilities;  // empty when no_signal
  bool no_signal = false;
  std::vector<std::string> warnings;
};

namespace detail {

constexpr double kKlFloor = 1e-9;

inline double bernoulli_kl(double p, double q) {
  auto clamp = [](double x) { return std::min(std::max(x, 1e-9), 1.0 - 1e-9); };
  if (p == q) return 0.0;
  const double cp = clamp(p), cq = clamp(q);
  return cp * std::log(cp / cq) + (1.0 - cp) * std::log((1.0 - cp) / (1.0 - cq));
}

// Composite KL between two sets of stream values: per-field divergences
// (fields are treated as independent) plus the presence-rate divergence when
// totals are supplied. Small sides contribute presence only.
inline double value_set_kl(const std::vector<Value>& p_vals, std::size_t p_total,
                           const std::vector<Value>& q_vals, std::size_t q_total,
                           const ValueSchema& schema, const AttributionOptions& opt) {
  double kl = 0.0;
  if (p_total > 0 && q_total > 0) {
    kl += bernoulli_kl(static_cast<double>(p_vals.size()) / static_cast<double>(p_total),
                       static_cast<double>(q_vals.size()) / static_cast<double>(q_total));
  }
  if (p_vals.size() < 5 || q_vals.size() < 5) return kl;
  const auto fields = schema.flat_fields();
  for (std::size_t f = 0; f < fields.size(); ++f) {
    if (fields[f].kind == FieldKind::Numeric) {
      stats::SampleSet p, q;
      for (const auto& v : p_vals) p.numbers.push_back(as_number(v.parts[f]));
      for (const auto& v : q_vals) q.numbers.push_back(as_number(v.parts[f]));
      kl += stats::kl_divergence(p, q, opt.numeric_estimator).value;
    } else {
      stats::SampleSet p, q;
      for (const auto& v : p_vals) p.levels.push_back(as_level(v.parts[f]));
      for (const auto& v : q_vals) q.levels.push_back(as_level(v.parts[f]));
      kl += stats::kl_divergence(p, q, stats::DiscreteKl{opt.discrete_alpha}).value;
    }
  }
  return kl;
}

inline std::size_t window_population(const StreamLog& log) {
  std::size_t n = 0;
  for (const auto& [id, recs] : log.streams) n = std::max(n, recs.size());
  return n;
}

inline std::vector<Value> stream_values(const StreamLog& log, const StreamId& id) {
  std::vector<Value> out;
  for (const auto& r : log.records(id)) out.push_back(r.value);
  return out;
}

}  // namespace detail

// KL(new || old) for one stream's observed distribution within the windows.
inline double stream_kl(const ChangeWindows& w, const ValidatedGraph& graph, const StreamId& id,
                        const AttributionOptions& opt = {}) {
  return detail::value_set_kl(detail::stream_values(w.new_log, id),
                              detail::window_population(w.new_log),
                              detail::stream_values(w.old_log, id),
                              detail::window_population(w.old_log), graph.schema_of(id), opt);
}

// Measures the target's shift and calibrates a null threshold by splitting
// the old window into random halves `bootstrap` times; the observed shift
// counts as real above the null's 95th percentile.
inline ShiftDetection detect_shift(const ChangeWindows& w, const ValidatedGraph& graph,
                                   const AttributionOptions& opt = {}) {
  const auto& schema = graph.schema_of(w.target);
  const auto old_vals = detail::stream_values(w.old_log, w.target);
  const auto new_vals = detail::stream_values(w.new_log, w.target);
  if (old_vals.size() < opt.min_samples || new_vals.size() < opt.min_samples) {
    throw Error(Errc::InsufficientData,
                "target '" + w.target + "' needs " + std::to_string(opt.min_samples) +
                    " samples per window");
  }
  ShiftDetection out;
  out.delta = detail::value_set_kl(new_vals, detail::window_population(w.new_log), old_vals,
                                   detail::window_population(w.old_log), schema, opt);

  std::vector<double> null_kls;
  null_kls.reserve(opt.bootstrap);
  std::vector<std::size_t> idx(old_vals.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(opt.seed, {0xb007ULL}));
  const std::size_t half = old_vals.size() / 2;
  for (std::size_t b = 0; b < opt.bootstrap; ++b) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    std::vector<Value> a, c;
    a.reserve(half);
    c.reserve(old_vals.size() - half);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < half ? a : c).push_back(old_vals[idx[i]]);
    }
    null_kls.push_back(detail::value_set_kl(a, a.size(), c, c.size(), schema, opt));
  }
  out.threshold = stats::quantile(null_kls, 0.95);
  out.shifted = out.delta > out.threshold;
  return out;
}

// Tests whether the causal conditional p(s | pa_s) of `output` (produced by
// `component`) changed between the windows: presence law and each value field
// are tested separately and Bonferroni-combined. delta is -log10(p).
inline DeviationEntry deviation(const ValidatedGraph& graph, const ComponentId& component,
                                const StreamId& output, const ChangeWindows& w,
                                const AttributionOptions& opt = {}) {
  const auto& causal = graph.causal();
  FitContext ctx = detail::make_fit_context(causal, {&w.old_log, &w.new_log}, opt.fit.parent_bins);
  ParentEncoder enc = detail::make_encoder(causal, output, ctx, opt.fit.parent_bins);

  const auto rows_old = detail::training_rows(causal, w.old_log, output);
  const auto rows_new = detail::training_rows(causal, w.new_log, output);

  auto present_count = [](const std::vector<TrainingRow>& rows) {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.output.has_value() ? 1 : 0;
    return n;
  };
  DeviationEntry entry;
  entry.component = component;
  entry.output = output;
  entry.n_old = present_count(rows_old);
  entry.n_new = present_count(rows_new);
  if (entry.n_old < opt.min_samples || entry.n_new < opt.min_samples) {
    throw Error(Errc::InsufficientData, "deviation of '" + output + "': have " +
                                            std::to_string(std::min(entry.n_old, entry.n_new)) +
                                            ", need " + std::to_string(opt.min_samples));
  }

  std::vector<stats::TestResult> parts;
  const bool absences = entry.n_old < rows_old.size() || entry.n_new < rows_new.size();
  if (absences) {
    auto presence_pairs = [&](const std::vector<TrainingRow>& rows) {
      stats::CategoricalPairs pairs;
      pairs.value_levels = 2;
      for (const auto& r : rows) {
        pairs.parent_configs.push_back(static_cast<int>(enc.config(r.parents)));
        pairs.values.push_back(r.output.has_value() ? 1 : 0);
      }
      return pairs;
    };
    parts.push_back(stats::conditional_shift_test(presence_pairs(rows_old),
                                                  presence_pairs(rows_new), opt.min_samples));
  }

  const auto fields = graph.schema_of(output).flat_fields();
  for (std::size_t f = 0; f < fields.size(); ++f) {
    if (fields[f].kind == FieldKind::Numeric) {
      auto numeric_pairs = [&](const std::vector<TrainingRow>& rows) {
        stats::NumericPairs pairs;
        for (const auto& r : rows) {
          if (!r.output) continue;
          pairs.parents.push_back(enc.features(r.parents));
          pairs.values.push_back(as_number(r.output->parts[f]));
        }
        return pairs;
      };
      parts.push_back(stats::conditional_shift_test(numeric_pairs(rows_old),
                                                    numeric_pairs(rows_new), opt.min_samples));
    } else {
      auto level_pairs = [&](const std::vector<TrainingRow>& rows) {
        stats::CategoricalPairs pairs;
        pairs.value_levels = static_cast<int>(fields[f].levels.size());
        for (const auto& r : rows) {
          if (!r.output) continue;
          pairs.parent_configs.push_back(static_cast<int>(enc.config(r.parents)));
          pairs.values.push_back(*fields[f].level_index(as_level(r.output->parts[f])));
        }
        return pairs;
      };
      parts.push_back(stats::conditional_shift_test(level_pairs(rows_old), level_pairs(rows_new),
                                                    opt.min_samples));
    }
  }

  double min_p = 1.0;
  for (const auto& part : parts) {
    if (part.p_value <= min_p) {
      min_p = part.p_value;
      entry.raw_statistic = part.statistic;
    }
  }
  entry.p_value = std::min(1.0, min_p * static_cast<double>(parts.size()));
  entry.delta = -std::log10(std::max(entry.p_value, 1e-300));
  return entry;
}

// Shapley attribution over the mechanism-replacement game: the value of a
// coalition S is the KL divergence of the target's marginal when the
// mechanisms in S come from `scm_new` and the rest from `scm_old`, against
// the target's marginal under `scm_old` alone. Sampling shares one seed
// across coalitions (common random numbers), so the empty coalition scores
// exactly zero and efficiency ties the total to the full old-to-new shift.
inline AttributionScores shapley_attribution(const Scm& scm_old, const Scm& scm_new,
                                             const StreamId& target,
                                             const AttributionOptions& opt = {}) {
  std::vector<StreamId> players;
  for (const auto& var : scm_old.graph.variables()) {
    if (!scm_new.mechanisms.count(var.id)) {
      throw Error(Errc::UnknownVariable, "SCMs disagree on variable '" + var.id + "'");
    }
    players.push_back(var.id);
  }
  std::sort(players.begin(), players.end());
  if (!scm_old.graph.contains(target)) {
    throw Error(Errc::UnknownVariable, "target '" + target + "' not in SCM");
  }
  const ValueSchema& target_schema = scm_old.graph.variable(target).schema;

  const std::uint64_t sample_seed = derive_seed(opt.seed, {0x1a77ULL});
  const std::size_t n = opt.value_samples;

  auto target_values = [&](const Scm& scm) {
    const StreamLog log = sample(scm, n, sample_seed, "game");
    return detail::stream_values(log, target);
  };
  const std::vector<Value> base = target_values(scm_old);

  auto value_fn = [&](std::uint64_t mask) {
    Scm hybrid;
    hybrid.graph = scm_old.graph;
    hybrid.mechanisms = scm_old.mechanisms;
    for (std::size_t i = 0; i < players.size(); ++i) {
      if (mask & (1ULL << i)) hybrid.mechanisms[players[i]] = scm_new.mechanisms.at(players[i]);
    }
    const auto vals = target_values(hybrid);
    return detail::value_set_kl(vals, n, base, n, target_schema, opt);
  };

  stats::ShapleyProblem problem;
  problem.players = players;
  problem.value_fn = value_fn;
  problem.mode = players.size() <= opt.max_exact_players ? stats::ShapleyProblem::Mode::Exact
                                                         : stats::ShapleyProblem::Mode::Permutation;
  problem.permutation_samples = opt.permutation_samples;
  problem.seed = derive_seed(opt.seed, {0x9e12ULL});

  AttributionScores out;
  out.method = AttributionMethod::Shapley;
  out.scores = stats::shapley(problem);
  return out;
}

namespace detail {

// Fits the window SCM over `variables`, replacing data-starved mechanisms by
// pooled fits shared across windows (their contribution then cancels).
inline Scm fit_window(const CausalGraph& sub, const StreamLog& log, const StreamLog& other,
                      const FitOptions& opt, const FitContext& ctx,
                      std::vector<std::string>& warnings) {
  Scm scm;
  scm.graph = sub;
  for (const auto& var : sub.variables()) {
    auto fit_one = [&](const StreamLog& l) -> MechanismPtr {
      if (var.parents.empty()) {
        std::vector<Value> observed;
        for (const auto& rec : l.records(var.id)) observed.push_back(rec.value);
        return fit_root(var.id, var.schema, observed, opt);
      }
      auto rows = training_rows(sub, l, var.id);
      auto enc = make_encoder(sub, var.id, ctx, opt.parent_bins);
      return fit_conditional(var.id, var.schema, std::move(enc), rows, opt);
    };
    try {
      scm.mechanisms[var.id] = fit_one(log);
    } catch (const Error& e) {
      if (e.code() != Errc::InsufficientData) throw;
      warnings.push_back("insufficient data for '" + var.id + "' in window '" + log.label +
                         "'; fitted on pooled windows instead");
      StreamLog pooled = log;
      pooled.label = "pooled";
      for (const auto& [id, recs] : other.streams) {
        auto& dst = pooled.streams[id];
        const std::int64_t offset = static_cast<std::int64_t>(dst.size());
        const CorrelationId cid_offset = 1ULL << 40;  // keep pooled cids disjoint
        for (const auto& r : recs) {
          dst.push_back(Record{r.cid + cid_offset, r.t + offset, r.value});
        }
      }
      FitOptions relaxed = opt;
      relaxed.min_samples = 1;
      scm.mechanisms[var.id] = fit_one(pooled);
    }
  }
  return scm;
}

}  // namespace detail

// Proportional-KL attribution: each hop scores an input stream by
// KL(input) / KL(output); aggregation multiplies hop ratios along every path
// from the stream down to the target and sums over distinct paths. Streams
// whose paths all cross a vanishing output shift are reported as
// not-attributable.
inline AttributionScores proportional_attribution(const ChangeWindows& w,
                                                  const ValidatedGraph& graph,
                                                  const StreamId& target,
                                                  const AttributionOptions& opt,
                                                  std::vector<std::string>* warnings_out = nullptr) {
  AttributionScores out;
  out.method = AttributionMethod::ProportionalKl;

  std::set<StreamId> scope = upstream(graph, target);
  scope.insert(target);

  std::map<StreamId, double> kl;
  for (const auto& s : scope) kl[s] = stream_kl(w, graph, s, opt);

  std::vector<std::string> local_warnings;
  auto warn = [&](const std::string& msg) { local_warnings.push_back(msg); };

  if (kl[target] < detail::kKlFloor) {
    for (const auto& s : scope) {
      warn("DegenerateDenominator: stream '" + s + "' not attributable (no shift at target)");
    }
    if (warnings_out) {
      warnings_out->insert(warnings_out->end(), local_warnings.begin(), local_warnings.end());
    }
    return out;
  }

  // children of S within the scope, following producer wiring
  auto scoped_children = [&](const StreamId& s) {
    std::vector<StreamId> kids;
    for (const auto& c : graph.causal().children(s)) {
      if (scope.count(c)) kids.push_back(c);
    }
    return kids;
  };

  std::map<StreamId, std::optional<double>> agg;
  agg[target] = 1.0;
  auto aggregate = [&](auto&& self, const StreamId& s) -> std::optional<double> {
    if (auto it = agg.find(s); it != agg.end()) return it->second;
    double total = 0.0;
    bool any_path = false;
    for (const auto& child : scoped_children(s)) {
      const auto down = self(self, child);
      if (!down) continue;
      if (kl[child] < detail::kKlFloor) {
        warn("DegenerateDenominator: hop '" + s + "' -> '" + child + "' skipped");
        continue;
      }
      total += (kl[s] / kl[child]) * *down;
      any_path = true;
    }
    std::optional<double> result;
    if (any_path) result = total;
    agg[s] = result;
    return result;
  };

  for (const auto& s : scope) {
    const auto score = aggregate(aggregate, s);
    if (score) {
      out.scores[s] = *score;
    } else if (s != target) {
      warn("DegenerateDenominator: stream '" + s + "' not attributable");
    }
  }
  if (warnings_out) {
    warnings_out->insert(warnings_out->end(), local_warnings.begin(), local_warnings.end());
  }
  return out;
}

// probability_i = |score_i| / sum_j |score_j|
inline std::map<StreamId, double> to_probabilities(const AttributionScores& attr) {
  double total = 0.0;
  for (const auto& [id, s] : attr.scores) total += std::abs(s);
  if (total < 1e-12) throw Error(Errc::NoSignal, "all attribution scores are (near) zero");
  std::map<StreamId, double> out;
  for (const auto& [id, s] : attr.scores) out[id] = std::abs(s) / total;
  return out;
}

// Algorithm: walk the graph upward from the target through producing
// components, recording one deviation per (component, output) hop and one
// attribution score per visited stream; a visited set keeps diamond
// topologies from re-enqueuing.
inline AttributionResult attribute_change(const ValidatedGraph& graph, const ChangeWindows& w,
                                          const AttributionOptions& opt = {}) {
  if (!graph.has_stream(w.target)) {
    throw Error(Errc::UnknownStream, "target '" + w.target + "' not in graph");
  }
  AttributionResult result;
  result.shift = detect_shift(w, graph, opt);

  if (graph.producer_of(w.target) == nullptr) {
    // a source target has no components to traverse; it carries its own shift
    result.attribution.method = opt.method;
    result.attribution.scores[w.target] = result.shift.delta;
    try {
      result.probabilities = to_probabilities(result.attribution);
    } catch (const Error& e) {
      if (e.code() != Errc::NoSignal) throw;
      result.no_signal = true;
    }
    return result;
  }

  std::deque<StreamId> queue{w.target};
  std::set<StreamId> visited{w.target};
  while (!queue.empty()) {
    const StreamId s = queue.front();
    queue.pop_front();
    const ComponentSpec* producer = graph.producer_of(s);
    if (!producer) continue;
    try {
      result.deviations[s] = deviation(graph, producer->id, s, w, opt);
    } catch (const Error& e) {
      if (e.code() != Errc::InsufficientData) throw;
      result.warnings.push_back("deviation of '" + s + "' skipped: " + e.what());
    }
    for (const auto& input : graph.causal().parents(s)) {
      if (visited.insert(input).second) queue.push_back(input);
    }
  }

  if (opt.method == AttributionMethod::Shapley) {
    std::vector<CausalGraph::Variable> vars;
    for (const auto& var : graph.causal().variables()) {
      if (visited.count(var.id)) vars.push_back(var);
    }
    const CausalGraph sub = CausalGraph::from_variables(vars);
    const FitContext ctx =
        detail::make_fit_context(sub, {&w.old_log, &w.new_log}, opt.fit.parent_bins);
    FitOptions fit_opt = opt.fit;
    fit_opt.min_samples = std::max(fit_opt.min_samples, opt.min_samples);
    const Scm scm_old = detail::fit_window(sub, w.old_log, w.new_log, fit_opt, ctx, result.warnings);
    const Scm scm_new = detail::fit_window(sub, w.new_log, w.old_log, fit_opt, ctx, result.warnings);
    result.attribution = shapley_attribution(scm_old, scm_new, w.target, opt);
  } else {
    result.attribution = proportional_attribution(w, graph, w.target, opt, &result.warnings);
  }

  try {
    result.probabilities = to_probabilities(result.attribution);
  } catch (const Error& e) {
    if (e.code() != Errc::NoSignal) throw;
    result.no_signal = true;
    result.warnings.push_back("no signal: all attribution scores are (near) zero");
  }
  return result;
}

}  // namespace flowscm
