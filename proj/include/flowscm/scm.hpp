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

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowscm/error.hpp"
#include "flowscm/graph.hpp"
#include "flowscm/log.hpp"
#include "flowscm/mechanism.hpp"
#include "flowscm/rng.hpp"

namespace flowscm {

// A structural causal model over stream variables: the causal graph plus one
// mechanism per variable, with jointly independent noise (asserted by
// construction; every mechanism draws from its own seeded stream).
struct Scm {
  CausalGraph graph;
  std::map<StreamId, MechanismPtr> mechanisms;
  bool independent_noise = true;

  const Mechanism& mechanism(const StreamId& id) const {
    auto it = mechanisms.find(id);
    if (it == mechanisms.end()) throw Error(Errc::UnknownVariable, "no mechanism for '" + id + "'");
    return *it->second;
  }
};

struct Intervention {
  enum class Kind { Atomic, Soft };

  StreamId target;
  Kind kind = Kind::Atomic;
  Value value;        // Atomic
  MechanismPtr soft;  // Soft

  static Intervention atomic(StreamId target, Value x0) {
    Intervention i;
    i.target = std::move(target);
    i.kind = Kind::Atomic;
    i.value = std::move(x0);
    return i;
  }

  static Intervention soft_replace(StreamId target, MechanismPtr q) {
    Intervention i;
    i.target = std::move(target);
    i.kind = Kind::Soft;
    i.soft = std::move(q);
    return i;
  }
};

namespace detail {

// Binnings for numeric parent fields, per stream, from one or more logs.
inline FitContext make_fit_context(const CausalGraph& graph,
                                   const std::vector<const StreamLog*>& logs, int bins) {
  FitContext ctx;
  for (const auto& var : graph.variables()) {
    const auto fields = var.schema.flat_fields();
    std::vector<NumericBinning> bs(fields.size(), NumericBinning{0.0, 1.0, bins});
    std::vector<bool> seen(fields.size(), false);
    for (const StreamLog* log : logs) {
      if (!log->has(var.id)) continue;
      for (const auto& rec : log->records(var.id)) {
        for (std::size_t f = 0; f < fields.size(); ++f) {
          if (fields[f].kind != FieldKind::Numeric) continue;
          const double x = as_number(rec.value.parts[f]);
          if (!seen[f]) {
            bs[f].lo = bs[f].hi = x;
            seen[f] = true;
          } else {
            bs[f].lo = std::min(bs[f].lo, x);
            bs[f].hi = std::max(bs[f].hi, x);
          }
        }
      }
    }
    ctx.binnings[var.id] = std::move(bs);
  }
  return ctx;
}

inline ParentEncoder make_encoder(const CausalGraph& graph, const StreamId& target,
                                  const FitContext& ctx, int bins) {
  const auto& var = graph.variable(target);
  std::vector<StreamId> ids = var.parents;
  std::vector<ValueSchema> schemas;
  for (const auto& p : ids) schemas.push_back(graph.variable(p).schema);
  ParentEncoder enc(ids, schemas, bins);
  for (auto& slot : enc.slots()) {
    auto it = ctx.binnings.find(slot.id);
    if (it == ctx.binnings.end()) continue;
    for (std::size_t f = 0; f < slot.binnings.size(); ++f) {
      if (slot.fields[f].kind == FieldKind::Numeric && f < it->second.size()) {
        slot.binnings[f] = it->second[f];
        slot.binnings[f].bins = bins;
      }
    }
  }
  return enc;
}

// Joins one variable's training rows from the log: one row per correlation id
// seen on any parent, with the output value where the stream fired.
inline std::vector<TrainingRow> training_rows(const CausalGraph& graph, const StreamLog& log,
                                              const StreamId& target) {
  const auto& var = graph.variable(target);
  std::vector<std::map<CorrelationId, std::size_t>> parent_index;
  std::set<CorrelationId> cids;
  for (const auto& p : var.parents) {
    parent_index.push_back(log.cid_index(p));
    for (const auto& [cid, idx] : parent_index.back()) cids.insert(cid);
  }
  std::map<CorrelationId, std::size_t> out_index = log.cid_index(target);

  std::vector<TrainingRow> rows;
  rows.reserve(cids.size());
  for (CorrelationId cid : cids) {
    TrainingRow row;
    for (std::size_t p = 0; p < var.parents.size(); ++p) {
      auto it = parent_index[p].find(cid);
      if (it == parent_index[p].end()) {
        row.parents.emplace_back(std::nullopt);
      } else {
        row.parents.emplace_back(log.records(var.parents[p])[it->second].value);
      }
    }
    if (auto it = out_index.find(cid); it != out_index.end()) {
      row.output = log.records(target)[it->second].value;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

// Fits one mechanism per variable from the observed log: sources get
// empirical marginals, numeric targets additive-noise regressions,
// categorical targets smoothed conditional tables. A shared FitContext keeps
// discretisation identical across windows when two fits will be compared.
inline Scm fit(const CausalGraph& graph, const StreamLog& log, const FitOptions& opt = {},
               const FitContext* shared_context = nullptr) {
  Scm scm;
  scm.graph = graph;
  FitContext local;
  if (!shared_context) {
    local = detail::make_fit_context(graph, {&log}, opt.parent_bins);
    shared_context = &local;
  }
  for (const auto& var : graph.variables()) {
    if (var.parents.empty()) {
      std::vector<Value> observed;
      for (const auto& rec : log.records(var.id)) observed.push_back(rec.value);
      scm.mechanisms[var.id] = fit_root(var.id, var.schema, observed, opt);
    } else {
      auto rows = detail::training_rows(graph, log, var.id);
      auto enc = detail::make_encoder(graph, var.id, *shared_context, opt.parent_bins);
      scm.mechanisms[var.id] = fit_conditional(var.id, var.schema, std::move(enc), rows, opt);
    }
  }
  return scm;
}

// Ancestral sampling along the Markov factorisation: every variable draws
// from its causal conditional given already-sampled parents, in topological
// order. Deterministic under (scm, n, seed); each (variable, record) pair has
// its own derived random stream.
inline StreamLog sample(const Scm& scm, std::size_t n, std::uint64_t seed,
                        const std::string& label = "sampled") {
  StreamLog log;
  log.label = label;
  const auto& vars = scm.graph.variables();
  for (const auto& var : vars) log.streams[var.id];

  // per-cid sampled values, nullopt where a routed stream did not fire
  std::vector<std::map<StreamId, std::optional<Value>>> world(n);
  for (std::size_t vi = 0; vi < vars.size(); ++vi) {
    const auto& var = vars[vi];
    const Mechanism& mech = scm.mechanism(var.id);
    const auto& mech_parents = mech.parents();
    auto& recs = log.streams[var.id];
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(seed, {0x5a3fULL, vi, i}));
      ParentValues pv;
      pv.reserve(mech_parents.size());
      for (const auto& p : mech_parents) {
        auto it = world[i].find(p);
        pv.push_back(it == world[i].end() ? std::nullopt : it->second);
      }
      const double pres = mech.presence_probability(pv);
      const bool present = pres >= 1.0 || rng.uniform01() < pres;
      if (!present) {
        world[i][var.id] = std::nullopt;
        continue;
      }
      Value v = mech.sample_value(pv, rng);
      world[i][var.id] = v;
      recs.push_back(Record{static_cast<CorrelationId>(i + 1),
                            static_cast<std::int64_t>(recs.size()), std::move(v)});
    }
  }
  return log;
}

// Truncated factorisation: replaces only the intervened factors. Atomic
// interventions become point masses, soft interventions the given
// replacement conditional; every other mechanism object is shared untouched.
inline Scm intervene(const Scm& scm, const std::vector<Intervention>& interventions) {
  std::set<StreamId> targets;
  for (const auto& iv : interventions) {
    if (!targets.insert(iv.target).second) {
      throw Error(Errc::Usage, "duplicate intervention target '" + iv.target + "'");
    }
  }
  Scm out;
  out.graph = scm.graph;
  out.mechanisms = scm.mechanisms;
  out.independent_noise = scm.independent_noise;
  for (const auto& iv : interventions) {
    if (!scm.graph.contains(iv.target)) {
      throw Error(Errc::UnknownVariable, "intervention on unknown stream '" + iv.target + "'");
    }
    const auto& var = scm.graph.variable(iv.target);
    if (iv.kind == Intervention::Kind::Atomic) {
      out.mechanisms[iv.target] = point_mass(var.schema, iv.value);
    } else {
      if (!iv.soft) throw Error(Errc::Usage, "soft intervention without a mechanism");
      const auto& allowed = var.parents;
      for (const auto& p : iv.soft->parents()) {
        if (std::find(allowed.begin(), allowed.end(), p) == allowed.end()) {
          throw Error(Errc::Usage, "soft mechanism parent '" + p +
                                       "' is not a parent of '" + iv.target + "'");
        }
      }
      out.mechanisms[iv.target] = iv.soft;
    }
  }
  return out;
}

// Sum of per-mechanism log conditionals under the Markov factorisation.
// Requires a fully present assignment; -inf for zero-mass assignments,
// DensityUndefined where any mechanism lacks a density.
inline double joint_log_density(const Scm& scm, const std::map<StreamId, Value>& assignment) {
  double total = 0.0;
  for (const auto& var : scm.graph.variables()) {
    auto it = assignment.find(var.id);
    if (it == assignment.end()) {
      throw Error(Errc::Usage, "assignment missing stream '" + var.id + "'");
    }
    const Mechanism& mech = scm.mechanism(var.id);
    ParentValues pv;
    for (const auto& p : mech.parents()) pv.push_back(assignment.at(p));
    const double ld = mech.log_density(pv, it->second);
    if (ld == kNegInf) return kNegInf;
    total += ld;
  }
  return total;
}

}  // namespace flowscm
