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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowscm/error.hpp"
#include "flowscm/graph.hpp"
#include "flowscm/log.hpp"
#include "flowscm/rng.hpp"
#include "flowscm/value.hpp"

namespace flowscm {

// One firing's worth of input: the records sharing a correlation id across the
// component's input ports. Streams are partitioned by routers, so a port may
// have no record for a given id.
class Bundle {
 public:
  Bundle(CorrelationId cid, std::map<PortName, const Record*> inputs)
      : cid_(cid), inputs_(std::move(inputs)) {}

  CorrelationId cid() const { return cid_; }

  const Record* get(const PortName& port) const {
    auto it = inputs_.find(port);
    return it == inputs_.end() ? nullptr : it->second;
  }

  const Record& require(const PortName& port) const {
    const Record* r = get(port);
    if (!r) throw Error(Errc::MissingSource, "bundle has no record on port '" + port + "'");
    return *r;
  }

  bool any_present() const {
    for (const auto& [port, rec] : inputs_) {
      if (rec) return true;
    }
    return false;
  }

 private:
  CorrelationId cid_;
  std::map<PortName, const Record*> inputs_;
};

// Collects a transform's emissions for one firing.
class Emitter {
 public:
  void emit(const PortName& port, Value value) { out_[port].push_back(std::move(value)); }

  const std::map<PortName, std::vector<Value>>& emitted() const { return out_; }

 private:
  std::map<PortName, std::vector<Value>> out_;
};

// A pure component body: output depends only on the input bundle and the
// seeded rng handed in per firing. Emitted records inherit the bundle's
// correlation id.
class Transform {
 public:
  virtual ~Transform() = default;
  virtual void apply(const Bundle& in, Emitter& out, Rng& rng) const = 0;
};

// Stationary record generator for a source stream; stationarity within a
// window is the caller's contract (a generator is never reconfigured
// mid-window).
class SourceGenerator {
 public:
  virtual ~SourceGenerator() = default;
  virtual Value next(Rng& rng) const = 0;
};

using TransformPtr = std::shared_ptr<const Transform>;
using GeneratorPtr = std::shared_ptr<const SourceGenerator>;

// Transforms are registered by name; graph spec files reference them through
// the component `kind` field.
class TransformRegistry {
 public:
  static TransformRegistry& global() {
    static TransformRegistry reg;
    return reg;
  }

  void add(const std::string& kind, TransformPtr t) { map_[kind] = std::move(t); }

  TransformPtr find(const std::string& kind) const {
    auto it = map_.find(kind);
    return it == map_.end() ? nullptr : it->second;
  }

  TransformPtr require(const std::string& kind) const {
    auto t = find(kind);
    if (!t) throw Error(Errc::NodeNotFound, "no transform registered for kind '" + kind + "'");
    return t;
  }

 private:
  std::map<std::string, TransformPtr> map_;
};

class FnTransform final : public Transform {
 public:
  using Fn = std::function<void(const Bundle&, Emitter&, Rng&)>;
  explicit FnTransform(Fn fn) : fn_(std::move(fn)) {}
  void apply(const Bundle& in, Emitter& out, Rng& rng) const override { fn_(in, out, rng); }

 private:
  Fn fn_;
};

inline TransformPtr make_transform(FnTransform::Fn fn) {
  return std::make_shared<FnTransform>(std::move(fn));
}

class FnGenerator final : public SourceGenerator {
 public:
  using Fn = std::function<Value(Rng&)>;
  explicit FnGenerator(Fn fn) : fn_(std::move(fn)) {}
  Value next(Rng& rng) const override { return fn_(rng); }

 private:
  Fn fn_;
};

inline GeneratorPtr make_generator(FnGenerator::Fn fn) {
  return std::make_shared<FnGenerator>(std::move(fn));
}

namespace detail {

// Components ordered so every component runs after the producers of all its
// inputs; tie-break on component id for determinism.
inline std::vector<std::size_t> component_schedule(const ValidatedGraph& g) {
  const auto& comps = g.graph().components;
  std::map<StreamId, std::size_t> depth;  // stream -> topo rank
  const auto& vars = g.causal().variables();
  for (std::size_t i = 0; i < vars.size(); ++i) depth[vars[i].id] = i;

  std::vector<std::size_t> order(comps.size());
  for (std::size_t i = 0; i < comps.size(); ++i) order[i] = i;
  auto rank = [&](std::size_t ci) {
    std::size_t r = 0;
    for (const auto& [port, stream] : comps[ci].outputs) r = std::max(r, depth.at(stream));
    return r;
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const std::size_t ra = rank(a), rb = rank(b);
    if (ra != rb) return ra < rb;
    return comps[a].id < comps[b].id;
  });
  return order;
}

}  // namespace detail

// Executes a validated graph over `n` generated source records with a
// single-pass deterministic scheduler, logging every stream. Identical
// (graph, generators, n, seed) yield bit-identical logs.
inline StreamLog run(const ValidatedGraph& graph,
                     const std::map<StreamId, GeneratorPtr>& sources, std::size_t n,
                     std::uint64_t seed, const std::string& label = "run",
                     const TransformRegistry& registry = TransformRegistry::global()) {
  if (n < 1) throw Error(Errc::Usage, "run requires n >= 1");
  for (const auto& src : graph.graph().sources) {
    if (!sources.count(src)) throw Error(Errc::MissingSource, "no generator for source '" + src + "'");
  }

  StreamLog log;
  log.label = label;
  for (const auto& var : graph.causal().variables()) log.streams[var.id];

  auto append = [&](const StreamId& stream, CorrelationId cid, const Value& v) {
    if (auto why = schema_mismatch(v, graph.schema_of(stream))) {
      throw Error(Errc::SchemaViolation, "stream '" + stream + "' record " +
                                             std::to_string(cid) + ": " + *why);
    }
    auto& recs = log.streams[stream];
    recs.push_back(Record{cid, static_cast<std::int64_t>(recs.size()), v});
  };

  // Source records first: correlation ids are the global sequence 1..n.
  std::size_t src_tag = 0;
  for (const auto& src : graph.graph().sources) {
    const auto& gen = *sources.at(src);
    Rng rng(derive_seed(seed, {0x5ecu, src_tag++}));
    for (std::size_t i = 0; i < n; ++i) {
      append(src, static_cast<CorrelationId>(i + 1), gen.next(rng));
    }
  }

  // Then each component in topological order, batch over correlation ids.
  const auto schedule = detail::component_schedule(graph);
  for (std::size_t ci : schedule) {
    const auto& comp = graph.graph().components[ci];
    const auto transform = registry.require(comp.kind);

    std::map<PortName, std::map<CorrelationId, std::size_t>> port_index;
    std::set<CorrelationId> cids;
    for (const auto& [port, stream] : comp.inputs) {
      port_index[port] = log.cid_index(stream);
      for (const auto& [cid, idx] : port_index[port]) cids.insert(cid);
    }

    for (CorrelationId cid : cids) {
      std::map<PortName, const Record*> inputs;
      for (const auto& [port, stream] : comp.inputs) {
        const auto& index = port_index[port];
        auto it = index.find(cid);
        inputs[port] = it == index.end() ? nullptr : &log.streams[stream][it->second];
      }
      Bundle bundle(cid, std::move(inputs));
      Emitter emitter;
      Rng rng(derive_seed(seed, {0xc0deULL, ci, cid}));
      transform->apply(bundle, emitter, rng);
      for (const auto& [port, values] : emitter.emitted()) {
        StreamId stream;
        for (const auto& [p, s] : comp.outputs) {
          if (p == port) stream = s;
        }
        if (stream.empty()) {
          throw Error(Errc::DanglingPort, "component '" + comp.id +
                                              "' emitted on unknown port '" + port + "'");
        }
        for (const auto& v : values) append(stream, cid, v);
      }
    }
  }
  return log;
}

// One joined observation for a component's output stream: the input records
// sharing the output's correlation id (optional per port, since routed inputs
// may be absent) and the output value where one exists.
struct IoRow {
  CorrelationId cid = 0;
  std::vector<std::optional<Value>> inputs;  // parallel to `ports`
  std::optional<Value> output;
};

struct IoJoin {
  StreamId output_stream;
  std::vector<PortName> ports;     // component input ports, declaration order
  std::vector<StreamId> port_streams;
  std::vector<IoRow> rows;         // one row per cid seen on any input
  std::size_t dropped = 0;         // output records whose cid matched no input

  // Rows where the output actually fired; the (input, output) pairs proper.
  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.output) ++n;
    }
    return n;
  }
};

// Joins a component's (input, output) observations on correlation id, one
// IoJoin per output stream. Rows with no output record are retained: they are
// what routing decisions look like from the outside.
inline std::vector<IoJoin> join_io_pairs(const StreamLog& log, const ValidatedGraph& graph,
                                         const ComponentId& component) {
  const ComponentSpec& comp = graph.component(component);
  for (const auto& [port, stream] : comp.inputs) log.records(stream);
  for (const auto& [port, stream] : comp.outputs) log.records(stream);

  std::vector<std::map<CorrelationId, std::size_t>> in_index;
  std::set<CorrelationId> cids;
  for (const auto& [port, stream] : comp.inputs) {
    in_index.push_back(log.cid_index(stream));
    for (const auto& [cid, idx] : in_index.back()) cids.insert(cid);
  }

  std::vector<IoJoin> joins;
  for (const auto& [oport, ostream] : comp.outputs) {
    IoJoin join;
    join.output_stream = ostream;
    for (const auto& [port, stream] : comp.inputs) {
      join.ports.push_back(port);
      join.port_streams.push_back(stream);
    }
    std::map<CorrelationId, const Record*> out_by_cid;
    for (const auto& r : log.records(ostream)) out_by_cid[r.cid] = &r;

    for (CorrelationId cid : cids) {
      IoRow row;
      row.cid = cid;
      for (std::size_t p = 0; p < in_index.size(); ++p) {
        auto it = in_index[p].find(cid);
        if (it == in_index[p].end()) {
          row.inputs.emplace_back(std::nullopt);
        } else {
          row.inputs.emplace_back(log.records(join.port_streams[p])[it->second].value);
        }
      }
      if (auto it = out_by_cid.find(cid); it != out_by_cid.end()) {
        row.output = it->second->value;
        out_by_cid.erase(it);
      }
      join.rows.push_back(std::move(row));
    }
    join.dropped = out_by_cid.size();  // outputs with no matching input record
    joins.push_back(std::move(join));
  }
  return joins;
}

}  // namespace flowscm
