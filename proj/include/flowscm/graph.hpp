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
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "flowscm/error.hpp"
#include "flowscm/value.hpp"

namespace flowscm {

struct StreamSpec {
  StreamId id;
  ValueSchema schema;

  bool operator==(const StreamSpec&) const = default;
};

// One computational node: named input/output ports wired to streams, plus the
// name of a registered transform implementing it.
struct ComponentSpec {
  ComponentId id;
  std::string kind;
  std::vector<std::pair<PortName, StreamId>> inputs;
  std::vector<std::pair<PortName, StreamId>> outputs;

  bool operator==(const ComponentSpec&) const = default;

  std::vector<StreamId> input_streams() const {
    std::vector<StreamId> out;
    out.reserve(inputs.size());
    for (const auto& [port, stream] : inputs) out.push_back(stream);
    return out;
  }
};

// The design artifact: components wired by uniquely-produced streams.
struct DataflowGraph {
  std::vector<StreamSpec> streams;
  std::vector<ComponentSpec> components;
  std::vector<StreamId> sources;

  bool operator==(const DataflowGraph&) const = default;
};

class ValidatedGraph;
inline ValidatedGraph validate(const DataflowGraph& g);

// Causal view of a validated graph: one variable per stream, parents equal to
// the producing component's input streams, variables in deterministic
// topological order (lexicographic tie-break).
class CausalGraph {
 public:
  struct Variable {
    StreamId id;
    ValueSchema schema;
    std::vector<StreamId> parents;  // sorted
  };

  // Builds a causal graph directly from variable declarations, re-deriving
  // the deterministic topological order (lexicographic tie-break).
  static CausalGraph from_variables(std::vector<Variable> vars) {
    std::map<StreamId, Variable> by_id;
    for (auto& v : vars) {
      std::sort(v.parents.begin(), v.parents.end());
      if (!by_id.emplace(v.id, v).second) {
        throw Error(Errc::DuplicateId, "variable '" + v.id + "' declared twice");
      }
    }
    std::map<StreamId, std::size_t> remaining;
    std::map<StreamId, std::vector<StreamId>> kids;
    std::set<StreamId> ready;
    for (const auto& [id, v] : by_id) {
      for (const auto& p : v.parents) {
        if (!by_id.count(p)) throw Error(Errc::UnknownStream, "parent '" + p + "' undeclared");
        kids[p].push_back(id);
      }
      remaining[id] = v.parents.size();
      if (v.parents.empty()) ready.insert(id);
    }
    CausalGraph g;
    while (!ready.empty()) {
      StreamId id = *ready.begin();
      ready.erase(ready.begin());
      g.index_[id] = g.order_.size();
      g.order_.push_back(by_id.at(id));
      for (const auto& k : kids[id]) {
        if (--remaining[k] == 0) ready.insert(k);
      }
    }
    if (g.order_.size() != by_id.size()) {
      throw Error(Errc::CycleDetected, "variable declarations contain a cycle");
    }
    return g;
  }

  const std::vector<Variable>& variables() const { return order_; }

  bool contains(const StreamId& id) const { return index_.count(id) > 0; }

  const Variable& variable(const StreamId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(Errc::UnknownStream, "no variable '" + id + "'");
    return order_[it->second];
  }

  const std::vector<StreamId>& parents(const StreamId& id) const { return variable(id).parents; }

  std::vector<StreamId> children(const StreamId& id) const {
    variable(id);  // existence check
    std::vector<StreamId> out;
    for (const auto& v : order_) {
      if (std::find(v.parents.begin(), v.parents.end(), id) != v.parents.end()) {
        out.push_back(v.id);
      }
    }
    return out;
  }

  // Transitive closure over the parent relation, excluding `id` itself.
  std::set<StreamId> ancestors(const StreamId& id) const {
    std::set<StreamId> seen;
    std::vector<StreamId> stack{id};
    while (!stack.empty()) {
      StreamId cur = stack.back();
      stack.pop_back();
      for (const auto& p : parents(cur)) {
        if (seen.insert(p).second) stack.push_back(p);
      }
    }
    return seen;
  }

  std::set<StreamId> descendants(const StreamId& id) const {
    std::set<StreamId> seen;
    std::vector<StreamId> stack{id};
    while (!stack.empty()) {
      StreamId cur = stack.back();
      stack.pop_back();
      for (const auto& c : children(cur)) {
        if (seen.insert(c).second) stack.push_back(c);
      }
    }
    return seen;
  }

 private:
  friend class ValidatedGraph;
  friend ValidatedGraph validate(const DataflowGraph&);

  std::vector<Variable> order_;
  std::map<StreamId, std::size_t> index_;
};

namespace detail {

// FNV-1a over the wiring only (streams, ports, sources); transform kinds are
// excluded so swapping a component's implementation keeps the hash stable.
inline std::uint64_t fnv1a(std::uint64_t h, const std::string& s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  h ^= 0x1f;
  h *= 1099511628211ULL;
  return h;
}

}  // namespace detail

// A DataflowGraph stamped valid by validate(), carrying the derived causal
// graph and producer/consumer indexes. Immutable.
class ValidatedGraph {
 public:
  const DataflowGraph& graph() const { return graph_; }
  const CausalGraph& causal() const { return causal_; }

  const ValueSchema& schema_of(const StreamId& id) const {
    return causal_.variable(id).schema;
  }

  bool has_stream(const StreamId& id) const { return causal_.contains(id); }

  // Producing component, or nullptr for source streams.
  const ComponentSpec* producer_of(const StreamId& id) const {
    causal_.variable(id);  // existence check
    auto it = producer_.find(id);
    return it == producer_.end() ? nullptr : &graph_.components[it->second];
  }

  const ComponentSpec& component(const ComponentId& id) const {
    for (const auto& c : graph_.components) {
      if (c.id == id) return c;
    }
    throw Error(Errc::NodeNotFound, "no component '" + id + "'");
  }

  std::uint64_t topology_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& s : graph_.streams) h = detail::fnv1a(h, s.id);
    for (const auto& c : graph_.components) {
      h = detail::fnv1a(h, c.id);
      for (const auto& [p, s] : c.inputs) h = detail::fnv1a(detail::fnv1a(h, p), s);
      for (const auto& [p, s] : c.outputs) h = detail::fnv1a(detail::fnv1a(h, p), s);
    }
    for (const auto& s : graph_.sources) h = detail::fnv1a(h, s);
    return h;
  }

 private:
  friend ValidatedGraph validate(const DataflowGraph&);

  DataflowGraph graph_;
  CausalGraph causal_;
  std::map<StreamId, std::size_t> producer_;  // stream -> component index
};

inline std::vector<Violation> check(const DataflowGraph& g) {
  std::vector<Violation> out;
  std::set<StreamId> declared;
  for (const auto& s : g.streams) {
    if (s.id.empty()) {
      out.push_back({Errc::UnknownStream, "<empty>", "stream with empty id"});
      continue;
    }
    if (!declared.insert(s.id).second) {
      out.push_back({Errc::DuplicateId, s.id, "stream declared more than once"});
    }
  }

  std::set<ComponentId> component_ids;
  std::map<StreamId, std::vector<ComponentId>> producers;
  std::set<StreamId> referenced;
  for (const auto& c : g.components) {
    if (c.id.empty()) out.push_back({Errc::DuplicateId, "<empty>", "component with empty id"});
    if (!component_ids.insert(c.id).second) {
      out.push_back({Errc::DuplicateId, c.id, "component declared more than once"});
    }
    std::set<PortName> ports;
    auto check_port = [&](const PortName& port, const StreamId& stream, const char* dir) {
      const std::string subject = c.id + "/" + port;
      if (port.empty() || stream.empty()) {
        out.push_back({Errc::DanglingPort, subject,
                       std::string(dir) + " port with empty name or stream"});
        return;
      }
      if (!ports.insert(port).second) {
        out.push_back({Errc::DanglingPort, subject, "duplicate port name"});
      }
      if (!declared.count(stream)) {
        out.push_back({Errc::UnknownStream, subject, "references undeclared stream '" + stream + "'"});
      }
      referenced.insert(stream);
    };
    for (const auto& [port, stream] : c.inputs) check_port(port, stream, "input");
    for (const auto& [port, stream] : c.outputs) check_port(port, stream, "output");
    if (c.outputs.empty()) {
      out.push_back({Errc::DanglingPort, c.id, "component has no output ports"});
    }
    for (const auto& [port, stream] : c.outputs) {
      if (declared.count(stream)) producers[stream].push_back(c.id);
    }
  }

  for (const auto& [stream, who] : producers) {
    if (who.size() > 1) {
      std::string list;
      for (const auto& id : who) list += (list.empty() ? "" : ", ") + id;
      out.push_back({Errc::MultipleProducers, stream, "produced by " + list});
    }
  }

  std::set<StreamId> source_set;
  for (const auto& s : g.sources) {
    if (!declared.count(s)) {
      out.push_back({Errc::UnknownStream, s, "declared source is not a declared stream"});
      continue;
    }
    source_set.insert(s);
    if (producers.count(s)) {
      out.push_back({Errc::SourceConflict, s, "declared source has a producing component"});
    }
  }
  for (const auto& s : g.streams) {
    if (!declared.count(s.id)) continue;
    if (!producers.count(s.id) && !source_set.count(s.id)) {
      out.push_back({Errc::MissingProducer, s.id,
                     "stream has no producing component and is not a source"});
    }
    if (!referenced.count(s.id) && !source_set.count(s.id)) {
      out.push_back({Errc::UnreferencedStream, s.id, "stream is not wired to any port"});
    }
  }

  // Acyclicity over stream -> component -> stream edges, reported as a stream
  // path. Only meaningful once producers are unique.
  if (out.empty()) {
    std::map<StreamId, std::vector<StreamId>> children;
    for (const auto& c : g.components) {
      for (const auto& [ip, is] : c.inputs) {
        for (const auto& [op, os] : c.outputs) children[is].push_back(os);
      }
    }
    std::map<StreamId, int> state;  // 0 unseen, 1 on stack, 2 done
    std::vector<StreamId> stack;
    std::vector<StreamId> cycle;
    auto dfs = [&](auto&& self, const StreamId& s) -> bool {
      state[s] = 1;
      stack.push_back(s);
      for (const auto& child : children[s]) {
        if (state[child] == 1) {
          auto it = std::find(stack.begin(), stack.end(), child);
          cycle.assign(it, stack.end());
          cycle.push_back(child);
          return true;
        }
        if (state[child] == 0 && self(self, child)) return true;
      }
      stack.pop_back();
      state[s] = 2;
      return false;
    };
    for (const auto& s : g.streams) {
      if (state[s.id] == 0 && dfs(dfs, s.id)) {
        std::string path;
        for (const auto& n : cycle) path += (path.empty() ? "" : " -> ") + n;
        out.push_back({Errc::CycleDetected, cycle.front(), path});
        break;
      }
    }
  }
  return out;
}

// Validates a dataflow graph and derives its causal graph. Throws
// ValidationError carrying the full violation list on failure. Idempotent:
// re-validating a validated graph's spec yields an equal result.
inline ValidatedGraph validate(const DataflowGraph& g) {
  auto violations = check(g);
  if (!violations.empty()) throw ValidationError(std::move(violations));

  ValidatedGraph v;
  v.graph_ = g;

  std::map<StreamId, const StreamSpec*> spec_of;
  for (const auto& s : g.streams) spec_of[s.id] = &s;

  std::map<StreamId, std::vector<StreamId>> parents;
  for (const auto& s : g.streams) parents[s.id] = {};
  for (std::size_t ci = 0; ci < g.components.size(); ++ci) {
    const auto& c = g.components[ci];
    std::vector<StreamId> ins = c.input_streams();
    std::sort(ins.begin(), ins.end());
    ins.erase(std::unique(ins.begin(), ins.end()), ins.end());
    for (const auto& [port, stream] : c.outputs) {
      parents[stream] = ins;
      v.producer_[stream] = ci;
    }
  }

  // Kahn's algorithm with a lexicographic ready set.
  std::map<StreamId, std::size_t> remaining;
  std::map<StreamId, std::vector<StreamId>> kids;
  std::set<StreamId> ready;
  for (const auto& [s, ps] : parents) {
    remaining[s] = ps.size();
    for (const auto& p : ps) kids[p].push_back(s);
    if (ps.empty()) ready.insert(s);
  }
  while (!ready.empty()) {
    StreamId s = *ready.begin();
    ready.erase(ready.begin());
    v.causal_.index_[s] = v.causal_.order_.size();
    v.causal_.order_.push_back({s, spec_of.at(s)->schema, parents.at(s)});
    for (const auto& k : kids[s]) {
      if (--remaining[k] == 0) ready.insert(k);
    }
  }
  return v;
}

inline const CausalGraph& derive_causal_graph(const ValidatedGraph& g) { return g.causal(); }

// Transitive upstream closure of `stream` (excludes the stream itself).
inline std::set<StreamId> upstream(const ValidatedGraph& g, const StreamId& stream) {
  return g.causal().ancestors(stream);
}

inline std::set<StreamId> downstream(const ValidatedGraph& g, const StreamId& stream) {
  return g.causal().descendants(stream);
}

}  // namespace flowscm
