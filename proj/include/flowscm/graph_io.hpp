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

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "flowscm/error.hpp"
#include "flowscm/graph.hpp"

namespace flowscm {

using Json = nlohmann::ordered_json;

// Graph spec file layout:
//   {
//     "streams":    [{"id": ..., "schema": {...}}, ...],
//     "components": [{"id": ..., "kind": ..., "inputs": {port: stream},
//                     "outputs": {port: stream}}, ...],
//     "sources":    [stream, ...]
//   }
// Schemas: {"kind":"numeric"} | {"kind":"categorical","levels":[...]} |
//          {"kind":"tuple","fields":[{"name":...,"kind":...,...}]}
// Round-trips losslessly; port maps keep file order.

inline Json schema_to_json(const ValueSchema& s) {
  Json j;
  switch (s.kind) {
    case ValueSchema::Kind::Numeric:
      j["kind"] = "numeric";
      break;
    case ValueSchema::Kind::Categorical:
      j["kind"] = "categorical";
      j["levels"] = s.levels;
      break;
    case ValueSchema::Kind::Tuple: {
      j["kind"] = "tuple";
      Json fields = Json::array();
      for (const auto& f : s.fields) {
        Json jf;
        jf["name"] = f.name;
        if (f.kind == FieldKind::Numeric) {
          jf["kind"] = "numeric";
        } else {
          jf["kind"] = "categorical";
          jf["levels"] = f.levels;
        }
        fields.push_back(jf);
      }
      j["fields"] = fields;
      break;
    }
  }
  return j;
}

inline ValueSchema schema_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "numeric") return ValueSchema::numeric();
  if (kind == "categorical") {
    return ValueSchema::categorical(j.at("levels").get<std::vector<std::string>>());
  }
  if (kind == "tuple") {
    std::vector<FieldSchema> fields;
    for (const auto& jf : j.at("fields")) {
      FieldSchema f;
      f.name = jf.at("name").get<std::string>();
      const std::string fk = jf.at("kind").get<std::string>();
      if (fk == "numeric") {
        f.kind = FieldKind::Numeric;
      } else if (fk == "categorical") {
        f.kind = FieldKind::Categorical;
        f.levels = jf.at("levels").get<std::vector<std::string>>();
      } else {
        throw Error(Errc::FileFormat, "unknown field kind '" + fk + "'");
      }
      fields.push_back(std::move(f));
    }
    return ValueSchema::tuple(std::move(fields));
  }
  throw Error(Errc::FileFormat, "unknown schema kind '" + kind + "'");
}

inline Json graph_to_json(const DataflowGraph& g) {
  Json j;
  j["streams"] = Json::array();
  for (const auto& s : g.streams) {
    Json js;
    js["id"] = s.id;
    js["schema"] = schema_to_json(s.schema);
    j["streams"].push_back(js);
  }
  j["components"] = Json::array();
  for (const auto& c : g.components) {
    Json jc;
    jc["id"] = c.id;
    jc["kind"] = c.kind;
    Json in = Json::object(), out = Json::object();
    for (const auto& [port, stream] : c.inputs) in[port] = stream;
    for (const auto& [port, stream] : c.outputs) out[port] = stream;
    jc["inputs"] = in;
    jc["outputs"] = out;
    j["components"].push_back(jc);
  }
  j["sources"] = g.sources;
  return j;
}

inline DataflowGraph graph_from_json(const Json& j) {
  DataflowGraph g;
  try {
    for (const auto& js : j.at("streams")) {
      g.streams.push_back({js.at("id").get<std::string>(), schema_from_json(js.at("schema"))});
    }
    for (const auto& jc : j.at("components")) {
      ComponentSpec c;
      c.id = jc.at("id").get<std::string>();
      c.kind = jc.at("kind").get<std::string>();
      for (const auto& [port, stream] : jc.at("inputs").items()) {
        c.inputs.emplace_back(port, stream.get<std::string>());
      }
      for (const auto& [port, stream] : jc.at("outputs").items()) {
        c.outputs.emplace_back(port, stream.get<std::string>());
      }
      g.components.push_back(std::move(c));
    }
    g.sources = j.at("sources").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw Error(Errc::FileFormat, std::string("bad graph spec: ") + e.what());
  }
  return g;
}

inline void save_graph(const DataflowGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::FileFormat, "cannot write '" + path + "'");
  out << graph_to_json(g).dump(2) << "\n";
}

inline DataflowGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileFormat, "cannot read '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw Error(Errc::FileFormat, std::string("bad JSON in '") + path + "': " + e.what());
  }
  return graph_from_json(j);
}

}  // namespace flowscm
