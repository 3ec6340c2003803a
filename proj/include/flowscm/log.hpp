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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowscm/error.hpp"
#include "flowscm/graph.hpp"
#include "flowscm/value.hpp"

namespace flowscm {

struct Record {
  CorrelationId cid = 0;
  std::int64_t t = 0;  // per-stream sequence index, strictly increasing
  Value value;

  bool operator==(const Record&) const = default;
};

// Everything observed on each stream within one time window.
struct StreamLog {
  std::map<StreamId, std::vector<Record>> streams;
  std::string label;
  std::vector<std::string> warnings;

  bool operator==(const StreamLog& o) const {
    return streams == o.streams && label == o.label;
  }

  const std::vector<Record>& records(const StreamId& id) const {
    auto it = streams.find(id);
    if (it == streams.end()) throw Error(Errc::UnknownStream, "no log for stream '" + id + "'");
    return it->second;
  }

  bool has(const StreamId& id) const { return streams.count(id) > 0; }

  std::size_t count(const StreamId& id) const { return records(id).size(); }

  // cid -> record index, for correlation joins. Records are cid-sorted by
  // construction in run()/sample(); loaded logs are re-sorted by the loader.
  std::map<CorrelationId, std::size_t> cid_index(const StreamId& id) const {
    std::map<CorrelationId, std::size_t> out;
    const auto& recs = records(id);
    for (std::size_t i = 0; i < recs.size(); ++i) out[recs[i].cid] = i;
    return out;
  }
};

// Slice every stream to records with from_t <= t <= to_t. Streams that end up
// empty are kept and surfaced as warnings, not failures.
inline StreamLog window(const StreamLog& log, std::int64_t from_t, std::int64_t to_t,
                        const std::string& label) {
  if (from_t > to_t) throw Error(Errc::Usage, "window with from_t > to_t");
  StreamLog out;
  out.label = label;
  for (const auto& [id, recs] : log.streams) {
    auto& dst = out.streams[id];
    for (const auto& r : recs) {
      if (r.t >= from_t && r.t <= to_t) dst.push_back(r);
    }
    if (dst.empty()) out.warnings.push_back("EmptyWindow: stream '" + id + "' in window '" + label + "'");
  }
  return out;
}

// --- persistence ------------------------------------------------------------
//
// One line-delimited file per stream: logs/<window-label>/<stream-id>.ndjson,
// each line {"correlation_id": ..., "t": ..., "value": ...}. Scalar values are
// emitted as JSON literals, tuples as objects keyed by field name.

inline nlohmann::ordered_json value_to_json(const Value& v, const ValueSchema& schema) {
  auto scalar_json = [](const Scalar& s) -> nlohmann::ordered_json {
    if (is_number(s)) return as_number(s);
    return as_level(s);
  };
  if (schema.scalar()) return scalar_json(v.parts.at(0));
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  const auto fields = schema.flat_fields();
  for (std::size_t i = 0; i < fields.size(); ++i) j[fields[i].name] = scalar_json(v.parts.at(i));
  return j;
}

inline Value value_from_json(const nlohmann::ordered_json& j, const ValueSchema& schema) {
  auto scalar_from = [](const nlohmann::ordered_json& js, const FieldSchema& f) -> Scalar {
    if (f.kind == FieldKind::Numeric) {
      if (!js.is_number()) throw Error(Errc::FileFormat, "field '" + f.name + "' must be a number");
      return Scalar{js.get<double>()};
    }
    if (!js.is_string()) throw Error(Errc::FileFormat, "field '" + f.name + "' must be a string");
    return Scalar{js.get<std::string>()};
  };
  const auto fields = schema.flat_fields();
  Value v;
  if (schema.scalar()) {
    v.parts.push_back(scalar_from(j, fields.at(0)));
    return v;
  }
  if (!j.is_object()) throw Error(Errc::FileFormat, "tuple value must be an object");
  for (const auto& f : fields) {
    if (!j.contains(f.name)) throw Error(Errc::FileFormat, "missing tuple field '" + f.name + "'");
    v.parts.push_back(scalar_from(j.at(f.name), f));
  }
  return v;
}

inline void save_logs(const StreamLog& log, const ValidatedGraph& graph, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& [id, recs] : log.streams) {
    const ValueSchema& schema = graph.schema_of(id);
    std::ofstream out(fs::path(dir) / (id + ".ndjson"));
    if (!out) throw Error(Errc::FileFormat, "cannot write log for stream '" + id + "'");
    for (const auto& r : recs) {
      nlohmann::ordered_json j;
      j["correlation_id"] = r.cid;
      j["t"] = r.t;
      j["value"] = value_to_json(r.value, schema);
      out << j.dump() << "\n";
    }
  }
}

// Loads a log directory, validating every record against the graph's stream
// schemas. Streams of the graph with no file load as empty.
inline StreamLog load_logs(const ValidatedGraph& graph, const std::string& dir,
                           const std::string& label = "") {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(Errc::FileFormat, "no log directory '" + dir + "'");
  StreamLog log;
  log.label = label.empty() ? fs::path(dir).filename().string() : label;
  for (const auto& var : graph.causal().variables()) {
    auto& recs = log.streams[var.id];
    const fs::path file = fs::path(dir) / (var.id + ".ndjson");
    if (!fs::exists(file)) {
      log.warnings.push_back("no log file for stream '" + var.id + "'");
      continue;
    }
    std::ifstream in(file);
    std::string line;
    std::int64_t prev_t = -1;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::ordered_json j;
      try {
        j = nlohmann::ordered_json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::FileFormat, "bad record in '" + file.string() + "': " + e.what());
      }
      Record r;
      r.cid = j.at("correlation_id").get<CorrelationId>();
      r.t = j.at("t").get<std::int64_t>();
      r.value = value_from_json(j.at("value"), var.schema);
      if (auto why = schema_mismatch(r.value, var.schema)) {
        throw Error(Errc::SchemaViolation, "stream '" + var.id + "': " + *why);
      }
      if (r.t <= prev_t) {
        throw Error(Errc::FileFormat,
                    "timestamps not strictly increasing in '" + file.string() + "'");
      }
      prev_t = r.t;
      recs.push_back(std::move(r));
    }
  }
  return log;
}

}  // namespace flowscm
