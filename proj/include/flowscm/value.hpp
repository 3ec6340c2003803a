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
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flowscm/error.hpp"

namespace flowscm {

using StreamId = std::string;
using ComponentId = std::string;
using PortName = std::string;
using CorrelationId = std::uint64_t;

// A single scalar carried on a stream: a number or a categorical level.
using Scalar = std::variant<double, std::string>;

inline bool is_number(const Scalar& s) { return std::holds_alternative<double>(s); }
inline double as_number(const Scalar& s) { return std::get<double>(s); }
inline const std::string& as_level(const Scalar& s) { return std::get<std::string>(s); }

enum class FieldKind { Numeric, Categorical };

struct FieldSchema {
  std::string name;
  FieldKind kind = FieldKind::Numeric;
  std::vector<std::string> levels;  // categorical only

  bool operator==(const FieldSchema&) const = default;

  std::optional<int> level_index(const std::string& level) const {
    auto it = std::find(levels.begin(), levels.end(), level);
    if (it == levels.end()) return std::nullopt;
    return static_cast<int>(it - levels.begin());
  }
};

// Schema of the values carried on one stream. Scalar streams normalise to a
// single unnamed field so mechanisms can treat every stream as a field list.
struct ValueSchema {
  enum class Kind { Numeric, Categorical, Tuple };

  Kind kind = Kind::Numeric;
  std::vector<std::string> levels;   // Categorical
  std::vector<FieldSchema> fields;   // Tuple

  bool operator==(const ValueSchema&) const = default;

  static ValueSchema numeric() { return ValueSchema{}; }

  static ValueSchema categorical(std::vector<std::string> lv) {
    ValueSchema s;
    s.kind = Kind::Categorical;
    s.levels = std::move(lv);
    return s;
  }

  static ValueSchema tuple(std::vector<FieldSchema> fs) {
    ValueSchema s;
    s.kind = Kind::Tuple;
    s.fields = std::move(fs);
    return s;
  }

  bool scalar() const { return kind != Kind::Tuple; }

  // Uniform per-field view; scalar schemas appear as one field named "value".
  std::vector<FieldSchema> flat_fields() const {
    switch (kind) {
      case Kind::Numeric: return {FieldSchema{"value", FieldKind::Numeric, {}}};
      case Kind::Categorical: return {FieldSchema{"value", FieldKind::Categorical, levels}};
      case Kind::Tuple: return fields;
    }
    return {};
  }
};

// The value of one record. `parts` follows the schema's field order; scalar
// streams hold exactly one part.
struct Value {
  std::vector<Scalar> parts;

  bool operator==(const Value&) const = default;

  static Value number(double x) { return Value{{Scalar{x}}}; }
  static Value level(std::string l) { return Value{{Scalar{std::move(l)}}}; }
  static Value tuple(std::vector<Scalar> parts) { return Value{std::move(parts)}; }

  double num() const { return as_number(parts.at(0)); }
  const std::string& cat() const { return as_level(parts.at(0)); }
};

// Returns a description of the first schema mismatch, or nullopt if `v`
// conforms to `schema`.
inline std::optional<std::string> schema_mismatch(const Value& v, const ValueSchema& schema) {
  const auto fields = schema.flat_fields();
  if (v.parts.size() != fields.size()) {
    return "expected " + std::to_string(fields.size()) + " field(s), got " +
           std::to_string(v.parts.size());
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto& f = fields[i];
    const auto& p = v.parts[i];
    if (f.kind == FieldKind::Numeric) {
      if (!is_number(p)) return "field '" + f.name + "' must be numeric";
      if (!std::isfinite(as_number(p))) return "field '" + f.name + "' is not finite";
    } else {
      if (is_number(p)) return "field '" + f.name + "' must be categorical";
      if (!f.level_index(as_level(p))) {
        return "field '" + f.name + "' has unknown level '" + as_level(p) + "'";
      }
    }
  }
  return std::nullopt;
}

inline bool conforms(const Value& v, const ValueSchema& schema) {
  return !schema_mismatch(v, schema).has_value();
}

}  // namespace flowscm
