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

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace flowscm {

enum class Errc {
  // graph validation
  CycleDetected,
  MultipleProducers,
  MissingProducer,
  DanglingPort,
  UnknownStream,
  UnreferencedStream,
  DuplicateId,
  SourceConflict,
  // runtime
  SchemaViolation,
  MissingSource,
  NodeNotFound,
  // statistics / fitting
  InsufficientData,
  AbsoluteContinuityViolation,
  EmptySample,
  DegenerateSample,
  TooManyPlayersForExact,
  DegenerateDenominator,
  NoSignal,
  // SCM
  UnknownVariable,
  DensityUndefined,
  // I/O and CLI
  FileFormat,
  Usage,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::MultipleProducers: return "MultipleProducers";
    case Errc::MissingProducer: return "MissingProducer";
    case Errc::DanglingPort: return "DanglingPort";
    case Errc::UnknownStream: return "UnknownStream";
    case Errc::UnreferencedStream: return "UnreferencedStream";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::SourceConflict: return "SourceConflict";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::MissingSource: return "MissingSource";
    case Errc::NodeNotFound: return "NodeNotFound";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::AbsoluteContinuityViolation: return "AbsoluteContinuityViolation";
    case Errc::EmptySample: return "EmptySample";
    case Errc::DegenerateSample: return "DegenerateSample";
    case Errc::TooManyPlayersForExact: return "TooManyPlayersForExact";
    case Errc::DegenerateDenominator: return "DegenerateDenominator";
    case Errc::NoSignal: return "NoSignal";
    case Errc::UnknownVariable: return "UnknownVariable";
    case Errc::DensityUndefined: return "DensityUndefined";
    case Errc::FileFormat: return "FileFormat";
    case Errc::Usage: return "Usage";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// One structural problem found while validating a dataflow graph.
struct Violation {
  Errc kind;
  std::string subject;  // stream, component or "component/port"
  std::string detail;

  std::string str() const { return std::string(errc_name(kind)) + " [" + subject + "] " + detail; }
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations)
      : Error(violations.empty() ? Errc::Usage : violations.front().kind, describe(violations)),
        violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  static std::string describe(const std::vector<Violation>& vs) {
    std::string out = std::to_string(vs.size()) + " violation(s)";
    for (const auto& v : vs) out += "; " + v.str();
    return out;
  }

  std::vector<Violation> violations_;
};

}  // namespace flowscm
