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

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "flowscm/graph.hpp"
#include "flowscm/runtime.hpp"

namespace flowscm::claims {

// The car-insurance claims pipeline: claims are valued, split by value, the
// low/high branches are classified as simple or complex to handle, and a
// payout is computed. Streams double as causal variables for the attribution
// workflows.

inline const StreamId kNewClaims = "NewClaimsStream";
inline const StreamId kClaimValue = "ClaimValueStream";
inline const StreamId kLowValue = "LowValueClaimsStream";
inline const StreamId kHighValue = "HighValueClaimsStream";
inline const StreamId kSimple = "SimpleClaimsStream";
inline const StreamId kComplex = "ComplexClaimsStream";
inline const StreamId kPayout = "ClaimPayoutStream";

inline const ComponentId kDetermineValue = "DetermineClaimValue";
inline const ComponentId kSplitByValue = "SplitClaimsByValue";
inline const ComponentId kClassifyComplexity = "ClassifyClaimComplexity";
inline const ComponentId kCalculatePayout = "CalculatePayout";

inline const std::vector<std::string> kSeverityLevels = {"low", "medium", "high"};

// Synthetic pipeline parameters. Amounts are log-normal (median 2000 currency
// units); the split threshold sits at the healthy value distribution's 60th
// percentile. Rank outcomes are required to hold across parameter variations,
// not just at these defaults.
struct PipelineParams {
  double log_median = std::log(2000.0);
  double amount_sigma = 0.8;
  std::array<double, 3> severity_probs = {0.5, 0.3, 0.2};
  std::array<double, 3> severity_factor = {1.0, 1.15, 1.3};
  double value_noise = 0.05;          // relative, uniform
  double split_threshold = 2700.0;    // 60th percentile of healthy values
  double medium_complex_prob = 0.6;   // healthy P(complex | medium severity)
  double simple_payout_rate = 0.9;
  double complex_payout_rate = 0.62;
  double payout_noise = 0.1;          // relative, uniform
};

inline ValueSchema claim_schema() {
  return ValueSchema::tuple({FieldSchema{"amount", FieldKind::Numeric, {}},
                             FieldSchema{"severity", FieldKind::Categorical, kSeverityLevels}});
}

inline ValueSchema valued_claim_schema() {
  return ValueSchema::tuple({FieldSchema{"value", FieldKind::Numeric, {}},
                             FieldSchema{"severity", FieldKind::Categorical, kSeverityLevels}});
}

class ClaimsGenerator final : public SourceGenerator {
 public:
  explicit ClaimsGenerator(PipelineParams params = {}) : params_(params) {}

  Value next(Rng& rng) const override {
    const double amount = rng.lognormal(params_.log_median, params_.amount_sigma);
    const double u = rng.uniform01();
    std::size_t sev = params_.severity_probs.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < params_.severity_probs.size(); ++i) {
      acc += params_.severity_probs[i];
      if (u < acc) {
        sev = i;
        break;
      }
    }
    return Value::tuple({Scalar{amount}, Scalar{kSeverityLevels[sev]}});
  }

 private:
  PipelineParams params_;
};

// Wraps a claims generator, scaling the claimed amount; other fields pass
// through untouched.
inline GeneratorPtr inject_data_shift(GeneratorPtr inner, double factor = 1.5) {
  return make_generator([inner, factor](Rng& rng) {
    Value v = inner->next(rng);
    v.parts[0] = Scalar{as_number(v.parts[0]) * factor};
    return v;
  });
}

namespace detail {

inline int severity_index(const Value& v) {
  const auto& level = as_level(v.parts[1]);
  for (std::size_t i = 0; i < kSeverityLevels.size(); ++i) {
    if (kSeverityLevels[i] == level) return static_cast<int>(i);
  }
  return 0;
}

// simple/complex decision shared by the healthy node on both branches
inline bool is_complex(const Value& claim, double medium_complex_prob, Rng& rng) {
  const int sev = severity_index(claim);
  if (sev == 2) return true;
  if (sev == 1) return rng.uniform01() < medium_complex_prob;
  return false;
}

inline Value payout_for(const Value& claim, double rate, double noise, Rng& rng) {
  const double value = as_number(claim.parts[0]);
  return Value::number(value * rate * (1.0 + noise * rng.uniform(-1.0, 1.0)));
}

}  // namespace detail

// Registers the claims transforms (healthy and buggy variants) under the
// given parameterisation.
inline void register_claims_transforms(TransformRegistry& reg, const PipelineParams& p = {}) {
  reg.add("claims/determine-value", make_transform([p](const Bundle& in, Emitter& out, Rng& rng) {
            const Record& claim = in.require("claim");
            const double amount = as_number(claim.value.parts[0]);
            const int sev = detail::severity_index(claim.value);
            const double value = amount * p.severity_factor[static_cast<std::size_t>(sev)] *
                                 (1.0 + p.value_noise * rng.uniform(-1.0, 1.0));
            out.emit("value", Value::tuple({Scalar{value}, claim.value.parts[1]}));
          }));

  reg.add("claims/split-by-value", make_transform([p](const Bundle& in, Emitter& out, Rng&) {
            const Record& claim = in.require("claim");
            const double value = as_number(claim.value.parts[0]);
            out.emit(value <= p.split_threshold ? "low" : "high", claim.value);
          }));

  reg.add("claims/classify-complexity", make_transform([p](const Bundle& in, Emitter& out, Rng& rng) {
            for (const char* port : {"low", "high"}) {
              const Record* claim = in.get(port);
              if (!claim) continue;
              const bool complex = detail::is_complex(claim->value, p.medium_complex_prob, rng);
              out.emit(complex ? "complex" : "simple", claim->value);
            }
          }));

  // the injected bug: every claim arriving on the low-value branch is
  // classified simple; the high-value branch keeps the healthy rule
  reg.add("claims/classify-complexity-buggy",
          make_transform([p](const Bundle& in, Emitter& out, Rng& rng) {
            if (const Record* low = in.get("low")) out.emit("simple", low->value);
            if (const Record* high = in.get("high")) {
              const bool complex = detail::is_complex(high->value, p.medium_complex_prob, rng);
              out.emit(complex ? "complex" : "simple", high->value);
            }
          }));

  reg.add("claims/calculate-payout", make_transform([p](const Bundle& in, Emitter& out, Rng& rng) {
            if (const Record* simple = in.get("simple")) {
              out.emit("payout",
                       detail::payout_for(simple->value, p.simple_payout_rate, p.payout_noise, rng));
            }
            if (const Record* complex = in.get("complex")) {
              out.emit("payout", detail::payout_for(complex->value, p.complex_payout_rate,
                                                    p.payout_noise, rng));
            }
          }));
}

inline TransformRegistry make_claims_registry(const PipelineParams& p = {}) {
  TransformRegistry reg;
  register_claims_transforms(reg, p);
  return reg;
}

inline DataflowGraph claims_graph_spec() {
  DataflowGraph g;
  g.streams = {
      {kNewClaims, claim_schema()},
      {kClaimValue, valued_claim_schema()},
      {kLowValue, valued_claim_schema()},
      {kHighValue, valued_claim_schema()},
      {kSimple, valued_claim_schema()},
      {kComplex, valued_claim_schema()},
      {kPayout, ValueSchema::numeric()},
  };
  g.components = {
      {kDetermineValue, "claims/determine-value", {{"claim", kNewClaims}}, {{"value", kClaimValue}}},
      {kSplitByValue,
       "claims/split-by-value",
       {{"claim", kClaimValue}},
       {{"low", kLowValue}, {"high", kHighValue}}},
      {kClassifyComplexity,
       "claims/classify-complexity",
       {{"low", kLowValue}, {"high", kHighValue}},
       {{"simple", kSimple}, {"complex", kComplex}}},
      {kCalculatePayout,
       "claims/calculate-payout",
       {{"simple", kSimple}, {"complex", kComplex}},
       {{"payout", kPayout}}},
  };
  g.sources = {kNewClaims};
  return g;
}

inline ValidatedGraph build_claims_graph() { return validate(claims_graph_spec()); }

// Swaps the classifier for its buggy variant; the wiring (and so the topology
// hash) is untouched.
inline ValidatedGraph inject_fault(const ValidatedGraph& graph) {
  DataflowGraph g = graph.graph();
  bool found = false;
  for (auto& c : g.components) {
    if (c.id == kClassifyComplexity) {
      c.kind = "claims/classify-complexity-buggy";
      found = true;
    }
  }
  if (!found) {
    throw Error(Errc::NodeNotFound, "graph has no '" + kClassifyComplexity + "' component");
  }
  return validate(g);
}

}  // namespace flowscm::claims
