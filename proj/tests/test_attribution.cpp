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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "flowscm/attribution.hpp"
#include "flowscm/graph.hpp"
#include "flowscm/log.hpp"
#include "flowscm/mechanism.hpp"
#include "flowscm/scm.hpp"

using namespace flowscm;

namespace {

const std::vector<std::string> kBinary = {"0", "1"};

ValidatedGraph passthrough_chain() {
  DataflowGraph g;
  g.streams = {{"A", ValueSchema::numeric()},
               {"B", ValueSchema::numeric()},
               {"Y", ValueSchema::numeric()}};
  g.components = {{"f", "identity", {{"in", "A"}}, {{"out", "B"}}},
                  {"g", "identity", {{"in", "B"}}, {{"out", "Y"}}}};
  g.sources = {"A"};
  return validate(g);
}

StreamLog chain_log(double mu, std::uint64_t seed, const std::string& label) {
  StreamLog log;
  log.label = label;
  Rng rng(seed);
  for (std::size_t i = 0; i < 1500; ++i) {
    const double a = mu + rng.normal();
    for (const StreamId id : {"A", "B", "Y"}) {
      auto& recs = log.streams[id];
      recs.push_back(Record{i + 1, static_cast<std::int64_t>(i), Value::number(a)});
    }
  }
  return log;
}

// binary chain X -> Y with explicit tables, as old/new SCM pairs
Scm binary_pair_scm(double px1, double py1_x0, double py1_x1) {
  std::vector<CausalGraph::Variable> vars(2);
  vars[0] = {"X", ValueSchema::categorical(kBinary), {}};
  vars[1] = {"Y", ValueSchema::categorical(kBinary), {"X"}};
  Scm scm;
  scm.graph = CausalGraph::from_variables(vars);
  scm.mechanisms["X"] = RootMechanism::table(ValueSchema::categorical(kBinary), {1.0 - px1, px1});
  scm.mechanisms["Y"] = ConditionalMechanism::conditional_table(
      "Y", ValueSchema::categorical(kBinary), {"X"}, {ValueSchema::categorical(kBinary)},
      {{{0}, {1.0 - py1_x0, py1_x0}}, {{1}, {1.0 - py1_x1, py1_x1}}});
  return scm;
}

}  // namespace

TEST_CASE("detect_shift stays quiet when nothing changed") {
  const auto graph = passthrough_chain();
  ChangeWindows w{chain_log(0.0, 1, "old"), chain_log(0.0, 2, "new"), "Y"};
  const auto res = detect_shift(w, graph);
  CHECK(res.delta < res.threshold);
  CHECK_FALSE(res.shifted);
  CHECK(res.delta == Catch::Approx(0.0).margin(0.05));
}

TEST_CASE("detect_shift fires on a unit Gaussian mean shift") {
  const auto graph = passthrough_chain();
  ChangeWindows w{chain_log(0.0, 3, "old"), chain_log(1.0, 4, "new"), "Y"};
  const auto res = detect_shift(w, graph);
  // closed-form Gaussian KL oracle: 0.5
  CHECK(res.delta == Catch::Approx(0.5).margin(0.15));
  CHECK(res.shifted);
}

TEST_CASE("detect_shift refuses thin windows") {
  const auto graph = passthrough_chain();
  ChangeWindows w{chain_log(0.0, 1, "old"), chain_log(0.0, 2, "new"), "Y"};
  w.new_log = window(w.new_log, 0, 9, "thin");
  CHECK_THROWS_AS(detect_shift(w, graph), Error);
}

TEST_CASE("deviation is calibrated when the mechanism is unchanged") {
  const auto graph = passthrough_chain();
  int over_05 = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    ChangeWindows w{chain_log(0.0, 100 + 2 * seed, "old"), chain_log(0.0, 101 + 2 * seed, "new"),
                    "Y"};
    const auto dev = deviation(graph, "g", "Y", w);
    if (dev.p_value > 0.05) ++over_05;
  }
  CHECK(over_05 >= 36);  // >= 90% of trials
}

TEST_CASE("a source target short-circuits the traversal") {
  const auto graph = passthrough_chain();
  ChangeWindows w{chain_log(0.0, 7, "old"), chain_log(1.0, 8, "new"), "A"};
  const auto res = attribute_change(graph, w);
  CHECK(res.deviations.empty());
  REQUIRE(res.attribution.scores.size() == 1);
  CHECK(res.attribution.scores.at("A") == Catch::Approx(res.shift.delta));
  CHECK(res.probabilities.at("A") == Catch::Approx(1.0));
}

TEST_CASE("shapley attribution of identical SCMs is exactly zero") {
  const Scm scm = binary_pair_scm(0.3, 0.2, 0.8);
  AttributionOptions opt;
  opt.value_samples = 5000;
  const auto scores = shapley_attribution(scm, scm, "Y", opt);
  for (const auto& [id, s] : scores.scores) CHECK(std::abs(s) < 1e-12);
}

TEST_CASE("a changed root marginal carries the attribution mass") {
  const Scm old_scm = binary_pair_scm(0.3, 0.2, 0.8);
  const Scm new_scm = binary_pair_scm(0.8, 0.2, 0.8);  // only p(x) changed
  AttributionOptions opt;
  opt.value_samples = 20000;
  const auto scores = shapley_attribution(old_scm, new_scm, "Y", opt);
  const double total = std::abs(scores.scores.at("X")) + std::abs(scores.scores.at("Y"));
  CHECK(std::abs(scores.scores.at("X")) >= 0.95 * total);
}

TEST_CASE("a changed conditional carries the attribution mass") {
  const Scm old_scm = binary_pair_scm(0.3, 0.2, 0.8);
  const Scm new_scm = binary_pair_scm(0.3, 0.7, 0.3);  // only p(y|x) changed
  AttributionOptions opt;
  opt.value_samples = 20000;
  const auto scores = shapley_attribution(old_scm, new_scm, "Y", opt);
  const double total = std::abs(scores.scores.at("X")) + std::abs(scores.scores.at("Y"));
  CHECK(std::abs(scores.scores.at("Y")) >= 0.95 * total);
}

TEST_CASE("shapley efficiency at the engine level") {
  const Scm old_scm = binary_pair_scm(0.3, 0.2, 0.8);
  const Scm new_scm = binary_pair_scm(0.6, 0.4, 0.7);
  AttributionOptions opt;
  opt.value_samples = 20000;
  opt.seed = 5;
  const auto scores = shapley_attribution(old_scm, new_scm, "Y", opt);

  // the full-coalition value, reproduced with the engine's own sampling seeds
  const std::uint64_t sample_seed = derive_seed(opt.seed, {0x1a77ULL});
  const auto base = sample(old_scm, opt.value_samples, sample_seed);
  const auto full = sample(new_scm, opt.value_samples, sample_seed);
  std::vector<std::string> b, f;
  for (const auto& r : base.records("Y")) b.push_back(r.value.cat());
  for (const auto& r : full.records("Y")) f.push_back(r.value.cat());
  const double v_full = stats::kl_divergence(stats::SampleSet::of_levels(f),
                                             stats::SampleSet::of_levels(b),
                                             stats::DiscreteKl{0.5})
                            .value;
  double total = 0.0;
  for (const auto& [id, s] : scores.scores) total += s;
  CHECK(total == Catch::Approx(v_full).margin(0.05));
}

TEST_CASE("shapley attribution is deterministic under a fixed seed") {
  const Scm old_scm = binary_pair_scm(0.3, 0.2, 0.8);
  const Scm new_scm = binary_pair_scm(0.6, 0.4, 0.7);
  AttributionOptions opt;
  opt.seed = 11;
  const auto s1 = shapley_attribution(old_scm, new_scm, "Y", opt);
  const auto s2 = shapley_attribution(old_scm, new_scm, "Y", opt);
  CHECK(s1.scores == s2.scores);
}

TEST_CASE("proportional attribution telescopes along a pass-through chain") {
  const auto graph = passthrough_chain();
  ChangeWindows w{chain_log(0.0, 21, "old"), chain_log(1.0, 22, "new"), "Y"};
  AttributionOptions opt;
  opt.method = AttributionMethod::ProportionalKl;
  std::vector<std::string> warnings;
  const auto scores = proportional_attribution(w, graph, "Y", opt, &warnings);
  // identical per-stream shifts: every hop ratio is 1, so A aggregates to 1
  CHECK(scores.scores.at("A") == Catch::Approx(1.0).margin(1e-9));
  CHECK(scores.scores.at("B") == Catch::Approx(1.0).margin(1e-9));
  CHECK(warnings.empty());
}

TEST_CASE("proportional attribution reports degenerate denominators") {
  const auto graph = passthrough_chain();
  ChangeWindows w{chain_log(0.0, 31, "old"), chain_log(0.0, 31, "new"), "Y"};  // same seed: no shift
  AttributionOptions opt;
  opt.method = AttributionMethod::ProportionalKl;
  std::vector<std::string> warnings;
  const auto scores = proportional_attribution(w, graph, "Y", opt, &warnings);
  CHECK(scores.scores.empty());
  CHECK(warnings.size() == 3);  // every stream reported not-attributable

  const auto result = attribute_change(graph, w, opt);
  CHECK(result.no_signal);
  CHECK(result.probabilities.empty());
}

TEST_CASE("probability conversion reproduces the published fault column") {
  AttributionScores attr;
  attr.scores = {
      {"NewClaimsStream", 0.0011},  {"ClaimValueStream", 0.0033},
      {"LowValueClaimsStream", 0.0012}, {"HighValueClaimsStream", 0.0009},
      {"SimpleClaimsStream", 0.014},    {"ComplexClaimsStream", -0.0087},
      {"ClaimPayoutStream", 0.0004},
  };
  const std::map<StreamId, double> published = {
      {"NewClaimsStream", 0.04},  {"ClaimValueStream", 0.11},
      {"LowValueClaimsStream", 0.04}, {"HighValueClaimsStream", 0.03},
      {"SimpleClaimsStream", 0.47},   {"ComplexClaimsStream", 0.29},
      {"ClaimPayoutStream", 0.01},
  };
  const auto probs = to_probabilities(attr);
  double total = 0.0;
  for (const auto& [id, p] : probs) {
    CHECK(p == Catch::Approx(published.at(id)).margin(0.01));
    total += p;
  }
  CHECK(total == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("probability conversion handles edge cases") {
  AttributionScores single;
  single.scores = {{"A", -0.3}, {"B", 0.0}};
  const auto probs = to_probabilities(single);
  CHECK(probs.at("A") == Catch::Approx(1.0));
  CHECK(probs.at("B") == Catch::Approx(0.0));

  AttributionScores zero;
  zero.scores = {{"A", 0.0}, {"B", 0.0}};
  try {
    to_probabilities(zero);
    FAIL("expected NoSignal");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoSignal);
  }
}

TEST_CASE("probabilities are invariant under positive rescaling") {
  AttributionScores attr;
  attr.scores = {{"A", 0.2}, {"B", -0.1}, {"C", 0.7}};
  AttributionScores scaled;
  for (const auto& [id, s] : attr.scores) scaled.scores[id] = 13.5 * s;
  const auto p1 = to_probabilities(attr);
  const auto p2 = to_probabilities(scaled);
  for (const auto& [id, p] : p1) CHECK(p == Catch::Approx(p2.at(id)).margin(1e-12));
}
