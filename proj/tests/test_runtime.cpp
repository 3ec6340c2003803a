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

#include <set>

#include "flowscm/claims.hpp"
#include "flowscm/log.hpp"
#include "flowscm/runtime.hpp"

using namespace flowscm;

namespace {

TransformRegistry test_registry() {
  TransformRegistry reg;
  claims::register_claims_transforms(reg);
  reg.add("identity", make_transform([](const Bundle& in, Emitter& out, Rng&) {
            if (const Record* r = in.get("in")) out.emit("out", r->value);
          }));
  reg.add("emit-level", make_transform([](const Bundle& in, Emitter& out, Rng&) {
            if (in.get("in")) out.emit("out", Value::level("nope"));
          }));
  return reg;
}

ValidatedGraph identity_graph() {
  DataflowGraph g;
  g.streams = {{"in", ValueSchema::numeric()}, {"out", ValueSchema::numeric()}};
  g.components = {{"id", "identity", {{"in", "in"}}, {{"out", "out"}}}};
  g.sources = {"in"};
  return validate(g);
}

GeneratorPtr unit_normal() {
  return make_generator([](Rng& rng) { return Value::number(rng.normal()); });
}

}  // namespace

TEST_CASE("identity component reproduces its input log") {
  const auto graph = identity_graph();
  const auto reg = test_registry();
  const StreamLog log = run(graph, {{"in", unit_normal()}}, 100, 11, "run", reg);
  REQUIRE(log.count("in") == 100);
  REQUIRE(log.count("out") == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(log.records("out")[i].value == log.records("in")[i].value);
    CHECK(log.records("out")[i].cid == log.records("in")[i].cid);
  }
}

TEST_CASE("equal seeds give bit-identical logs across graphs") {
  const auto reg = test_registry();
  const auto identity = identity_graph();
  CHECK(run(identity, {{"in", unit_normal()}}, 200, 5, "a", reg) ==
        run(identity, {{"in", unit_normal()}}, 200, 5, "a", reg));

  const auto claims_graph = claims::build_claims_graph();
  const auto gen = std::make_shared<claims::ClaimsGenerator>();
  CHECK(run(claims_graph, {{claims::kNewClaims, gen}}, 300, 5, "a", reg) ==
        run(claims_graph, {{claims::kNewClaims, gen}}, 300, 5, "a", reg));
  CHECK_FALSE(run(claims_graph, {{claims::kNewClaims, gen}}, 300, 5, "a", reg) ==
              run(claims_graph, {{claims::kNewClaims, gen}}, 300, 6, "a", reg));

  const auto buggy = claims::inject_fault(claims_graph);
  CHECK(run(buggy, {{claims::kNewClaims, gen}}, 300, 9, "a", reg) ==
        run(buggy, {{claims::kNewClaims, gen}}, 300, 9, "a", reg));
}

TEST_CASE("router conserves records across its branches") {
  const auto reg = test_registry();
  const auto graph = claims::build_claims_graph();
  const auto gen = std::make_shared<claims::ClaimsGenerator>();
  const StreamLog log = run(graph, {{claims::kNewClaims, gen}}, 1000, 17, "run", reg);
  CHECK(log.count(claims::kLowValue) + log.count(claims::kHighValue) ==
        log.count(claims::kClaimValue));
  CHECK(log.count(claims::kSimple) + log.count(claims::kComplex) ==
        log.count(claims::kClaimValue));
  CHECK(log.count(claims::kPayout) == 1000);
}

TEST_CASE("every non-source record's correlation id appears in a source stream") {
  const auto reg = test_registry();
  const auto graph = claims::build_claims_graph();
  const auto gen = std::make_shared<claims::ClaimsGenerator>();
  const StreamLog log = run(graph, {{claims::kNewClaims, gen}}, 400, 23, "run", reg);
  std::set<CorrelationId> source_cids;
  for (const auto& r : log.records(claims::kNewClaims)) source_cids.insert(r.cid);
  for (const auto& [id, recs] : log.streams) {
    for (const auto& r : recs) CHECK(source_cids.count(r.cid) == 1);
  }
}

TEST_CASE("missing source and schema violations are reported") {
  const auto reg = test_registry();
  const auto graph = identity_graph();
  CHECK_THROWS_AS(run(graph, {}, 10, 0, "run", reg), Error);

  DataflowGraph bad;
  bad.streams = {{"in", ValueSchema::numeric()}, {"out", ValueSchema::numeric()}};
  bad.components = {{"c", "emit-level", {{"in", "in"}}, {{"out", "out"}}}};
  bad.sources = {"in"};
  try {
    run(validate(bad), {{"in", unit_normal()}}, 10, 0, "run", reg);
    FAIL("expected SchemaViolation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SchemaViolation);
  }
}

TEST_CASE("windowing slices by timestamp and labels the result") {
  const auto reg = test_registry();
  const auto graph = identity_graph();
  const StreamLog log = run(graph, {{"in", unit_normal()}}, 2000, 31, "full", reg);

  const StreamLog all = window(log, 0, 1999, "all");
  CHECK(all.streams == log.streams);
  CHECK(all.label == "all");
  CHECK(all.warnings.empty());

  const StreamLog none = window(log, 5000, 6000, "none");
  CHECK(none.count("in") == 0);
  CHECK(none.warnings.size() == 2);

  // splitting reproduces the original when concatenated
  const StreamLog old_half = window(log, 0, 999, "old");
  const StreamLog new_half = window(log, 1000, 1999, "new");
  for (const auto& [id, recs] : log.streams) {
    std::vector<Record> joined = old_half.records(id);
    const auto& tail = new_half.records(id);
    joined.insert(joined.end(), tail.begin(), tail.end());
    CHECK(joined == recs);
  }
}

TEST_CASE("join_io_pairs pairs inputs with outputs by correlation id") {
  const auto reg = test_registry();

  SECTION("lossless pipeline has zero drops") {
    const auto graph = identity_graph();
    const StreamLog log = run(graph, {{"in", unit_normal()}}, 150, 3, "run", reg);
    const auto joins = join_io_pairs(log, graph, "id");
    REQUIRE(joins.size() == 1);
    CHECK(joins[0].dropped == 0);
    CHECK(joins[0].pair_count() == 150);
  }

  SECTION("router sends each record to exactly one branch") {
    const auto graph = claims::build_claims_graph();
    const auto gen = std::make_shared<claims::ClaimsGenerator>();
    const StreamLog log = run(graph, {{claims::kNewClaims, gen}}, 500, 41, "run", reg);
    const auto joins = join_io_pairs(log, graph, claims::kSplitByValue);
    REQUIRE(joins.size() == 2);
    std::size_t total_pairs = 0;
    for (const auto& join : joins) {
      CHECK(join.dropped == 0);
      total_pairs += join.pair_count();
      // every row has the single parent present
      for (const auto& row : join.rows) CHECK(row.inputs.at(0).has_value());
    }
    CHECK(total_pairs == log.count(claims::kClaimValue));
  }

  SECTION("classifier pair count equals records entering the component") {
    const auto graph = claims::build_claims_graph();
    const auto gen = std::make_shared<claims::ClaimsGenerator>();
    const StreamLog log = run(graph, {{claims::kNewClaims, gen}}, 800, 43, "run", reg);
    const auto joins = join_io_pairs(log, graph, claims::kClassifyComplexity);
    std::size_t total_pairs = 0;
    for (const auto& join : joins) total_pairs += join.pair_count();
    const std::size_t entering = log.count(claims::kLowValue) + log.count(claims::kHighValue);
    CHECK(total_pairs == entering);
    // each row carries exactly one present input (partition semantics)
    for (const auto& join : joins) {
      for (const auto& row : join.rows) {
        int present = 0;
        for (const auto& in : row.inputs) present += in.has_value() ? 1 : 0;
        CHECK(present == 1);
      }
    }
  }
}
