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

#include <filesystem>
#include <fstream>

#include "flowscm/claims.hpp"
#include "flowscm/log.hpp"
#include "flowscm/runtime.hpp"

using namespace flowscm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("flowscm_test_" + std::to_string(::getpid()) +
                                                "_" + std::to_string(counter++))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static inline int counter = 0;
};

StreamLog claims_run(std::size_t n, std::uint64_t seed) {
  const auto reg = claims::make_claims_registry();
  const auto graph = claims::build_claims_graph();
  const auto gen = std::make_shared<claims::ClaimsGenerator>();
  return run(graph, {{claims::kNewClaims, gen}}, n, seed, "w", reg);
}

}  // namespace

TEST_CASE("stream logs round-trip through ndjson files") {
  const auto graph = claims::build_claims_graph();
  const StreamLog log = claims_run(120, 7);
  TempDir dir;
  save_logs(log, graph, dir.path.string());

  CHECK(fs::exists(dir.path / "ClaimPayoutStream.ndjson"));
  const StreamLog loaded = load_logs(graph, dir.path.string(), "w");
  CHECK(loaded.streams == log.streams);
}

TEST_CASE("scalar values serialise as literals and tuples as objects") {
  const auto num = value_to_json(Value::number(2.5), ValueSchema::numeric());
  CHECK(num.is_number());
  const auto cat = value_to_json(Value::level("high"), ValueSchema::categorical({"low", "high"}));
  CHECK(cat.is_string());
  const auto tup = value_to_json(Value::tuple({Scalar{1.0}, Scalar{"low"}}),
                                 claims::valued_claim_schema());
  REQUIRE(tup.is_object());
  CHECK(tup.at("value").get<double>() == 1.0);
  CHECK(tup.at("severity").get<std::string>() == "low");
}

TEST_CASE("the loader rejects records that break the schema") {
  const auto graph = claims::build_claims_graph();
  const StreamLog log = claims_run(60, 9);
  TempDir dir;
  save_logs(log, graph, dir.path.string());
  {
    std::ofstream out(dir.path / "ClaimPayoutStream.ndjson", std::ios::app);
    out << R"({"correlation_id":999,"t":60,"value":"not-a-number"})" << "\n";
  }
  CHECK_THROWS_AS(load_logs(graph, dir.path.string()), Error);
}

TEST_CASE("the loader rejects non-increasing timestamps") {
  const auto graph = claims::build_claims_graph();
  const StreamLog log = claims_run(60, 9);
  TempDir dir;
  save_logs(log, graph, dir.path.string());
  {
    std::ofstream out(dir.path / "ClaimPayoutStream.ndjson", std::ios::app);
    out << R"({"correlation_id":999,"t":0,"value":1.0})" << "\n";
  }
  try {
    load_logs(graph, dir.path.string());
    FAIL("expected FileFormat");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::FileFormat);
  }
}

TEST_CASE("missing log directories and files are surfaced") {
  const auto graph = claims::build_claims_graph();
  CHECK_THROWS_AS(load_logs(graph, "/nonexistent/dir"), Error);

  TempDir dir;
  const StreamLog log = claims_run(60, 9);
  save_logs(log, graph, dir.path.string());
  fs::remove(dir.path / "SimpleClaimsStream.ndjson");
  const StreamLog loaded = load_logs(graph, dir.path.string());
  CHECK(loaded.count(claims::kSimple) == 0);
  CHECK_FALSE(loaded.warnings.empty());
}
