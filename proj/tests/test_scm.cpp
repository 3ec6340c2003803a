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

#include "flowscm/scm.hpp"
#include "flowscm/scm_io.hpp"
#include "flowscm/stats.hpp"

using namespace flowscm;

namespace {

const std::vector<std::string> kBinary = {"0", "1"};

CausalGraph numeric_chain(const std::vector<StreamId>& ids) {
  std::vector<CausalGraph::Variable> vars;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CausalGraph::Variable v;
    v.id = ids[i];
    v.schema = ValueSchema::numeric();
    if (i > 0) v.parents = {ids[i - 1]};
    vars.push_back(v);
  }
  return CausalGraph::from_variables(vars);
}

void append(StreamLog& log, const StreamId& id, CorrelationId cid, Value v) {
  auto& recs = log.streams[id];
  recs.push_back(Record{cid, static_cast<std::int64_t>(recs.size()), std::move(v)});
}

// Constructed binary chain X -> Z -> Y with explicit tables.
struct BinaryChain {
  double px1 = 0.7;                     // P(X=1)
  double pz1_x[2] = {0.2, 0.8};         // P(Z=1 | X)
  double py1_z[2] = {0.1, 0.6};         // P(Y=1 | Z)

  Scm scm() const {
    std::vector<CausalGraph::Variable> vars(3);
    vars[0] = {"X", ValueSchema::categorical(kBinary), {}};
    vars[1] = {"Z", ValueSchema::categorical(kBinary), {"X"}};
    vars[2] = {"Y", ValueSchema::categorical(kBinary), {"Z"}};
    Scm scm;
    scm.graph = CausalGraph::from_variables(vars);
    scm.mechanisms["X"] = RootMechanism::table(ValueSchema::categorical(kBinary), {1.0 - px1, px1});
    scm.mechanisms["Z"] = ConditionalMechanism::conditional_table(
        "Z", ValueSchema::categorical(kBinary), {"X"}, {ValueSchema::categorical(kBinary)},
        {{{0}, {1.0 - pz1_x[0], pz1_x[0]}}, {{1}, {1.0 - pz1_x[1], pz1_x[1]}}});
    scm.mechanisms["Y"] = ConditionalMechanism::conditional_table(
        "Y", ValueSchema::categorical(kBinary), {"Z"}, {ValueSchema::categorical(kBinary)},
        {{{0}, {1.0 - py1_z[0], py1_z[0]}}, {{1}, {1.0 - py1_z[1], py1_z[1]}}});
    return scm;
  }

  // exact joint by enumeration
  double joint(int x, int z, int y) const {
    const double px = x ? px1 : 1.0 - px1;
    const double pz = z ? pz1_x[x] : 1.0 - pz1_x[x];
    const double py = y ? py1_z[z] : 1.0 - py1_z[z];
    return px * pz * py;
  }
};

std::map<std::string, double> empirical_joint(const StreamLog& log,
                                              const std::vector<StreamId>& ids, std::size_t n) {
  std::map<CorrelationId, std::string> keys;
  for (const auto& id : ids) {
    for (const auto& r : log.records(id)) keys[r.cid] += r.value.cat();
  }
  std::map<std::string, double> out;
  for (const auto& [cid, key] : keys) out[key] += 1.0 / static_cast<double>(n);
  return out;
}

}  // namespace

TEST_CASE("fitted root marginal reproduces the training distribution") {
  CausalGraph g = numeric_chain({"X"});
  StreamLog log;
  Rng rng(3);
  std::vector<double> xs;
  for (std::size_t i = 0; i < 2000; ++i) {
    const double x = 3.0 + 2.0 * rng.normal();
    xs.push_back(x);
    append(log, "X", i + 1, Value::number(x));
  }
  const Scm scm = fit(g, log);
  CHECK(scm.mechanism("X").kind() == MechanismKind::RootMarginal);

  const StreamLog sampled = sample(scm, 2000, 17);
  std::vector<double> ys;
  for (const auto& r : sampled.records("X")) ys.push_back(r.value.num());
  const double se = std::sqrt(stats::variance(xs) / xs.size() + stats::variance(ys) / ys.size());
  CHECK(std::abs(stats::mean(ys) - stats::mean(xs)) < 2.0 * se);
  // a two-sample test against training data does not reject at alpha = 0.01
  CHECK(stats::welch_t_test(xs, ys).p_value >= 0.01);
}

TEST_CASE("additive-noise regression recovers a linear mechanism") {
  CausalGraph g = numeric_chain({"X", "Y"});
  StreamLog log;
  Rng rng(5);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < 5000; ++i) {
    const double x = rng.normal();
    const double y = 2.0 * x + rng.uniform(-1.0, 1.0);
    xs.push_back(x);
    ys.push_back(y);
    append(log, "X", i + 1, Value::number(x));
    append(log, "Y", i + 1, Value::number(y));
  }
  // closed-form simple-regression oracle on the same data
  const double mx = stats::mean(xs), my = stats::mean(ys);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double oracle_slope = sxy / sxx;
  CHECK(oracle_slope == Catch::Approx(2.0).margin(0.05));

  const Scm scm = fit(g, log);
  const auto& mech = dynamic_cast<const ConditionalMechanism&>(scm.mechanism("Y"));
  CHECK(mech.kind() == MechanismKind::AdditiveNoiseRegression);
  // feature layout: [presence, value]; slope is the value coefficient
  const double slope = mech.fields()[0].regression.coef[2];
  CHECK(slope == Catch::Approx(oracle_slope).margin(1e-6));
  CHECK(slope == Catch::Approx(2.0).margin(0.05));

  // residuals are the empirical noise, roughly uniform(-1,1): sd ~ 1/sqrt(3)
  const auto& residuals = mech.fields()[0].regression.residuals;
  CHECK(std::sqrt(stats::variance(residuals)) == Catch::Approx(1.0 / std::sqrt(3.0)).margin(0.03));
}

TEST_CASE("conditional tables recover binary mechanisms within 0.03") {
  std::vector<CausalGraph::Variable> vars(2);
  vars[0] = {"X", ValueSchema::categorical(kBinary), {}};
  vars[1] = {"Y", ValueSchema::categorical(kBinary), {"X"}};
  CausalGraph g = CausalGraph::from_variables(vars);

  StreamLog log;
  Rng rng(7);
  std::size_t count_x[2] = {0, 0};
  std::size_t count_y1[2] = {0, 0};
  for (std::size_t i = 0; i < 10000; ++i) {
    const int x = rng.uniform01() < 0.5 ? 1 : 0;
    const double py1 = x ? 0.9 : 0.2;
    const int y = rng.uniform01() < py1 ? 1 : 0;
    count_x[x]++;
    count_y1[x] += y;
    append(log, "X", i + 1, Value::level(kBinary[x]));
    append(log, "Y", i + 1, Value::level(kBinary[y]));
  }
  // frequency-count oracle on the same draws
  const double oracle[2] = {static_cast<double>(count_y1[0]) / count_x[0],
                            static_cast<double>(count_y1[1]) / count_x[1]};

  const Scm scm = fit(g, log);
  const auto& mech = scm.mechanism("Y");
  CHECK(mech.kind() == MechanismKind::ConditionalTable);
  for (int x = 0; x < 2; ++x) {
    ParentValues pv{Value::level(kBinary[x])};
    const double fitted = std::exp(mech.log_density(pv, Value::level("1")));
    CHECK(fitted == Catch::Approx(oracle[x]).margin(0.01));  // alpha=1 smoothing at n=10^4
    CHECK(fitted == Catch::Approx(x ? 0.9 : 0.2).margin(0.03));
  }
}

TEST_CASE("fitting fails loudly below min_samples") {
  CausalGraph g = numeric_chain({"X"});
  StreamLog log;
  for (std::size_t i = 0; i < 10; ++i) append(log, "X", i + 1, Value::number(1.0));
  try {
    fit(g, log);
    FAIL("expected InsufficientData");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientData);
  }
}

TEST_CASE("ancestral sampling matches the Markov factorisation by enumeration") {
  const BinaryChain chain;
  const Scm scm = chain.scm();
  const std::size_t n = 50000;
  const StreamLog log = sample(scm, n, 99);
  const auto emp = empirical_joint(log, {"X", "Z", "Y"}, n);
  double tv = 0.0;
  for (int x = 0; x < 2; ++x) {
    for (int z = 0; z < 2; ++z) {
      for (int y = 0; y < 2; ++y) {
        const std::string key = kBinary[x] + kBinary[z] + kBinary[y];
        const double e = emp.count(key) ? emp.at(key) : 0.0;
        tv += std::abs(e - chain.joint(x, z, y));
      }
    }
  }
  CHECK(tv / 2.0 < 0.02);
}

TEST_CASE("refitting a sampled log recovers the mechanisms") {
  CausalGraph g = numeric_chain({"X", "Y"});
  StreamLog log;
  Rng rng(11);
  for (std::size_t i = 0; i < 5000; ++i) {
    const double x = rng.normal();
    append(log, "X", i + 1, Value::number(x));
    append(log, "Y", i + 1, Value::number(2.0 * x + rng.uniform(-1.0, 1.0)));
  }
  const Scm first = fit(g, log);
  const StreamLog resampled = sample(first, 5000, 13);
  const Scm second = fit(g, resampled);
  const auto& m1 = dynamic_cast<const ConditionalMechanism&>(first.mechanism("Y"));
  const auto& m2 = dynamic_cast<const ConditionalMechanism&>(second.mechanism("Y"));
  CHECK(m2.fields()[0].regression.coef[2] ==
        Catch::Approx(m1.fields()[0].regression.coef[2]).margin(0.05));
}

TEST_CASE("atomic interventions pin the variable in every sample") {
  const BinaryChain chain;
  const Scm scm = chain.scm();
  const Scm post = intervene(scm, {Intervention::atomic("Z", Value::level("1"))});
  const StreamLog log = sample(post, 5000, 3);
  for (const auto& r : log.records("Z")) CHECK(r.value.cat() == "1");
}

TEST_CASE("truncated factorisation only touches the intervened factor") {
  const BinaryChain chain;
  const Scm scm = chain.scm();
  const Scm post = intervene(scm, {Intervention::atomic("Z", Value::level("1"))});
  CHECK(post.mechanisms.at("X").get() == scm.mechanisms.at("X").get());
  CHECK(post.mechanisms.at("Y").get() == scm.mechanisms.at("Y").get());
  CHECK(post.mechanisms.at("Z").get() != scm.mechanisms.at("Z").get());
}

TEST_CASE("do(Z=1) marginals match exact enumeration") {
  const BinaryChain chain;
  const Scm post = intervene(chain.scm(), {Intervention::atomic("Z", Value::level("1"))});
  const std::size_t n = 50000;
  const StreamLog log = sample(post, n, 21);
  double y1 = 0.0;
  for (const auto& r : log.records("Y")) y1 += r.value.cat() == "1" ? 1.0 : 0.0;
  // sum_x p(x) p(y=1 | z=1) by enumeration
  const double expected =
      (1.0 - chain.px1) * chain.py1_z[1] + chain.px1 * chain.py1_z[1];
  CHECK(y1 / n == Catch::Approx(expected).margin(0.02));
}

TEST_CASE("an identity soft intervention leaves the joint unchanged") {
  const BinaryChain chain;
  const Scm scm = chain.scm();
  const Scm post = intervene(scm, {Intervention::soft_replace("Z", scm.mechanisms.at("Z"))});
  const std::size_t n = 50000;
  const auto emp = empirical_joint(sample(post, n, 31), {"X", "Z", "Y"}, n);
  double tv = 0.0;
  for (int x = 0; x < 2; ++x) {
    for (int z = 0; z < 2; ++z) {
      for (int y = 0; y < 2; ++y) {
        const std::string key = kBinary[x] + kBinary[z] + kBinary[y];
        const double e = emp.count(key) ? emp.at(key) : 0.0;
        tv += std::abs(e - chain.joint(x, z, y));
      }
    }
  }
  CHECK(tv / 2.0 < 0.02);
}

TEST_CASE("intervention targets are checked") {
  const BinaryChain chain;
  const Scm scm = chain.scm();
  CHECK_THROWS_AS(intervene(scm, {Intervention::atomic("W", Value::level("1"))}), Error);
  CHECK_THROWS_AS(intervene(scm, {Intervention::atomic("Z", Value::level("2"))}), Error);
  CHECK_THROWS_AS(intervene(scm, {Intervention::atomic("Z", Value::level("1")),
                                  Intervention::atomic("Z", Value::level("0"))}),
                  Error);
}

TEST_CASE("joint log density of an independent binary pair") {
  std::vector<CausalGraph::Variable> vars(2);
  vars[0] = {"A", ValueSchema::categorical(kBinary), {}};
  vars[1] = {"B", ValueSchema::categorical(kBinary), {}};
  Scm scm;
  scm.graph = CausalGraph::from_variables(vars);
  scm.mechanisms["A"] = RootMechanism::table(ValueSchema::categorical(kBinary), {0.5, 0.5});
  scm.mechanisms["B"] = RootMechanism::table(ValueSchema::categorical(kBinary), {0.5, 0.5});
  const double expected = 2.0 * std::log(0.5);
  for (const std::string& a : kBinary) {
    for (const std::string& b : kBinary) {
      CHECK(joint_log_density(scm, {{"A", Value::level(a)}, {"B", Value::level(b)}}) ==
            Catch::Approx(expected));
    }
  }
}

TEST_CASE("joint log density matches the factorised product on the 3-chain") {
  const BinaryChain chain;
  const Scm scm = chain.scm();
  for (int x = 0; x < 2; ++x) {
    for (int z = 0; z < 2; ++z) {
      for (int y = 0; y < 2; ++y) {
        const double ld = joint_log_density(scm, {{"X", Value::level(kBinary[x])},
                                                  {"Z", Value::level(kBinary[z])},
                                                  {"Y", Value::level(kBinary[y])}});
        CHECK(ld == Catch::Approx(std::log(chain.joint(x, z, y))));
      }
    }
  }
}

TEST_CASE("zero-mass assignments and empirical mechanisms are handled") {
  BinaryChain chain;
  chain.px1 = 1.0;  // X=0 outside support
  const Scm scm = chain.scm();
  CHECK(joint_log_density(scm, {{"X", Value::level("0")},
                                {"Z", Value::level("1")},
                                {"Y", Value::level("1")}}) == kNegInf);

  CausalGraph g = numeric_chain({"X"});
  StreamLog log;
  Rng rng(3);
  for (std::size_t i = 0; i < 100; ++i) append(log, "X", i + 1, Value::number(rng.normal()));
  const Scm numeric_scm = fit(g, log);
  try {
    joint_log_density(numeric_scm, {{"X", Value::number(0.0)}});
    FAIL("expected DensityUndefined");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DensityUndefined);
  }
}

TEST_CASE("residuals of distinct fitted mechanisms are uncorrelated") {
  // X -> Y -> Z with independent noises; fitted residual pools should pass a
  // pairwise correlation test at alpha = 0.01
  CausalGraph g = numeric_chain({"X", "Y", "Z"});
  StreamLog log;
  Rng rng(19);
  for (std::size_t i = 0; i < 4000; ++i) {
    const double x = rng.normal();
    const double y = 1.5 * x + rng.uniform(-1.0, 1.0);
    const double z = -0.8 * y + rng.uniform(-0.5, 0.5);
    append(log, "X", i + 1, Value::number(x));
    append(log, "Y", i + 1, Value::number(y));
    append(log, "Z", i + 1, Value::number(z));
  }
  const Scm scm = fit(g, log);
  const auto& my = dynamic_cast<const ConditionalMechanism&>(scm.mechanism("Y"));
  const auto& mz = dynamic_cast<const ConditionalMechanism&>(scm.mechanism("Z"));
  const auto& ry = my.fields()[0].regression.residuals;
  const auto& rz = mz.fields()[0].regression.residuals;
  REQUIRE(ry.size() == rz.size());
  const double n = static_cast<double>(ry.size());
  const double mry = stats::mean(ry), mrz = stats::mean(rz);
  double num = 0.0, dy = 0.0, dz = 0.0;
  for (std::size_t i = 0; i < ry.size(); ++i) {
    num += (ry[i] - mry) * (rz[i] - mrz);
    dy += (ry[i] - mry) * (ry[i] - mry);
    dz += (rz[i] - mrz) * (rz[i] - mrz);
  }
  const double r = num / std::sqrt(dy * dz);
  const double t = r * std::sqrt((n - 2.0) / (1.0 - r * r));
  boost::math::students_t dist(n - 2.0);
  const double p = 2.0 * boost::math::cdf(dist, -std::abs(t));
  CHECK(p >= 0.01);
}

TEST_CASE("SCM files round-trip losslessly") {
  // fitted SCM with presence models, regressions and tables
  std::vector<CausalGraph::Variable> vars(2);
  vars[0] = {"X", ValueSchema::numeric(), {}};
  vars[1] = {"Y", ValueSchema::tuple({FieldSchema{"v", FieldKind::Numeric, {}},
                                      FieldSchema{"c", FieldKind::Categorical, kBinary}}),
             {"X"}};
  CausalGraph g = CausalGraph::from_variables(vars);
  StreamLog log;
  Rng rng(23);
  for (std::size_t i = 0; i < 500; ++i) {
    const double x = rng.normal();
    append(log, "X", i + 1, Value::number(x));
    if (x > -0.5) {  // routed: Y absent for low x
      append(log, "Y", i + 1,
             Value::tuple({Scalar{2.0 * x + rng.uniform(-0.1, 0.1)},
                           Scalar{x > 0.5 ? "1" : "0"}}));
    }
  }
  const Scm scm = fit(g, log);
  const Json j = scm_to_json(scm);
  const Scm loaded = scm_from_json(j);
  CHECK(scm_to_json(loaded) == j);
  CHECK(sample(scm, 300, 5) == sample(loaded, 300, 5));
}
