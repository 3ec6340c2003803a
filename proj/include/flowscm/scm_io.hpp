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
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowscm/graph_io.hpp"
#include "flowscm/log.hpp"
#include "flowscm/mechanism.hpp"
#include "flowscm/scm.hpp"

namespace flowscm {

// SCM file layout: the causal graph (variables with schemas and parents) and
// every mechanism's full state (coefficients, residual pools, tables,
// discretisation, presence model). Round-trips losslessly.

namespace detail {

inline Json binning_to_json(const NumericBinning& b) {
  return Json{{"lo", b.lo}, {"hi", b.hi}, {"bins", b.bins}};
}

inline NumericBinning binning_from_json(const Json& j) {
  return NumericBinning{j.at("lo").get<double>(), j.at("hi").get<double>(),
                        j.at("bins").get<int>()};
}

inline Json encoder_to_json(const ParentEncoder& enc) {
  Json slots = Json::array();
  for (const auto& slot : enc.slots()) {
    Json js;
    js["id"] = slot.id;
    Json fields = Json::array();
    for (std::size_t f = 0; f < slot.fields.size(); ++f) {
      Json jf;
      jf["name"] = slot.fields[f].name;
      jf["kind"] = slot.fields[f].kind == FieldKind::Numeric ? "numeric" : "categorical";
      jf["levels"] = slot.fields[f].levels;
      jf["binning"] = binning_to_json(slot.binnings[f]);
      fields.push_back(jf);
    }
    js["fields"] = fields;
    slots.push_back(js);
  }
  return slots;
}

inline ParentEncoder encoder_from_json(const Json& j) {
  std::vector<StreamId> ids;
  std::vector<ValueSchema> schemas;
  std::vector<std::vector<NumericBinning>> binnings;
  for (const auto& js : j) {
    ids.push_back(js.at("id").get<std::string>());
    std::vector<FieldSchema> fields;
    std::vector<NumericBinning> bs;
    for (const auto& jf : js.at("fields")) {
      FieldSchema f;
      f.name = jf.at("name").get<std::string>();
      f.kind = jf.at("kind").get<std::string>() == "numeric" ? FieldKind::Numeric
                                                             : FieldKind::Categorical;
      f.levels = jf.at("levels").get<std::vector<std::string>>();
      fields.push_back(std::move(f));
      bs.push_back(binning_from_json(jf.at("binning")));
    }
    // reconstruct a schema carrying exactly these flat fields
    if (fields.size() == 1 && fields[0].name == "value") {
      schemas.push_back(fields[0].kind == FieldKind::Numeric
                            ? ValueSchema::numeric()
                            : ValueSchema::categorical(fields[0].levels));
    } else {
      schemas.push_back(ValueSchema::tuple(fields));
    }
    binnings.push_back(std::move(bs));
  }
  ParentEncoder enc(ids, schemas, 8);
  for (std::size_t p = 0; p < enc.slots().size(); ++p) enc.slots()[p].binnings = binnings[p];
  return enc;
}

}  // namespace detail

inline Json mechanism_to_json(const Mechanism& mech, const StreamId& id) {
  Json j;
  j["stream"] = id;
  j["schema"] = schema_to_json(mech.schema());
  if (const auto* root = dynamic_cast<const RootMechanism*>(&mech)) {
    j["kind"] = "root-marginal";
    Json pool = Json::array();
    for (const auto& v : root->pool()) pool.push_back(value_to_json(v, mech.schema()));
    j["pool"] = pool;
    j["explicit_probs"] = root->explicit_probs();
    return j;
  }
  if (const auto* pm = dynamic_cast<const PointMassMechanism*>(&mech)) {
    j["kind"] = "point-mass";
    j["value"] = value_to_json(pm->value(), mech.schema());
    return j;
  }
  const auto* cond = dynamic_cast<const ConditionalMechanism*>(&mech);
  if (!cond) throw Error(Errc::Usage, "unserialisable mechanism kind");
  j["kind"] = "conditional";
  j["parents"] = detail::encoder_to_json(cond->encoder());
  j["fit_samples"] = cond->fit_samples();

  Json pres;
  pres["conditional"] = cond->presence().conditional;
  pres["fallback"] = cond->presence().fallback;
  Json pp = Json::array();
  for (const auto& [cfg, p] : cond->presence().prob) pp.push_back(Json{cfg, p});
  pres["probs"] = pp;
  j["presence"] = pres;

  Json fields = Json::array();
  for (const auto& fm : cond->fields()) {
    Json jf;
    jf["name"] = fm.schema.name;
    jf["kind"] = fm.schema.kind == FieldKind::Numeric ? "numeric" : "categorical";
    jf["levels"] = fm.schema.levels;
    if (fm.schema.kind == FieldKind::Numeric) {
      jf["coef"] = fm.regression.coef;
      jf["residuals"] = fm.regression.residuals;
    } else {
      Json table = Json::array();
      for (const auto& [cfg, probs] : fm.table.probs) table.push_back(Json{cfg, probs});
      jf["table"] = table;
      jf["fallback"] = fm.table.fallback;
    }
    fields.push_back(jf);
  }
  j["fields"] = fields;
  return j;
}

inline MechanismPtr mechanism_from_json(const Json& j) {
  const ValueSchema schema = schema_from_json(j.at("schema"));
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "root-marginal") {
    const auto explicit_probs = j.at("explicit_probs").get<std::vector<double>>();
    if (!explicit_probs.empty()) return RootMechanism::table(schema, explicit_probs);
    std::vector<Value> pool;
    for (const auto& jv : j.at("pool")) pool.push_back(value_from_json(jv, schema));
    return std::make_shared<RootMechanism>(schema, std::move(pool));
  }
  if (kind == "point-mass") {
    return point_mass(schema, value_from_json(j.at("value"), schema));
  }
  if (kind != "conditional") throw Error(Errc::FileFormat, "unknown mechanism kind '" + kind + "'");

  auto mech = std::make_shared<ConditionalMechanism>(j.at("stream").get<std::string>(), schema,
                                                     detail::encoder_from_json(j.at("parents")));
  mech->set_fit_samples(j.at("fit_samples").get<std::size_t>());

  ConditionalMechanism::Presence pres;
  pres.conditional = j.at("presence").at("conditional").get<bool>();
  pres.fallback = j.at("presence").at("fallback").get<double>();
  for (const auto& jp : j.at("presence").at("probs")) {
    pres.prob[jp.at(0).get<std::int64_t>()] = jp.at(1).get<double>();
  }

  std::vector<ConditionalMechanism::FieldModel> models;
  for (const auto& jf : j.at("fields")) {
    ConditionalMechanism::FieldModel fm;
    fm.schema.name = jf.at("name").get<std::string>();
    fm.schema.kind = jf.at("kind").get<std::string>() == "numeric" ? FieldKind::Numeric
                                                                   : FieldKind::Categorical;
    fm.schema.levels = jf.at("levels").get<std::vector<std::string>>();
    if (fm.schema.kind == FieldKind::Numeric) {
      fm.regression.coef = jf.at("coef").get<std::vector<double>>();
      fm.regression.residuals = jf.at("residuals").get<std::vector<double>>();
    } else {
      for (const auto& jt : jf.at("table")) {
        fm.table.probs[jt.at(0).get<std::int64_t>()] = jt.at(1).get<std::vector<double>>();
      }
      fm.table.fallback = jf.at("fallback").get<std::vector<double>>();
    }
    models.push_back(std::move(fm));
  }
  mech->set_fields(std::move(models));
  mech->set_presence(std::move(pres));
  return mech;
}

inline Json scm_to_json(const Scm& scm) {
  Json j;
  Json vars = Json::array();
  for (const auto& v : scm.graph.variables()) {
    Json jv;
    jv["id"] = v.id;
    jv["schema"] = schema_to_json(v.schema);
    jv["parents"] = v.parents;
    vars.push_back(jv);
  }
  j["variables"] = vars;
  j["independent_noise"] = scm.independent_noise;
  Json mechs = Json::array();
  for (const auto& [id, mech] : scm.mechanisms) mechs.push_back(mechanism_to_json(*mech, id));
  j["mechanisms"] = mechs;
  return j;
}

inline Scm scm_from_json(const Json& j) {
  Scm scm;
  std::vector<CausalGraph::Variable> vars;
  for (const auto& jv : j.at("variables")) {
    CausalGraph::Variable v;
    v.id = jv.at("id").get<std::string>();
    v.schema = schema_from_json(jv.at("schema"));
    v.parents = jv.at("parents").get<std::vector<std::string>>();
    vars.push_back(std::move(v));
  }
  scm.graph = CausalGraph::from_variables(std::move(vars));
  scm.independent_noise = j.at("independent_noise").get<bool>();
  for (const auto& jm : j.at("mechanisms")) {
    scm.mechanisms[jm.at("stream").get<std::string>()] = mechanism_from_json(jm);
  }
  return scm;
}

inline void save_scm(const Scm& scm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::FileFormat, "cannot write '" + path + "'");
  out << scm_to_json(scm).dump() << "\n";
}

inline Scm load_scm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileFormat, "cannot read '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw Error(Errc::FileFormat, std::string("bad JSON in '") + path + "': " + e.what());
  }
  return scm_from_json(j);
}

}  // namespace flowscm
