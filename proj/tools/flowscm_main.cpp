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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowscm/flowscm.hpp"

namespace fs = std::filesystem;
using namespace flowscm;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::FileFormat, "cannot write '" + path + "'");
  out << content;
}

std::pair<std::string, std::string> split_once(const std::string& s, char sep) {
  const auto pos = s.find(sep);
  if (pos == std::string::npos) {
    throw Error(Errc::Usage, "expected '<name>" + std::string(1, sep) + "<value>' in '" + s + "'");
  }
  return {s.substr(0, pos), s.substr(pos + 1)};
}

Scalar parse_scalar(const std::string& text, const FieldSchema& field) {
  if (field.kind == FieldKind::Numeric) {
    try {
      return Scalar{std::stod(text)};
    } catch (const std::exception&) {
      throw Error(Errc::Usage, "'" + text + "' is not a number (field '" + field.name + "')");
    }
  }
  if (!field.level_index(text)) {
    throw Error(Errc::Usage, "'" + text + "' is not a level of field '" + field.name + "'");
  }
  return Scalar{text};
}

// numeric: "3.5"; categorical: "high"; tuple: "amount=2000,severity=low"
Value parse_value(const std::string& text, const ValueSchema& schema) {
  const auto fields = schema.flat_fields();
  if (schema.scalar()) return Value{{parse_scalar(text, fields[0])}};
  std::map<std::string, std::string> given;
  std::string rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string item = rest.substr(0, comma);
    rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    const auto [name, val] = split_once(item, '=');
    given[name] = val;
  }
  Value v;
  for (const auto& f : fields) {
    auto it = given.find(f.name);
    if (it == given.end()) throw Error(Errc::Usage, "missing tuple field '" + f.name + "'");
    v.parts.push_back(parse_scalar(it->second, f));
  }
  return v;
}

// "claims" | "normal:mu,sigma" | "lognormal:mu,sigma" | "uniform:a,b" |
// "categorical:level=p,level=p"
GeneratorPtr parse_generator(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);
  auto nums = [&]() {
    std::vector<double> out;
    std::string rest = args;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      out.push_back(std::stod(rest.substr(0, comma)));
      rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    }
    return out;
  };
  if (kind == "claims") return std::make_shared<claims::ClaimsGenerator>();
  if (kind == "normal") {
    const auto p = nums();
    if (p.size() != 2) throw Error(Errc::Usage, "normal:<mu>,<sigma>");
    return make_generator([p](Rng& rng) { return Value::number(p[0] + p[1] * rng.normal()); });
  }
  if (kind == "lognormal") {
    const auto p = nums();
    if (p.size() != 2) throw Error(Errc::Usage, "lognormal:<mu>,<sigma>");
    return make_generator([p](Rng& rng) { return Value::number(rng.lognormal(p[0], p[1])); });
  }
  if (kind == "uniform") {
    const auto p = nums();
    if (p.size() != 2) throw Error(Errc::Usage, "uniform:<lo>,<hi>");
    return make_generator([p](Rng& rng) { return Value::number(rng.uniform(p[0], p[1])); });
  }
  if (kind == "categorical") {
    std::vector<std::string> levels;
    std::vector<double> probs;
    std::string rest = args;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto [level, p] = split_once(rest.substr(0, comma), '=');
      levels.push_back(level);
      probs.push_back(std::stod(p));
      rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    }
    if (levels.empty()) throw Error(Errc::Usage, "categorical:<level>=<p>,...");
    return make_generator([levels, probs](Rng& rng) {
      double u = rng.uniform01();
      for (std::size_t i = 0; i < levels.size(); ++i) {
        u -= probs[i];
        if (u < 0.0) return Value::level(levels[i]);
      }
      return Value::level(levels.back());
    });
  }
  throw Error(Errc::Usage, "unknown generator '" + kind + "'");
}

std::map<StreamId, GeneratorPtr> resolve_sources(const ValidatedGraph& graph,
                                                 const std::vector<std::string>& specs) {
  std::map<StreamId, GeneratorPtr> out;
  for (const auto& s : specs) {
    const auto [stream, spec] = split_once(s, '=');
    out[stream] = parse_generator(spec);
  }
  for (const auto& src : graph.graph().sources) {
    if (out.count(src)) continue;
    if (graph.schema_of(src) == claims::claim_schema()) {
      out[src] = std::make_shared<claims::ClaimsGenerator>();
    } else {
      throw Error(Errc::MissingSource,
                  "no generator for source '" + src + "' (pass --source " + src + "=<spec>)");
    }
  }
  return out;
}

AttributionMethod parse_method(const std::string& m) {
  if (m == "shapley") return AttributionMethod::Shapley;
  if (m == "proportional") return AttributionMethod::ProportionalKl;
  throw Error(Errc::Usage, "method must be shapley or proportional");
}

void print_log_summary(const StreamLog& log) {
  for (const auto& [id, recs] : log.streams) {
    std::cout << "  " << id << ": " << recs.size() << " records";
    if (!recs.empty() && recs[0].value.parts.size() == 1 && is_number(recs[0].value.parts[0])) {
      std::vector<double> xs;
      for (const auto& r : recs) xs.push_back(r.value.num());
      std::cout << "  mean=" << stats::mean(xs);
    }
    std::cout << "\n";
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"flow-based dataflow graphs with a causal layer: execution, "
               "fault localisation, shift attribution and interventions"};
  app.require_subcommand(1);

  // validate
  std::string graph_file;
  auto* cmd_validate = app.add_subcommand("validate", "check a graph spec file");
  cmd_validate->add_option("graph", graph_file, "graph spec JSON")->required();

  // run
  std::string run_graph, run_out, run_label = "run";
  std::size_t run_n = 1000;
  std::uint64_t run_seed = 0;
  bool run_fault = false;
  std::vector<std::string> run_sources;
  auto* cmd_run = app.add_subcommand("run", "execute a graph and log every stream");
  cmd_run->add_option("graph", run_graph, "graph spec JSON")->required();
  cmd_run->add_option("--n", run_n, "records to generate");
  cmd_run->add_option("--seed", run_seed, "random seed");
  cmd_run->add_option("--out", run_out, "log directory to write");
  cmd_run->add_option("--label", run_label, "window label");
  cmd_run->add_option("--source", run_sources, "source generator: <stream>=<spec>");
  cmd_run->add_flag("--fault", run_fault, "swap in the buggy claims classifier");

  // fit
  std::string fit_graph, fit_logs, fit_out;
  std::size_t fit_min_samples = 50;
  auto* cmd_fit = app.add_subcommand("fit", "fit an SCM from logged streams");
  cmd_fit->add_option("--graph", fit_graph, "graph spec JSON")->required();
  cmd_fit->add_option("--logs", fit_logs, "log directory")->required();
  cmd_fit->add_option("--out", fit_out, "SCM file to write")->required();
  cmd_fit->add_option("--min-samples", fit_min_samples, "required samples per mechanism");

  // attribute
  std::string attr_graph, attr_old, attr_new, attr_target;
  std::string attr_method = "shapley", attr_format = "table", attr_out;
  std::uint64_t attr_seed = 0;
  std::size_t attr_samples = 4000;
  auto* cmd_attr = app.add_subcommand("attribute", "attribute a target shift to streams");
  cmd_attr->add_option("--graph", attr_graph, "graph spec JSON")->required();
  cmd_attr->add_option("--old", attr_old, "old-window log directory")->required();
  cmd_attr->add_option("--new", attr_new, "new-window log directory")->required();
  cmd_attr->add_option("--target", attr_target, "target stream")->required();
  cmd_attr->add_option("--method", attr_method, "shapley|proportional");
  cmd_attr->add_option("--format", attr_format, "table|csv");
  cmd_attr->add_option("--seed", attr_seed, "random seed");
  cmd_attr->add_option("--samples", attr_samples, "per-coalition sample count");
  cmd_attr->add_option("--out", attr_out, "also write CSV report here");

  // intervene
  std::string iv_scm, iv_out;
  std::vector<std::string> iv_set, iv_soft;
  std::size_t iv_n = 1000;
  std::uint64_t iv_seed = 0;
  auto* cmd_iv = app.add_subcommand("intervene", "sample an SCM under interventions");
  cmd_iv->add_option("scm", iv_scm, "SCM file")->required();
  cmd_iv->add_option("--set", iv_set, "atomic intervention: <stream>=<value>");
  cmd_iv->add_option("--soft", iv_soft, "soft intervention: <stream>=<mechanism-file>");
  cmd_iv->add_option("--n", iv_n, "samples to draw");
  cmd_iv->add_option("--seed", iv_seed, "random seed");
  cmd_iv->add_option("--out", iv_out, "log directory to write");

  // experiment
  std::string exp_kind, exp_method = "shapley", exp_format = "table", exp_out;
  std::size_t exp_repeats = 30, exp_records = 1000;
  std::uint64_t exp_seed = 7;
  auto* cmd_exp = app.add_subcommand("experiment", "run the claims fault/shift study");
  cmd_exp->add_option("kind", exp_kind, "fault|shift|control")->required();
  cmd_exp->add_option("--repeats", exp_repeats, "independent repeats");
  cmd_exp->add_option("--records", exp_records, "records per window");
  cmd_exp->add_option("--seed", exp_seed, "master seed (echoed in reports)");
  cmd_exp->add_option("--method", exp_method, "shapley|proportional");
  cmd_exp->add_option("--format", exp_format, "table|csv");
  cmd_exp->add_option("--out", exp_out, "directory for summary + per-run CSVs");

  CLI11_PARSE(app, argc, argv);

  claims::register_claims_transforms(TransformRegistry::global());
  TransformRegistry::global().add("identity", make_transform([](const Bundle& in, Emitter& out, Rng&) {
    if (const Record* r = in.get("in")) out.emit("out", r->value);
  }));

  if (cmd_validate->parsed()) {
    const auto violations = check(load_graph(graph_file));
    if (violations.empty()) {
      std::cout << "valid\n";
      return 0;
    }
    for (const auto& v : violations) std::cout << v.str() << "\n";
    return 1;
  }

  if (cmd_run->parsed()) {
    ValidatedGraph graph = validate(load_graph(run_graph));
    if (run_fault) graph = claims::inject_fault(graph);
    const auto sources = resolve_sources(graph, run_sources);
    const StreamLog log = run(graph, sources, run_n, run_seed, run_label);
    if (!run_out.empty()) {
      save_logs(log, graph, run_out);
      std::cout << "wrote logs to " << run_out << "\n";
    }
    print_log_summary(log);
    return 0;
  }

  if (cmd_fit->parsed()) {
    const ValidatedGraph graph = validate(load_graph(fit_graph));
    const StreamLog log = load_logs(graph, fit_logs);
    FitOptions opt;
    opt.min_samples = fit_min_samples;
    const Scm scm = fit(graph.causal(), log, opt);
    save_scm(scm, fit_out);
    std::cout << "fitted " << scm.mechanisms.size() << " mechanisms -> " << fit_out << "\n";
    return 0;
  }

  if (cmd_attr->parsed()) {
    const ValidatedGraph graph = validate(load_graph(attr_graph));
    ChangeWindows w;
    w.old_log = load_logs(graph, attr_old, "old");
    w.new_log = load_logs(graph, attr_new, "new");
    w.target = attr_target;
    AttributionOptions opt;
    opt.method = parse_method(attr_method);
    opt.seed = attr_seed;
    opt.value_samples = attr_samples;
    const AttributionResult result = attribute_change(graph, w, opt);
    std::cout << (attr_format == "csv" ? render_attribution_csv(result)
                                       : render_attribution_table(result));
    if (!attr_out.empty()) write_file(attr_out, render_attribution_csv(result));
    return 0;
  }

  if (cmd_iv->parsed()) {
    const Scm scm = load_scm(iv_scm);
    std::vector<Intervention> interventions;
    for (const auto& s : iv_set) {
      const auto [stream, text] = split_once(s, '=');
      if (!scm.graph.contains(stream)) {
        throw Error(Errc::UnknownVariable, "unknown stream '" + stream + "'");
      }
      interventions.push_back(
          Intervention::atomic(stream, parse_value(text, scm.graph.variable(stream).schema)));
    }
    for (const auto& s : iv_soft) {
      const auto [stream, file] = split_once(s, '=');
      std::ifstream in(file);
      if (!in) throw Error(Errc::FileFormat, "cannot read '" + file + "'");
      Json j;
      in >> j;
      interventions.push_back(Intervention::soft_replace(stream, mechanism_from_json(j)));
    }
    const Scm post = intervene(scm, interventions);
    const StreamLog log = sample(post, iv_n, iv_seed, "intervened");
    if (!iv_out.empty()) {
      fs::create_directories(iv_out);
      for (const auto& [id, recs] : log.streams) {
        std::ofstream out(fs::path(iv_out) / (id + ".ndjson"));
        for (const auto& r : recs) {
          nlohmann::ordered_json row;
          row["correlation_id"] = r.cid;
          row["t"] = r.t;
          row["value"] = value_to_json(r.value, post.graph.variable(id).schema);
          out << row.dump() << "\n";
        }
      }
      std::cout << "wrote samples to " << iv_out << "\n";
    }
    print_log_summary(log);
    return 0;
  }

  if (cmd_exp->parsed()) {
    claims::ExperimentConfig cfg;
    if (exp_kind == "fault") {
      cfg.kind = claims::ExperimentConfig::Kind::FaultInjection;
    } else if (exp_kind == "shift") {
      cfg.kind = claims::ExperimentConfig::Kind::DataShift;
    } else if (exp_kind == "control") {
      cfg.kind = claims::ExperimentConfig::Kind::Control;
    } else {
      throw Error(Errc::Usage, "experiment kind must be fault, shift or control");
    }
    cfg.repeats = exp_repeats;
    cfg.records = exp_records;
    cfg.seed = exp_seed;
    cfg.attribution.method = parse_method(exp_method);
    const claims::ExperimentReport report = claims::run_experiment(cfg);
    std::cout << (exp_format == "csv" ? render_experiment_csv(report)
                                      : render_experiment_table(report));
    if (!exp_out.empty()) {
      fs::create_directories(exp_out);
      write_file((fs::path(exp_out) / "summary.csv").string(), render_experiment_csv(report));
      write_file((fs::path(exp_out) / "runs.csv").string(), render_experiment_runs_csv(report));
      std::cout << "wrote " << exp_out << "/summary.csv and runs.csv\n";
    }
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    nlohmann::ordered_json j;
    j["error"] = errc_name(e.code());
    j["message"] = e.what();
    std::cerr << j.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":\"Internal\",\"message\":\"" << e.what() << "\"}\n";
    return 3;
  }
}
