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
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "flowscm/error.hpp"
#include "flowscm/rng.hpp"
#include "flowscm/stats.hpp"
#include "flowscm/value.hpp"

namespace flowscm {

enum class MechanismKind { RootMarginal, AdditiveNoiseRegression, ConditionalTable, PointMass };

inline const char* mechanism_kind_name(MechanismKind k) {
  switch (k) {
    case MechanismKind::RootMarginal: return "root-marginal";
    case MechanismKind::AdditiveNoiseRegression: return "additive-noise-regression";
    case MechanismKind::ConditionalTable: return "conditional-table";
    case MechanismKind::PointMass: return "point-mass";
  }
  return "?";
}

// Observed parent records for one correlation id, ordered like the
// mechanism's parent list. A parent routed away from this id is nullopt.
using ParentValues = std::vector<std::optional<Value>>;

struct FitOptions {
  std::size_t min_samples = 50;
  int parent_bins = 8;       // equal-width bins for numeric parent fields
  double table_alpha = 1.0;  // Laplace smoothing for conditional tables
  double ridge = 1e-9;
};

// Equal-width discretisation of one numeric parent field.
struct NumericBinning {
  double lo = 0.0;
  double hi = 1.0;
  int bins = 8;

  bool operator==(const NumericBinning&) const = default;

  int bin_of(double x) const {
    if (!(hi > lo)) return 0;
    int b = static_cast<int>((x - lo) / (hi - lo) * bins);
    return std::min(std::max(b, 0), bins - 1);
  }
};

// Maps parent observations to (a) numeric feature rows for regressions and
// (b) discretised configuration codes for tables. Absence is part of the
// encoding: one indicator per parent, one reserved configuration digit.
class ParentEncoder {
 public:
  struct ParentSlot {
    StreamId id;
    std::vector<FieldSchema> fields;
    std::vector<NumericBinning> binnings;  // parallel to fields; unused for categorical
  };

  ParentEncoder() = default;

  ParentEncoder(std::vector<StreamId> ids, const std::vector<ValueSchema>& schemas, int bins) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ParentSlot slot;
      slot.id = std::move(ids[i]);
      slot.fields = schemas[i].flat_fields();
      slot.binnings.assign(slot.fields.size(), NumericBinning{0.0, 1.0, bins});
      slots_.push_back(std::move(slot));
    }
  }

  std::vector<ParentSlot>& slots() { return slots_; }
  const std::vector<ParentSlot>& slots() const { return slots_; }

  std::vector<StreamId> parent_ids() const {
    std::vector<StreamId> out;
    for (const auto& s : slots_) out.push_back(s.id);
    return out;
  }

  std::size_t feature_count() const {
    std::size_t n = 0;
    for (const auto& slot : slots_) {
      n += 1;  // presence indicator
      for (const auto& f : slot.fields) {
        n += f.kind == FieldKind::Numeric ? 1 : f.levels.size();
      }
    }
    return n;
  }

  std::vector<double> features(const ParentValues& pv) const {
    check_arity(pv);
    std::vector<double> out;
    out.reserve(feature_count());
    for (std::size_t p = 0; p < slots_.size(); ++p) {
      const auto& slot = slots_[p];
      const bool present = pv[p].has_value();
      out.push_back(present ? 1.0 : 0.0);
      for (std::size_t f = 0; f < slot.fields.size(); ++f) {
        const auto& field = slot.fields[f];
        if (field.kind == FieldKind::Numeric) {
          out.push_back(present ? as_number(pv[p]->parts[f]) : 0.0);
        } else {
          for (std::size_t l = 0; l < field.levels.size(); ++l) {
            const bool hit = present && as_level(pv[p]->parts[f]) == field.levels[l];
            out.push_back(hit ? 1.0 : 0.0);
          }
        }
      }
    }
    return out;
  }

  // Radix of one parent digit: absent, or present x field-level combinations.
  std::int64_t parent_radix(std::size_t p) const {
    std::int64_t combos = 1;
    for (std::size_t f = 0; f < slots_[p].fields.size(); ++f) {
      const auto& field = slots_[p].fields[f];
      const std::int64_t r = field.kind == FieldKind::Numeric
                                 ? slots_[p].binnings[f].bins
                                 : static_cast<std::int64_t>(field.levels.size());
      if (combos > (std::numeric_limits<std::int64_t>::max() / std::max<std::int64_t>(r, 1)) / 4) {
        throw Error(Errc::Usage, "parent configuration space too large");
      }
      combos *= std::max<std::int64_t>(r, 1);
    }
    return combos + 1;
  }

  std::int64_t config(const ParentValues& pv) const {
    check_arity(pv);
    std::int64_t code = 0;
    for (std::size_t p = 0; p < slots_.size(); ++p) {
      const auto& slot = slots_[p];
      const std::int64_t radix = parent_radix(p);
      std::int64_t digit = 0;
      if (pv[p].has_value()) {
        std::int64_t combo = 0;
        for (std::size_t f = 0; f < slot.fields.size(); ++f) {
          const auto& field = slot.fields[f];
          std::int64_t fr, fv;
          if (field.kind == FieldKind::Numeric) {
            fr = slot.binnings[f].bins;
            fv = slot.binnings[f].bin_of(as_number(pv[p]->parts[f]));
          } else {
            fr = static_cast<std::int64_t>(field.levels.size());
            fv = field.level_index(as_level(pv[p]->parts[f])).value_or(0);
          }
          combo = combo * std::max<std::int64_t>(fr, 1) + fv;
        }
        digit = 1 + combo;
      }
      if (code > std::numeric_limits<std::int64_t>::max() / (radix + 1) / 2) {
        throw Error(Errc::Usage, "parent configuration space too large");
      }
      code = code * radix + digit;
    }
    return code;
  }

 private:
  void check_arity(const ParentValues& pv) const {
    if (pv.size() != slots_.size()) {
      throw Error(Errc::Usage, "parent values do not match mechanism parents");
    }
  }

  std::vector<ParentSlot> slots_;
};

// Per-stream discretisation context. When two windows are fitted for
// comparison, bin edges must come from the pooled data or bin drift would
// masquerade as mechanism change.
struct FitContext {
  // stream -> per-field binning (numeric fields only; categorical slots keep defaults)
  std::map<StreamId, std::vector<NumericBinning>> binnings;
};

class Mechanism;
using MechanismPtr = std::shared_ptr<const Mechanism>;

// A causal conditional p(x | pa): the fitted (or constructed) behaviour of the
// component producing one stream. Supports sampling given parent values and,
// where defined, conditional log-density evaluation.
class Mechanism {
 public:
  virtual ~Mechanism() = default;

  virtual MechanismKind kind() const = 0;
  virtual const std::vector<StreamId>& parents() const = 0;
  virtual const ValueSchema& schema() const = 0;

  // Probability that a record exists on this stream given the parent
  // observation; routers make this genuinely conditional.
  virtual double presence_probability(const ParentValues&) const { return 1.0; }
  virtual bool always_present() const { return true; }

  virtual Value sample_value(const ParentValues& pv, Rng& rng) const = 0;

  // log p(value | parents); throws DensityUndefined where no density exists
  // (empirical pools, numeric point masses).
  virtual double log_density(const ParentValues& pv, const Value& v) const = 0;

  // Conditional mean of a numeric field, where the model has one.
  virtual std::optional<double> conditional_mean(std::size_t, const ParentValues&) const {
    return std::nullopt;
  }

  virtual std::size_t fit_samples() const { return 0; }

 protected:
  static const std::vector<StreamId>& no_parents() {
    static const std::vector<StreamId> empty;
    return empty;
  }
};

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Marginal of a source stream: empirical resample of the observed values.
// Fully categorical roots also expose an exact mass function.
class RootMechanism final : public Mechanism {
 public:
  RootMechanism(ValueSchema schema, std::vector<Value> pool)
      : schema_(std::move(schema)), pool_(std::move(pool)) {
    if (pool_.empty()) throw Error(Errc::EmptySample, "root mechanism with empty pool");
    if (all_categorical()) {
      for (const auto& v : pool_) mass_[key_of(v)] += 1.0 / static_cast<double>(pool_.size());
    }
  }

  // Constructed root over a categorical schema with explicit level
  // probabilities (single field).
  static MechanismPtr table(ValueSchema schema, const std::vector<double>& probs) {
    const auto fields = schema.flat_fields();
    if (fields.size() != 1 || fields[0].kind != FieldKind::Categorical ||
        fields[0].levels.size() != probs.size()) {
      throw Error(Errc::Usage, "root table requires one categorical field with matching probs");
    }
    auto m = std::make_shared<RootMechanism>(schema, std::vector<Value>{Value::level(fields[0].levels[0])});
    m->pool_.clear();
    m->mass_.clear();
    m->explicit_probs_ = probs;
    for (std::size_t l = 0; l < probs.size(); ++l) {
      m->mass_[key_of(Value::level(fields[0].levels[l]))] = probs[l];
    }
    return m;
  }

  MechanismKind kind() const override { return MechanismKind::RootMarginal; }
  const std::vector<StreamId>& parents() const override { return no_parents(); }
  const ValueSchema& schema() const override { return schema_; }
  std::size_t fit_samples() const override { return pool_.size(); }

  Value sample_value(const ParentValues&, Rng& rng) const override {
    if (!explicit_probs_.empty()) {
      const auto fields = schema_.flat_fields();
      double u = rng.uniform01();
      for (std::size_t l = 0; l < explicit_probs_.size(); ++l) {
        u -= explicit_probs_[l];
        if (u < 0.0) return Value::level(fields[0].levels[l]);
      }
      return Value::level(fields[0].levels.back());
    }
    return pool_[rng.index(pool_.size())];
  }

  double log_density(const ParentValues&, const Value& v) const override {
    if (!all_categorical() && explicit_probs_.empty()) {
      throw Error(Errc::DensityUndefined, "empirical-resample root has no density");
    }
    auto it = mass_.find(key_of(v));
    if (it == mass_.end() || it->second <= 0.0) return kNegInf;
    return std::log(it->second);
  }

  const std::vector<Value>& pool() const { return pool_; }
  const std::vector<double>& explicit_probs() const { return explicit_probs_; }

 private:
  bool all_categorical() const {
    for (const auto& f : schema_.flat_fields()) {
      if (f.kind != FieldKind::Categorical) return false;
    }
    return true;
  }

  static std::string key_of(const Value& v) {
    std::string key;
    for (const auto& part : v.parts) {
      key += is_number(part) ? std::to_string(as_number(part)) : as_level(part);
      key += '\x1f';
    }
    return key;
  }

  ValueSchema schema_;
  std::vector<Value> pool_;
  std::map<std::string, double> mass_;
  std::vector<double> explicit_probs_;
};

// do(X = x0): the point mass delta(x, x0). Sampling pins the value exactly;
// densities are defined only for fully categorical schemas.
class PointMassMechanism final : public Mechanism {
 public:
  PointMassMechanism(ValueSchema schema, Value value)
      : schema_(std::move(schema)), value_(std::move(value)) {
    if (auto why = schema_mismatch(value_, schema_)) {
      throw Error(Errc::SchemaViolation, "atomic intervention value: " + *why);
    }
  }

  MechanismKind kind() const override { return MechanismKind::PointMass; }
  const std::vector<StreamId>& parents() const override { return no_parents(); }
  const ValueSchema& schema() const override { return schema_; }

  Value sample_value(const ParentValues&, Rng&) const override { return value_; }

  double log_density(const ParentValues&, const Value& v) const override {
    for (const auto& f : schema_.flat_fields()) {
      if (f.kind == FieldKind::Numeric) {
        throw Error(Errc::DensityUndefined, "point mass on a numeric value has no density");
      }
    }
    return v == value_ ? 0.0 : kNegInf;
  }

  const Value& value() const { return value_; }

 private:
  ValueSchema schema_;
  Value value_;
};

// Fitted causal conditional of a non-source stream: a presence model (for
// routed streams), one regression per numeric field, one smoothed frequency
// table per categorical field. Fields are conditionally independent given the
// parents.
class ConditionalMechanism final : public Mechanism {
 public:
  struct FieldTable {
    std::map<std::int64_t, std::vector<double>> probs;  // config -> level probs
    std::vector<double> fallback;  // marginal, used for configs never seen in fitting
  };

  struct FieldRegression {
    std::vector<double> coef;       // intercept first, then encoder features
    std::vector<double> residuals;  // empirical noise pool, fit-row order
  };

  struct FieldModel {
    FieldSchema schema;
    FieldRegression regression;  // numeric fields
    FieldTable table;            // categorical fields
  };

  struct Presence {
    bool conditional = false;
    std::map<std::int64_t, double> prob;  // config -> P(present)
    double fallback = 1.0;
  };

  ConditionalMechanism(StreamId target, ValueSchema schema, ParentEncoder encoder)
      : target_(std::move(target)),
        schema_(std::move(schema)),
        encoder_(std::move(encoder)),
        parent_ids_(encoder_.parent_ids()) {}

  MechanismKind kind() const override {
    for (const auto& f : schema_.flat_fields()) {
      if (f.kind == FieldKind::Numeric) return MechanismKind::AdditiveNoiseRegression;
    }
    return MechanismKind::ConditionalTable;
  }

  const std::vector<StreamId>& parents() const override { return parent_ids_; }
  const ValueSchema& schema() const override { return schema_; }
  const ParentEncoder& encoder() const { return encoder_; }
  std::size_t fit_samples() const override { return fit_samples_; }

  bool always_present() const override { return !presence_.conditional; }

  double presence_probability(const ParentValues& pv) const override {
    if (!presence_.conditional) return 1.0;
    const std::int64_t cfg = encoder_.config(pv);
    auto it = presence_.prob.find(cfg);
    return it == presence_.prob.end() ? presence_.fallback : it->second;
  }

  Value sample_value(const ParentValues& pv, Rng& rng) const override {
    Value out;
    const std::int64_t cfg = needs_config_ ? encoder_.config(pv) : 0;
    std::vector<double> feats;
    for (const auto& fm : fields_) {
      if (fm.schema.kind == FieldKind::Numeric) {
        if (feats.empty()) feats = encoder_.features(pv);
        double x = fm.regression.coef[0];
        for (std::size_t j = 0; j < feats.size(); ++j) x += fm.regression.coef[j + 1] * feats[j];
        x += fm.regression.residuals[rng.index(fm.regression.residuals.size())];
        out.parts.emplace_back(x);
      } else {
        const auto& probs = table_probs(fm, cfg);
        double u = rng.uniform01();
        std::size_t pick = probs.size() - 1;
        for (std::size_t l = 0; l < probs.size(); ++l) {
          u -= probs[l];
          if (u < 0.0) {
            pick = l;
            break;
          }
        }
        out.parts.emplace_back(fm.schema.levels[pick]);
      }
    }
    return out;
  }

  double log_density(const ParentValues& pv, const Value& v) const override {
    double total = 0.0;
    const std::int64_t cfg = needs_config_ ? encoder_.config(pv) : 0;
    for (std::size_t f = 0; f < fields_.size(); ++f) {
      const auto& fm = fields_[f];
      if (fm.schema.kind == FieldKind::Numeric) {
        throw Error(Errc::DensityUndefined,
                    "mechanism of '" + target_ + "' has an empirical noise field");
      }
      const auto idx = fm.schema.level_index(as_level(v.parts.at(f)));
      if (!idx) return kNegInf;
      const double p = table_probs(fm, cfg).at(static_cast<std::size_t>(*idx));
      if (p <= 0.0) return kNegInf;
      total += std::log(p);
    }
    return total;
  }

  std::optional<double> conditional_mean(std::size_t field, const ParentValues& pv) const override {
    const auto& fm = fields_.at(field);
    if (fm.schema.kind != FieldKind::Numeric) return std::nullopt;
    const auto feats = encoder_.features(pv);
    double x = fm.regression.coef[0];
    for (std::size_t j = 0; j < feats.size(); ++j) x += fm.regression.coef[j + 1] * feats[j];
    return x;
  }

  const std::vector<FieldModel>& fields() const { return fields_; }
  const Presence& presence() const { return presence_; }

  // assembly (used by fitting, deserialisation and explicit construction)
  void set_fields(std::vector<FieldModel> fields) {
    fields_ = std::move(fields);
    needs_config_ = false;
    for (const auto& fm : fields_) {
      if (fm.schema.kind == FieldKind::Categorical) needs_config_ = true;
    }
    if (presence_.conditional) needs_config_ = true;
  }
  void set_presence(Presence p) {
    presence_ = std::move(p);
    if (presence_.conditional) needs_config_ = true;
  }
  void set_fit_samples(std::size_t n) { fit_samples_ = n; }

  // Constructed table mechanism: parents all categorical and always present;
  // table keyed by parent level indices in parent order.
  static MechanismPtr conditional_table(StreamId target, ValueSchema target_schema,
                                        std::vector<StreamId> parent_ids,
                                        std::vector<ValueSchema> parent_schemas,
                                        const std::map<std::vector<int>, std::vector<double>>& table) {
    ParentEncoder enc(parent_ids, parent_schemas, 2);
    auto mech = std::make_shared<ConditionalMechanism>(std::move(target), target_schema, enc);
    const auto fields = target_schema.flat_fields();
    if (fields.size() != 1 || fields[0].kind != FieldKind::Categorical) {
      throw Error(Errc::Usage, "constructed table requires one categorical target field");
    }
    FieldModel fm;
    fm.schema = fields[0];
    fm.table.fallback.assign(fields[0].levels.size(),
                             1.0 / static_cast<double>(fields[0].levels.size()));
    for (const auto& [levels, probs] : table) {
      ParentValues pv;
      for (std::size_t p = 0; p < levels.size(); ++p) {
        const auto pf = parent_schemas[p].flat_fields();
        pv.push_back(Value::level(pf.at(0).levels.at(levels[p])));
      }
      fm.table.probs[enc.config(pv)] = probs;
    }
    mech->set_fields({std::move(fm)});
    return mech;
  }

 private:
  const std::vector<double>& table_probs(const FieldModel& fm, std::int64_t cfg) const {
    auto it = fm.table.probs.find(cfg);
    return it == fm.table.probs.end() ? fm.table.fallback : it->second;
  }

  StreamId target_;
  ValueSchema schema_;
  ParentEncoder encoder_;
  std::vector<StreamId> parent_ids_;
  std::vector<FieldModel> fields_;
  Presence presence_;
  bool needs_config_ = false;
  std::size_t fit_samples_ = 0;
};

inline MechanismPtr point_mass(ValueSchema schema, Value value) {
  return std::make_shared<PointMassMechanism>(std::move(schema), std::move(value));
}

// --- fitting -----------------------------------------------------------------

// One training row: the parent observation for a correlation id and the
// output value where the stream fired for that id.
struct TrainingRow {
  ParentValues parents;
  std::optional<Value> output;
};

inline MechanismPtr fit_root(const StreamId& id, const ValueSchema& schema,
                             const std::vector<Value>& observed, const FitOptions& opt) {
  if (observed.size() < opt.min_samples) {
    throw Error(Errc::InsufficientData, "stream '" + id + "': have " +
                                            std::to_string(observed.size()) + ", need " +
                                            std::to_string(opt.min_samples));
  }
  return std::make_shared<RootMechanism>(schema, observed);
}

inline MechanismPtr fit_conditional(const StreamId& id, const ValueSchema& schema,
                                    ParentEncoder encoder, const std::vector<TrainingRow>& rows,
                                    const FitOptions& opt) {
  auto mech = std::make_shared<ConditionalMechanism>(id, schema, encoder);
  const auto& enc = mech->encoder();

  std::size_t present = 0;
  for (const auto& r : rows) present += r.output.has_value() ? 1 : 0;
  if (present < opt.min_samples) {
    throw Error(Errc::InsufficientData, "stream '" + id + "': have " + std::to_string(present) +
                                            ", need " + std::to_string(opt.min_samples));
  }
  mech->set_fit_samples(present);

  // presence model, only when absence was actually observed
  if (present < rows.size()) {
    ConditionalMechanism::Presence pres;
    pres.conditional = true;
    std::map<std::int64_t, std::pair<double, double>> counts;  // config -> (present, total)
    for (const auto& r : rows) {
      auto& c = counts[enc.config(r.parents)];
      c.second += 1.0;
      if (r.output) c.first += 1.0;
    }
    const double a = opt.table_alpha;
    for (const auto& [cfg, c] : counts) {
      pres.prob[cfg] = (c.first + a) / (c.second + 2.0 * a);
    }
    pres.fallback = (static_cast<double>(present) + a) / (static_cast<double>(rows.size()) + 2.0 * a);
    mech->set_presence(std::move(pres));
  }

  const auto fields = schema.flat_fields();
  std::vector<ConditionalMechanism::FieldModel> models;
  for (std::size_t f = 0; f < fields.size(); ++f) {
    ConditionalMechanism::FieldModel fm;
    fm.schema = fields[f];
    if (fields[f].kind == FieldKind::Numeric) {
      std::vector<std::vector<double>> x;
      std::vector<double> y;
      for (const auto& r : rows) {
        if (!r.output) continue;
        x.push_back(enc.features(r.parents));
        y.push_back(as_number(r.output->parts[f]));
      }
      auto fit = stats::ols(x, y, opt.ridge);
      fm.regression.coef = std::move(fit.coef);
      fm.regression.residuals = std::move(fit.residuals);
    } else {
      const std::size_t levels = fields[f].levels.size();
      std::map<std::int64_t, std::vector<double>> counts;
      std::vector<double> marginal(levels, 0.0);
      for (const auto& r : rows) {
        if (!r.output) continue;
        const auto idx = fields[f].level_index(as_level(r.output->parts[f]));
        auto& c = counts[enc.config(r.parents)];
        if (c.empty()) c.assign(levels, 0.0);
        c[static_cast<std::size_t>(*idx)] += 1.0;
        marginal[static_cast<std::size_t>(*idx)] += 1.0;
      }
      const double a = opt.table_alpha;
      for (auto& [cfg, c] : counts) {
        const double total = std::accumulate(c.begin(), c.end(), 0.0);
        std::vector<double> probs(levels);
        for (std::size_t l = 0; l < levels; ++l) {
          probs[l] = (c[l] + a) / (total + a * static_cast<double>(levels));
        }
        fm.table.probs[cfg] = std::move(probs);
      }
      const double total = std::accumulate(marginal.begin(), marginal.end(), 0.0);
      fm.table.fallback.resize(levels);
      for (std::size_t l = 0; l < levels; ++l) {
        fm.table.fallback[l] = (marginal[l] + a) / (total + a * static_cast<double>(levels));
      }
    }
    models.push_back(std::move(fm));
  }
  mech->set_fields(std::move(models));
  return mech;
}

}  // namespace flowscm
