#pragma once

// Synthetic judge populations with known false-positive/false-negative rates
// and self/family bias multipliers. Ground truth is exact by construction, so
// the estimators can be checked against closed-form expectations.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "spb/metrics.hpp"
#include "spb/store.hpp"

namespace spb {

struct SimJudge {
  ModelId id;
  double p_fp = 0.1;
  double p_fn = 0.1;
  double beta_self = 1.0;
  double beta_fam = 1.0;
};

struct SimFamily {
  std::string name;
  std::vector<ModelId> members;
};

struct SimScenario {
  std::vector<SimFamily> families;
  std::vector<SimJudge> judges;
  std::int64_t n_instances = 400;
  std::int64_t rubrics_per_instance = 4;
  double fail_probability = 0.5;
  // Share of reference-failed units that fool every judge at once.
  double shared_fp_rate = 0.0;
  double negative_rubric_share = 0.0;
  std::uint64_t seed = 1;

  Roster generators() const {
    Roster out;
    for (const auto& f : families)
      for (const auto& m : f.members) out.push_back(m);
    return out;
  }

  FamilyRegistry registry() const {
    FamilyRegistry reg;
    for (const auto& f : families)
      for (const auto& m : f.members) reg.add(m, f.name);
    return reg;
  }

  std::vector<ModelId> judge_ids() const {
    std::vector<ModelId> out;
    for (const auto& j : judges) out.push_back(j.id);
    return out;
  }

  void validate() const {
    auto unit = [](double x, const std::string& what, bool open_low) {
      if (!std::isfinite(x) || x < 0.0 || x >= 1.0 || (open_low && x == 0.0))
        throw ConfigError(what + " must lie in " + (open_low ? "(0, 1)" : "[0, 1)"));
    };
    if (families.empty()) throw ConfigError("scenario needs at least one family");
    if (judges.empty()) throw ConfigError("scenario needs at least one judge");
    if (n_instances < 1) throw ConfigError("n_instances must be >= 1");
    if (rubrics_per_instance < 1) throw ConfigError("rubrics_per_instance must be >= 1");
    unit(fail_probability, "fail_probability", true);
    unit(shared_fp_rate, "shared_fp_rate", false);
    if (!(negative_rubric_share >= 0.0 && negative_rubric_share <= 1.0))
      throw ConfigError("negative_rubric_share must lie in [0, 1]");

    const auto reg = registry();  // throws on a model listed in two families
    std::set<ModelId> gens;
    for (const auto& g : generators())
      if (!gens.insert(g).second) throw ConfigError("generator '" + g + "' listed twice");
    std::set<ModelId> seen;
    for (const auto& j : judges) {
      if (!seen.insert(j.id).second) throw ConfigError("judge '" + j.id + "' listed twice");
      if (!gens.count(j.id)) throw ConfigError("judge '" + j.id + "' is not a generator in any family");
      unit(j.p_fp, "p_fp of '" + j.id + "'", false);
      unit(j.p_fn, "p_fn of '" + j.id + "'", false);
      if (!(j.beta_self >= 0.0) || !(j.beta_fam >= 0.0))
        throw ConfigError("bias multipliers of '" + j.id + "' must be >= 0");
      if (j.beta_self * j.p_fp > 1.0 || j.beta_fam * j.p_fp > 1.0)
        throw ConfigError("bias multiplier times p_fp exceeds 1 for '" + j.id + "'");
    }
  }
};

// Five generators in three families, all of them also judging.
inline SimScenario default_scenario() {
  SimScenario s;
  s.families = {{"gemma", {"g-27b", "g-12b"}}, {"llama", {"l-mav", "l-scout"}}, {"qwen", {"q-235b"}}};
  s.judges = {{"g-27b", 0.1, 0.1, 1.5, 1.25},
              {"g-12b", 0.1, 0.1, 1.0, 1.0},
              {"l-mav", 0.1, 0.1, 1.0, 1.0},
              {"l-scout", 0.1, 0.1, 1.0, 1.0},
              {"q-235b", 0.1, 0.1, 1.0, 1.0}};
  s.n_instances = 400;
  s.rubrics_per_instance = 4;
  s.fail_probability = 0.5;
  s.negative_rubric_share = 0.2;
  s.seed = 20250101;
  return s;
}

inline SimScenario scenario_from_json(const json& j) {
  SimScenario s;
  try {
    if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
    s.n_instances = j.value("n_instances", s.n_instances);
    s.rubrics_per_instance = j.value("rubrics_per_instance", s.rubrics_per_instance);
    s.fail_probability = j.value("fail_probability", s.fail_probability);
    s.shared_fp_rate = j.value("shared_fp_rate", s.shared_fp_rate);
    s.negative_rubric_share = j.value("negative_rubric_share", s.negative_rubric_share);
    s.seed = j.value("seed", s.seed);
    for (const auto& f : j.at("families")) s.families.push_back({f.at("name"), f.at("members")});
    const json defaults = j.value("judge_defaults", json::object());
    for (const auto& e : j.at("judges")) {
      SimJudge sj;
      sj.id = e.at("id");
      auto pick = [&](const char* k, double fallback) { return e.value(k, defaults.value(k, fallback)); };
      sj.p_fp = pick("p_fp", sj.p_fp);
      sj.p_fn = pick("p_fn", sj.p_fn);
      sj.beta_self = pick("beta_self", sj.beta_self);
      sj.beta_fam = pick("beta_fam", sj.beta_fam);
      s.judges.push_back(sj);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad scenario: ") + e.what());
  }
  s.validate();
  return s;
}

inline json to_json(const SimScenario& s) {
  json fams = json::array(), judges = json::array();
  for (const auto& f : s.families) fams.push_back({{"name", f.name}, {"members", f.members}});
  for (const auto& j : s.judges)
    judges.push_back(
        {{"id", j.id}, {"p_fp", j.p_fp}, {"p_fn", j.p_fn}, {"beta_self", j.beta_self}, {"beta_fam", j.beta_fam}});
  return {{"seed", s.seed},
          {"n_instances", s.n_instances},
          {"rubrics_per_instance", s.rubrics_per_instance},
          {"fail_probability", s.fail_probability},
          {"shared_fp_rate", s.shared_fp_rate},
          {"negative_rubric_share", s.negative_rubric_share},
          {"families", fams},
          {"judges", judges}};
}

// ---------------------------------------------------------------------------
// Generation

namespace sim_detail {

// mt19937_64 and seed_seq are fully specified by the standard; the standard
// distributions are not, so uniforms are built directly from the raw bits.
class Stream {
 public:
  explicit Stream(std::initializer_list<std::uint64_t> key) {
    std::vector<std::uint32_t> words;
    for (auto k : key) {
      words.push_back(static_cast<std::uint32_t>(k));
      words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
};

inline constexpr const char* kVocabulary[] = {
    "response", "states",  "clearly", "the",      "answer", "mentions", "relevant", "risk",  "advice",
    "includes", "a",       "concise", "summary",  "avoids", "unsafe",   "claims",   "and",   "cites",
    "source",   "follow",  "up",      "question", "user",   "context",  "explains", "steps", "correct"};
inline constexpr const char* kAxes[] = {"accuracy", "completeness", "communication", "context_awareness"};
inline constexpr const char* kThemes[] = {"emergency", "hedging", "global_health", "expertise"};

}  // namespace sim_detail

struct SimOutput {
  Dataset dataset;
  FamilyRegistry registry;
  Roster generators;
  std::vector<ModelId> judges;
  std::vector<GeneratorOutput> outputs;
  ReferenceSet reference;
  std::vector<RubricVerdict> verdicts;

  std::vector<LogRecord> log_records() const {
    std::vector<LogRecord> out;
    out.reserve(verdicts.size());
    for (const auto& v : verdicts) out.push_back({v, {"simulated/1", "", "", "", std::nullopt}});
    return out;
  }
};

// Stream layout: metadata {seed,0,0}; ground truth of generator g {seed,0,1,g};
// judge j on generator g {seed,1,j,g}, each consumed in (instance, rubric) order.
inline SimOutput simulate(const SimScenario& scenario) {
  scenario.validate();
  SimOutput out;
  out.registry = scenario.registry();
  out.generators = scenario.generators();
  out.judges = scenario.judge_ids();
  out.reference.provenance = Provenance::external;

  const auto n_inst = static_cast<std::size_t>(scenario.n_instances);
  const auto n_rub = static_cast<std::size_t>(scenario.rubrics_per_instance);

  sim_detail::Stream meta{scenario.seed, 0, 0};
  out.dataset.reserve(n_inst);
  char buf[32];
  for (std::size_t i = 0; i < n_inst; ++i) {
    BenchmarkInstance inst;
    std::snprintf(buf, sizeof buf, "sim-%06zu", i);
    inst.instance_id = buf;
    inst.conversation.push_back({Role::user, "Synthetic prompt " + std::to_string(i) + "."});
    for (std::size_t r = 0; r < n_rub; ++r) {
      Rubric rub;
      std::snprintf(buf, sizeof buf, "r%zu", r);
      rub.rubric_id = buf;
      const auto len = meta.between(3, 40);
      for (std::int64_t w = 0; w < len; ++w) {
        if (w) rub.text += ' ';
        rub.text += sim_detail::kVocabulary[meta.between(0, std::size(sim_detail::kVocabulary) - 1)];
      }
      const double magnitude = static_cast<double>(meta.between(1, 10));
      rub.weight = meta.uniform() < scenario.negative_rubric_share ? -magnitude : magnitude;
      rub.axis = sim_detail::kAxes[meta.between(0, std::size(sim_detail::kAxes) - 1)];
      rub.theme = sim_detail::kThemes[meta.between(0, std::size(sim_detail::kThemes) - 1)];
      inst.rubrics.push_back(std::move(rub));
    }
    out.dataset.push_back(std::move(inst));
  }

  // Ground truth plus the shared "deceptive" flag per (generator, unit).
  const std::size_t n_units = n_inst * n_rub;
  std::vector<std::vector<signed char>> truth(out.generators.size());  // 1 met, 0 failed, -1 deceptive failure
  for (std::size_t g = 0; g < out.generators.size(); ++g) {
    sim_detail::Stream gt{scenario.seed, 0, 1, g};
    auto& t = truth[g];
    t.reserve(n_units);
    for (std::size_t u = 0; u < n_units; ++u) {
      const bool fail = gt.uniform() < scenario.fail_probability;
      const bool deceptive = gt.uniform() < scenario.shared_fp_rate;
      t.push_back(fail ? (deceptive ? -1 : 0) : 1);
    }
    const auto& gen = out.generators[g];
    for (std::size_t i = 0; i < n_inst; ++i) {
      const auto& inst = out.dataset[i];
      out.outputs.push_back({inst.instance_id, gen, "Synthetic completion by " + gen + "."});
      for (std::size_t r = 0; r < n_rub; ++r)
        out.reference.rubric_refs.emplace(UnitKey{gen, inst.instance_id, inst.rubrics[r].rubric_id},
                                          t[i * n_rub + r] == 1);
    }
  }

  out.verdicts.reserve(scenario.judges.size() * out.generators.size() * n_units);
  for (std::size_t j = 0; j < scenario.judges.size(); ++j) {
    const auto& judge = scenario.judges[j];
    const auto& fam = out.registry.family_of(judge.id);
    for (std::size_t g = 0; g < out.generators.size(); ++g) {
      const auto& gen = out.generators[g];
      const double beta = gen == judge.id                         ? judge.beta_self
                          : out.registry.family_of(gen) == fam ? judge.beta_fam
                                                                  : 1.0;
      const double p_met_failed = beta * judge.p_fp;
      sim_detail::Stream js{scenario.seed, 1, j, g};
      for (std::size_t i = 0; i < n_inst; ++i) {
        const auto& inst = out.dataset[i];
        for (std::size_t r = 0; r < n_rub; ++r) {
          const auto t = truth[g][i * n_rub + r];
          const double u = js.uniform();
          const bool met = t == 1 ? !(u < judge.p_fn) : t == -1 ? true : u < p_met_failed;
          out.verdicts.push_back({judge.id, gen, inst.instance_id, inst.rubrics[r].rubric_id, met, Paradigm::SR,
                                  std::nullopt});
        }
      }
    }
  }

  ScoreFunctionConfig cfg;
  auto s = reference_scores(out.reference, out.dataset, out.generators, cfg);
  out.reference.score_refs.insert(s.scores.begin(), s.scores.end());
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form expectations

struct RatioExpectation {
  double value = std::nan("");
  double se = std::nan("");       // delta-method SE at the expected value
  double se_null = std::nan("");  // same with every multiplier set to 1
};

struct JudgeExpectation {
  ModelId judge;
  RatioExpectation self;
  RatioExpectation family;  // undefined without family members
};

namespace sim_detail {

// P(met | reference-failed) for multiplier beta.
inline double failed_met_rate(const SimScenario& s, const SimJudge& j, double beta) {
  return s.shared_fp_rate + (1.0 - s.shared_fp_rate) * beta * j.p_fp;
}

// Var(mean of k independent binomial rates)/mean^2 for rate r over n units each.
inline double rel_var(double r, double n, std::size_t k) {
  if (r <= 0.0 || k == 0) return std::nan("");
  return (r * (1.0 - r) / n) / (static_cast<double>(k) * r * r);
}

inline RatioExpectation ratio_expectation(const SimScenario& s, const SimJudge& j, double beta, std::size_t k_num,
                                          std::size_t k_strangers) {
  RatioExpectation e;
  if (k_num == 0 || k_strangers == 0) return e;
  const double n = static_cast<double>(s.n_instances * s.rubrics_per_instance) * s.fail_probability;
  const double base = failed_met_rate(s, j, 1.0);
  if (base <= 0.0) return e;
  const double num = failed_met_rate(s, j, beta);
  e.value = num / base;
  e.se = e.value * std::sqrt(rel_var(num, n, k_num) + rel_var(base, n, k_strangers));
  e.se_null = std::sqrt(rel_var(base, n, k_num) + rel_var(base, n, k_strangers));
  return e;
}

}  // namespace sim_detail

// Expected HSPP-Rubric ratios. Without shared failures the ratio is exactly
// the multiplier since p_fp cancels.
inline std::vector<JudgeExpectation> expected_hspp(const SimScenario& scenario) {
  scenario.validate();
  const auto reg = scenario.registry();
  const auto gens = scenario.generators();
  std::vector<JudgeExpectation> out;
  for (const auto& j : scenario.judges) {
    const auto p = partition_generators(j.id, gens, reg);
    JudgeExpectation e{j.id, {}, {}};
    e.self = sim_detail::ratio_expectation(scenario, j, j.beta_self, 1, p.strangers.size());
    e.family = sim_detail::ratio_expectation(scenario, j, j.beta_fam, p.family.size(), p.strangers.size());
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recovery

struct RatioRecovery {
  std::optional<double> estimate;
  double oracle = std::nan("");
  double se = std::nan("");
  double se_null = std::nan("");
  std::optional<double> z;

  // One-sided test of ratio > 1 at 3 null standard errors.
  bool bias_detected() const { return estimate && se_null > 0 && (*estimate - 1.0) / se_null > 3.0; }
};

struct JudgeRecovery {
  ModelId judge;
  RatioRecovery self;
  RatioRecovery family;
  HsppResult rubric;
  std::optional<HsppResult> instance;  // qualitative only, no closed form
};

struct RecoveryReport {
  std::uint64_t seed = 0;
  std::vector<JudgeRecovery> judges;

  bool bias_detected() const {
    for (const auto& j : judges)
      if (j.self.bias_detected() || j.family.bias_detected()) return true;
    return false;
  }
  std::optional<double> max_abs_z() const {
    std::optional<double> m;
    for (const auto& j : judges)
      for (const auto* r : {&j.self, &j.family})
        if (r->z) m = std::max(m.value_or(0.0), std::abs(*r->z));
    return m;
  }
};

struct RecoveryOptions {
  bool instance_level = true;
};

inline RecoveryReport recovery_from_output(const SimScenario& scenario, const SimOutput& sim,
                                           const RecoveryOptions& opts = {}) {
  RecoveryReport rep;
  rep.seed = scenario.seed;
  const auto expectations = expected_hspp(scenario);

  std::optional<PairOutcomes> ref_outcomes;
  const ScoreFunctionConfig cfg;
  if (opts.instance_level)
    ref_outcomes = outcomes_from_scores(reference_scores(sim.reference, sim.dataset, sim.generators, cfg),
                                        sim.generators, sim.dataset);

  for (std::size_t ji = 0; ji < scenario.judges.size(); ++ji) {
    const auto& id = scenario.judges[ji].id;
    const auto partition = partition_generators(id, sim.generators, sim.registry);
    const auto idx = index_verdicts(sim.verdicts, id, Paradigm::SR);
    JudgeRecovery jr;
    jr.judge = id;
    jr.rubric = hspp(rubric_overestimation_table(idx, sim.reference), partition);

    auto fill = [](RatioRecovery& r, const std::optional<Rational>& est, const RatioExpectation& e) {
      r.estimate = as_double(est);
      r.oracle = e.value;
      r.se = e.se;
      r.se_null = e.se_null;
      if (r.estimate && e.se > 0) r.z = (*r.estimate - e.value) / e.se;
    };
    fill(jr.self, jr.rubric.self_ratio, expectations[ji].self);
    fill(jr.family, jr.rubric.family_ratio, expectations[ji].family);

    if (ref_outcomes) {
      const auto judged = outcomes_from_scores(scores_from_index(idx, sim.dataset, sim.generators, cfg),
                                               sim.generators, sim.dataset);
      RateTable t;
      for (const auto& g : sim.generators)
        t[g] = overestimation_instance(g, judged, *ref_outcomes, sim.generators, sim.dataset);
      jr.instance = hspp(t, partition);
    }
    rep.judges.push_back(std::move(jr));
  }
  return rep;
}

inline RecoveryReport recovery_experiment(const SimScenario& scenario, const RecoveryOptions& opts = {}) {
  const auto sim = simulate(scenario);
  return recovery_from_output(scenario, sim, opts);
}

}  // namespace spb
