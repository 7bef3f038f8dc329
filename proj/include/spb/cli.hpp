#pragma once

// Command implementations behind the `spb` tool. Each command reads one run
// config (JSON), applies command-line overrides and writes reports under the
// output directory.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spb/chat_client.hpp"
#include "spb/ensemble.hpp"
#include "spb/hashing.hpp"
#include "spb/metrics.hpp"
#include "spb/parsers.hpp"
#include "spb/report.hpp"
#include "spb/runner.hpp"
#include "spb/simulator.hpp"
#include "spb/store.hpp"
#include "spb/verifier.hpp"

namespace spb::cli {

namespace fs = std::filesystem;

struct GlobalFlags {
  std::optional<fs::path> config;
  std::optional<fs::path> out;
  bool deterministic = false;
  bool dry_run = false;
  std::optional<std::uint64_t> seed;
};

struct RunConfig {
  fs::path base_dir;
  json effective;
  std::string hash;

  std::optional<fs::path> dataset, outputs, registry, reference;
  std::vector<fs::path> logs;
  std::vector<ModelId> judges;
  Roster generators;
  ScoreFunctionConfig score;
  std::vector<ParadigmPlan> plans;
  std::optional<EndpointConfig> endpoint;
  std::optional<CommitteeSpec> committee;
  bool committee_as_reference = false;
  std::vector<double> thresholds{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<SliceDimension> slices{SliceDimension::polarity, SliceDimension::length_bucket, SliceDimension::axis,
                                     SliceDimension::theme, SliceDimension::weighting_mode};
  Paradigm analysis_paradigm = Paradigm::SR;
  fs::path out;
  std::optional<json> scenario;
  std::uint64_t seed = 0;
  bool deterministic = false;
  bool dry_run = false;
};

inline std::atomic<bool>& stop_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

namespace detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{"dataset",    "outputs",  "registry",   "reference",         "logs",
                                          "judges",     "generators", "score_mode", "plans",           "endpoint",
                                          "committee",  "thresholds", "slices",     "analysis_paradigm", "out",
                                          "scenario",   "seed",     "description"};
  return keys;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline ParadigmPlan plan_from_json(const json& j, const RunConfig& cfg) {
  ParadigmPlan p;
  try {
    p.paradigm = parse_paradigm(j.at("paradigm").get<std::string>());
  } catch (const json::exception&) {
    throw ConfigError("plan lacks a 'paradigm'");
  }
  const auto style = get_or<std::string>(j, "style", "objective");
  if (style == "objective")
    p.style = TemplateStyle::objective;
  else if (style == "health")
    p.style = TemplateStyle::health;
  else
    throw ConfigError("unknown template style '" + style + "'");
  p.judges = get_or<std::vector<ModelId>>(j, "judges", cfg.judges);
  p.generators = get_or<Roster>(j, "generators", cfg.generators);
  p.concurrency = get_or<int>(j, "concurrency", p.concurrency);
  p.sampling.temperature = get_or<double>(j, "temperature", p.sampling.temperature);
  p.sampling.max_tokens = get_or<int>(j, "max_tokens", p.sampling.max_tokens);
  p.retry.max_attempts = get_or<int>(j, "max_attempts", p.retry.max_attempts);
  p.retry.base_delay_seconds = get_or<double>(j, "base_delay_seconds", p.retry.base_delay_seconds);
  p.retry.max_delay_seconds = get_or<double>(j, "max_delay_seconds", p.retry.max_delay_seconds);
  return p;
}

}  // namespace detail

inline RunConfig load_config(const GlobalFlags& flags) {
  RunConfig cfg;
  json raw = json::object();
  if (flags.config) {
    std::ifstream in(*flags.config, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + flags.config->string());
    raw = json::parse(in, nullptr, false);
    if (raw.is_discarded() || !raw.is_object()) throw ConfigError("config is not a JSON object: " + flags.config->string());
    cfg.base_dir = fs::absolute(*flags.config).parent_path();
  } else {
    cfg.base_dir = fs::current_path();
  }
  for (const auto& [k, v] : raw.items())
    if (!detail::known_keys().count(k)) throw ConfigError("unknown config field '" + k + "'");

  auto path_of = [&](const char* key) -> std::optional<fs::path> {
    auto s = detail::get_or<std::string>(raw, key, "");
    if (s.empty()) return std::nullopt;
    fs::path p(s);
    return p.is_absolute() ? p : cfg.base_dir / p;
  };
  cfg.dataset = path_of("dataset");
  cfg.outputs = path_of("outputs");
  cfg.registry = path_of("registry");
  cfg.reference = path_of("reference");
  if (auto it = raw.find("logs"); it != raw.end()) {
    const auto list = it->is_string() ? std::vector<std::string>{it->get<std::string>()}
                                      : detail::get_or<std::vector<std::string>>(raw, "logs", {});
    for (const auto& s : list) cfg.logs.push_back(fs::path(s).is_absolute() ? fs::path(s) : cfg.base_dir / s);
  }
  cfg.judges = detail::get_or<std::vector<ModelId>>(raw, "judges", {});
  cfg.generators = detail::get_or<Roster>(raw, "generators", {});
  cfg.score.mode = parse_score_mode(detail::get_or<std::string>(raw, "score_mode", "unweighted_fraction"));
  cfg.analysis_paradigm = parse_paradigm(detail::get_or<std::string>(raw, "analysis_paradigm", "SR"));
  if (cfg.analysis_paradigm != Paradigm::SR && cfg.analysis_paradigm != Paradigm::AR)
    throw ConfigError("analysis_paradigm must be SR or AR");
  cfg.thresholds = detail::get_or<std::vector<double>>(raw, "thresholds", cfg.thresholds);
  if (auto it = raw.find("slices"); it != raw.end()) {
    cfg.slices.clear();
    for (const auto& s : detail::get_or<std::vector<std::string>>(raw, "slices", {}))
      cfg.slices.push_back(parse_slice_dimension(s));
  }
  if (auto it = raw.find("committee"); it != raw.end()) {
    CommitteeSpec c;
    c.members = detail::get_or<std::vector<ModelId>>(*it, "members", {});
    c.validate();
    cfg.committee = c;
    cfg.committee_as_reference = detail::get_or<bool>(*it, "as_reference", false);
  }
  if (auto it = raw.find("endpoint"); it != raw.end()) {
    EndpointConfig e;
    e.base_url = detail::get_or<std::string>(*it, "base_url", "");
    e.models = detail::get_or<std::map<ModelId, std::string>>(*it, "models", {});
    e.auth_env = detail::get_or<std::string>(*it, "auth_env", "");
    e.timeout_seconds = detail::get_or<double>(*it, "timeout_seconds", e.timeout_seconds);
    cfg.endpoint = e;
  }
  if (auto it = raw.find("scenario"); it != raw.end()) cfg.scenario = *it;
  cfg.seed = detail::get_or<std::uint64_t>(raw, "seed", 0);

  // Command-line overrides are folded into the effective config before hashing.
  if (flags.out) raw["out"] = fs::absolute(*flags.out).string();
  if (flags.seed) {
    raw["seed"] = *flags.seed;
    cfg.seed = *flags.seed;
    if (cfg.scenario) (*cfg.scenario)["seed"] = *flags.seed;
  }
  const auto out = detail::get_or<std::string>(raw, "out", "spb-out");
  cfg.out = (fs::path(out).is_absolute() ? fs::path(out) : cfg.base_dir / out).lexically_normal();
  if (auto it = raw.find("plans"); it != raw.end()) {
    if (!it->is_array()) throw ConfigError("'plans' must be a list");
    for (const auto& p : *it) cfg.plans.push_back(detail::plan_from_json(p, cfg));
  }
  cfg.deterministic = flags.deterministic;
  cfg.dry_run = flags.dry_run;
  cfg.effective = raw;
  cfg.hash = sha256_hex(raw.dump());
  return cfg;
}

// ---------------------------------------------------------------------------
// Shared loading

inline const fs::path& require_path(const std::optional<fs::path>& p, const char* what) {
  if (!p) throw ConfigError(std::string("config does not name a ") + what + " file");
  if (!fs::exists(*p)) throw IoError(std::string(what) + " file not found: " + p->string());
  return *p;
}

inline ReportContext make_context(const RunConfig& cfg, const std::string& command,
                                  const std::vector<std::pair<std::string, fs::path>>& inputs) {
  ReportContext ctx;
  ctx.command = command;
  ctx.config_hash = cfg.hash;
  for (const auto& [label, path] : inputs) ctx.inputs.emplace_back(label, sha256_file(path));
  if (!cfg.deterministic) ctx.generated_at = utc_timestamp();
  return ctx;
}

struct Inputs {
  Dataset dataset;
  FamilyRegistry registry;
  Roster generators;
  std::vector<ModelId> judges;
  VerdictLog log;
  ReferenceSet reference;
  std::int64_t committee_excluded = 0;
  std::vector<std::pair<std::string, fs::path>> files;
};

inline Roster roster_from_reference(const ReferenceSet& ref) {
  std::set<ModelId> s;
  for (const auto& [k, v] : ref.rubric_refs) s.insert(k.generator);
  for (const auto& [k, v] : ref.score_refs) s.insert(k.generator);
  return {s.begin(), s.end()};
}

inline std::vector<ModelId> judges_from_log(const VerdictLog& log) {
  std::set<ModelId> s;
  for (const auto& r : log.records())
    std::visit([&](const auto& p) { s.insert(p.judge); }, r.payload);
  return {s.begin(), s.end()};
}

inline Inputs load_analysis_inputs(const RunConfig& cfg) {
  Inputs in;
  in.dataset = load_dataset(require_path(cfg.dataset, "dataset"));
  in.files.emplace_back("dataset", *cfg.dataset);
  in.registry = load_registry(require_path(cfg.registry, "registry"));
  in.files.emplace_back("registry", *cfg.registry);
  if (cfg.logs.empty()) throw ConfigError("config does not name any verdict logs");
  for (const auto& p : cfg.logs) {
    if (!fs::exists(p)) throw IoError("verdict log not found: " + p.string());
    const auto part = read_verdicts(p);
    in.log.append(std::span<const LogRecord>(part.records()));
    in.files.emplace_back("log " + p.filename().string(), p);
  }
  in.judges = cfg.judges.empty() ? judges_from_log(in.log) : cfg.judges;

  if (!cfg.generators.empty()) {
    in.generators = cfg.generators;
  } else if (cfg.outputs && fs::exists(*cfg.outputs)) {
    const auto outputs = load_outputs(*cfg.outputs, &in.dataset);
    in.generators = generators_of(outputs);
  }

  if (cfg.committee && cfg.committee_as_reference) {
    if (in.generators.empty()) throw ConfigError("committee reference needs a generator roster (generators or outputs)");
    const auto verdicts = in.log.rubric_verdicts();
    auto cr = committee_reference(verdicts, *cfg.committee, in.dataset, in.generators, cfg.score);
    in.reference = std::move(cr.reference);
    in.committee_excluded = cr.excluded_units;
    for (const auto& [m, n] : cr.missing)
      if (n) warn("committee member " + m + " is missing " + std::to_string(n) + " units");
  } else {
    in.reference = load_reference(require_path(cfg.reference, "reference"));
    in.files.emplace_back("reference", *cfg.reference);
  }
  if (in.generators.empty()) in.generators = roster_from_reference(in.reference);
  for (const auto& g : in.generators)
    if (!in.registry.contains(g)) throw RegistryError("generator '" + g + "' is not in the family registry");
  validate_log(in.log, in.dataset, judges_from_log(in.log), in.generators);
  return in;
}

// Judges that are not generators, or unknown to the registry, get an empty
// partition: every HSPP cell is then undefined.
inline GeneratorPartition partition_or_empty(const ModelId& judge, const Roster& generators,
                                             const FamilyRegistry& registry) {
  if (!registry.contains(judge) || std::find(generators.begin(), generators.end(), judge) == generators.end())
    return {judge, {}, {}, {}};
  return partition_generators(judge, generators, registry);
}

inline std::string relation(const GeneratorPartition& p, const ModelId& g) {
  if (p.self.count(g)) return "self";
  if (p.family.count(g)) return "family";
  if (p.strangers.count(g)) return "stranger";
  return "none";
}

// Two-proportion z statistic of `a` against `b`; undefined when either side is empty.
inline std::optional<double> proportion_z(const RateCell& a, const RateCell& b) {
  if (!a.defined() || !b.defined()) return std::nullopt;
  const double n1 = static_cast<double>(a.denominator), n2 = static_cast<double>(b.denominator);
  const double p = static_cast<double>(a.numerator + b.numerator) / (n1 + n2);
  const double se = std::sqrt(p * (1 - p) * (1 / n1 + 1 / n2));
  if (!(se > 0)) return std::nullopt;
  return (a.value() - b.value()) / se;
}

inline RateCell pooled(const RateTable& t, const std::set<ModelId>& members) {
  RateCell c;
  for (const auto& m : members)
    if (auto it = t.find(m); it != t.end()) c += it->second;
  return c;
}

inline constexpr double kFlagZ = 3.0;

// ---------------------------------------------------------------------------
// judge

inline int cmd_judge(const RunConfig& cfg, std::ostream& out) {
  const auto dataset = load_dataset(require_path(cfg.dataset, "dataset"));
  const auto outputs = load_outputs(require_path(cfg.outputs, "outputs"), &dataset);
  if (cfg.plans.empty()) throw ConfigError("config has no judging plans");
  const auto out_idx = index_outputs(outputs);
  // Plans without an explicit roster judge every generator with outputs.
  auto plans = cfg.plans;
  for (auto& p : plans)
    if (p.generators.empty()) p.generators = generators_of(outputs);

  if (cfg.dry_run) {
    std::size_t n = 0;
    for (const auto& plan : plans) {
      const auto planned = plan_units(plan, dataset, out_idx);
      for (const auto& u : planned.units) {
        write_text(cfg.out / "prompts" / prompt_file_name(u, dataset), render_unit(u, dataset, out_idx, plan.style));
        ++n;
      }
    }
    out << "dry run: wrote " << n << " prompts under " << (cfg.out / "prompts").string() << "\n";
    return 0;
  }

  if (!cfg.endpoint) throw ConfigError("config has no endpoint");
  const fs::path log_path = cfg.logs.empty() ? cfg.out / "verdicts.jsonl" : cfg.logs.front();
  VerdictStore store(log_path);
  HttpChatClient client(*cfg.endpoint);
  RunOptions opts;
  opts.deterministic = cfg.deterministic;
  opts.stop = &stop_flag();
  opts.jitter_seed = cfg.seed;
  std::size_t failed = 0;
  for (const auto& plan : plans) {
    const auto s = run_judging(plan, dataset, outputs, *cfg.endpoint, client, store, opts);
    out << to_string(plan.paradigm) << ": planned: " << s.planned << " done: " << s.done << " failed: " << s.failed
        << " skipped: " << s.skipped;
    if (s.not_started) out << " not started: " << s.not_started;
    out << "\n";
    failed += s.failed;
    if (stop_flag()) break;
  }
  if (failed) warn(std::to_string(failed) + " units failed; rerun to retry them");
  out << "log: " << log_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// verify

inline int cmd_verify(const RunConfig& cfg, std::ostream& out) {
  const auto dataset = load_dataset(require_path(cfg.dataset, "dataset"));
  const auto outputs = load_outputs(require_path(cfg.outputs, "outputs"), &dataset);
  const auto ref = build_reference_from_verifiers(dataset, outputs);
  const fs::path ref_path = cfg.reference.value_or(cfg.out / "reference.jsonl");
  save_reference(ref_path, ref);

  ReportTable per_rubric{"verify_rubrics", "Per-rubric pass counts",
                         {"instance_id", "rubric_id", "verifier", "passed", "total"}, {}};
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> by_kind;
  for (const auto& inst : dataset)
    for (const auto& r : inst.rubrics) {
      std::int64_t passed = 0, total = 0;
      for (const auto& [k, met] : ref.rubric_refs)
        if (k.instance_id == inst.instance_id && k.rubric_id == r.rubric_id) {
          ++total;
          passed += met;
        }
      const std::string kind(to_string(r.verifier->kind));
      per_rubric.add({inst.instance_id, r.rubric_id, kind, passed, total});
      by_kind[kind].first += passed;
      by_kind[kind].second += total;
    }
  ReportTable kinds{"verify_kinds", "Pass counts by verifier kind", {"verifier", "passed", "total"}, {}};
  for (const auto& [k, c] : by_kind) kinds.add({k, c.first, c.second});

  const auto ctx = make_context(cfg, "verify", {{"dataset", *cfg.dataset}, {"outputs", *cfg.outputs}});
  write_report(cfg.out / "verify", "verify", "Verifier reference", {kinds, per_rubric}, ctx);
  out << "reference: " << ref_path.string() << " (" << ref.rubric_refs.size() << " rubric verdicts, "
      << ref.score_refs.size() << " instance scores)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsTables {
  ReportTable rubric{"rubric_level",
                     "Rubric-level metrics per judge",
                     {"judge", "paradigm", "mra_correct", "mra_total", "mra", "excluded", "self_rate", "family_mean",
                      "stranger_mean", "family_defined", "stranger_defined", "hspp_r_self", "hspp_r_family",
                      "self_z", "family_z", "flag"},
                     {}};
  ReportTable instance{"instance_level",
                       "Instance-level metrics per judge",
                       {"judge", "paradigm", "mipa_concordant", "mipa_total", "mipa", "excluded", "self_rate",
                        "family_mean", "stranger_mean", "family_defined", "stranger_defined", "hspp_i_self",
                        "hspp_i_family"},
                       {}};
  ReportTable overestimation{"overestimation",
                             "Overestimation counts per judge and generator",
                             {"judge", "level", "paradigm", "generator", "relation", "overestimated",
                              "reference_failed", "excluded", "rate"},
                             {}};
  ReportTable subtypes{"subtypes",
                       "Overestimation subtypes (loss-to-win / loss-to-tie)",
                       {"judge", "paradigm", "self_l2w", "self_l2t", "self_l2w_pct", "self_l2t_pct", "other_l2w",
                        "other_l2t", "other_l2w_pct", "other_l2t_pct"},
                       {}};
};

inline void add_instance_rows(MetricsTables& t, const ModelId& judge, Paradigm p, const InstanceLevelMetrics& m,
                              const GeneratorPartition& part, const Roster& generators) {
  const std::string pn(to_string(p));
  t.instance.add({judge, pn, m.mipa.numerator, m.mipa.denominator, opt_value(m.mipa.rate()), m.mipa.excluded,
                  opt_value(m.hspp.self_rate), opt_value(m.hspp.family_mean), opt_value(m.hspp.stranger_mean),
                  count_value(m.hspp.family_defined), count_value(m.hspp.stranger_defined),
                  opt_value(m.hspp.self_ratio), opt_value(m.hspp.family_ratio)});
  for (const auto& g : generators) {
    const auto& c = m.overestimation.at(g);
    t.overestimation.add(
        {judge, "instance", pn, g, relation(part, g), c.numerator, c.denominator, c.excluded, opt_value(c.rate())});
  }
  SubtypeCounts self, other;
  for (const auto& [g, s] : m.subtypes) (part.self.count(g) ? self : other) += s;
  auto pct = [](const std::optional<Rational>& r) -> ReportValue {
    if (!r) return std::monostate{};
    return to_double(*r) * 100.0;
  };
  t.subtypes.add({judge, pn, self.loss_to_win, self.loss_to_tie, pct(self.win_share()), pct(self.tie_share()),
                  other.loss_to_win, other.loss_to_tie, pct(other.win_share()), pct(other.tie_share())});
}

inline MetricsTables compute_metrics(const RunConfig& cfg, const Inputs& in) {
  MetricsTables t;
  const auto verdicts = in.log.rubric_verdicts();
  const auto da = in.log.da_scores();
  const auto runs = in.log.pairwise_runs();
  const auto ref_scores = reference_scores(in.reference, in.dataset, in.generators, cfg.score);
  const auto ref_outcomes = outcomes_from_scores(ref_scores, in.generators, in.dataset);
  const auto resolved = resolve_runs(runs);
  if (resolved.incomplete) warn(std::to_string(resolved.incomplete) + " pairwise comparisons lack one presentation order");

  auto has_rubric = [&](const ModelId& j, Paradigm p) {
    return std::any_of(verdicts.begin(), verdicts.end(), [&](const auto& v) { return v.judge == j && v.paradigm == p; });
  };

  for (const auto& judge : in.judges) {
    const auto part = partition_or_empty(judge, in.generators, in.registry);
    for (Paradigm p : {Paradigm::SR, Paradigm::AR}) {
      if (!has_rubric(judge, p)) continue;
      const std::string pn(to_string(p));
      const auto idx = index_verdicts(verdicts, judge, p);
      const auto rm = rubric_level_metrics(idx, in.reference, part);
      const auto self_z = proportion_z(pooled(rm.overestimation, part.self), pooled(rm.overestimation, part.strangers));
      const auto fam_z = proportion_z(pooled(rm.overestimation, part.family), pooled(rm.overestimation, part.strangers));
      std::string flag;
      if (self_z && *self_z > kFlagZ) flag = "self-preference";
      if (fam_z && *fam_z > kFlagZ) flag += flag.empty() ? "family-preference" : "+family-preference";
      t.rubric.add({judge, pn, rm.mra.numerator, rm.mra.denominator, opt_value(rm.mra.rate()), rm.mra.excluded,
                    opt_value(rm.hspp.self_rate), opt_value(rm.hspp.family_mean), opt_value(rm.hspp.stranger_mean),
                    count_value(rm.hspp.family_defined), count_value(rm.hspp.stranger_defined),
                    opt_value(rm.hspp.self_ratio), opt_value(rm.hspp.family_ratio), opt_value(self_z),
                    opt_value(fam_z), flag});
      for (const auto& g : in.generators) {
        RateCell c;
        if (auto it = rm.overestimation.find(g); it != rm.overestimation.end()) c = it->second;
        t.overestimation.add(
            {judge, "rubric", pn, g, relation(part, g), c.numerator, c.denominator, c.excluded, opt_value(c.rate())});
      }
      const auto scores = scores_from_index(idx, in.dataset, in.generators, cfg.score);
      const auto outcomes = outcomes_from_scores(scores, in.generators, in.dataset);
      add_instance_rows(t, judge, p, instance_level_metrics(outcomes, ref_outcomes, in.generators, in.dataset, part),
                        part, in.generators);
    }
    if (std::any_of(da.begin(), da.end(), [&](const auto& s) { return s.judge == judge; })) {
      const auto outcomes = outcomes_from_scores(score_table_from(da, judge), in.generators, in.dataset);
      add_instance_rows(t, judge, Paradigm::DA,
                        instance_level_metrics(outcomes, ref_outcomes, in.generators, in.dataset, part), part,
                        in.generators);
    }
    if (std::any_of(resolved.comparisons.begin(), resolved.comparisons.end(),
                    [&](const auto& c) { return c.judge == judge; })) {
      const auto outcomes = outcomes_from_resolved(resolved.comparisons, judge);
      add_instance_rows(t, judge, Paradigm::PWC,
                        instance_level_metrics(outcomes, ref_outcomes, in.generators, in.dataset, part), part,
                        in.generators);
    }
  }
  return t;
}

inline int cmd_metrics(const RunConfig& cfg, std::ostream& out) {
  const auto in = load_analysis_inputs(cfg);
  const auto t = compute_metrics(cfg, in);
  const auto ctx = make_context(cfg, "metrics", in.files);
  write_report(cfg.out / "metrics", "metrics", "Judge metrics", {t.rubric, t.instance, t.overestimation, t.subtypes},
               ctx);
  std::size_t flagged = 0;
  for (const auto& row : t.rubric.rows)
    if (!std::get<std::string>(row.back()).empty()) ++flagged;
  if (in.log.failed_count()) out << "excluded failed records: " << in.log.failed_count() << "\n";
  out << "metrics: " << in.judges.size() << " judges, " << in.generators.size() << " generators, flagged: " << flagged
      << "\nreports: " << (cfg.out / "metrics").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeTables {
  std::vector<ReportTable> tables;
};

inline std::vector<ReportTable> compute_analysis(const RunConfig& cfg, const Inputs& in) {
  if (in.judges.size() < 2) throw ConfigError("analyze needs verdicts from at least two judges");
  const auto all = in.log.rubric_verdicts();
  std::vector<RubricVerdict> verdicts;
  for (const auto& v : all)
    if (v.paradigm == cfg.analysis_paradigm) verdicts.push_back(v);
  std::vector<ReportTable> tables;

  if (cfg.committee) {
    ReportTable t{"committee",
                  "Individual vs committee-aggregated metrics",
                  {"member", "mra_individual", "mra_committee", "hspp_r_self_individual", "hspp_r_self_committee",
                   "hspp_r_family_individual", "hspp_r_family_committee", "mipa_individual", "mipa_committee",
                   "hspp_i_self_individual", "hspp_i_self_committee"},
                  {}};
    for (const auto& m : cfg.committee->members)
      if (std::find(in.generators.begin(), in.generators.end(), m) == in.generators.end())
        throw ConfigError("committee member '" + m + "' is not in the generator roster");
    const auto rows = committee_member_metrics(verdicts, *cfg.committee, in.reference, in.registry, in.generators,
                                               in.dataset, cfg.score);
    for (const auto& c : rows)
      t.add({c.member, opt_value(c.individual_rubric.mra.rate()), opt_value(c.committee_rubric.mra.rate()),
             opt_value(c.individual_rubric.hspp.self_ratio), opt_value(c.committee_rubric.hspp.self_ratio),
             opt_value(c.individual_rubric.hspp.family_ratio), opt_value(c.committee_rubric.hspp.family_ratio),
             opt_value(c.individual_instance.mipa.rate()), opt_value(c.committee_instance.mipa.rate()),
             opt_value(c.individual_instance.hspp.self_ratio), opt_value(c.committee_instance.hspp.self_ratio)});
    tables.push_back(std::move(t));
  }

  std::vector<ModelId> sweep_judges;
  for (const auto& j : in.judges)
    if (std::find(in.generators.begin(), in.generators.end(), j) != in.generators.end()) sweep_judges.push_back(j);
  if (sweep_judges.size() >= 2) {
    const auto points = agreement_sweep(verdicts, sweep_judges, cfg.thresholds, in.reference, in.registry,
                                        in.generators, in.dataset, cfg.score);
    ReportTable curve{"sweep",
                      "Agreement threshold sweep (mean over judges)",
                      {"threshold", "kept_units", "defined_units", "mean_hspp_r_self", "mean_hspp_r_family",
                       "mean_hspp_i_self", "mean_hspp_i_family"},
                      {}};
    ReportTable per_judge{"sweep_judges",
                          "Agreement threshold sweep per judge",
                          {"threshold", "judge", "hspp_r_self", "hspp_r_family", "hspp_i_self", "hspp_i_family"},
                          {}};
    for (const auto& p : points) {
      curve.add({p.threshold, p.kept_units, p.defined_units, opt_value(p.mean_self_rubric),
                 opt_value(p.mean_family_rubric), opt_value(p.mean_self_instance), opt_value(p.mean_family_instance)});
      if (p.kept_units == 0) warn("threshold " + format_full(p.threshold) + " keeps no units");
      for (const auto& j : p.judges)
        per_judge.add({p.threshold, j.judge, opt_value(j.rubric.self_ratio), opt_value(j.rubric.family_ratio),
                       opt_value(j.instance.self_ratio), opt_value(j.instance.family_ratio)});
    }
    tables.push_back(std::move(curve));
    tables.push_back(std::move(per_judge));
  } else {
    warn("agreement sweep skipped: fewer than two judges are also generators");
  }

  {
    SystemScores system;
    for (const auto& j : in.judges) {
      const auto idx = index_verdicts(verdicts, j, cfg.analysis_paradigm);
      for (const auto& [g, s] : system_scores(scores_from_index(idx, in.dataset, in.generators, cfg.score), in.generators))
        system[{j, g}] = s;
    }
    const auto ref = system_scores(reference_scores(in.reference, in.dataset, in.generators, cfg.score), in.generators);
    const auto m = centered_delta_matrix(system, ref, in.judges, in.generators);
    ReportTable t{"delta_matrix", "Centered score delta matrix (x100)", {"judge"}, {}};
    for (const auto& g : in.generators) t.columns.push_back(g);
    t.columns.push_back("mean_bias");
    for (std::size_t j = 0; j < m.judges.size(); ++j) {
      std::vector<ReportValue> row{m.judges[j]};
      for (std::size_t g = 0; g < m.generators.size(); ++g) row.push_back(m.display(j, g));
      row.push_back(m.mean_bias[j] * 100.0);
      t.add(std::move(row));
    }
    tables.push_back(std::move(t));
  }

  if (!cfg.slices.empty()) {
    ReportTable t{"slices",
                  "HSPP across data slices",
                  {"dimension", "level", "bucket", "judge", "hspp_self", "hspp_family", "self_rate", "stranger_mean"},
                  {}};
    for (auto dim : cfg.slices) {
      const auto r = slice_hspp(verdicts, in.judges, in.reference, in.registry, in.generators, in.dataset,
                                SliceSpec{dim}, cfg.analysis_paradigm);
      const std::string dn(to_string(dim));
      const std::string level = r.instance_level ? "instance" : "rubric";
      for (const auto& b : r.buckets) {
        for (const auto& c : b.judges)
          t.add({dn, level, b.bucket, c.judge, opt_value(c.hspp.self_ratio), opt_value(c.hspp.family_ratio),
                 opt_value(c.hspp.self_rate), opt_value(c.hspp.stranger_mean)});
        t.add({dn, level, b.bucket, "mean_judge", opt_value(b.mean_self), opt_value(b.mean_family), std::monostate{},
               std::monostate{}});
        t.add({dn, level, b.bucket, "max_judge", opt_value(b.max_self), opt_value(b.max_family), std::monostate{},
               std::monostate{}});
      }
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

inline int cmd_analyze(const RunConfig& cfg, std::ostream& out) {
  const auto in = load_analysis_inputs(cfg);
  const auto tables = compute_analysis(cfg, in);
  const auto ctx = make_context(cfg, "analyze", in.files);
  write_report(cfg.out / "analyze", "analyze", "Ensemble and slice analyses", tables, ctx);
  out << "analyze: " << tables.size() << " tables\nreports: " << (cfg.out / "analyze").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

inline ReportTable recovery_table(const RecoveryReport& rep) {
  ReportTable t{"recovery",
                "Simulator recovery (estimate vs oracle)",
                {"judge", "ratio", "estimate", "oracle", "se", "z", "bias_detected", "hspp_i_estimate"},
                {}};
  for (const auto& j : rep.judges)
    for (const auto& [name, r, inst] :
         {std::tuple{"self", &j.self, j.instance ? j.instance->self_ratio : std::nullopt},
          std::tuple{"family", &j.family, j.instance ? j.instance->family_ratio : std::nullopt}})
      t.add({j.judge, std::string(name), opt_value(r->estimate), opt_value(std::optional<double>(r->oracle)),
             opt_value(std::optional<double>(r->se)), opt_value(r->z), std::string(r->bias_detected() ? "yes" : "no"),
             opt_value(inst)});
  return t;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  SimScenario scenario = cfg.scenario ? scenario_from_json(*cfg.scenario) : default_scenario();
  if (!cfg.scenario && cfg.seed) scenario.seed = cfg.seed;
  scenario.validate();
  const auto sim = simulate(scenario);

  const fs::path dir = cfg.out;
  save_dataset(dir / "dataset.jsonl", sim.dataset);
  save_outputs(dir / "outputs.jsonl", sim.outputs);
  save_registry(dir / "registry.jsonl", sim.registry);
  VerdictLog log;
  log.append(std::span<const LogRecord>(sim.log_records()));
  write_verdicts(dir / "verdicts.jsonl", log);
  save_reference(dir / "reference.jsonl", sim.reference);

  json run{{"description", "simulated corpus"},
           {"dataset", "dataset.jsonl"},
           {"outputs", "outputs.jsonl"},
           {"registry", "registry.jsonl"},
           {"logs", {"verdicts.jsonl"}},
           {"reference", "reference.jsonl"},
           {"judges", sim.judges},
           {"generators", sim.generators},
           {"out", "."},
           {"scenario", to_json(scenario)}};
  auto members = sim.judges;
  if (members.size() % 2 == 0) members.pop_back();
  if (!members.empty()) run["committee"] = {{"members", members}};
  write_text(dir / "config.json", run.dump(2) + "\n");

  const auto rep = recovery_from_output(scenario, sim);
  const auto ctx = make_context(cfg, "simulate", {{"log verdicts.jsonl", dir / "verdicts.jsonl"}});
  write_report(dir / "recovery", "recovery", "Simulator recovery", {recovery_table(rep)}, ctx);
  const auto z = rep.max_abs_z();
  out << "simulated " << sim.verdicts.size() << " verdicts (" << sim.judges.size() << " judges, "
      << sim.generators.size() << " generators, seed " << scenario.seed << ")\n"
      << "max |z|: " << (z ? format_fixed4(*z) : "undef") << ", bias detected: " << (rep.bias_detected() ? "yes" : "no")
      << "\nrun config: " << (dir / "config.json").string() << "\n";
  return 0;
}

}  // namespace spb::cli
