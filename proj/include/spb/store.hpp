#pragma once

// Line-delimited JSON persistence for datasets, generator outputs, family
// registries, verdict logs and reference sets. Every record carries a
// top-level "schema" field naming its file kind and version.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "spb/core.hpp"
#include "spb/diagnostics.hpp"
#include "spb/verifier.hpp"

namespace spb {

using json = nlohmann::json;

namespace schema {
inline constexpr const char* dataset = "spb.dataset/1";
inline constexpr const char* outputs = "spb.outputs/1";
inline constexpr const char* registry = "spb.registry/1";
inline constexpr const char* verdicts = "spb.verdicts/1";
inline constexpr const char* reference = "spb.reference/1";
}  // namespace schema

namespace detail {

struct Line {
  std::size_t number;
  json value;
};

inline std::vector<Line> read_jsonl(const std::filesystem::path& path, const char* expected_schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Line> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json v;
    try {
      v = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ": malformed JSON (" + e.what() + ")", number);
    }
    if (!v.is_object()) throw ParseError(path.string() + ": record is not an object", number);
    auto it = v.find("schema");
    if (it == v.end() || !it->is_string())
      throw ParseError(path.string() + ": missing field 'schema'", number);
    if (*it != expected_schema)
      throw VersionError(path.string() + ": line " + std::to_string(number) + ": schema '" +
                         it->get<std::string>() + "' (expected '" + expected_schema + "')");
    out.push_back({number, std::move(v)});
  }
  return out;
}

template <typename T>
T field(const json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + name + "'", line);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field '") + name + "' has the wrong type", line);
  }
}

template <typename T>
std::optional<T> optional_field(const json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field '") + name + "' has the wrong type", line);
  }
}

inline void write_lines(const std::filesystem::path& path, const std::vector<json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Verifier specs

inline json to_json(const VerifierSpec& v) {
  json j{{"kind", std::string(to_string(v.kind))}};
  switch (v.kind) {
    case VerifierKind::min_words:
    case VerifierKind::max_words:
    case VerifierKind::num_paragraphs:
    case VerifierKind::num_bullets: j["n"] = v.n; break;
    case VerifierKind::must_include_keyword:
      j["keyword"] = v.text;
      j["n_min"] = v.n;
      break;
    case VerifierKind::forbidden_word: j["keyword"] = v.text; break;
    case VerifierKind::ends_with:
    case VerifierKind::starts_with: j["phrase"] = v.text; break;
    default: break;
  }
  return j;
}

inline VerifierSpec verifier_from_json(const json& j, std::size_t line = 0) {
  if (!j.is_object()) throw ParseError("verifier must be an object", line);
  VerifierSpec v;
  try {
    v.kind = parse_verifier_kind(detail::field<std::string>(j, "kind", line));
  } catch (const SchemaError& e) {
    throw ParseError(e.what(), line);
  }
  switch (v.kind) {
    case VerifierKind::min_words:
    case VerifierKind::max_words:
    case VerifierKind::num_paragraphs:
    case VerifierKind::num_bullets: v.n = detail::field<std::int64_t>(j, "n", line); break;
    case VerifierKind::must_include_keyword:
      v.text = detail::field<std::string>(j, "keyword", line);
      v.n = detail::optional_field<std::int64_t>(j, "n_min", line).value_or(1);
      break;
    case VerifierKind::forbidden_word: v.text = detail::field<std::string>(j, "keyword", line); break;
    case VerifierKind::ends_with:
    case VerifierKind::starts_with: v.text = detail::field<std::string>(j, "phrase", line); break;
    default: break;
  }
  try {
    validate(v);
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
  return v;
}

// ---------------------------------------------------------------------------
// Dataset

inline json to_json(const BenchmarkInstance& inst) {
  json conv = json::array();
  for (const auto& t : inst.conversation)
    conv.push_back({{"role", t.role == Role::user ? "user" : "assistant"}, {"content", t.content}});
  json rubrics = json::array();
  for (const auto& r : inst.rubrics) {
    json jr{{"rubric_id", r.rubric_id}, {"text", r.text}, {"weight", r.weight}};
    if (r.axis) jr["axis"] = *r.axis;
    if (r.theme) jr["theme"] = *r.theme;
    if (r.verifier) jr["verifier"] = to_json(*r.verifier);
    rubrics.push_back(std::move(jr));
  }
  return json{{"schema", schema::dataset},
              {"instance_id", inst.instance_id},
              {"conversation", std::move(conv)},
              {"rubrics", std::move(rubrics)}};
}

inline BenchmarkInstance instance_from_json(const json& j, std::size_t line) {
  using detail::field;
  BenchmarkInstance inst;
  inst.instance_id = field<std::string>(j, "instance_id", line);
  if (inst.instance_id.empty()) throw ValidationError("line " + std::to_string(line) + ": empty instance_id");

  const auto conv = field<json>(j, "conversation", line);
  if (!conv.is_array()) throw ParseError("field 'conversation' must be an array", line);
  for (const auto& t : conv) {
    const auto role = field<std::string>(t, "role", line);
    Turn turn;
    if (role == "user")
      turn.role = Role::user;
    else if (role == "assistant")
      turn.role = Role::assistant;
    else
      throw ParseError("unknown role '" + role + "'", line);
    turn.content = field<std::string>(t, "content", line);
    inst.conversation.push_back(std::move(turn));
  }
  if (inst.conversation.empty())
    throw ValidationError("line " + std::to_string(line) + ": instance " + inst.instance_id +
                          " has an empty conversation");
  if (inst.conversation.back().role != Role::user)
    throw ValidationError("line " + std::to_string(line) + ": instance " + inst.instance_id +
                          ": last conversation turn must be from the user");

  const auto rubrics = field<json>(j, "rubrics", line);
  if (!rubrics.is_array()) throw ParseError("field 'rubrics' must be an array", line);
  std::set<std::string> seen;
  for (const auto& jr : rubrics) {
    Rubric r;
    r.rubric_id = field<std::string>(jr, "rubric_id", line);
    r.text = field<std::string>(jr, "text", line);
    r.weight = detail::optional_field<double>(jr, "weight", line).value_or(1.0);
    r.axis = detail::optional_field<std::string>(jr, "axis", line);
    r.theme = detail::optional_field<std::string>(jr, "theme", line);
    if (auto it = jr.find("verifier"); it != jr.end() && !it->is_null())
      r.verifier = verifier_from_json(*it, line);
    if (r.weight == 0.0 || !std::isfinite(r.weight))
      throw ValidationError("line " + std::to_string(line) + ": rubric " + r.rubric_id +
                            " has zero or non-finite weight");
    if (!seen.insert(r.rubric_id).second)
      throw ValidationError("line " + std::to_string(line) + ": duplicate rubric id '" +
                            r.rubric_id + "' in instance " + inst.instance_id);
    inst.rubrics.push_back(std::move(r));
  }
  if (inst.rubrics.empty())
    throw ValidationError("line " + std::to_string(line) + ": instance " + inst.instance_id +
                          " has no rubrics");
  return inst;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  Dataset out;
  std::set<std::string> ids;
  for (const auto& [line, j] : detail::read_jsonl(path, schema::dataset)) {
    auto inst = instance_from_json(j, line);
    if (!ids.insert(inst.instance_id).second)
      throw ValidationError("line " + std::to_string(line) + ": duplicate instance id '" +
                            inst.instance_id + "'");
    out.push_back(std::move(inst));
  }
  if (out.empty()) warn("dataset " + path.string() + " is empty");
  return out;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::vector<json> lines;
  for (const auto& i : dataset) lines.push_back(to_json(i));
  detail::write_lines(path, lines);
}

// ---------------------------------------------------------------------------
// Generator outputs

inline Roster generators_of(std::span<const GeneratorOutput> outputs) {
  std::set<ModelId> s;
  for (const auto& o : outputs) s.insert(o.generator);
  return {s.begin(), s.end()};
}

inline std::vector<GeneratorOutput> load_outputs(const std::filesystem::path& path,
                                                 const Dataset* dataset = nullptr) {
  std::set<std::string> known;
  if (dataset)
    for (const auto& i : *dataset) known.insert(i.instance_id);
  std::vector<GeneratorOutput> out;
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& [line, j] : detail::read_jsonl(path, schema::outputs)) {
    GeneratorOutput o{detail::field<std::string>(j, "instance_id", line),
                      detail::field<std::string>(j, "generator", line),
                      detail::field<std::string>(j, "completion", line)};
    if (o.generator.empty()) throw ValidationError("line " + std::to_string(line) + ": empty generator");
    if (!keys.emplace(o.instance_id, o.generator).second)
      throw ValidationError("line " + std::to_string(line) + ": duplicate output for (" +
                            o.instance_id + ", " + o.generator + ")");
    if (dataset && !known.count(o.instance_id))
      throw CrossReferenceError("line " + std::to_string(line) + ": unknown instance '" +
                                o.instance_id + "'");
    out.push_back(std::move(o));
  }
  return out;
}

inline void save_outputs(const std::filesystem::path& path, std::span<const GeneratorOutput> outputs) {
  std::vector<json> lines;
  for (const auto& o : outputs)
    lines.push_back({{"schema", schema::outputs},
                     {"instance_id", o.instance_id},
                     {"generator", o.generator},
                     {"completion", o.completion}});
  detail::write_lines(path, lines);
}

// ---------------------------------------------------------------------------
// Family registry

inline FamilyRegistry load_registry(const std::filesystem::path& path) {
  FamilyRegistry reg;
  for (const auto& [line, j] : detail::read_jsonl(path, schema::registry)) {
    try {
      reg.add(detail::field<std::string>(j, "model", line), detail::field<std::string>(j, "family", line));
    } catch (const RegistryError& e) {
      throw RegistryError("line " + std::to_string(line) + ": " + e.what());
    }
  }
  return reg;
}

inline void save_registry(const std::filesystem::path& path, const FamilyRegistry& reg) {
  std::vector<json> lines;
  for (const auto& [m, f] : reg.entries())
    lines.push_back({{"schema", schema::registry}, {"model", m}, {"family", f}});
  detail::write_lines(path, lines);
}

// ---------------------------------------------------------------------------
// Verdict log

struct RecordMeta {
  std::string template_version;
  std::string prompt_hash;
  std::string timestamp;
  std::string raw_response;
  std::optional<std::string> error;  // set when the unit failed; payload carries the unit key only
  bool operator==(const RecordMeta&) const = default;
};

struct LogRecord {
  std::variant<RubricVerdict, InstanceScore, PairwiseRun> payload;
  RecordMeta meta;

  bool ok() const { return !meta.error; }
  bool operator==(const LogRecord&) const = default;
};

inline std::string_view outcome_name(RunOutcome o) {
  switch (o) {
    case RunOutcome::first: return "first";
    case RunOutcome::second: return "second";
    case RunOutcome::tie: return "tie";
  }
  return "?";
}

// Unique key of the judged unit behind a record.
inline std::string unit_key(const LogRecord& r) {
  constexpr char sep = '\x1f';
  return std::visit(
      [&](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RubricVerdict>)
          return std::string("rubric") + sep + std::string(to_string(p.paradigm)) + sep + p.judge + sep +
                 p.generator + sep + p.instance_id + sep + p.rubric_id;
        else if constexpr (std::is_same_v<T, InstanceScore>)
          return std::string("da") + sep + p.judge + sep + p.generator + sep + p.instance_id;
        else
          return std::string("pwc") + sep + p.judge + sep + p.generator_first + sep + p.generator_second +
                 sep + p.instance_id;
      },
      r.payload);
}

inline json to_json(const LogRecord& r) {
  json j{{"schema", schema::verdicts},
         {"template", r.meta.template_version},
         {"prompt_hash", r.meta.prompt_hash},
         {"timestamp", r.meta.timestamp},
         {"raw_response", r.meta.raw_response}};
  if (r.meta.error) j["error"] = *r.meta.error;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RubricVerdict>) {
          j["kind"] = "rubric";
          j["paradigm"] = std::string(to_string(p.paradigm));
          j["judge"] = p.judge;
          j["generator"] = p.generator;
          j["instance_id"] = p.instance_id;
          j["rubric_id"] = p.rubric_id;
          if (r.ok()) j["met"] = p.met;
          if (p.raw_ref) j["raw_ref"] = *p.raw_ref;
        } else if constexpr (std::is_same_v<T, InstanceScore>) {
          j["kind"] = "da";
          j["paradigm"] = "DA";
          j["judge"] = p.judge;
          j["generator"] = p.generator;
          j["instance_id"] = p.instance_id;
          if (r.ok()) j["score"] = p.score.str();
        } else {
          j["kind"] = "pwc";
          j["paradigm"] = "PWC";
          j["judge"] = p.judge;
          j["generator_first"] = p.generator_first;
          j["generator_second"] = p.generator_second;
          j["instance_id"] = p.instance_id;
          if (r.ok()) j["outcome"] = std::string(outcome_name(p.outcome));
        }
      },
      r.payload);
  return j;
}

inline LogRecord record_from_json(const json& j, std::size_t line) {
  using detail::field;
  using detail::optional_field;
  LogRecord r;
  r.meta.template_version = optional_field<std::string>(j, "template", line).value_or("");
  r.meta.prompt_hash = optional_field<std::string>(j, "prompt_hash", line).value_or("");
  r.meta.timestamp = optional_field<std::string>(j, "timestamp", line).value_or("");
  r.meta.raw_response = optional_field<std::string>(j, "raw_response", line).value_or("");
  r.meta.error = optional_field<std::string>(j, "error", line);
  const auto kind = field<std::string>(j, "kind", line);
  if (kind == "rubric") {
    RubricVerdict v;
    try {
      v.paradigm = parse_paradigm(field<std::string>(j, "paradigm", line));
    } catch (const SchemaError& e) {
      throw ParseError(e.what(), line);
    }
    if (v.paradigm != Paradigm::SR && v.paradigm != Paradigm::AR)
      throw ParseError("rubric verdicts must have paradigm SR or AR", line);
    v.judge = field<std::string>(j, "judge", line);
    v.generator = field<std::string>(j, "generator", line);
    v.instance_id = field<std::string>(j, "instance_id", line);
    v.rubric_id = field<std::string>(j, "rubric_id", line);
    if (r.ok()) v.met = field<bool>(j, "met", line);
    v.raw_ref = optional_field<std::string>(j, "raw_ref", line);
    r.payload = std::move(v);
  } else if (kind == "da") {
    InstanceScore s;
    s.judge = field<std::string>(j, "judge", line);
    s.generator = field<std::string>(j, "generator", line);
    s.instance_id = field<std::string>(j, "instance_id", line);
    s.source = ScoreSource::DA;
    if (r.ok()) {
      auto f = parse_fraction(field<std::string>(j, "score", line));
      if (!f || f->num > f->den) throw ParseError("malformed DA score", line);
      s.score = *f;
    }
    r.payload = std::move(s);
  } else if (kind == "pwc") {
    PairwiseRun p;
    p.judge = field<std::string>(j, "judge", line);
    p.generator_first = field<std::string>(j, "generator_first", line);
    p.generator_second = field<std::string>(j, "generator_second", line);
    p.instance_id = field<std::string>(j, "instance_id", line);
    if (p.generator_first == p.generator_second)
      throw ValidationError("line " + std::to_string(line) + ": pairwise run compares a generator with itself");
    if (r.ok()) {
      const auto o = field<std::string>(j, "outcome", line);
      if (o == "first")
        p.outcome = RunOutcome::first;
      else if (o == "second")
        p.outcome = RunOutcome::second;
      else if (o == "tie")
        p.outcome = RunOutcome::tie;
      else
        throw ParseError("unknown pairwise outcome '" + o + "'", line);
    }
    r.payload = std::move(p);
  } else {
    throw ParseError("unknown record kind '" + kind + "'", line);
  }
  return r;
}

class VerdictLog {
 public:
  const std::vector<LogRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  bool has_success(const std::string& key) const { return keys_.count(key) != 0; }

  // Failed records may repeat a key; successful records may not.
  void append(LogRecord r) {
    if (r.ok()) {
      auto key = unit_key(r);
      if (!keys_.insert(key).second)
        throw ValidationError("duplicate verdict record for unit " + printable(key));
    }
    records_.push_back(std::move(r));
  }

  void append(std::span<const LogRecord> rs) {
    for (const auto& r : rs) append(r);
  }

  std::vector<RubricVerdict> rubric_verdicts() const { return collect<RubricVerdict>(); }
  std::vector<InstanceScore> da_scores() const { return collect<InstanceScore>(); }
  std::vector<PairwiseRun> pairwise_runs() const { return collect<PairwiseRun>(); }

  std::size_t failed_count() const {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [](const auto& r) { return !r.ok(); }));
  }

  bool operator==(const VerdictLog& o) const { return records_ == o.records_; }

  static std::string printable(std::string key) {
    std::replace(key.begin(), key.end(), '\x1f', '/');
    return key;
  }

 private:
  template <typename T>
  std::vector<T> collect() const {
    std::vector<T> out;
    for (const auto& r : records_)
      if (r.ok())
        if (auto* p = std::get_if<T>(&r.payload)) out.push_back(*p);
    return out;
  }

  std::vector<LogRecord> records_;
  std::unordered_set<std::string> keys_;
};

inline VerdictLog read_verdicts(const std::filesystem::path& path) {
  VerdictLog log;
  for (const auto& [line, j] : detail::read_jsonl(path, schema::verdicts)) {
    try {
      log.append(record_from_json(j, line));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line) + ": " + e.what());
    }
  }
  return log;
}

inline void write_verdicts(const std::filesystem::path& path, const VerdictLog& log) {
  std::vector<json> lines;
  lines.reserve(log.size());
  for (const auto& r : log.records()) lines.push_back(to_json(r));
  detail::write_lines(path, lines);
}

inline VerdictLog append_verdicts(VerdictLog log, std::span<const LogRecord> records) {
  log.append(records);
  return log;
}

// Every record must resolve to a dataset instance, one of its rubrics, and
// roster models.
inline void validate_log(const VerdictLog& log, const Dataset& dataset, const Roster& judges,
                         const Roster& generators) {
  std::unordered_map<std::string, const BenchmarkInstance*> by_id;
  for (const auto& i : dataset) by_id[i.instance_id] = &i;
  const std::set<ModelId> js(judges.begin(), judges.end());
  const std::set<ModelId> gs(generators.begin(), generators.end());
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok && problems.size() < 10) problems.push_back(what);
  };
  for (const auto& r : log.records()) {
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          check(js.count(p.judge), "unknown judge '" + p.judge + "'");
          auto it = by_id.find(p.instance_id);
          check(it != by_id.end(), "unknown instance '" + p.instance_id + "'");
          if constexpr (std::is_same_v<T, PairwiseRun>) {
            check(gs.count(p.generator_first), "unknown generator '" + p.generator_first + "'");
            check(gs.count(p.generator_second), "unknown generator '" + p.generator_second + "'");
          } else {
            check(gs.count(p.generator), "unknown generator '" + p.generator + "'");
          }
          if constexpr (std::is_same_v<T, RubricVerdict>) {
            if (it != by_id.end())
              check(it->second->find_rubric(p.rubric_id) != nullptr,
                    "unknown rubric '" + p.instance_id + "/" + p.rubric_id + "'");
          }
        },
        r.payload);
  }
  if (!problems.empty()) {
    std::string msg = "verdict log does not resolve against dataset/roster:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw CrossReferenceError(msg);
  }
}

// Single-writer, append-only file-backed log. Loads any existing content so
// runs can resume.
class VerdictStore {
 public:
  explicit VerdictStore(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) log_ = read_verdicts(path_);
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw IoError("cannot open " + path_.string() + " for appending");
  }

  void append(LogRecord r) {
    std::lock_guard lock(mu_);
    const auto line = to_json(r).dump();
    log_.append(std::move(r));
    out_ << line << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_.string());
  }

  bool has_success(const std::string& key) const {
    std::lock_guard lock(mu_);
    return log_.has_success(key);
  }

  VerdictLog snapshot() const {
    std::lock_guard lock(mu_);
    return log_;
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  VerdictLog log_;
  std::ofstream out_;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Reference sets

enum class Provenance { verifier, committee, external };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::verifier: return "verifier";
    case Provenance::committee: return "committee";
    case Provenance::external: return "external";
  }
  return "?";
}

inline Provenance parse_provenance(std::string_view s) {
  if (s == "verifier") return Provenance::verifier;
  if (s == "committee") return Provenance::committee;
  if (s == "external") return Provenance::external;
  throw SchemaError("unknown provenance '" + std::string(s) + "'");
}

struct ReferenceSet {
  std::unordered_map<UnitKey, bool, UnitKeyHash> rubric_refs;  // true = met (b* = +1)
  std::unordered_map<ScoreKey, Fraction, ScoreKeyHash> score_refs;
  Provenance provenance = Provenance::external;

  bool operator==(const ReferenceSet&) const = default;
};

inline void save_reference(const std::filesystem::path& path, const ReferenceSet& ref) {
  std::vector<std::pair<UnitKey, bool>> rubric(ref.rubric_refs.begin(), ref.rubric_refs.end());
  std::sort(rubric.begin(), rubric.end());
  std::vector<std::pair<ScoreKey, Fraction>> scores(ref.score_refs.begin(), ref.score_refs.end());
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::string prov(to_string(ref.provenance));
  std::vector<json> lines;
  lines.reserve(rubric.size() + scores.size());
  for (const auto& [k, met] : rubric)
    lines.push_back({{"schema", schema::reference},
                     {"kind", "rubric_ref"},
                     {"provenance", prov},
                     {"generator", k.generator},
                     {"instance_id", k.instance_id},
                     {"rubric_id", k.rubric_id},
                     {"met", met}});
  for (const auto& [k, s] : scores)
    lines.push_back({{"schema", schema::reference},
                     {"kind", "score_ref"},
                     {"provenance", prov},
                     {"generator", k.generator},
                     {"instance_id", k.instance_id},
                     {"score", s.str()}});
  detail::write_lines(path, lines);
}

inline ReferenceSet load_reference(const std::filesystem::path& path) {
  using detail::field;
  ReferenceSet ref;
  std::optional<Provenance> prov;
  for (const auto& [line, j] : detail::read_jsonl(path, schema::reference)) {
    Provenance p;
    try {
      p = parse_provenance(field<std::string>(j, "provenance", line));
    } catch (const SchemaError& e) {
      throw ParseError(e.what(), line);
    }
    if (prov && *prov != p) throw ValidationError("line " + std::to_string(line) + ": mixed provenance");
    prov = p;
    const auto kind = field<std::string>(j, "kind", line);
    if (kind == "rubric_ref") {
      UnitKey k{field<std::string>(j, "generator", line), field<std::string>(j, "instance_id", line),
                field<std::string>(j, "rubric_id", line)};
      if (!ref.rubric_refs.emplace(std::move(k), field<bool>(j, "met", line)).second)
        throw ValidationError("line " + std::to_string(line) + ": duplicate rubric reference");
    } else if (kind == "score_ref") {
      ScoreKey k{field<std::string>(j, "generator", line), field<std::string>(j, "instance_id", line)};
      auto f = parse_fraction(field<std::string>(j, "score", line));
      if (!f || f->num > f->den) throw ParseError("score must be a fraction in [0,1]", line);
      if (!ref.score_refs.emplace(std::move(k), *f).second)
        throw ValidationError("line " + std::to_string(line) + ": duplicate score reference");
    } else {
      throw ParseError("unknown reference kind '" + kind + "'", line);
    }
  }
  ref.provenance = prov.value_or(Provenance::external);
  return ref;
}

inline ReferenceSet build_reference_from_verifiers(const Dataset& dataset,
                                                   std::span<const GeneratorOutput> outputs) {
  std::string missing;
  for (const auto& inst : dataset)
    for (const auto& r : inst.rubrics)
      if (!r.verifier) missing += (missing.empty() ? "" : ", ") + inst.instance_id + "/" + r.rubric_id;
  if (!missing.empty()) throw CoverageError("rubrics without a verifier: " + missing);

  std::unordered_map<std::string, const BenchmarkInstance*> by_id;
  for (const auto& i : dataset) by_id[i.instance_id] = &i;

  ReferenceSet ref;
  ref.provenance = Provenance::verifier;
  for (const auto& o : outputs) {
    auto it = by_id.find(o.instance_id);
    if (it == by_id.end()) throw CrossReferenceError("output for unknown instance '" + o.instance_id + "'");
    const auto& inst = *it->second;
    const auto v = verify_instance(inst, o.completion);
    for (std::size_t k = 0; k < inst.rubrics.size(); ++k)
      ref.rubric_refs[{o.generator, inst.instance_id, inst.rubrics[k].rubric_id}] = v.met[k];
    ref.score_refs[{o.generator, inst.instance_id}] = v.score;
  }
  return ref;
}

}  // namespace spb
