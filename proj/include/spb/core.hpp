#pragma once

// Shared vocabulary: models, families, instances, verdicts, scores.

#include <cctype>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "spb/error.hpp"

namespace spb {

using Rational = boost::multiprecision::cpp_rational;

using ModelId = std::string;
using Roster = std::vector<ModelId>;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

// Exact non-negative fraction kept as the integer pair it was built from.
// "2/4" stays 2/4; comparisons are by cross multiplication.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  constexpr Fraction() = default;
  constexpr Fraction(std::int64_t n, std::int64_t d) : num(n), den(d) {
    if (d <= 0) throw std::invalid_argument("Fraction denominator must be positive");
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  Rational rational() const { return Rational(num, den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

  friend std::strong_ordering operator<=>(const Fraction& a, const Fraction& b) {
    const __int128 lhs = static_cast<__int128>(a.num) * b.den;
    const __int128 rhs = static_cast<__int128>(b.num) * a.den;
    return lhs <=> rhs;
  }
  friend bool operator==(const Fraction& a, const Fraction& b) { return (a <=> b) == 0; }
};

// Parses "X/Y" with non-negative integers and Y > 0.
inline std::optional<Fraction> parse_fraction(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  auto parse_int = [](std::string_view s) -> std::optional<std::int64_t> {
    if (s.empty() || s.size() > 15) return std::nullopt;
    std::int64_t v = 0;
    for (char c : s) {
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + (c - '0');
    }
    return v;
  };
  text = trim(text);
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto n = parse_int(trim(text.substr(0, slash)));
  auto d = parse_int(trim(text.substr(slash + 1)));
  if (!n || !d || *d == 0) return std::nullopt;
  return Fraction(*n, *d);
}

// Strict sign: +1, 0 or -1. Non-finite input is a domain error.
inline int sign(double a) {
  if (!std::isfinite(a)) throw std::domain_error("sign of a non-finite value");
  return (a > 0) - (a < 0);
}

inline int compare_sign(const Fraction& a, const Fraction& b) {
  const auto c = a <=> b;
  return c > 0 ? 1 : (c < 0 ? -1 : 0);
}

enum class Paradigm { SR, AR, DA, PWC };

inline std::string_view to_string(Paradigm p) {
  switch (p) {
    case Paradigm::SR: return "SR";
    case Paradigm::AR: return "AR";
    case Paradigm::DA: return "DA";
    case Paradigm::PWC: return "PWC";
  }
  return "?";
}

inline Paradigm parse_paradigm(std::string_view s) {
  if (s == "SR") return Paradigm::SR;
  if (s == "AR") return Paradigm::AR;
  if (s == "DA") return Paradigm::DA;
  if (s == "PWC") return Paradigm::PWC;
  throw SchemaError("unknown paradigm '" + std::string(s) + "'");
}

enum class Role { user, assistant };

struct Turn {
  Role role = Role::user;
  std::string content;
  bool operator==(const Turn&) const = default;
};

enum class VerifierKind {
  no_commas,
  all_lowercase,
  all_uppercase,
  min_words,
  max_words,
  must_include_keyword,
  forbidden_word,
  num_paragraphs,
  ends_with,
  starts_with,
  num_bullets,
};

struct VerifierSpec {
  VerifierKind kind = VerifierKind::no_commas;
  std::int64_t n = 0;   // min/max words, n_min for keywords, paragraph and bullet counts
  std::string text;     // keyword or phrase
  bool operator==(const VerifierSpec&) const = default;
};

struct Rubric {
  std::string rubric_id;
  std::string text;
  double weight = 1.0;
  std::optional<std::string> axis;
  std::optional<std::string> theme;
  std::optional<VerifierSpec> verifier;

  bool negative() const { return weight < 0; }
  bool operator==(const Rubric&) const = default;
};

struct BenchmarkInstance {
  std::string instance_id;
  std::vector<Turn> conversation;
  std::vector<Rubric> rubrics;

  const Rubric* find_rubric(std::string_view id) const {
    for (const auto& r : rubrics)
      if (r.rubric_id == id) return &r;
    return nullptr;
  }
  bool operator==(const BenchmarkInstance&) const = default;
};

using Dataset = std::vector<BenchmarkInstance>;

struct GeneratorOutput {
  std::string instance_id;
  ModelId generator;
  std::string completion;
  bool operator==(const GeneratorOutput&) const = default;
};

struct RubricVerdict {
  ModelId judge;
  ModelId generator;
  std::string instance_id;
  std::string rubric_id;
  bool met = false;
  Paradigm paradigm = Paradigm::SR;
  std::optional<std::string> raw_ref;
  bool operator==(const RubricVerdict&) const = default;
};

enum class ScoreSource { SR, AR, DA, verifier, committee, external };

inline std::string_view to_string(ScoreSource s) {
  switch (s) {
    case ScoreSource::SR: return "SR";
    case ScoreSource::AR: return "AR";
    case ScoreSource::DA: return "DA";
    case ScoreSource::verifier: return "verifier";
    case ScoreSource::committee: return "committee";
    case ScoreSource::external: return "external";
  }
  return "?";
}

struct InstanceScore {
  std::string judge;  // or "reference"
  ModelId generator;
  std::string instance_id;
  Fraction score;
  ScoreSource source = ScoreSource::DA;
  bool operator==(const InstanceScore&) const = default;
};

// Raw outcome of one ordered pairwise run, in presentation terms.
enum class RunOutcome { first, second, tie };

struct PairwiseRun {
  ModelId judge;
  ModelId generator_first;
  ModelId generator_second;
  std::string instance_id;
  RunOutcome outcome = RunOutcome::tie;
  bool operator==(const PairwiseRun&) const = default;
};

struct ResolvedComparison {
  ModelId judge;
  ModelId generator;
  ModelId opponent;
  std::string instance_id;
  int w = 0;
};

// ---------------------------------------------------------------------------
// Families

class FamilyRegistry {
 public:
  FamilyRegistry() = default;
  explicit FamilyRegistry(std::map<ModelId, std::string> entries) {
    for (auto& [m, f] : entries) add(m, f);
  }

  void add(const ModelId& model, const std::string& family) {
    if (model.empty()) throw RegistryError("registry entry with empty model id");
    if (family.empty()) throw RegistryError("model '" + model + "' has an empty family name");
    auto [it, inserted] = entries_.emplace(model, family);
    if (!inserted && it->second != family)
      throw RegistryError("model '" + model + "' assigned to two families");
  }

  const std::string& family_of(const ModelId& model) const {
    auto it = entries_.find(model);
    if (it == entries_.end()) throw RegistryError("model '" + model + "' not in family registry");
    return it->second;
  }

  bool contains(const ModelId& model) const { return entries_.count(model) != 0; }
  const std::map<ModelId, std::string>& entries() const { return entries_; }
  bool operator==(const FamilyRegistry&) const = default;

 private:
  std::map<ModelId, std::string> entries_;
};

struct GeneratorPartition {
  ModelId judge;
  std::set<ModelId> self;
  std::set<ModelId> family;
  std::set<ModelId> strangers;
};

inline GeneratorPartition partition_generators(const ModelId& judge, const Roster& roster,
                                               const FamilyRegistry& registry) {
  bool judge_in_roster = false;
  for (const auto& m : roster) judge_in_roster |= (m == judge);
  if (!judge_in_roster) throw RegistryError("judge '" + judge + "' is not in the generator roster");

  const auto& fam = registry.family_of(judge);
  GeneratorPartition p{judge, {judge}, {}, {}};
  for (const auto& m : roster) {
    if (m == judge) continue;
    if (registry.family_of(m) == fam)
      p.family.insert(m);
    else
      p.strangers.insert(m);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Hashable keys

inline void hash_combine(std::size_t& seed, std::size_t v) {
  seed ^= v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
}

// (generator, instance, rubric): the unit of a rubric-level verdict.
struct UnitKey {
  ModelId generator;
  std::string instance_id;
  std::string rubric_id;
  auto operator<=>(const UnitKey&) const = default;
};

// (generator, instance): the unit of an instance-level score.
struct ScoreKey {
  ModelId generator;
  std::string instance_id;
  auto operator<=>(const ScoreKey&) const = default;
};

struct UnitKeyHash {
  std::size_t operator()(const UnitKey& k) const noexcept {
    std::size_t h = std::hash<std::string>{}(k.generator);
    hash_combine(h, std::hash<std::string>{}(k.instance_id));
    hash_combine(h, std::hash<std::string>{}(k.rubric_id));
    return h;
  }
};

struct ScoreKeyHash {
  std::size_t operator()(const ScoreKey& k) const noexcept {
    std::size_t h = std::hash<std::string>{}(k.generator);
    hash_combine(h, std::hash<std::string>{}(k.instance_id));
    return h;
  }
};

}  // namespace spb
