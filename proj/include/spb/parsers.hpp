#pragma once

// Judge response parsing. Every parser returns a typed value or throws a
// ParseError (no JSON object found) / SchemaError (object of the wrong shape).

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "spb/core.hpp"

namespace spb {

namespace detail {

inline std::optional<nlohmann::json> try_parse_object(std::string_view s) {
  auto v = nlohmann::json::parse(s.begin(), s.end(), nullptr, /*allow_exceptions=*/false);
  if (v.is_discarded() || !v.is_object()) return std::nullopt;
  return v;
}

// End index (one past the closing brace) of the balanced object starting at
// `open`, honoring JSON string escapes; npos if unbalanced.
inline std::size_t match_object(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

inline std::optional<nlohmann::json> last_bare_object(std::string_view s) {
  std::optional<nlohmann::json> last;
  std::size_t i = 0;
  while ((i = s.find('{', i)) != std::string_view::npos) {
    const auto end = match_object(s, i);
    if (end != std::string_view::npos) {
      if (auto v = try_parse_object(s.substr(i, end - i))) {
        last = std::move(v);
        i = end;
        continue;
      }
    }
    ++i;
  }
  return last;
}

}  // namespace detail

// Last well-formed JSON object in a response, preferring fenced code blocks.
inline std::optional<nlohmann::json> extract_json_object(std::string_view text) {
  std::optional<nlohmann::json> fenced;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    auto body = text.find('\n', open + 3);
    const auto close = text.find("```", open + 3);
    if (close == std::string_view::npos) break;
    // Inline fence "```{...}```" has no language line.
    if (body == std::string_view::npos || body > close) body = open + 2;
    auto inner = text.substr(body + 1, close - body - 1);
    if (auto v = detail::try_parse_object(inner))
      fenced = std::move(v);
    else if (auto b = detail::last_bare_object(inner))
      fenced = std::move(b);
    pos = close + 3;
  }
  if (fenced) return fenced;
  return detail::last_bare_object(text);
}

inline nlohmann::json require_object(std::string_view text) {
  auto obj = extract_json_object(text);
  if (!obj) throw ParseError("no JSON object in judge response");
  return *obj;
}

inline bool parse_sr_response(std::string_view text) {
  const auto obj = require_object(text);
  auto it = obj.find("criteria_met");
  if (it == obj.end()) throw SchemaError("response lacks 'criteria_met'");
  if (!it->is_boolean()) throw SchemaError("'criteria_met' is not a boolean");
  return it->get<bool>();
}

inline std::vector<bool> parse_ar_response(std::string_view text, std::size_t n_rubrics) {
  if (n_rubrics == 0) throw std::invalid_argument("parse_ar_response: n_rubrics must be >= 1");
  const auto obj = require_object(text);
  auto it = obj.find("results");
  if (it == obj.end() || !it->is_array()) throw SchemaError("response lacks a 'results' list");
  if (it->size() != n_rubrics)
    throw SchemaError("'results' has " + std::to_string(it->size()) + " entries, expected " +
                      std::to_string(n_rubrics));
  std::vector<bool> out;
  for (const auto& item : *it) {
    if (!item.is_object()) throw SchemaError("'results' entry is not an object");
    auto m = item.find("criteria_met");
    if (m == item.end() || !m->is_boolean()) throw SchemaError("'results' entry lacks boolean 'criteria_met'");
    out.push_back(m->get<bool>());
  }
  return out;
}

inline Fraction parse_da_response(std::string_view text, std::size_t n_rubrics) {
  if (n_rubrics == 0) throw std::invalid_argument("parse_da_response: n_rubrics must be >= 1");
  const auto obj = require_object(text);
  auto it = obj.find("score");
  if (it == obj.end() || !it->is_string()) throw SchemaError("response lacks string 'score'");
  const auto f = parse_fraction(it->get<std::string>());
  if (!f) throw SchemaError("'score' is not of the form X/Y");
  if (f->num > f->den) throw SchemaError("'score' numerator exceeds denominator");
  if (f->den != static_cast<std::int64_t>(n_rubrics))
    throw SchemaError("'score' denominator " + std::to_string(f->den) + " != rubric count " +
                      std::to_string(n_rubrics));
  return *f;
}

inline RunOutcome parse_pwc_response(std::string_view text) {
  const auto obj = require_object(text);
  auto it = obj.find("outcome");
  if (it == obj.end() || !it->is_string()) throw SchemaError("response lacks string 'outcome'");
  const auto s = it->get<std::string>();
  if (s == "A is better") return RunOutcome::first;
  if (s == "B is better") return RunOutcome::second;
  if (s == "tie") return RunOutcome::tie;
  throw SchemaError("unknown outcome '" + s + "'");
}

// ---------------------------------------------------------------------------
// Pairwise resolution

// One run's result seen from a canonical generator.
enum class Preference : int { opponent = -1, tie = 0, generator = 1 };

inline Preference preference_for(const PairwiseRun& run, const ModelId& generator) {
  if (run.outcome == RunOutcome::tie) return Preference::tie;
  const ModelId& winner = run.outcome == RunOutcome::first ? run.generator_first : run.generator_second;
  return winner == generator ? Preference::generator : Preference::opponent;
}

// A lone non-tie stands; disagreement or two ties give a tie.
inline int resolve_pairwise(Preference run_ab, Preference run_ba) {
  const int a = static_cast<int>(run_ab);
  const int b = static_cast<int>(run_ba);
  if (a == 0) return b;
  if (b == 0) return a;
  return a == b ? a : 0;
}

struct ResolvedRuns {
  std::vector<ResolvedComparison> comparisons;  // generator < opponent lexicographically
  std::size_t incomplete = 0;                   // pairs seen in only one presentation order
};

inline ResolvedRuns resolve_runs(std::span<const PairwiseRun> runs) {
  // (judge, lo, hi, instance) -> run with lo first, run with hi first
  std::map<std::tuple<ModelId, ModelId, ModelId, std::string>,
           std::pair<const PairwiseRun*, const PairwiseRun*>>
      groups;
  for (const auto& r : runs) {
    const bool lo_first = r.generator_first < r.generator_second;
    const auto& lo = lo_first ? r.generator_first : r.generator_second;
    const auto& hi = lo_first ? r.generator_second : r.generator_first;
    auto& slot = groups[{r.judge, lo, hi, r.instance_id}];
    (lo_first ? slot.first : slot.second) = &r;
  }
  ResolvedRuns out;
  for (const auto& [key, pair] : groups) {
    const auto& [judge, lo, hi, inst] = key;
    if (!pair.first || !pair.second) {
      ++out.incomplete;
      continue;
    }
    const int w = resolve_pairwise(preference_for(*pair.first, lo), preference_for(*pair.second, lo));
    out.comparisons.push_back({judge, lo, hi, inst, w});
  }
  return out;
}

}  // namespace spb
