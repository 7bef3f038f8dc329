#pragma once

// Overestimation rates, HSPP ratios, pairwise and rubric accuracy.
//
// Conventions shared by every metric here:
//  * b = met/unmet per (generator, instance, rubric); w = sgn of a score
//    difference in {+1, 0, -1}.
//  * A unit with no judge verdict is excluded from numerator and denominator
//    and counted in `excluded`.
//  * A zero denominator yields an undefined value, never 0 or 1.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "spb/core.hpp"
#include "spb/parsers.hpp"
#include "spb/store.hpp"

namespace spb {

class ScoringError : public DataError {
 public:
  using DataError::DataError;
};

enum class ScoreMode { unweighted_fraction, weighted_clipped };

inline std::string_view to_string(ScoreMode m) {
  return m == ScoreMode::weighted_clipped ? "weighted_clipped" : "unweighted_fraction";
}

inline ScoreMode parse_score_mode(std::string_view s) {
  if (s == "unweighted_fraction" || s == "unweighted") return ScoreMode::unweighted_fraction;
  if (s == "weighted_clipped" || s == "weighted") return ScoreMode::weighted_clipped;
  throw ConfigError("unknown score mode '" + std::string(s) + "'");
}

struct ScoreFunctionConfig {
  ScoreMode mode = ScoreMode::unweighted_fraction;
};

// numerator / denominator with exclusion accounting.
struct RateCell {
  std::int64_t numerator = 0;
  std::int64_t denominator = 0;
  std::int64_t excluded = 0;

  bool defined() const { return denominator > 0; }
  std::optional<Rational> rate() const {
    if (!defined()) return std::nullopt;
    return Rational(numerator, denominator);
  }
  double value() const {
    return defined() ? static_cast<double>(numerator) / static_cast<double>(denominator)
                     : std::numeric_limits<double>::quiet_NaN();
  }
  RateCell& operator+=(const RateCell& o) {
    numerator += o.numerator;
    denominator += o.denominator;
    excluded += o.excluded;
    return *this;
  }
  bool operator==(const RateCell&) const = default;
};

using Accuracy = RateCell;
using RateTable = std::map<ModelId, RateCell>;

// ---------------------------------------------------------------------------
// Instance scores

inline std::int64_t quantized_weight(double w) { return std::llround(w * 1e6); }

struct WeightedVerdict {
  double weight;
  bool met;
};

// Unweighted: met / total. Weighted: clamp(sum w*met / sum of positive w, 0, 1)
// with weights quantized to micro-units so the result is an exact fraction.
inline Fraction score_rubric_set(std::span<const WeightedVerdict> rubrics, const ScoreFunctionConfig& config,
                                 std::string_view instance_id = {}) {
  if (rubrics.empty()) throw ScoringError("cannot score an empty rubric set");
  if (config.mode == ScoreMode::unweighted_fraction) {
    std::int64_t count = 0;
    for (const auto& r : rubrics) count += r.met;
    return Fraction(count, static_cast<std::int64_t>(rubrics.size()));
  }
  std::int64_t earned = 0;
  std::int64_t possible = 0;
  for (const auto& r : rubrics) {
    const auto w = quantized_weight(r.weight);
    if (w > 0) possible += w;
    if (r.met) earned += w;
  }
  if (possible <= 0)
    throw ScoringError("instance " + std::string(instance_id) + " has no positive-weight rubric");
  if (earned <= 0) return Fraction(0, 1);
  if (earned >= possible) return Fraction(1, 1);
  return Fraction(earned, possible);
}

// `met` is aligned with instance.rubrics.
inline Fraction score_instance(const BenchmarkInstance& instance, const std::vector<bool>& met,
                               const ScoreFunctionConfig& config) {
  if (met.size() != instance.rubrics.size())
    throw std::invalid_argument("score_instance: verdict count does not match rubric count");
  std::vector<WeightedVerdict> set;
  for (std::size_t k = 0; k < met.size(); ++k) set.push_back({instance.rubrics[k].weight, met[k]});
  return score_rubric_set(set, config, instance.instance_id);
}

struct ScoreTable {
  std::unordered_map<ScoreKey, Fraction, ScoreKeyHash> scores;
  std::int64_t excluded = 0;        // partially covered (generator, instance) cells
  std::int64_t scoring_errors = 0;  // weighted mode without positive weights

  const Fraction* find(const ModelId& g, const std::string& x) const {
    auto it = scores.find({g, x});
    return it == scores.end() ? nullptr : &it->second;
  }
};

// Verdicts for one rubric-level unit, keyed for lookup.
using VerdictIndex = std::unordered_map<UnitKey, bool, UnitKeyHash>;

inline VerdictIndex index_verdicts(std::span<const RubricVerdict> verdicts, const ModelId& judge,
                                   std::optional<Paradigm> paradigm = std::nullopt) {
  VerdictIndex idx;
  for (const auto& v : verdicts)
    if (v.judge == judge && (!paradigm || v.paradigm == *paradigm))
      idx[{v.generator, v.instance_id, v.rubric_id}] = v.met;
  return idx;
}

// What a lookup knows about one rubric of one (generator, instance) cell.
enum class Cell { not_applicable, missing, met, unmet };

inline Cell cell_of(const std::optional<bool>& b) {
  if (!b) return Cell::missing;
  return *b ? Cell::met : Cell::unmet;
}

// Scores every (generator, instance) cell. Not-applicable rubrics are left
// out of the score; a cell with any missing rubric is excluded and counted;
// a cell with no judged rubric is absent.
template <typename Lookup>
ScoreTable score_table(const Dataset& dataset, const Roster& generators, const ScoreFunctionConfig& config,
                       Lookup&& lookup) {
  ScoreTable out;
  std::vector<WeightedVerdict> set;
  for (const auto& g : generators) {
    for (const auto& inst : dataset) {
      set.clear();
      std::size_t missing = 0;
      for (const auto& r : inst.rubrics) {
        const Cell c = lookup(g, inst, r);
        if (c == Cell::missing) ++missing;
        if (c == Cell::met || c == Cell::unmet) set.push_back({r.weight, c == Cell::met});
      }
      if (set.empty()) continue;
      if (missing > 0) {
        ++out.excluded;
        continue;
      }
      try {
        out.scores.emplace(ScoreKey{g, inst.instance_id}, score_rubric_set(set, config, inst.instance_id));
      } catch (const ScoringError&) {
        ++out.scoring_errors;
      }
    }
  }
  return out;
}

inline ScoreTable scores_from_index(const VerdictIndex& idx, const Dataset& dataset, const Roster& generators,
                                    const ScoreFunctionConfig& config) {
  return score_table(dataset, generators, config,
                     [&](const ModelId& g, const BenchmarkInstance& inst, const Rubric& r) {
                       auto it = idx.find({g, inst.instance_id, r.rubric_id});
                       return it == idx.end() ? Cell::missing : cell_of(it->second);
                     });
}

// Per-judge instance scores from SR/AR rubric verdicts.
inline std::vector<InstanceScore> instance_scores_from_rubric_verdicts(std::span<const RubricVerdict> verdicts,
                                                                       const Dataset& dataset,
                                                                       const Roster& generators,
                                                                       const ScoreFunctionConfig& config,
                                                                       std::int64_t* excluded = nullptr) {
  std::set<std::pair<ModelId, Paradigm>> judges;
  for (const auto& v : verdicts) judges.emplace(v.judge, v.paradigm);
  std::vector<InstanceScore> out;
  for (const auto& [judge, paradigm] : judges) {
    const auto table = scores_from_index(index_verdicts(verdicts, judge, paradigm), dataset, generators, config);
    if (excluded) *excluded += table.excluded + table.scoring_errors;
    for (const auto& [k, s] : table.scores)
      out.push_back({judge, k.generator, k.instance_id, s,
                     paradigm == Paradigm::AR ? ScoreSource::AR : ScoreSource::SR});
  }
  return out;
}

inline ScoreTable score_table_from(std::span<const InstanceScore> scores, const std::string& judge) {
  ScoreTable t;
  for (const auto& s : scores)
    if (s.judge == judge) t.scores[{s.generator, s.instance_id}] = s.score;
  return t;
}

// s*: computed from b* when the instance is fully covered, else the stored score_ref.
inline ScoreTable reference_scores(const ReferenceSet& ref, const Dataset& dataset, const Roster& generators,
                                   const ScoreFunctionConfig& config) {
  auto t = score_table(dataset, generators, config,
                       [&](const ModelId& g, const BenchmarkInstance& inst, const Rubric& r) {
                         auto it = ref.rubric_refs.find({g, inst.instance_id, r.rubric_id});
                         return it == ref.rubric_refs.end() ? Cell::missing : cell_of(it->second);
                       });
  for (const auto& g : generators)
    for (const auto& inst : dataset) {
      ScoreKey k{g, inst.instance_id};
      if (t.scores.count(k)) continue;
      if (auto it = ref.score_refs.find(k); it != ref.score_refs.end()) t.scores.emplace(k, it->second);
    }
  t.excluded = 0;
  return t;
}

// ---------------------------------------------------------------------------
// Pairwise outcomes

inline int judge_outcome(const Fraction& s, const Fraction& s_opponent) { return compare_sign(s, s_opponent); }
inline int reference_outcome(const Fraction& s, const Fraction& s_opponent) { return compare_sign(s, s_opponent); }

// w(G, G', x) for one judge (or the reference); stored once per unordered
// pair and negated on reversed lookup.
class PairOutcomes {
 public:
  void set(const ModelId& g, const ModelId& h, const std::string& x, int w) {
    if (g < h)
      map_[{g, h, x}] = static_cast<signed char>(w);
    else
      map_[{h, g, x}] = static_cast<signed char>(-w);
  }

  std::optional<int> get(const ModelId& g, const ModelId& h, const std::string& x) const {
    const bool canonical = g < h;
    auto it = canonical ? map_.find({g, h, x}) : map_.find({h, g, x});
    if (it == map_.end()) return std::nullopt;
    return canonical ? it->second : -it->second;
  }

  std::size_t size() const { return map_.size(); }
  std::int64_t missing = 0;

 private:
  struct Key {
    ModelId lo, hi;
    std::string x;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      std::size_t h = std::hash<std::string>{}(k.lo);
      hash_combine(h, std::hash<std::string>{}(k.hi));
      hash_combine(h, std::hash<std::string>{}(k.x));
      return h;
    }
  };
  std::unordered_map<Key, signed char, KeyHash> map_;
};

inline PairOutcomes outcomes_from_scores(const ScoreTable& scores, const Roster& generators, const Dataset& dataset) {
  PairOutcomes out;
  for (std::size_t i = 0; i < generators.size(); ++i)
    for (std::size_t j = i + 1; j < generators.size(); ++j)
      for (const auto& inst : dataset) {
        const auto* a = scores.find(generators[i], inst.instance_id);
        const auto* b = scores.find(generators[j], inst.instance_id);
        if (!a || !b) {
          ++out.missing;
          continue;
        }
        out.set(generators[i], generators[j], inst.instance_id, judge_outcome(*a, *b));
      }
  return out;
}

inline PairOutcomes outcomes_from_resolved(std::span<const ResolvedComparison> resolved, const ModelId& judge) {
  PairOutcomes out;
  for (const auto& c : resolved)
    if (c.judge == judge) out.set(c.generator, c.opponent, c.instance_id, c.w);
  return out;
}

// ---------------------------------------------------------------------------
// Instance level

// Denominator: opponents G' and instances with w* = -1; numerator: those with w_J > w*.
inline RateCell overestimation_instance(const ModelId& generator, const PairOutcomes& judge,
                                        const PairOutcomes& reference, const Roster& generators,
                                        const Dataset& dataset) {
  RateCell cell;
  for (const auto& opp : generators) {
    if (opp == generator) continue;
    for (const auto& inst : dataset) {
      const auto ws = reference.get(generator, opp, inst.instance_id);
      if (!ws || *ws != -1) continue;
      const auto wj = judge.get(generator, opp, inst.instance_id);
      if (!wj) {
        ++cell.excluded;
        continue;
      }
      ++cell.denominator;
      if (*wj > *ws) ++cell.numerator;
    }
  }
  return cell;
}

struct SubtypeCounts {
  std::int64_t loss_to_win = 0;
  std::int64_t loss_to_tie = 0;

  std::int64_t total() const { return loss_to_win + loss_to_tie; }
  bool defined() const { return total() > 0; }
  std::optional<Rational> win_share() const {
    if (!defined()) return std::nullopt;
    return Rational(loss_to_win, total());
  }
  std::optional<Rational> tie_share() const {
    if (!defined()) return std::nullopt;
    return Rational(loss_to_tie, total());
  }
  SubtypeCounts& operator+=(const SubtypeCounts& o) {
    loss_to_win += o.loss_to_win;
    loss_to_tie += o.loss_to_tie;
    return *this;
  }
  bool operator==(const SubtypeCounts&) const = default;
};

inline SubtypeCounts overestimation_subtypes(const ModelId& generator, const PairOutcomes& judge,
                                             const PairOutcomes& reference, const Roster& generators,
                                             const Dataset& dataset) {
  SubtypeCounts out;
  for (const auto& opp : generators) {
    if (opp == generator) continue;
    for (const auto& inst : dataset) {
      const auto ws = reference.get(generator, opp, inst.instance_id);
      if (!ws || *ws != -1) continue;
      const auto wj = judge.get(generator, opp, inst.instance_id);
      if (!wj) continue;
      if (*wj == 1) ++out.loss_to_win;
      if (*wj == 0) ++out.loss_to_tie;
    }
  }
  return out;
}

// Concordance over unordered generator pairs and instances, ties included.
inline Accuracy mipa(const PairOutcomes& judge, const PairOutcomes& reference, const Roster& generators,
                     const Dataset& dataset) {
  Accuracy acc;
  for (std::size_t i = 0; i < generators.size(); ++i)
    for (std::size_t j = i + 1; j < generators.size(); ++j)
      for (const auto& inst : dataset) {
        const auto wj = judge.get(generators[i], generators[j], inst.instance_id);
        const auto ws = reference.get(generators[i], generators[j], inst.instance_id);
        if (!wj || !ws) {
          ++acc.excluded;
          continue;
        }
        ++acc.denominator;
        if (*wj == *ws) ++acc.numerator;
      }
  return acc;
}

// ---------------------------------------------------------------------------
// Rubric level

// Per generator: denominator = reference-failed units the judge ruled on,
// numerator = those the judge passed.
// `keep` restricts the reference units considered (slices, agreement filters).
template <typename Keep>
RateTable rubric_overestimation_table(const VerdictIndex& judge, const ReferenceSet& reference, Keep&& keep) {
  RateTable table;
  for (const auto& [key, met_ref] : reference.rubric_refs) {
    if (met_ref || !keep(key)) continue;
    auto& cell = table[key.generator];
    auto it = judge.find(key);
    if (it == judge.end()) {
      ++cell.excluded;
      continue;
    }
    ++cell.denominator;
    if (it->second) ++cell.numerator;
  }
  return table;
}

inline RateTable rubric_overestimation_table(const VerdictIndex& judge, const ReferenceSet& reference) {
  return rubric_overestimation_table(judge, reference, [](const UnitKey&) { return true; });
}

inline RateCell overestimation_rubric(const ModelId& generator, const VerdictIndex& judge,
                                      const ReferenceSet& reference) {
  RateCell cell;
  for (const auto& [key, met_ref] : reference.rubric_refs) {
    if (met_ref || key.generator != generator) continue;
    auto it = judge.find(key);
    if (it == judge.end()) {
      ++cell.excluded;
      continue;
    }
    ++cell.denominator;
    if (it->second) ++cell.numerator;
  }
  return cell;
}

inline Accuracy mra(const VerdictIndex& judge, const ReferenceSet& reference) {
  Accuracy acc;
  for (const auto& [key, met_ref] : reference.rubric_refs) {
    auto it = judge.find(key);
    if (it == judge.end()) {
      ++acc.excluded;
      continue;
    }
    ++acc.denominator;
    if (it->second == met_ref) ++acc.numerator;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// HSPP ratios

struct HsppResult {
  std::optional<Rational> self_rate;
  std::optional<Rational> family_mean;
  std::optional<Rational> stranger_mean;
  std::size_t family_defined = 0, family_total = 0;
  std::size_t stranger_defined = 0, stranger_total = 0;
  std::optional<Rational> self_ratio;
  std::optional<Rational> family_ratio;
};

namespace detail {

inline std::optional<Rational> mean_defined(const RateTable& table, const std::set<ModelId>& members,
                                            std::size_t& defined) {
  Rational sum = 0;
  defined = 0;
  for (const auto& m : members) {
    auto it = table.find(m);
    if (it == table.end() || !it->second.defined()) continue;
    sum += *it->second.rate();
    ++defined;
  }
  if (defined == 0) return std::nullopt;
  return sum / Rational(static_cast<long long>(defined));
}

inline std::optional<Rational> ratio(const std::optional<Rational>& num, const std::optional<Rational>& den) {
  if (!num || !den || *den == 0) return std::nullopt;
  return *num / *den;
}

}  // namespace detail

// Undefined component rates are left out of the means; the effective counts
// are reported alongside.
inline HsppResult hspp(const RateTable& table, const GeneratorPartition& partition) {
  HsppResult out;
  if (auto it = table.find(partition.judge); it != table.end()) out.self_rate = it->second.rate();
  out.family_total = partition.family.size();
  out.stranger_total = partition.strangers.size();
  out.family_mean = detail::mean_defined(table, partition.family, out.family_defined);
  out.stranger_mean = detail::mean_defined(table, partition.strangers, out.stranger_defined);
  out.self_ratio = detail::ratio(out.self_rate, out.stranger_mean);
  out.family_ratio = detail::ratio(out.family_mean, out.stranger_mean);
  return out;
}

inline std::optional<Rational> hspp_self(const RateTable& table, const GeneratorPartition& p) {
  return hspp(table, p).self_ratio;
}

inline std::optional<Rational> hspp_family(const RateTable& table, const GeneratorPartition& p) {
  return hspp(table, p).family_ratio;
}

// ---------------------------------------------------------------------------
// Per-judge bundles

struct RubricLevelMetrics {
  Accuracy mra;
  RateTable overestimation;
  HsppResult hspp;
};

inline RubricLevelMetrics rubric_level_metrics(const VerdictIndex& judge, const ReferenceSet& reference,
                                               const GeneratorPartition& partition) {
  RubricLevelMetrics m;
  m.mra = mra(judge, reference);
  m.overestimation = rubric_overestimation_table(judge, reference);
  m.hspp = hspp(m.overestimation, partition);
  return m;
}

struct InstanceLevelMetrics {
  Accuracy mipa;
  RateTable overestimation;
  std::map<ModelId, SubtypeCounts> subtypes;
  HsppResult hspp;
};

inline InstanceLevelMetrics instance_level_metrics(const PairOutcomes& judge, const PairOutcomes& reference,
                                                   const Roster& generators, const Dataset& dataset,
                                                   const GeneratorPartition& partition) {
  InstanceLevelMetrics m;
  m.mipa = mipa(judge, reference, generators, dataset);
  for (const auto& g : generators) {
    m.overestimation[g] = overestimation_instance(g, judge, reference, generators, dataset);
    m.subtypes[g] = overestimation_subtypes(g, judge, reference, generators, dataset);
  }
  m.hspp = hspp(m.overestimation, partition);
  return m;
}

inline std::optional<double> as_double(const std::optional<Rational>& r) {
  if (!r) return std::nullopt;
  return to_double(*r);
}

}  // namespace spb
