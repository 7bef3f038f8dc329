#pragma once

// Committee aggregation, inter-judge agreement filtering, centered score
// delta matrices and slice analyses.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "spb/metrics.hpp"

namespace spb {

// ---------------------------------------------------------------------------
// Committees

struct CommitteeSpec {
  std::vector<ModelId> members;

  void validate() const {
    if (members.empty() || members.size() % 2 == 0)
      throw ConfigError("committee needs an odd number of members, got " + std::to_string(members.size()));
    std::set<ModelId> s(members.begin(), members.end());
    if (s.size() != members.size()) throw ConfigError("committee members must be distinct");
  }
};

// Majority vote: the sign of the summed +1/-1 votes.
inline bool committee_verdict(const std::vector<bool>& votes) {
  if (votes.empty() || votes.size() % 2 == 0)
    throw ConfigError("committee vote needs an odd number of verdicts, got " + std::to_string(votes.size()));
  long sum = 0;
  for (bool v : votes) sum += v ? 1 : -1;
  return sum > 0;
}

struct CommitteeVotes {
  VerdictIndex majority;                        // one entry per fully covered unit
  std::map<ModelId, std::int64_t> missing;      // units each member did not judge
  std::int64_t excluded_units = 0;              // units lacking at least one member
};

// Units are the union of everything any member judged; a unit missing any
// member's verdict is excluded.
inline CommitteeVotes committee_votes(std::span<const RubricVerdict> verdicts, const CommitteeSpec& committee,
                                      std::optional<Paradigm> paradigm = Paradigm::SR) {
  committee.validate();
  std::map<ModelId, std::size_t> slot;
  for (std::size_t i = 0; i < committee.members.size(); ++i) slot[committee.members[i]] = i;

  const std::size_t n = committee.members.size();
  std::unordered_map<UnitKey, std::vector<signed char>, UnitKeyHash> ballots;
  for (const auto& v : verdicts) {
    if (paradigm && v.paradigm != *paradigm) continue;
    auto it = slot.find(v.judge);
    if (it == slot.end()) continue;
    auto& b = ballots[{v.generator, v.instance_id, v.rubric_id}];
    if (b.empty()) b.assign(n, -1);
    b[it->second] = v.met ? 1 : 0;
  }

  CommitteeVotes out;
  for (const auto& m : committee.members) out.missing[m] = 0;
  std::vector<bool> votes;
  for (const auto& [unit, b] : ballots) {
    votes.clear();
    bool complete = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (b[i] < 0) {
        complete = false;
        ++out.missing[committee.members[i]];
      } else {
        votes.push_back(b[i] == 1);
      }
    }
    if (!complete) {
      ++out.excluded_units;
      continue;
    }
    out.majority.emplace(unit, committee_verdict(votes));
  }
  return out;
}

struct CommitteeReference {
  ReferenceSet reference;
  std::map<ModelId, std::int64_t> missing;
  std::int64_t excluded_units = 0;
};

inline CommitteeReference committee_reference(std::span<const RubricVerdict> verdicts, const CommitteeSpec& committee,
                                              const Dataset& dataset, const Roster& generators,
                                              const ScoreFunctionConfig& config) {
  auto votes = committee_votes(verdicts, committee, Paradigm::SR);
  CommitteeReference out;
  out.missing = std::move(votes.missing);
  out.excluded_units = votes.excluded_units;
  out.reference.provenance = Provenance::committee;
  out.reference.rubric_refs.insert(votes.majority.begin(), votes.majority.end());
  auto scores = scores_from_index(votes.majority, dataset, generators, config);
  out.reference.score_refs.insert(scores.scores.begin(), scores.scores.end());
  return out;
}

// Individual vs committee-attributed metrics for one member: the committee's
// majority verdict is scored as if the member had issued it.
struct CommitteeComparison {
  ModelId member;
  RubricLevelMetrics individual_rubric;
  RubricLevelMetrics committee_rubric;
  InstanceLevelMetrics individual_instance;
  InstanceLevelMetrics committee_instance;
};

inline std::vector<CommitteeComparison> committee_member_metrics(std::span<const RubricVerdict> verdicts,
                                                                 const CommitteeSpec& committee,
                                                                 const ReferenceSet& reference,
                                                                 const FamilyRegistry& registry,
                                                                 const Roster& generators, const Dataset& dataset,
                                                                 const ScoreFunctionConfig& config) {
  const auto votes = committee_votes(verdicts, committee, Paradigm::SR);
  const auto ref_scores = reference_scores(reference, dataset, generators, config);
  const auto ref_outcomes = outcomes_from_scores(ref_scores, generators, dataset);
  const auto committee_outcomes =
      outcomes_from_scores(scores_from_index(votes.majority, dataset, generators, config), generators, dataset);

  std::vector<CommitteeComparison> out;
  for (const auto& member : committee.members) {
    const auto partition = partition_generators(member, generators, registry);
    const auto idx = index_verdicts(verdicts, member, Paradigm::SR);
    const auto member_outcomes =
        outcomes_from_scores(scores_from_index(idx, dataset, generators, config), generators, dataset);
    CommitteeComparison c;
    c.member = member;
    c.individual_rubric = rubric_level_metrics(idx, reference, partition);
    c.committee_rubric = rubric_level_metrics(votes.majority, reference, partition);
    c.individual_instance = instance_level_metrics(member_outcomes, ref_outcomes, generators, dataset, partition);
    c.committee_instance = instance_level_metrics(committee_outcomes, ref_outcomes, generators, dataset, partition);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Agreement

// Concordant judge pairs over all judge pairs; undefined with fewer than two votes.
inline std::optional<double> pairwise_agreement(std::int64_t met, std::int64_t unmet) {
  const std::int64_t n = met + unmet;
  if (n < 2) return std::nullopt;
  auto pairs = [](std::int64_t k) { return k * (k - 1) / 2; };
  return static_cast<double>(pairs(met) + pairs(unmet)) / static_cast<double>(pairs(n));
}

inline std::optional<double> pairwise_agreement(const std::vector<bool>& votes) {
  const auto met = std::count(votes.begin(), votes.end(), true);
  return pairwise_agreement(met, static_cast<std::int64_t>(votes.size()) - met);
}

struct VoteTally {
  std::int64_t met = 0;
  std::int64_t unmet = 0;
};

using AgreementMap = std::unordered_map<UnitKey, VoteTally, UnitKeyHash>;

inline AgreementMap tally_votes(std::span<const RubricVerdict> verdicts, const std::vector<ModelId>& judges,
                                std::optional<Paradigm> paradigm = Paradigm::SR) {
  const std::set<ModelId> js(judges.begin(), judges.end());
  AgreementMap out;
  for (const auto& v : verdicts) {
    if ((paradigm && v.paradigm != *paradigm) || !js.count(v.judge)) continue;
    auto& t = out[{v.generator, v.instance_id, v.rubric_id}];
    (v.met ? t.met : t.unmet) += 1;
  }
  return out;
}

struct SweepJudge {
  ModelId judge;
  HsppResult rubric;
  HsppResult instance;
};

struct SweepPoint {
  double threshold = 0;
  std::int64_t kept_units = 0;
  std::int64_t defined_units = 0;
  std::optional<double> mean_self_rubric, mean_family_rubric;
  std::optional<double> mean_self_instance, mean_family_instance;
  std::vector<SweepJudge> judges;
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline std::optional<double> max_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  return *std::max_element(xs.begin(), xs.end());
}

}  // namespace detail

// For each threshold t, keeps the units with agreement >= t and recomputes
// each judge's HSPP on them. Reference verdicts stay fixed; the reference
// score of a cell is taken over the same kept rubrics as the judge's score.
inline std::vector<SweepPoint> agreement_sweep(std::span<const RubricVerdict> verdicts,
                                               const std::vector<ModelId>& judges,
                                               std::span<const double> thresholds, const ReferenceSet& reference,
                                               const FamilyRegistry& registry, const Roster& generators,
                                               const Dataset& dataset, const ScoreFunctionConfig& config) {
  if (judges.size() < 2) throw ConfigError("agreement sweep needs at least two judges");
  for (double t : thresholds)
    if (!(t >= 0.5 && t <= 1.0)) throw ConfigError("agreement thresholds must lie in [0.5, 1.0]");

  const auto tallies = tally_votes(verdicts, judges);
  std::unordered_map<UnitKey, double, UnitKeyHash> agreement;
  for (const auto& [unit, t] : tallies)
    if (auto a = pairwise_agreement(t.met, t.unmet)) agreement.emplace(unit, *a);

  std::vector<VerdictIndex> indices;
  for (const auto& j : judges) indices.push_back(index_verdicts(verdicts, j, Paradigm::SR));

  std::vector<SweepPoint> out;
  for (double t : thresholds) {
    SweepPoint pt;
    pt.threshold = t;
    pt.defined_units = static_cast<std::int64_t>(agreement.size());
    auto kept = [&](const UnitKey& k) {
      auto it = agreement.find(k);
      return it != agreement.end() && it->second >= t;
    };
    for (const auto& [unit, a] : agreement) pt.kept_units += a >= t;

    const auto ref_scores = score_table(dataset, generators, config,
                                        [&](const ModelId& g, const BenchmarkInstance& inst, const Rubric& r) {
                                          UnitKey k{g, inst.instance_id, r.rubric_id};
                                          if (!kept(k)) return Cell::not_applicable;
                                          auto it = reference.rubric_refs.find(k);
                                          return it == reference.rubric_refs.end() ? Cell::missing
                                                                                   : cell_of(it->second);
                                        });
    const auto ref_outcomes = outcomes_from_scores(ref_scores, generators, dataset);

    std::vector<double> self_r, fam_r, self_i, fam_i;
    for (std::size_t ji = 0; ji < judges.size(); ++ji) {
      const auto& idx = indices[ji];
      const auto partition = partition_generators(judges[ji], generators, registry);
      SweepJudge sj;
      sj.judge = judges[ji];
      sj.rubric = hspp(rubric_overestimation_table(idx, reference, kept), partition);

      const auto scores = score_table(dataset, generators, config,
                                      [&](const ModelId& g, const BenchmarkInstance& inst, const Rubric& r) {
                                        UnitKey k{g, inst.instance_id, r.rubric_id};
                                        if (!kept(k)) return Cell::not_applicable;
                                        auto it = idx.find(k);
                                        return it == idx.end() ? Cell::missing : cell_of(it->second);
                                      });
      const auto outcomes = outcomes_from_scores(scores, generators, dataset);
      RateTable inst_table;
      for (const auto& g : generators)
        inst_table[g] = overestimation_instance(g, outcomes, ref_outcomes, generators, dataset);
      sj.instance = hspp(inst_table, partition);

      if (auto v = as_double(sj.rubric.self_ratio)) self_r.push_back(*v);
      if (auto v = as_double(sj.rubric.family_ratio)) fam_r.push_back(*v);
      if (auto v = as_double(sj.instance.self_ratio)) self_i.push_back(*v);
      if (auto v = as_double(sj.instance.family_ratio)) fam_i.push_back(*v);
      pt.judges.push_back(std::move(sj));
    }
    pt.mean_self_rubric = detail::mean_of(self_r);
    pt.mean_family_rubric = detail::mean_of(fam_r);
    pt.mean_self_instance = detail::mean_of(self_i);
    pt.mean_family_instance = detail::mean_of(fam_i);
    out.push_back(std::move(pt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Centered score delta matrix

struct DeltaMatrix {
  std::vector<ModelId> judges;
  std::vector<ModelId> generators;
  std::vector<std::vector<double>> cells;  // [judge][generator], unscaled
  std::vector<double> mean_bias;           // per judge, before centering

  double display(std::size_t j, std::size_t g) const { return cells[j][g] * 100.0; }
};

using SystemScores = std::map<std::pair<ModelId, ModelId>, double>;  // (judge, generator)

// cell(j,g) = (score_j(g) - ref(g)) - mean over g' of (score_j(g') - ref(g')).
inline DeltaMatrix centered_delta_matrix(const SystemScores& system, const std::map<ModelId, double>& reference,
                                         const std::vector<ModelId>& judges, const std::vector<ModelId>& generators) {
  std::vector<std::string> gaps;
  for (const auto& g : generators)
    if (!reference.count(g)) gaps.push_back("reference/" + g);
  for (const auto& j : judges)
    for (const auto& g : generators)
      if (!system.count({j, g})) gaps.push_back(j + "/" + g);
  if (!gaps.empty()) {
    std::string msg = "delta matrix has missing cells:";
    for (const auto& s : gaps) msg += " " + s;
    throw DataError(msg);
  }
  if (generators.empty()) throw DataError("delta matrix needs at least one generator");

  DeltaMatrix m{judges, generators, {}, {}};
  for (const auto& j : judges) {
    std::vector<double> row;
    for (const auto& g : generators) row.push_back(system.at({j, g}) - reference.at(g));
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
    for (auto& x : row) x -= mean;
    m.cells.push_back(std::move(row));
    m.mean_bias.push_back(mean);
  }
  return m;
}

// Mean instance score per generator over the instances it was scored on.
inline std::map<ModelId, double> system_scores(const ScoreTable& table, const Roster& generators) {
  std::map<ModelId, std::pair<double, std::int64_t>> acc;
  for (const auto& [k, s] : table.scores) {
    auto& [sum, n] = acc[k.generator];
    sum += s.value();
    ++n;
  }
  std::map<ModelId, double> out;
  for (const auto& g : generators)
    if (auto it = acc.find(g); it != acc.end() && it->second.second > 0)
      out[g] = it->second.first / static_cast<double>(it->second.second);
  return out;
}

// ---------------------------------------------------------------------------
// Slices

enum class SliceDimension { polarity, length_bucket, axis, theme, weighting_mode };

inline std::string_view to_string(SliceDimension d) {
  switch (d) {
    case SliceDimension::polarity: return "polarity";
    case SliceDimension::length_bucket: return "length_bucket";
    case SliceDimension::axis: return "axis";
    case SliceDimension::theme: return "theme";
    case SliceDimension::weighting_mode: return "weighting_mode";
  }
  return "?";
}

inline SliceDimension parse_slice_dimension(std::string_view s) {
  for (auto d : {SliceDimension::polarity, SliceDimension::length_bucket, SliceDimension::axis,
                 SliceDimension::theme, SliceDimension::weighting_mode})
    if (to_string(d) == s) return d;
  throw ConfigError("unknown slice dimension '" + std::string(s) + "'");
}

struct SliceSpec {
  SliceDimension dimension = SliceDimension::polarity;
};

// Rubric-to-bucket assignment for a slice over the loaded rubric population.
struct SliceBuckets {
  std::vector<std::string> names;
  // (instance_id, rubric_id) -> bucket indices the rubric belongs to
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> membership;
  bool partition = true;
};

// Sextile of each rubric by whitespace-token length; ties broken by dataset
// order so every sextile holds floor(N/6) or ceil(N/6) rubrics.
inline std::map<std::pair<std::string, std::string>, int> rubric_sextiles(const Dataset& dataset) {
  struct Item {
    std::int64_t length;
    std::size_t order;
    std::pair<std::string, std::string> key;
  };
  std::vector<Item> items;
  for (const auto& inst : dataset)
    for (const auto& r : inst.rubrics)
      items.push_back({text::count_words(r.text), items.size(), {inst.instance_id, r.rubric_id}});
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.length < b.length; });
  std::map<std::pair<std::string, std::string>, int> out;
  const std::size_t n = items.size();
  for (std::size_t rank = 0; rank < n; ++rank) out[items[rank].key] = static_cast<int>(rank * 6 / n);
  return out;
}

inline SliceBuckets slice_buckets(const Dataset& dataset, const SliceSpec& spec) {
  SliceBuckets b;
  switch (spec.dimension) {
    case SliceDimension::polarity:
      b.names = {"default", "positive_only"};
      b.partition = false;
      for (const auto& inst : dataset)
        for (const auto& r : inst.rubrics) {
          auto& m = b.membership[{inst.instance_id, r.rubric_id}];
          m.push_back(0);
          if (r.weight > 0) m.push_back(1);
        }
      break;
    case SliceDimension::length_bucket: {
      b.names = {"short_s1_2", "medium_s3_4", "long_s5_6"};
      for (const auto& [key, sextile] : rubric_sextiles(dataset))
        b.membership[key] = {static_cast<std::size_t>(sextile / 2)};
      break;
    }
    case SliceDimension::axis:
    case SliceDimension::theme: {
      std::map<std::string, std::size_t> ids;
      for (const auto& inst : dataset)
        for (const auto& r : inst.rubrics) {
          const auto& cat = spec.dimension == SliceDimension::axis ? r.axis : r.theme;
          const std::string name = cat.value_or("(none)");
          auto [it, inserted] = ids.emplace(name, b.names.size());
          if (inserted) b.names.push_back(name);
          b.membership[{inst.instance_id, r.rubric_id}] = {it->second};
        }
      break;
    }
    case SliceDimension::weighting_mode:
      b.names = {"unweighted", "weighted"};
      b.partition = false;
      break;
  }
  return b;
}

struct SliceCell {
  ModelId judge;
  RateTable overestimation;  // rubric level, or instance level for weighting_mode
  HsppResult hspp;
};

struct SliceBucketResult {
  std::string bucket;
  std::vector<SliceCell> judges;
  std::optional<double> mean_self, max_self, mean_family, max_family;
};

struct SliceResult {
  SliceDimension dimension;
  bool instance_level = false;
  std::vector<SliceBucketResult> buckets;
};

// HSPP-Rubric per bucket and judge (HSPP-Instance per scoring mode for the
// weighting_mode dimension), with mean and max across judges.
inline SliceResult slice_hspp(std::span<const RubricVerdict> verdicts, const std::vector<ModelId>& judges,
                              const ReferenceSet& reference, const FamilyRegistry& registry,
                              const Roster& generators, const Dataset& dataset, const SliceSpec& spec,
                              std::optional<Paradigm> paradigm = Paradigm::SR) {
  const auto buckets = slice_buckets(dataset, spec);
  SliceResult out{spec.dimension, spec.dimension == SliceDimension::weighting_mode, {}};

  std::vector<VerdictIndex> indices;
  for (const auto& j : judges) indices.push_back(index_verdicts(verdicts, j, paradigm));

  for (std::size_t bi = 0; bi < buckets.names.size(); ++bi) {
    SliceBucketResult br;
    br.bucket = buckets.names[bi];
    std::vector<double> selfs, fams;
    for (std::size_t ji = 0; ji < judges.size(); ++ji) {
      const auto partition = partition_generators(judges[ji], generators, registry);
      SliceCell cell;
      cell.judge = judges[ji];
      if (out.instance_level) {
        const ScoreFunctionConfig cfg{bi == 0 ? ScoreMode::unweighted_fraction : ScoreMode::weighted_clipped};
        const auto ref_out =
            outcomes_from_scores(reference_scores(reference, dataset, generators, cfg), generators, dataset);
        const auto judge_out =
            outcomes_from_scores(scores_from_index(indices[ji], dataset, generators, cfg), generators, dataset);
        for (const auto& g : generators)
          cell.overestimation[g] = overestimation_instance(g, judge_out, ref_out, generators, dataset);
      } else {
        cell.overestimation = rubric_overestimation_table(indices[ji], reference, [&](const UnitKey& k) {
          auto it = buckets.membership.find({k.instance_id, k.rubric_id});
          if (it == buckets.membership.end()) return false;
          return std::find(it->second.begin(), it->second.end(), bi) != it->second.end();
        });
      }
      cell.hspp = hspp(cell.overestimation, partition);
      if (auto v = as_double(cell.hspp.self_ratio)) selfs.push_back(*v);
      if (auto v = as_double(cell.hspp.family_ratio)) fams.push_back(*v);
      br.judges.push_back(std::move(cell));
    }
    br.mean_self = detail::mean_of(selfs);
    br.max_self = detail::max_of(selfs);
    br.mean_family = detail::mean_of(fams);
    br.max_family = detail::max_of(fams);
    out.buckets.push_back(std::move(br));
  }
  return out;
}

}  // namespace spb
