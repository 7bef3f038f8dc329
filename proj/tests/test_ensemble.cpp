#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "spb/ensemble.hpp"
#include "support/corpus.hpp"
#include "support/scenarios.hpp"

using namespace spb;
using testing_support::random_corpus;

TEST(Committee, VerdictExamples) {
  EXPECT_TRUE(committee_verdict({true, true, false}));
  EXPECT_FALSE(committee_verdict({false, false, false, true, true}));
  EXPECT_TRUE(committee_verdict({true, true, true, true, true}));
  EXPECT_THROW(committee_verdict({true, false}), ConfigError);
  EXPECT_THROW(committee_verdict({}), ConfigError);
  EXPECT_THROW((CommitteeSpec{{"a", "a", "b"}}.validate()), ConfigError);
  EXPECT_THROW((CommitteeSpec{{"a", "b"}}.validate()), ConfigError);
}

TEST(Committee, MajorityIsModeOnAllCombinations) {
  for (int n : {3, 5}) {
    for (int mask = 0; mask < (1 << n); ++mask) {
      std::vector<bool> votes;
      int met = 0;
      for (int i = 0; i < n; ++i) {
        votes.push_back((mask >> i) & 1);
        met += (mask >> i) & 1;
      }
      const bool mode = met > n - met;
      EXPECT_EQ(committee_verdict(votes), mode);
      std::vector<int> order(n);
      for (int i = 0; i < n; ++i) order[i] = i;
      do {
        std::vector<bool> perm;
        for (int i : order) perm.push_back(votes[i]);
        EXPECT_EQ(committee_verdict(perm), mode);
      } while (std::next_permutation(order.begin(), order.end()));
    }
  }
}

namespace {

Dataset one_rubric_dataset(int n_inst) {
  Dataset ds;
  for (int i = 0; i < n_inst; ++i)
    ds.push_back({"x" + std::to_string(i), {{Role::user, "q"}}, {Rubric{"k", "rule", 1.0, {}, {}, {}}}});
  return ds;
}

RubricVerdict verdict(const std::string& judge, const std::string& gen, const std::string& inst, bool met) {
  return {judge, gen, inst, "k", met, Paradigm::SR, std::nullopt};
}

}  // namespace

TEST(Committee, ReferenceMatchesHandTally) {
  // Three judges, two generators, three instances; majorities tallied by hand.
  const auto ds = one_rubric_dataset(3);
  const Roster gens{"g", "h"};
  const bool votes[3][2][3] = {
      {{true, false, true}, {false, false, true}},
      {{true, true, false}, {false, true, true}},
      {{false, false, false}, {true, true, true}},
  };
  const bool expected[2][3] = {{true, false, false}, {false, true, true}};
  std::vector<RubricVerdict> vs;
  for (int j = 0; j < 3; ++j)
    for (int g = 0; g < 2; ++g)
      for (int x = 0; x < 3; ++x) vs.push_back(verdict("j" + std::to_string(j), gens[g], "x" + std::to_string(x), votes[j][g][x]));
  const auto ref = committee_reference(vs, CommitteeSpec{{"j0", "j1", "j2"}}, ds, gens, {});
  EXPECT_EQ(ref.reference.provenance, Provenance::committee);
  ASSERT_EQ(ref.reference.rubric_refs.size(), 6u);
  for (int g = 0; g < 2; ++g)
    for (int x = 0; x < 3; ++x) {
      EXPECT_EQ(ref.reference.rubric_refs.at({gens[g], "x" + std::to_string(x), "k"}), expected[g][x]);
      EXPECT_EQ(ref.reference.score_refs.at({gens[g], "x" + std::to_string(x)}).num, expected[g][x] ? 1 : 0);
    }
  EXPECT_EQ(ref.excluded_units, 0);
}

TEST(Committee, CoverageGapsReportedPerMember) {
  const auto sim = simulate(testing_support::committee_scenario(3));
  CommitteeSpec c{sim.judges};
  auto full = committee_reference(sim.verdicts, c, sim.dataset, sim.generators, {});
  EXPECT_EQ(full.reference.rubric_refs.size(), sim.reference.rubric_refs.size());

  std::vector<RubricVerdict> gappy;
  int dropped = 0;
  for (const auto& v : sim.verdicts) {
    if (v.judge == "m2" && v.generator == "m0" && v.rubric_id == "r1" && dropped < 3) {
      ++dropped;
      continue;
    }
    gappy.push_back(v);
  }
  const auto ref = committee_reference(gappy, c, sim.dataset, sim.generators, {});
  EXPECT_EQ(ref.excluded_units, 3);
  EXPECT_EQ(ref.missing.at("m2"), 3);
  EXPECT_EQ(ref.missing.at("m0"), 0);
  EXPECT_EQ(ref.reference.rubric_refs.size(), sim.reference.rubric_refs.size() - 3);
}

TEST(Committee, MemberMetricsShareOnePrediction) {
  const auto sim = simulate(testing_support::committee_scenario(4));
  CommitteeSpec c{sim.judges};
  const auto rows = committee_member_metrics(sim.verdicts, c, sim.reference, sim.registry, sim.generators,
                                             sim.dataset, {});
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.committee_rubric.mra, rows[0].committee_rubric.mra);
    EXPECT_EQ(r.committee_instance.mipa, rows[0].committee_instance.mipa);
  }

  // Perfect members.
  std::vector<RubricVerdict> perfect;
  for (const auto& m : sim.judges)
    for (const auto& [k, met] : sim.reference.rubric_refs)
      perfect.push_back({m, k.generator, k.instance_id, k.rubric_id, met, Paradigm::SR, std::nullopt});
  for (const auto& r : committee_member_metrics(perfect, c, sim.reference, sim.registry, sim.generators,
                                                sim.dataset, {}))
    EXPECT_EQ(r.committee_rubric.mra.rate(), Rational(1));
}

TEST(Committee, BeatsWorstMemberOnSimulatedJudges) {
  int better = 0, above = 0;
  double mean = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto sim = simulate(testing_support::committee_scenario(seed));
    const double cm = testing_support::committee_mra(sim, CommitteeSpec{sim.judges});
    double worst = 1.0;
    for (const auto& m : sim.judges) worst = std::min(worst, testing_support::member_mra(sim, m));
    better += cm > worst;
    above += cm > 0.9;
    mean += cm / 100;
  }
  EXPECT_EQ(above, 100);
  EXPECT_GE(better, 95);
  // 1 - P(>=3 of 5 err) at 10% error.
  EXPECT_NEAR(mean, 0.99144, 0.002);
}

TEST(Agreement, PairCounts) {
  EXPECT_DOUBLE_EQ(*pairwise_agreement(std::vector<bool>(12, true)), 1.0);
  std::vector<bool> half(6, true);
  half.resize(12, false);
  EXPECT_DOUBLE_EQ(*pairwise_agreement(half), 30.0 / 66.0);
  EXPECT_DOUBLE_EQ(*pairwise_agreement({true, false}), 0.0);
  EXPECT_FALSE(pairwise_agreement({true}));
  for (int met = 0; met <= 9; ++met)
    for (int unmet = 0; met + unmet <= 9; ++unmet)
      if (met + unmet >= 2) EXPECT_EQ(pairwise_agreement(met, unmet), pairwise_agreement(unmet, met));
}

namespace {

std::set<UnitKey> kept_set(const AgreementMap& tallies, double t) {
  std::set<UnitKey> s;
  for (const auto& [k, v] : tallies) {
    auto a = pairwise_agreement(v.met, v.unmet);
    if (a && *a >= t) s.insert(k);
  }
  return s;
}

}  // namespace

TEST(Sweep, KeptCountsAndUnanimity) {
  const auto sim = simulate(testing_support::sweep_scenario(5));
  const std::vector<double> ts{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  const auto pts = agreement_sweep(sim.verdicts, sim.judges, ts, sim.reference, sim.registry, sim.generators,
                                   sim.dataset, {});
  ASSERT_EQ(pts.size(), ts.size());
  for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_LE(pts[i].kept_units, pts[i - 1].kept_units);
  const auto tallies = tally_votes(sim.verdicts, sim.judges);
  EXPECT_EQ(pts[0].defined_units, static_cast<std::int64_t>(tallies.size()));
  EXPECT_EQ(pts[0].kept_units, static_cast<std::int64_t>(kept_set(tallies, 0.5).size()));
  std::int64_t unanimous = 0;
  for (const auto& [k, v] : tallies) unanimous += (v.met == 0 || v.unmet == 0);
  EXPECT_EQ(pts.back().kept_units, unanimous);

  for (std::size_t i = 1; i < ts.size(); ++i) {
    SCOPED_TRACE(ts[i]);
    const auto hi = kept_set(tallies, ts[i]), lo = kept_set(tallies, ts[i - 1]);
    EXPECT_TRUE(std::includes(lo.begin(), lo.end(), hi.begin(), hi.end()));
    EXPECT_EQ(static_cast<std::int64_t>(hi.size()), pts[i].kept_units);
  }
}

TEST(Sweep, FilteringRemovesConcentratedBias) {
  const std::vector<double> ts{0.5, 0.9};
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto sim = simulate(testing_support::sweep_scenario(seed));
    const auto pts = agreement_sweep(sim.verdicts, sim.judges, ts, sim.reference, sim.registry, sim.generators,
                                     sim.dataset, {});
    ASSERT_TRUE(pts[0].mean_self_rubric && pts[1].mean_self_rubric);
    EXPECT_LE(*pts[1].mean_self_rubric, *pts[0].mean_self_rubric) << seed;
    ASSERT_TRUE(pts[0].mean_self_instance && pts[1].mean_self_instance);
    EXPECT_LE(*pts[1].mean_self_instance, *pts[0].mean_self_instance) << seed;
  }
}

TEST(Sweep, ConfigErrors) {
  const auto sim = simulate(testing_support::sweep_scenario(1));
  const std::vector<double> ok{0.5};
  const std::vector<double> bad{0.4};
  EXPECT_THROW(agreement_sweep(sim.verdicts, {sim.judges[0]}, ok, sim.reference, sim.registry, sim.generators,
                               sim.dataset, {}),
               ConfigError);
  EXPECT_THROW(agreement_sweep(sim.verdicts, sim.judges, bad, sim.reference, sim.registry, sim.generators,
                               sim.dataset, {}),
               ConfigError);
}

TEST(Sweep, RelabelingInvariance) {
  auto c = random_corpus(17, {3, 5, 20, 4, 0.0});
  if (c.judges.size() < 2) c = random_corpus(18, {3, 5, 20, 4, 0.0});
  auto flipped = c.verdicts;
  for (auto& v : flipped) v.met = !v.met;
  const auto a = tally_votes(c.verdicts, c.judges), b = tally_votes(flipped, c.judges);
  for (const auto& [k, v] : a)
    EXPECT_EQ(pairwise_agreement(v.met, v.unmet), pairwise_agreement(b.at(k).met, b.at(k).unmet));
}

TEST(DeltaMatrix, HandCase) {
  SystemScores sys{{{"j", "a"}, 0.6}, {{"j", "b"}, 0.5}};
  const auto m = centered_delta_matrix(sys, {{"a", 0.5}, {"b", 0.5}}, {"j"}, {"a", "b"});
  EXPECT_DOUBLE_EQ(m.cells[0][0], 0.05);
  EXPECT_DOUBLE_EQ(m.cells[0][1], -0.05);
  EXPECT_DOUBLE_EQ(m.mean_bias[0], 0.05);
  EXPECT_DOUBLE_EQ(m.display(0, 0), 5.0);
}

TEST(DeltaMatrix, RowsCenterAndUniformBiasCancels) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  const std::vector<ModelId> judges{"j0", "j1", "j2"}, gens{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 200; ++trial) {
    std::map<ModelId, double> ref;
    SystemScores sys, shifted;
    for (const auto& g : gens) ref[g] = u(rng);
    for (const auto& j : judges)
      for (const auto& g : gens) {
        sys[{j, g}] = u(rng);
        shifted[{j, g}] = sys[{j, g}] + (j == "j1" ? 0.37 : 0.0);
      }
    sys[{"j2", "a"}] = ref["a"] + 0.05;
    for (const auto& g : gens) sys[{"j2", g}] = ref[g] + 0.05;
    const auto m = centered_delta_matrix(sys, ref, judges, gens);
    const auto s = centered_delta_matrix(shifted, ref, judges, gens);
    for (std::size_t j = 0; j < judges.size(); ++j) {
      double sum = 0;
      for (double x : m.cells[j]) sum += x;
      EXPECT_NEAR(sum, 0.0, 1e-9);
    }
    for (double x : m.cells[2]) EXPECT_NEAR(x, 0.0, 1e-12);
    for (std::size_t g = 0; g < gens.size(); ++g) EXPECT_NEAR(m.cells[1][g] - s.cells[1][g], 0.0, 1e-9) << "shift";
  }
}

TEST(DeltaMatrix, MissingCellsListed) {
  SystemScores sys{{{"j", "a"}, 0.6}};
  try {
    centered_delta_matrix(sys, {{"a", 0.5}}, {"j"}, {"a", "b"});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("j/b"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("reference/b"), std::string::npos);
  }
}

TEST(Slices, PolarityExcludesNegatives) {
  auto sc = testing_support::committee_scenario(2);
  sc.negative_rubric_share = 0.3;
  const auto sim = simulate(sc);
  const auto b = slice_buckets(sim.dataset, {SliceDimension::polarity});
  std::size_t positive = 0;
  for (const auto& inst : sim.dataset)
    for (const auto& r : inst.rubrics) {
      const auto& m = b.membership.at({inst.instance_id, r.rubric_id});
      EXPECT_EQ(std::count(m.begin(), m.end(), 1u) == 1, r.weight > 0);
      positive += r.weight > 0;
    }
  EXPECT_GT(positive, 0u);
}

TEST(Slices, SextilesAreNearEqual) {
  for (int n_inst : {7, 50, 101}) {
    auto sc = testing_support::committee_scenario(n_inst);
    sc.n_instances = n_inst;
    sc.rubrics_per_instance = 3;
    const auto sim = simulate(sc);
    const auto sext = rubric_sextiles(sim.dataset);
    std::vector<int> counts(6, 0);
    for (const auto& [k, s] : sext) ++counts[s];
    EXPECT_LE(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()), 1);
    // Longer rubrics never land in an earlier sextile.
    std::map<std::pair<std::string, std::string>, std::int64_t> len;
    for (const auto& inst : sim.dataset)
      for (const auto& r : inst.rubrics) len[{inst.instance_id, r.rubric_id}] = text::count_words(r.text);
    for (const auto& [a, sa] : sext)
      for (const auto& [b, sb] : sext)
        if (len[a] < len[b]) EXPECT_LE(sa, sb);
  }
}

TEST(Slices, PartitionSumsToUnsliced) {
  const auto sim = simulate(testing_support::sweep_scenario(9));
  for (auto dim : {SliceDimension::length_bucket, SliceDimension::axis, SliceDimension::theme}) {
    const auto res = slice_hspp(sim.verdicts, sim.judges, sim.reference, sim.registry, sim.generators, sim.dataset,
                                {dim});
    for (std::size_t ji = 0; ji < sim.judges.size(); ++ji) {
      const auto whole = rubric_overestimation_table(index_verdicts(sim.verdicts, sim.judges[ji], Paradigm::SR),
                                                     sim.reference);
      for (const auto& g : sim.generators) {
        RateCell sum;
        for (const auto& b : res.buckets) {
          auto it = b.judges[ji].overestimation.find(g);
          if (it != b.judges[ji].overestimation.end()) sum += it->second;
        }
        EXPECT_EQ(sum, whole.at(g)) << to_string(dim);
      }
    }
  }
}

TEST(Slices, SingleBucketReproducesDefault) {
  auto sim = simulate(testing_support::sweep_scenario(4));
  for (auto& inst : sim.dataset)
    for (auto& r : inst.rubrics) r.axis = "only";
  const auto res = slice_hspp(sim.verdicts, sim.judges, sim.reference, sim.registry, sim.generators, sim.dataset,
                              {SliceDimension::axis});
  ASSERT_EQ(res.buckets.size(), 1u);
  for (std::size_t ji = 0; ji < sim.judges.size(); ++ji) {
    const auto part = partition_generators(sim.judges[ji], sim.generators, sim.registry);
    const auto whole = rubric_level_metrics(index_verdicts(sim.verdicts, sim.judges[ji], Paradigm::SR),
                                            sim.reference, part);
    EXPECT_EQ(res.buckets[0].judges[ji].hspp.self_ratio, whole.hspp.self_ratio);
  }
  const auto pol = slice_hspp(sim.verdicts, sim.judges, sim.reference, sim.registry, sim.generators, sim.dataset,
                              {SliceDimension::polarity});
  for (std::size_t ji = 0; ji < sim.judges.size(); ++ji) {
    const auto part = partition_generators(sim.judges[ji], sim.generators, sim.registry);
    EXPECT_EQ(pol.buckets[0].judges[ji].hspp.self_ratio,
              rubric_level_metrics(index_verdicts(sim.verdicts, sim.judges[ji], Paradigm::SR), sim.reference, part)
                  .hspp.self_ratio);
  }
}

TEST(Slices, MeanAndMaxJudge) {
  const auto sim = simulate(testing_support::sweep_scenario(6));
  const auto res = slice_hspp(sim.verdicts, sim.judges, sim.reference, sim.registry, sim.generators, sim.dataset,
                              {SliceDimension::length_bucket});
  ASSERT_EQ(res.buckets.size(), 3u);
  for (const auto& b : res.buckets) {
    std::vector<double> v;
    for (const auto& c : b.judges)
      if (auto d = as_double(c.hspp.self_ratio)) v.push_back(*d);
    ASSERT_FALSE(v.empty());
    EXPECT_DOUBLE_EQ(*b.max_self, *std::max_element(v.begin(), v.end()));
    EXPECT_NEAR(*b.mean_self, std::accumulate(v.begin(), v.end(), 0.0) / v.size(), 1e-12);
  }
  EXPECT_THROW(parse_slice_dimension("length"), ConfigError);
}
