#include <gtest/gtest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "spb/parsers.hpp"
#include "spb/prompts.hpp"
#include "spb/store.hpp"
#include "support/tmpdir.hpp"

using namespace spb;
using testing_support::fixture;
using testing_support::read_file;

namespace {

const BenchmarkInstance& find_instance(const Dataset& ds, const std::string& id) {
  for (const auto& i : ds)
    if (i.instance_id == id) return i;
  throw std::runtime_error("no instance " + id);
}

std::string completion_of(const std::vector<GeneratorOutput>& outs, const std::string& inst, const std::string& gen) {
  for (const auto& o : outs)
    if (o.instance_id == inst && o.generator == gen) return o.completion;
  throw std::runtime_error("no output " + inst + "/" + gen);
}

BenchmarkInstance three_rubrics() {
  BenchmarkInstance inst{"a", {{Role::user, "Say hi."}}, {}};
  for (int k = 1; k <= 3; ++k) inst.rubrics.push_back({"r" + std::to_string(k), "rule " + std::to_string(k), 1.0, {}, {}, {}});
  return inst;
}

}  // namespace

TEST(Prompts, GoldenFilesAreByteIdentical) {
  const auto ds = load_dataset(fixture("dataset.jsonl"));
  const auto outs = load_outputs(fixture("outputs.jsonl"), &ds);
  const auto index = nlohmann::json::parse(read_file(fixture("golden/index.json")));
  ASSERT_EQ(index.size(), 10u);
  for (const auto& e : index) {
    const auto& inst = find_instance(ds, e["instance_id"]);
    const auto paradigm = parse_paradigm(e["paradigm"].get<std::string>());
    const auto style = e["style"] == "health" ? TemplateStyle::health : TemplateStyle::objective;
    std::vector<std::string> completions;
    for (const auto& g : e["generators"]) completions.push_back(completion_of(outs, inst.instance_id, g));
    std::vector<Rubric> rubrics;
    if (e.contains("rubric_id") && !e["rubric_id"].is_null())
      rubrics.push_back(*inst.find_rubric(e["rubric_id"].get<std::string>()));
    else
      rubrics = inst.rubrics;
    const auto got = render_prompt(paradigm, inst, completions, rubrics, style);
    const auto want = read_file(fixture("golden/" + e["file"].get<std::string>()));
    EXPECT_EQ(got, want) << e["file"];
  }
}

TEST(Prompts, LiteralInstructionBlocks) {
  auto inst = three_rubrics();
  const std::vector<std::string> one{"hello"};
  const std::vector<std::string> two{"hello", "bye"};
  const std::vector<Rubric> first{inst.rubrics[0]};
  const auto sr = render_prompt(Paradigm::SR, inst, one, first);
  EXPECT_NE(sr.find("Return a json object with \"criteria_met\" field"), std::string::npos);
  const auto da = render_prompt(Paradigm::DA, inst, one, inst.rubrics);
  EXPECT_NE(da.find("\"score\": \"2/3\""), std::string::npos);
  const auto pwc = render_prompt(Paradigm::PWC, inst, two, inst.rubrics);
  EXPECT_NE(pwc.find("<Response A>"), std::string::npos);
  EXPECT_NE(pwc.find("<Response B>"), std::string::npos);
  EXPECT_EQ(pwc.find("<<"), std::string::npos);
  EXPECT_NE(sr.find("assistant: hello"), std::string::npos);
}

TEST(Prompts, ArityErrors) {
  auto inst = three_rubrics();
  const std::vector<std::string> one{"x"};
  const std::vector<std::string> two{"x", "y"};
  EXPECT_THROW(render_prompt(Paradigm::SR, inst, one, inst.rubrics), ArityError);
  EXPECT_THROW(render_prompt(Paradigm::SR, inst, one, std::span<const Rubric>{}), ArityError);
  EXPECT_THROW(render_prompt(Paradigm::PWC, inst, one, inst.rubrics), ArityError);
  EXPECT_THROW(render_prompt(Paradigm::AR, inst, two, inst.rubrics), ArityError);
}

TEST(Prompts, SlotTextIsNotReinterpreted) {
  auto inst = three_rubrics();
  const std::vector<std::string> one{"<<rubric_items>> and <<conversation>>"};
  const auto ar = render_prompt(Paradigm::AR, inst, one, inst.rubrics);
  EXPECT_NE(ar.find("assistant: <<rubric_items>> and <<conversation>>"), std::string::npos);
}

TEST(Parsers, SingleRubric) {
  EXPECT_FALSE(parse_sr_response("```json {\"criteria_met\": false} ```"));
  EXPECT_FALSE(parse_sr_response("```json\n{\"criteria_met\": false}\n```"));
  EXPECT_TRUE(parse_sr_response(R"({"explanation":"The reply has no commas.","criteria_met":true})"));
  EXPECT_THROW(parse_sr_response("Sure! The answer is yes."), ParseError);
  EXPECT_THROW(parse_sr_response(R"({"met": true})"), SchemaError);
  EXPECT_THROW(parse_sr_response(R"({"criteria_met": "true"})"), SchemaError);
  // Preambles with braces, last object wins.
  EXPECT_TRUE(parse_sr_response("Thinking {draft} ... {\"criteria_met\": false} then {\"criteria_met\": true}"));
}

TEST(Parsers, AllRubrics) {
  EXPECT_EQ(parse_ar_response(
                R"({"results":[{"criteria_met":true},{"criteria_met":false},{"criteria_met":true}]})", 3),
            (std::vector<bool>{true, false, true}));
  EXPECT_EQ(parse_ar_response(R"({"results":[{"criteria_met":true}]})", 1), std::vector<bool>{true});
  EXPECT_THROW(parse_ar_response(R"({"results":[{"criteria_met":true},{"criteria_met":true}]})", 3), SchemaError);
  EXPECT_THROW(parse_ar_response(R"({"answer":[]})", 1), SchemaError);
}

TEST(Parsers, DirectAssessment) {
  auto f = parse_da_response(R"({"score": "2/3"})", 3);
  EXPECT_EQ(f.num, 2);
  EXPECT_EQ(f.den, 3);
  EXPECT_EQ(parse_da_response(R"({"score": "0/3"})", 3).num, 0);
  EXPECT_THROW(parse_da_response(R"({"score": "4/3"})", 3), SchemaError);
  EXPECT_THROW(parse_da_response(R"({"score": "1/2"})", 3), SchemaError);
  EXPECT_THROW(parse_da_response(R"({"score": 0.66})", 3), SchemaError);
  EXPECT_THROW(parse_da_response(R"({"score": "two thirds"})", 3), SchemaError);
}

TEST(Parsers, Pairwise) {
  EXPECT_EQ(parse_pwc_response(R"({"outcome":"B is better"})"), RunOutcome::second);
  EXPECT_EQ(parse_pwc_response(R"({"outcome":"A is better"})"), RunOutcome::first);
  EXPECT_EQ(parse_pwc_response(R"({"outcome":"tie"})"), RunOutcome::tie);
  EXPECT_THROW(parse_pwc_response(R"({"outcome":"both"})"), SchemaError);
  EXPECT_THROW(parse_pwc_response(R"({"outcome":"Tie"})"), SchemaError);
}

TEST(Parsers, TotalOnArbitraryText) {
  std::mt19937_64 rng(99);
  const std::string alphabet = "{}[]\":,\\` \ntrufalse0123/criteria_metscoreoutcomeAB is better\xc3\xa9";
  for (int i = 0; i < 20000; ++i) {
    std::string t;
    const int len = std::uniform_int_distribution<int>(0, 80)(rng);
    for (int k = 0; k < len; ++k) t += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
    if (i % 3 == 0) t = "{\"criteria_met\": " + t;
    auto guard = [&](auto&& f) {
      try {
        f();
      } catch (const DataError&) {
      }
    };
    guard([&] { parse_sr_response(t); });
    guard([&] { parse_ar_response(t, 2); });
    guard([&] { parse_da_response(t, 3); });
    guard([&] { parse_pwc_response(t); });
  }
}

namespace {

// Oracle for one ordered pair of runs: explicit case analysis.
int expected_resolution(int a, int b) {
  if (a == 0 && b == 0) return 0;
  if (a == 0) return b;
  if (b == 0) return a;
  return a == b ? a : 0;
}

}  // namespace

TEST(ResolvePairwise, BasicCases) {
  EXPECT_EQ(resolve_pairwise(Preference::generator, Preference::tie), 1);
  EXPECT_EQ(resolve_pairwise(Preference::generator, Preference::opponent), 0);
  EXPECT_EQ(resolve_pairwise(Preference::tie, Preference::tie), 0);
}

TEST(ResolvePairwise, AllNineCombinationsAndAntisymmetry) {
  const RunOutcome outcomes[] = {RunOutcome::first, RunOutcome::second, RunOutcome::tie};
  int seen = 0;
  for (auto o1 : outcomes)
    for (auto o2 : outcomes) {
      const PairwiseRun ab{"j", "G", "H", "x", o1};
      const PairwiseRun ba{"j", "H", "G", "x", o2};
      const int pg1 = static_cast<int>(preference_for(ab, "G")), pg2 = static_cast<int>(preference_for(ba, "G"));
      const int w_g = resolve_pairwise(preference_for(ab, "G"), preference_for(ba, "G"));
      const int w_h = resolve_pairwise(preference_for(ba, "H"), preference_for(ab, "H"));
      EXPECT_EQ(w_g, expected_resolution(pg1, pg2));
      EXPECT_EQ(w_g, -w_h);
      const std::vector<PairwiseRun> runs{ab, ba};
      const auto r = resolve_runs(runs);
      ASSERT_EQ(r.comparisons.size(), 1u);
      EXPECT_EQ(r.comparisons[0].generator, "G");
      EXPECT_EQ(r.comparisons[0].w, w_g);
      ++seen;
    }
  EXPECT_EQ(seen, 9);
}

TEST(ResolvePairwise, SingleOrderIsIncomplete) {
  const std::vector<PairwiseRun> runs{{"j", "G", "H", "x", RunOutcome::first}, {"j", "G", "H", "y", RunOutcome::tie},
                                      {"j", "H", "G", "y", RunOutcome::second}};
  const auto r = resolve_runs(runs);
  EXPECT_EQ(r.incomplete, 1u);
  ASSERT_EQ(r.comparisons.size(), 1u);
  EXPECT_EQ(r.comparisons[0].instance_id, "y");
  EXPECT_EQ(r.comparisons[0].w, 1);
}
