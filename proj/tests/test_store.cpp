#include <gtest/gtest.h>

#include <thread>

#include "spb/store.hpp"
#include "support/tmpdir.hpp"

using namespace spb;
using testing_support::fixture;
using testing_support::read_file;
using testing_support::TempDir;
using testing_support::write_file;

namespace {

const char* kInstance =
    R"({"schema":"spb.dataset/1","instance_id":"a","conversation":[{"role":"user","content":"hi"}],)"
    R"("rubrics":[{"rubric_id":"r1","text":"be brief","weight":2.5,"axis":"completeness","theme":"odd/theme"}]})";

LogRecord sr(const std::string& gen, const std::string& inst, const std::string& rubric, bool met,
             const std::string& judge = "j") {
  return {RubricVerdict{judge, gen, inst, rubric, met, Paradigm::SR, std::nullopt},
          {"objective/SR/1", "abc", "2025-01-01T00:00:00Z", "{\"criteria_met\": true}", std::nullopt}};
}

}  // namespace

TEST(Dataset, LoadsFixture) {
  const auto ds = load_dataset(fixture("dataset.jsonl"));
  ASSERT_EQ(ds.size(), 20u);
  for (const auto& inst : ds) {
    EXPECT_GE(inst.rubrics.size(), 1u);
    EXPECT_LE(inst.rubrics.size(), 3u);
    for (const auto& r : inst.rubrics) EXPECT_TRUE(r.verifier.has_value());
  }
}

TEST(Dataset, EmptyFileWarnsAndLoadsNothing) {
  TempDir dir;
  write_file(dir / "d.jsonl", "");
  std::vector<std::string> warnings;
  auto saved = warning_sink();
  warning_sink() = [&](std::string_view m) { warnings.emplace_back(m); };
  const auto ds = load_dataset(dir / "d.jsonl");
  warning_sink() = saved;
  EXPECT_TRUE(ds.empty());
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Dataset, MissingRubricsNamesField) {
  TempDir dir;
  write_file(dir / "d.jsonl",
             std::string(kInstance) + "\n" +
                 R"({"schema":"spb.dataset/1","instance_id":"b","conversation":[{"role":"user","content":"x"}]})" +
                 "\n");
  try {
    load_dataset(dir / "d.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("'rubrics'"), std::string::npos);
  }
}

TEST(Dataset, ValidationErrors) {
  TempDir dir;
  auto load = [&](const std::string& body) {
    write_file(dir / "d.jsonl", body + "\n");
    return load_dataset(dir / "d.jsonl");
  };
  const std::string head = R"({"schema":"spb.dataset/1","instance_id":"a",)";
  const std::string user = R"("conversation":[{"role":"user","content":"hi"}],)";
  EXPECT_THROW(load(head + user + R"("rubrics":[{"rubric_id":"r","text":"t"},{"rubric_id":"r","text":"u"}]})"),
               ValidationError);
  EXPECT_THROW(load(head + user + R"("rubrics":[{"rubric_id":"r","text":"t","weight":0}]})"), ValidationError);
  EXPECT_THROW(load(head + user + R"("rubrics":[]})"), ValidationError);
  EXPECT_THROW(load(head + R"("conversation":[],"rubrics":[{"rubric_id":"r","text":"t"}]})"), ValidationError);
  EXPECT_THROW(load(head +
                    R"("conversation":[{"role":"user","content":"q"},{"role":"assistant","content":"a"}],)"
                    R"("rubrics":[{"rubric_id":"r","text":"t"}]})"),
               ValidationError);
  EXPECT_THROW(load(head + user + R"("rubrics":[{"rubric_id":"r","text":"t","verifier":{"kind":"min_words","n":-1}}]})"),
               ValidationError);
  EXPECT_THROW(load(std::string(kInstance) + "\n" + kInstance), ValidationError);
  EXPECT_THROW(load("{not json"), ParseError);
  EXPECT_THROW(load(R"({"schema":"spb.dataset/9","instance_id":"a"})"), VersionError);
}

TEST(Dataset, RoundTripPreservesEverything) {
  TempDir dir;
  write_file(dir / "d.jsonl", std::string(kInstance) + "\n");
  auto ds = load_dataset(dir / "d.jsonl");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].rubrics[0].weight, 2.5);
  EXPECT_EQ(ds[0].rubrics[0].theme, "odd/theme");
  const auto fx = load_dataset(fixture("dataset.jsonl"));
  ds.insert(ds.end(), fx.begin(), fx.end());
  save_dataset(dir / "e.jsonl", ds);
  EXPECT_EQ(load_dataset(dir / "e.jsonl"), ds);
}

TEST(Outputs, FixtureCount) {
  const auto ds = load_dataset(fixture("dataset.jsonl"));
  const auto outs = load_outputs(fixture("outputs.jsonl"), &ds);
  EXPECT_EQ(outs.size(), 60u);
  EXPECT_EQ(generators_of(outs), (Roster{"gemma-27b", "llama-maverick", "qwen-235b"}));
}

TEST(Outputs, DuplicateAndUnknownInstance) {
  TempDir dir;
  const auto ds = load_dataset(fixture("dataset.jsonl"));
  const std::string line = R"({"schema":"spb.outputs/1","instance_id":"i01","generator":"g","completion":"x"})";
  write_file(dir / "o.jsonl", line + "\n" + line + "\n");
  EXPECT_THROW(load_outputs(dir / "o.jsonl"), ValidationError);
  write_file(dir / "o.jsonl", R"({"schema":"spb.outputs/1","instance_id":"zz","generator":"g","completion":"x"})");
  EXPECT_NO_THROW(load_outputs(dir / "o.jsonl"));
  EXPECT_THROW(load_outputs(dir / "o.jsonl", &ds), CrossReferenceError);
}

TEST(Outputs, CompletionWithNewlinesAndJsonRoundTrips) {
  TempDir dir;
  std::vector<GeneratorOutput> outs{{"i01", "g", "line one\nline two\n\n{\"k\": [1, \"two\"]}\t\\ end \xc3\xa9"}};
  save_outputs(dir / "o.jsonl", outs);
  EXPECT_EQ(load_outputs(dir / "o.jsonl"), outs);
}

TEST(Registry, FixtureAndConflicts) {
  const auto reg = load_registry(fixture("registry.jsonl"));
  EXPECT_EQ(reg.family_of("gemma-27b"), "gemma");
  TempDir dir;
  write_file(dir / "r.jsonl", R"({"schema":"spb.registry/1","model":"a","family":"x"})"
                              "\n"
                              R"({"schema":"spb.registry/1","model":"a","family":"y"})"
                              "\n");
  EXPECT_THROW(load_registry(dir / "r.jsonl"), RegistryError);
  save_registry(dir / "s.jsonl", reg);
  EXPECT_EQ(load_registry(dir / "s.jsonl"), reg);
}

TEST(VerdictLog, AppendTenThenReadInOrder) {
  TempDir dir;
  std::vector<LogRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(sr("g", "x" + std::to_string(i), "r", i % 2 == 0));
  const auto log = append_verdicts(VerdictLog{}, recs);
  write_verdicts(dir / "v.jsonl", log);
  const auto back = read_verdicts(dir / "v.jsonl");
  ASSERT_EQ(back.size(), 10u);
  EXPECT_EQ(back.records(), recs);
}

TEST(VerdictLog, DuplicateKeyRejected) {
  VerdictLog log;
  log.append(sr("g", "x", "r", true));
  EXPECT_THROW(log.append(sr("g", "x", "r", false)), ValidationError);
  // Same unit under another paradigm is a different key.
  auto ar = sr("g", "x", "r", true);
  std::get<RubricVerdict>(ar.payload).paradigm = Paradigm::AR;
  EXPECT_NO_THROW(log.append(ar));
}

TEST(VerdictLog, DuplicateInFileReportsLine) {
  TempDir dir;
  VerdictLog log;
  log.append(sr("g", "x", "r", true));
  write_verdicts(dir / "v.jsonl", log);
  const auto line = read_file(dir / "v.jsonl");
  write_file(dir / "v.jsonl", line + line);
  try {
    read_verdicts(dir / "v.jsonl");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(VerdictLog, MixedShapesRoundTrip) {
  TempDir dir;
  VerdictLog log;
  log.append(sr("g", "x", "r", true));
  log.append({PairwiseRun{"j", "g", "h", "x", RunOutcome::second}, {"objective/PWC/1", "h1", "t", "raw", {}}});
  log.append({InstanceScore{"j", "g", "x", Fraction(2, 4), ScoreSource::DA}, {"objective/DA/1", "h2", "t", "raw", {}}});
  log.append({PairwiseRun{"j", "h", "g", "x", RunOutcome::tie}, {"objective/PWC/1", "h3", "t", "raw", {}}});
  log.append({RubricVerdict{"j", "g", "x", "r2", false, Paradigm::SR, std::nullopt},
              {"objective/SR/1", "h4", "t", "garbage", std::string("unparseable response")}});
  write_verdicts(dir / "v.jsonl", log);
  const auto text = read_file(dir / "v.jsonl");
  const auto back = read_verdicts(dir / "v.jsonl");
  EXPECT_EQ(back, log);
  EXPECT_EQ(back.failed_count(), 1u);
  EXPECT_EQ(back.pairwise_runs().size(), 2u);
  ASSERT_EQ(back.da_scores().size(), 1u);
  EXPECT_EQ(back.da_scores()[0].score.str(), "2/4");
  EXPECT_EQ(back.rubric_verdicts().size(), 1u);
  write_verdicts(dir / "w.jsonl", back);
  EXPECT_EQ(read_file(dir / "w.jsonl"), text);
}

TEST(VerdictLog, SchemaVersionMismatch) {
  TempDir dir;
  write_file(dir / "v.jsonl", R"({"schema":"spb.verdicts/2","kind":"rubric"})"
                              "\n");
  EXPECT_THROW(read_verdicts(dir / "v.jsonl"), VersionError);
}

TEST(VerdictLog, CrossReferenceClosure) {
  const auto ds = load_dataset(fixture("dataset.jsonl"));
  VerdictLog ok;
  ok.append(sr("gemma-27b", "i01", "r1", true, "gemma-27b"));
  EXPECT_NO_THROW(validate_log(ok, ds, {"gemma-27b"}, {"gemma-27b"}));
  EXPECT_THROW(validate_log(ok, ds, {"other"}, {"gemma-27b"}), CrossReferenceError);
  VerdictLog bad;
  bad.append(sr("gemma-27b", "i01", "r9", true, "gemma-27b"));
  EXPECT_THROW(validate_log(bad, ds, {"gemma-27b"}, {"gemma-27b"}), CrossReferenceError);
}

TEST(VerdictStore, ResumesAndSerializesConcurrentAppends) {
  TempDir dir;
  {
    VerdictStore store(dir / "v.jsonl");
    std::vector<std::jthread> threads;
    for (int t = 0; t < 4; ++t)
      threads.emplace_back([&, t] {
        for (int i = 0; i < 50; ++i) store.append(sr("g", "x" + std::to_string(t), std::to_string(i), true));
      });
  }
  VerdictStore again(dir / "v.jsonl");
  EXPECT_EQ(again.snapshot().size(), 200u);
  EXPECT_TRUE(again.has_success(unit_key(sr("g", "x3", "49", true))));
  EXPECT_FALSE(again.has_success(unit_key(sr("g", "x4", "0", true))));
  again.append(sr("g", "x4", "0", true));
  EXPECT_EQ(read_verdicts(dir / "v.jsonl").size(), 201u);
}

TEST(Reference, VerifierReferenceIsConsistent) {
  const auto ds = load_dataset(fixture("dataset.jsonl"));
  const auto outs = load_outputs(fixture("outputs.jsonl"), &ds);
  const auto ref = build_reference_from_verifiers(ds, outs);
  EXPECT_EQ(ref.provenance, Provenance::verifier);
  EXPECT_EQ(ref.score_refs.size(), 60u);
  for (const auto& [k, s] : ref.score_refs) {
    const BenchmarkInstance* inst = nullptr;
    for (const auto& i : ds)
      if (i.instance_id == k.instance_id) inst = &i;
    ASSERT_TRUE(inst);
    std::int64_t met = 0;
    for (const auto& r : inst->rubrics) met += ref.rubric_refs.at({k.generator, k.instance_id, r.rubric_id});
    EXPECT_EQ(s.num * static_cast<std::int64_t>(inst->rubrics.size()), met * s.den);
  }
}

TEST(Reference, RoundTripIsByteStable) {
  TempDir dir;
  const auto ds = load_dataset(fixture("dataset.jsonl"));
  const auto ref = build_reference_from_verifiers(ds, load_outputs(fixture("outputs.jsonl"), &ds));
  save_reference(dir / "a.jsonl", ref);
  const auto back = load_reference(dir / "a.jsonl");
  EXPECT_EQ(back, ref);
  save_reference(dir / "b.jsonl", back);
  EXPECT_EQ(read_file(dir / "a.jsonl"), read_file(dir / "b.jsonl"));
}

TEST(Reference, MixedProvenanceRejected) {
  TempDir dir;
  write_file(dir / "r.jsonl",
             R"({"schema":"spb.reference/1","kind":"score_ref","provenance":"verifier","generator":"g","instance_id":"x","score":"1/2"})"
             "\n"
             R"({"schema":"spb.reference/1","kind":"score_ref","provenance":"committee","generator":"h","instance_id":"x","score":"1/2"})"
             "\n");
  EXPECT_THROW(load_reference(dir / "r.jsonl"), ValidationError);
}

TEST(Reference, MissingVerifierIsCoverageError) {
  Dataset ds{{"a", {{Role::user, "q"}}, {Rubric{"r1", "t", 1.0, {}, {}, {}}, Rubric{"r2", "u", 1.0, {}, {}, {}}}}};
  try {
    build_reference_from_verifiers(ds, std::vector<GeneratorOutput>{{"a", "g", "x"}});
    FAIL();
  } catch (const CoverageError& e) {
    EXPECT_NE(std::string(e.what()).find("a/r1, a/r2"), std::string::npos);
  }
}
