// Copyright 2026 The binverdict Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "binverdict/pipeline.h"

#include <gtest/gtest.h>
#include <stdlib.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "test_util.h"

namespace binverdict {
namespace {

using testing::ReadAll;
using testing::TempDir;
using testing::WriteAll;

const std::string kSample = std::string(BINVERDICT_DATA_DIR) + "/sample_functions.jsonl";

PipelineConfig BaseConfig(const TempDir& dir) {
  PipelineConfig c;
  c.seed = 7;
  c.kb_path = dir.File("kb.bvkb");
  c.report_dir = dir.File("reports");
  return c;
}

std::vector<FunctionRecord> SampleRecords() {
  return ParseFunctionRecordsFile(kSample).records;
}

// Copies every record under a new binary id, optionally relabelled.
std::string Renamed(const std::string& from_binary, const std::string& to_binary,
                    const TempDir& dir, const std::string& name) {
  std::ostringstream out;
  for (FunctionRecord r : SampleRecords()) {
    if (r.binary_id != from_binary) continue;
    r.binary_id = to_binary;
    WriteFunctionRecord(out, r);
  }
  WriteAll(dir.File(name), out.str());
  return dir.File(name);
}

TEST(ConfigTest, JsonOverridesAndRejectsUnknownKeys) {
  auto c = PipelineConfigFromJson(nlohmann::json::parse(R"({
      "mode": "knn_only", "seed": 11,
      "retrieval": {"k": 20, "balance": true},
      "thresholds": {"tau_stable": 0.9},
      "ensemble": {"synthetic_p_malicious": null}})"));
  EXPECT_EQ(c.mode, PipelineMode::kKnnOnly);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.retrieval.k, 20);
  EXPECT_TRUE(c.retrieval.balance);
  EXPECT_DOUBLE_EQ(c.thresholds.tau_stable, 0.9);
  EXPECT_DOUBLE_EQ(c.thresholds.delta_high, 0.60);  // untouched default
  EXPECT_FALSE(c.ensemble.synthetic_p_malicious.has_value());

  try {
    PipelineConfigFromJson(nlohmann::json::parse(R"({"retrieval": {"kk": 3}})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_NE(std::string(e.what()).find("kk"), std::string::npos);
  }
  EXPECT_THROW(PipelineConfigFromJson(nlohmann::json::parse(R"({"mode": "fast"})")),
               Error);
  EXPECT_THROW(PipelineConfigFromJson(nlohmann::json::parse(R"({"seed": "x"})")),
               Error);
}

TEST(ConfigTest, RoundTripsThroughJson) {
  PipelineConfig c;
  c.mode = PipelineMode::kZeroShot;
  c.retrieval.sigma_min = 0.65;
  c.ensemble.synthetic_p_malicious = 0.25;
  auto back = PipelineConfigFromJson(nlohmann::json::parse(ToJson(c).dump()));
  EXPECT_EQ(ToJson(back).dump(), ToJson(c).dump());
}

TEST(ConfigTest, EnvironmentSetsEndpoints) {
  ::setenv(kEmbedUrlEnv, "http://embed.local/api", 1);
  ::setenv(kGenerateUrlEnv, "http://gen.local/api", 1);
  PipelineConfig c;
  ApplyEnvironment(c);
  EXPECT_EQ(c.embedding.endpoint_url, "http://embed.local/api");
  EXPECT_EQ(c.ensemble.endpoint_url, "http://gen.local/api");
  ::unsetenv(kEmbedUrlEnv);
  ::unsetenv(kGenerateUrlEnv);
}

TEST(ConfigTest, ZeroShotSwitchesTemplate) {
  PipelineConfig c;
  EXPECT_EQ(c.EffectiveEnsemble().prompt_template_id, kGroundedTemplate);
  c.mode = PipelineMode::kZeroShot;
  c.seed = 3;
  EXPECT_EQ(c.EffectiveEnsemble().prompt_template_id, kZeroShotTemplate);
  EXPECT_EQ(c.EffectiveEnsemble().seed, 3u);
  EXPECT_EQ(c.EffectiveEmbedding().corpus_seed, 3u);
}

TEST(BuildKbTest, CountsMatchHandRecount) {
  TempDir dir("build");
  BuildReport r = CmdBuildKb(BaseConfig(dir), kSample);
  // dropper_01: 3 of 4 pass (sub_401600 has 2 instructions);
  // updater_02: 2 of 3 (log_line has complexity 3); editor_03: 3 of 3.
  EXPECT_EQ(r.parsed, 10u);
  EXPECT_EQ(r.dcf_kept, 8u);
  EXPECT_EQ(r.indexed, 8u);
  EXPECT_EQ(r.malicious, 3u);
  EXPECT_EQ(r.benign, 5u);
  EXPECT_EQ(r.dim, 128);
  ASSERT_EQ(r.excluded.size(), 2u);
  EXPECT_EQ(r.excluded[0].function_id, "sub_401600");
  EXPECT_EQ(r.excluded[1].function_id, "log_line");

  KbIndex index = LoadIndex(dir.File("kb.bvkb"));
  EXPECT_EQ(index.size(), 8u);
  EXPECT_EQ(index.meta().corpus_seed, 7u);
  auto report = nlohmann::json::parse(ReadAll(dir.File("reports/build_report.json")));
  EXPECT_EQ(report["indexed"], 8);
}

TEST(BuildKbTest, UnlabeledRecordAborts) {
  TempDir dir("unlabeled");
  auto records = SampleRecords();
  records[4].label = Label::kUnknown;
  std::ostringstream out;
  for (const auto& r : records) WriteFunctionRecord(out, r);
  WriteAll(dir.File("corpus.jsonl"), out.str());
  try {
    CmdBuildKb(BaseConfig(dir), dir.File("corpus.jsonl"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
    EXPECT_NE(std::string(e.what()).find("updater_02/check_version"),
              std::string::npos);
  }
  EXPECT_FALSE(std::filesystem::exists(dir.File("kb.bvkb")));
}

TEST(BuildKbTest, MalformedLineAborts) {
  TempDir dir("malformed");
  WriteAll(dir.File("corpus.jsonl"), ReadAll(kSample) + "{not json\n");
  try {
    CmdBuildKb(BaseConfig(dir), dir.File("corpus.jsonl"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
    EXPECT_NE(std::string(e.what()).find("11"), std::string::npos);
  }
}

TEST(BuildKbTest, RebuildIsByteIdentical) {
  TempDir dir("rebuild");
  PipelineConfig c = BaseConfig(dir);
  CmdBuildKb(c, kSample);
  const std::string first = ReadAll(c.kb_path);
  c.workers = 3;
  CmdBuildKb(c, kSample);
  EXPECT_EQ(ReadAll(c.kb_path), first);
}

TEST(ClassifyTest, CertainAgentsOnKnownMalware) {
  TempDir dir("classify");
  PipelineConfig c = BaseConfig(dir);
  CmdBuildKb(c, kSample);
  const std::string input = Renamed("dropper_01", "probe_mal", dir, "probe.jsonl");
  c.ensemble.synthetic_p_malicious = 1.0;
  ClassifyOutput out = CmdClassify(c, input);
  ASSERT_EQ(out.binaries.size(), 1u);
  EXPECT_EQ(out.binaries[0].verdict, Verdict::kMalicious);
  ASSERT_EQ(out.outcomes.size(), 3u);
  for (const auto& o : out.outcomes) {
    EXPECT_EQ(o.tuple.verdict, Verdict::kMalicious);
    EXPECT_EQ(o.tuple.ecs, 0.0);
    EXPECT_EQ(o.tuple.evidence.agent_votes.size(), 5u);
    ASSERT_FALSE(o.tuple.evidence.neighbor_ids.empty());
    EXPECT_EQ(o.tuple.evidence.neighbor_ids[0], "dropper_01/" + o.function_id);
    EXPECT_TRUE(o.stage_latencies.count(Stage::kEnsemble));
  }
  auto verdicts = nlohmann::json::parse(ReadAll(dir.File("reports/verdicts.json")));
  EXPECT_EQ(verdicts["binaries"][0]["verdict"], "malicious");
  EXPECT_EQ(verdicts["excluded"].size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(dir.File("reports/latency.csv")));
}

TEST(ClassifyTest, KnnOnlySkipsEnsemble) {
  TempDir dir("knn");
  PipelineConfig c = BaseConfig(dir);
  CmdBuildKb(c, kSample);
  c.mode = PipelineMode::kKnnOnly;
  ClassifyOutput out = CmdClassify(c, Renamed("editor_03", "probe_ben", dir, "p.jsonl"));
  ASSERT_EQ(out.binaries.size(), 1u);
  EXPECT_EQ(out.binaries[0].verdict, Verdict::kBenign);
  for (const auto& o : out.outcomes) {
    EXPECT_FALSE(o.stage_latencies.count(Stage::kEnsemble));
    EXPECT_TRUE(o.stage_latencies.count(Stage::kRetrieve));
    ASSERT_TRUE(o.knn.has_value());
    EXPECT_EQ(o.knn->label, Label::kBenign);
    EXPECT_TRUE(o.tuple.evidence.agent_votes.empty());
  }
  EXPECT_EQ(ReadAll(dir.File("reports/latency.csv")).find("ensemble"),
            std::string::npos);
}

TEST(ClassifyTest, SplitVotesAreRejected) {
  TempDir dir("split");
  PipelineConfig c = BaseConfig(dir);
  CmdBuildKb(c, kSample);
  c.ensemble.synthetic_p_malicious = 0.5;
  ClassifyOutput out = CmdClassify(c, kSample);
  size_t rejected = 0;
  for (const auto& o : out.outcomes) {
    if (o.tuple.ecs >= c.thresholds.tau_stable) {
      EXPECT_EQ(o.tuple.verdict, Verdict::kUncertain);
      EXPECT_EQ(o.tuple.reason, Reason::kEntropyReject);
      ++rejected;
    }
  }
  EXPECT_GT(rejected, 0u);
}

TEST(ClassifyTest, NoSurvivingFunctionIsNoEvidence) {
  TempDir dir("empty");
  PipelineConfig c = BaseConfig(dir);
  CmdBuildKb(c, kSample);
  c.dcf.min_instr = 1000;
  ClassifyOutput out = CmdClassify(c, kSample);
  ASSERT_EQ(out.binaries.size(), 3u);
  for (const auto& b : out.binaries) {
    EXPECT_EQ(b.verdict, Verdict::kUncertain);
    EXPECT_EQ(b.reason, Reason::kNoEvidence);
  }
  EXPECT_EQ(out.excluded.size(), 10u);
}

TEST(ClassifyTest, TopMDropsAreReported) {
  TempDir dir("topm");
  PipelineConfig c = BaseConfig(dir);
  CmdBuildKb(c, kSample);
  c.dcf.top_m = 1;
  ClassifyOutput out = CmdClassify(c, kSample);
  EXPECT_EQ(out.outcomes.size(), 3u);
  // 2 filtered plus 5 ranked below the top function of their binary.
  EXPECT_EQ(out.excluded.size(), 7u);
}

TEST(ClassifyTest, IndexDimensionMismatchIsConfigError) {
  TempDir dir("dim");
  PipelineConfig c = BaseConfig(dir);
  CmdBuildKb(c, kSample);
  c.embedding.dim = 32;
  try {
    CmdClassify(c, kSample);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(EvaluateTest, WritesReportsReproducibly) {
  TempDir dir("evaluate");
  PipelineConfig c = BaseConfig(dir);
  CmdBuildKb(c, kSample);
  const std::string input = Renamed("dropper_01", "probe_mal", dir, "probe.jsonl");
  CmdEvaluate(c, input);
  for (const char* name : {"verdicts.json", "metrics.json", "diagnostics.csv",
                           "scatter.csv", "confidence.csv", "tradeoff.csv",
                           "latency.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir.File(std::string("reports/") + name)))
        << name;
  }
  const std::string verdicts = ReadAll(dir.File("reports/verdicts.json"));
  const std::string metrics = ReadAll(dir.File("reports/metrics.json"));
  c.workers = 4;
  CmdEvaluate(c, input);
  EXPECT_EQ(ReadAll(dir.File("reports/verdicts.json")), verdicts);
  EXPECT_EQ(ReadAll(dir.File("reports/metrics.json")), metrics);
}

TEST(EvaluateTest, KnnOnlyOmitsTradeoff) {
  TempDir dir("eval_knn");
  PipelineConfig c = BaseConfig(dir);
  CmdBuildKb(c, kSample);
  c.mode = PipelineMode::kKnnOnly;
  CmdEvaluate(c, Renamed("editor_03", "probe", dir, "p.jsonl"));
  EXPECT_FALSE(std::filesystem::exists(dir.File("reports/tradeoff.csv")));
  auto metrics = nlohmann::json::parse(ReadAll(dir.File("reports/metrics.json")));
  EXPECT_EQ(metrics["confidence"]["applicable"], true);
}

TEST(CalibrateTest, SingletonGridAndOverlap) {
  TempDir dir("calibrate");
  PipelineConfig c = BaseConfig(dir);
  CmdBuildKb(c, kSample);
  const std::string val = Renamed("dropper_01", "val_mal", dir, "val.jsonl");
  SweepGrid grid{{10}, {0.7}, {5}, {0.7}, {0.6}, {0.4}, {0.8}};
  auto rows = CmdCalibrate(c, val, grid, {});
  EXPECT_EQ(rows.size(), 1u);
  const std::string csv = ReadAll(dir.File("reports/calibration.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  auto chosen = nlohmann::json::parse(ReadAll(dir.File("reports/chosen_config.json")));
  EXPECT_EQ(chosen["retrieval"]["k"], 10);

  try {
    CmdCalibrate(c, kSample, grid, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("dropper_01"), std::string::npos);
    EXPECT_NE(msg.find("editor_03"), std::string::npos);
  }
}

TEST(CalibrateTest, GridFile) {
  TempDir dir("grid");
  WriteAll(dir.File("grid.json"), R"({"k": [5, 10], "tau_stable": [0.8]})");
  SweepGrid g = LoadSweepGrid(dir.File("grid.json"));
  EXPECT_EQ(g.k_values, (std::vector<int>{5, 10}));
  EXPECT_EQ(g.size(), 2u * 4 * 5 * 5 * 4 * 4 * 1);
  WriteAll(dir.File("bad.json"), R"({"k": []})");
  EXPECT_THROW(LoadSweepGrid(dir.File("bad.json")), Error);
}

TEST(SimulateTest, ScenarioFile) {
  TempDir dir("simulate");
  PipelineConfig c = BaseConfig(dir);
  WriteAll(dir.File("s.json"), R"({"n_agents": 5, "scenarios": [
      {"p_malicious": 1.0, "context_w": 0.9, "repetitions": 200},
      {"p_malicious": 0.9, "context_w": 0.5, "repetitions": 200}]})");
  auto results = CmdSimulate(c, dir.File("s.json"));
  ASSERT_EQ(results.size(), 2u);
  EXPECT_EQ(results[0].malicious, 200u);
  EXPECT_EQ(results[1].malicious, 0u);
  const std::string first = ReadAll(dir.File("reports/simulation.csv"));
  CmdSimulate(c, dir.File("s.json"));
  EXPECT_EQ(ReadAll(dir.File("reports/simulation.csv")), first);
  WriteAll(dir.File("bad.json"), R"({"scenarios": [{"p": 1}]})");
  EXPECT_THROW(CmdSimulate(c, dir.File("bad.json")), Error);
}

TEST(ExportTest, OneRowPerRecord) {
  TempDir dir("export");
  PipelineConfig c = BaseConfig(dir);
  const std::string input = Renamed("editor_03", "e", dir, "e.jsonl");
  EXPECT_EQ(CmdExportEmbeddings(c, input, dir.File("a.csv")), 3u);
  CmdExportEmbeddings(c, input, dir.File("b.csv"));
  const std::string a = ReadAll(dir.File("a.csv"));
  EXPECT_EQ(a, ReadAll(dir.File("b.csv")));
  std::istringstream in(a);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ',') + 1, 128 + 3);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 4);
}

TEST(SyntheticTest, WritesSplits) {
  TempDir dir("synthetic");
  SyntheticCorpusConfig sc;
  sc.kb_size = 20;
  sc.test_size = 10;
  sc.validation_size = 10;
  CmdGenerateSynthetic(sc, dir.path().string());
  for (const char* name : {"kb.jsonl", "test.jsonl", "validation.jsonl"}) {
    auto parsed = ParseFunctionRecordsFile(dir.File(name));
    EXPECT_TRUE(parsed.errors.empty()) << name;
    EXPECT_FALSE(parsed.records.empty()) << name;
  }
}

int RunCli(const std::string& args) {
  const std::string cmd = std::string(BINVERDICT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliTest, ExitCodes) {
  TempDir dir("cli");
  const std::string common =
      "--seed 7 --kb " + dir.File("kb.bvkb") + " --report-dir " + dir.File("r");
  EXPECT_EQ(RunCli(common + " build-kb " + kSample), 0);
  EXPECT_EQ(RunCli(common + " classify " + kSample), 0);
  EXPECT_TRUE(std::filesystem::exists(dir.File("r/verdicts.json")));
  EXPECT_EQ(RunCli(common + " --mode fast classify " + kSample), 2);
  EXPECT_EQ(RunCli("--bogus classify x"), 2);
  EXPECT_EQ(RunCli(common + " classify " + dir.File("missing.jsonl")), 3);

  WriteAll(dir.File("corrupt.bvkb"), "not an index");
  EXPECT_EQ(RunCli("--kb " + dir.File("corrupt.bvkb") + " --report-dir " +
                   dir.File("r") + " classify " + kSample),
            3);

  WriteAll(dir.File("remote.json"),
           R"({"embedding": {"mode": "remote", "timeout_ms": 300, "retries": 0}})");
  const std::string env = std::string(kEmbedUrlEnv) + "=http://127.0.0.1:1/embed ";
  const std::string cmd = env + BINVERDICT_CLI + " --config " + dir.File("remote.json") +
                          " --kb " + dir.File("kb2.bvkb") + " --report-dir " +
                          dir.File("r") + " build-kb " + kSample + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 4);
}

TEST(CliTest, MapsErrorKinds) {
  EXPECT_EQ(ExitCodeFor(ErrorKind::kConfig), 2);
  EXPECT_EQ(ExitCodeFor(ErrorKind::kData), 3);
  EXPECT_EQ(ExitCodeFor(ErrorKind::kIntegrity), 3);
  EXPECT_EQ(ExitCodeFor(ErrorKind::kTransport), 4);
}

}  // namespace
}  // namespace binverdict
