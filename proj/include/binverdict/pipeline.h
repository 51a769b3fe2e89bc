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

// End-to-end wiring: one configuration object, the per-function inference
// loop and the operator commands built on top of it.

#ifndef BINVERDICT_PIPELINE_H_
#define BINVERDICT_PIPELINE_H_

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "binverdict/corpus.h"
#include "binverdict/embedding.h"
#include "binverdict/error.h"
#include "binverdict/ensemble.h"
#include "binverdict/evaluation.h"
#include "binverdict/knowledge_base.h"
#include "binverdict/verdict.h"
#include "json.hpp"

namespace binverdict {

enum class PipelineMode { kFull, kKnnOnly, kZeroShot };

const char* PipelineModeName(PipelineMode mode);
std::optional<PipelineMode> ParsePipelineMode(std::string_view text);

// Environment overrides for endpoint URLs; nothing else reads the
// environment.
inline constexpr const char* kEmbedUrlEnv = "BINVERDICT_EMBED_URL";
inline constexpr const char* kGenerateUrlEnv = "BINVERDICT_GENERATE_URL";

struct PipelineConfig {
  PipelineMode mode = PipelineMode::kFull;
  uint64_t seed = 0;  // feeds the mock embedder and the synthetic agents
  int workers = 1;
  std::string kb_path = "kb.bvkb";
  std::string report_dir = "reports";
  int64_t created_at = 0;  // stamped into the index header
  size_t snippet_cap = kDefaultSnippetCap;

  DcfFilterConfig dcf;
  EmbeddingProviderConfig embedding;
  RetrievalParams retrieval;
  EnsembleConfig ensemble;
  DecisionThresholds thresholds;

  void Validate() const;

  // Sub-configs with the shared seed and mode-specific template applied.
  EmbeddingProviderConfig EffectiveEmbedding() const;
  EnsembleConfig EffectiveEnsemble() const;
};

// Unknown keys are a config error so typos do not go unnoticed. Missing keys
// keep their defaults.
PipelineConfig PipelineConfigFromJson(const nlohmann::json& j,
                                      PipelineConfig base = {});
PipelineConfig LoadPipelineConfig(const std::string& path,
                                  PipelineConfig base = {});
nlohmann::ordered_json ToJson(const PipelineConfig& config);
// Reads kEmbedUrlEnv / kGenerateUrlEnv when set and non-empty.
void ApplyEnvironment(PipelineConfig& config);

struct ClassifyOutput {
  std::vector<BinaryVerdict> binaries;   // order of first appearance
  std::vector<OutcomeRecord> outcomes;   // one per classified function
  std::vector<Exclusion> excluded;       // DCF filter and top-M drops
};

// Runs filter -> top-M -> embed -> retrieve -> ensemble -> decide ->
// aggregate. `index` may be null only in zero_shot mode. Binaries are
// processed on up to config.workers threads; output order follows input.
// `parse_time` is spread evenly over the classified functions as the
// lift-parse stage.
ClassifyOutput ClassifyRecords(const std::vector<FunctionRecord>& records,
                               const KbIndex* index,
                               const PipelineConfig& config,
                               EmbeddingProvider& provider,
                               Generator& generator,
                               std::chrono::nanoseconds parse_time = {});

// Per-function inference on a pre-computed query embedding.
OutcomeRecord ClassifyFunction(const FunctionRecord& record,
                               const CompositeEmbedding& query,
                               const KbIndex* index, PipelineMode mode,
                               const RetrievalParams& retrieval,
                               const EnsembleConfig& ensemble,
                               const DecisionThresholds& thresholds,
                               Generator& generator);

nlohmann::ordered_json VerdictReport(const ClassifyOutput& output,
                                     const PipelineConfig& config);

// ---- Commands ---------------------------------------------------------------
// Each command writes its files under config.report_dir (created on demand)
// and throws binverdict::Error on failure.

struct BuildReport {
  size_t parsed = 0;
  size_t warnings = 0;
  size_t dcf_kept = 0;
  size_t selected = 0;
  size_t indexed = 0;
  size_t malicious = 0;
  size_t benign = 0;
  int dim = 0;
  std::vector<Exclusion> excluded;
};

nlohmann::ordered_json ToJson(const BuildReport& report);

// Writes config.kb_path and build_report.json. Parse errors or unlabeled
// records abort the build before anything is written.
BuildReport CmdBuildKb(const PipelineConfig& config,
                       const std::string& corpus_path);

// verdicts.json + latency.csv.
ClassifyOutput CmdClassify(const PipelineConfig& config,
                           const std::string& input_path);

// Classification of a labelled set plus metrics.json, diagnostics.csv,
// tradeoff.csv, scatter.csv, confidence.csv and latency.csv.
ClassifyOutput CmdEvaluate(const PipelineConfig& config,
                           const std::string& labeled_path);

SweepGrid LoadSweepGrid(const std::string& path);

// calibration.csv + chosen_config.json. Validation binaries that also occur
// in the knowledge base are a data error listing the shared ids.
std::vector<CalibrationRow> CmdCalibrate(const PipelineConfig& config,
                                         const std::string& validation_path,
                                         const SweepGrid& grid,
                                         const CalibrationObjective& objective);

// Scenario file: {"n_agents": 5, "scenarios": [{"p_malicious", "context_w",
// "repetitions"}, ...]}. n_agents falls back to the ensemble config.
std::vector<SimulationResult> CmdSimulate(const PipelineConfig& config,
                                          const std::string& scenario_path);

// One CSV row per parsed record, unfiltered. Returns the row count.
size_t CmdExportEmbeddings(const PipelineConfig& config,
                           const std::string& corpus_path,
                           const std::string& out_path);

// kb.jsonl, test.jsonl and (when requested) validation.jsonl.
void CmdGenerateSynthetic(const SyntheticCorpusConfig& synthetic,
                          const std::string& out_dir);

// Process exit code for an error kind: 2 config, 3 data, 4 transport.
int ExitCodeFor(ErrorKind kind);

}  // namespace binverdict

#endif  // BINVERDICT_PIPELINE_H_
