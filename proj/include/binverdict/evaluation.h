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

// Metrics and reports over classified outcomes: confusion metrics with a
// reject option, FES/ECS diagnostics, tau trade-off tables, grid
// calibration, k-NN confidence margins, latency accounting, the ensemble
// simulator and the synthetic corpus generator.

#ifndef BINVERDICT_EVALUATION_H_
#define BINVERDICT_EVALUATION_H_

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "binverdict/corpus.h"
#include "binverdict/knowledge_base.h"
#include "binverdict/verdict.h"
#include "json.hpp"

namespace binverdict {

enum class Stage { kLiftParse, kEmbed, kRetrieve, kEnsemble, kDecide };

const char* StageName(Stage stage);

using StageLatencies = std::map<Stage, std::chrono::nanoseconds>;

struct OutcomeRecord {
  std::string binary_id;
  std::string function_id;
  Label truth = Label::kUnknown;  // malicious or benign
  VerdictTuple tuple;
  std::optional<KnnVoteResult> knn;  // k-NN path, when retrieval ran
  StageLatencies stage_latencies;
};

// ---- Confusion metrics ----------------------------------------------------

enum class MetricScope {
  kAcceptedOnly,  // uncertain verdicts leave the confusion matrix
  kAll,           // uncertain verdicts count as errors
};

struct Metrics {
  size_t tp = 0, tn = 0, fp = 0, fn = 0;
  size_t rejected = 0;
  size_t total = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  double rejection_rate = 0.0;  // uncertain / all records
};

// Ratios with an empty denominator are reported as 0.
Metrics ComputeMetrics(const std::vector<OutcomeRecord>& records,
                       MetricScope scope = MetricScope::kAcceptedOnly);

// ---- FES / ECS diagnostics --------------------------------------------------

enum class Outcome { kTruePositive, kTrueNegative, kFalsePositive, kFalseNegative };

const char* OutcomeName(Outcome outcome);

// nullopt for uncertain predictions.
std::optional<Outcome> ClassifyOutcome(Label truth, Verdict verdict);

struct DiagnosticRow {
  Outcome outcome;
  size_t count = 0;
  // Absent (not zero) when the cell is empty.
  std::optional<double> mean_fes;
  std::optional<double> mean_ecs;
};

struct Diagnostics {
  std::vector<DiagnosticRow> rows;  // TP, TN, FP, FN
  // mean ECS over accepted errors minus mean ECS over accepted correct;
  // absent when either group is empty.
  std::optional<double> ecs_separation;
};

Diagnostics DiagnosticsByOutcome(const std::vector<OutcomeRecord>& records);

// ---- tau trade-off -----------------------------------------------------------

struct TradeoffRow {
  double tau = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  double rejection_rate = 0.0;
  double accuracy = 0.0;
};

// Re-applies the decision policy at each tau with the FES bounds of `base`
// held fixed. Records whose reason is no_evidence or quorum_failed stay
// uncertain. Rows come back ordered by tau ascending.
std::vector<TradeoffRow> RejectionTradeoff(
    const std::vector<OutcomeRecord>& records, std::vector<double> tau_values,
    const DecisionThresholds& base = {});

// Re-decides one record under new thresholds.
VerdictTuple Redecide(const VerdictTuple& tuple, const DecisionThresholds& th);

// ---- Calibration -----------------------------------------------------------

struct SweepGrid {
  std::vector<int> k_values = {5, 10, 20, 30};
  std::vector<double> sigma_values = {0.5, 0.6, 0.7, 0.8};
  std::vector<int> n_values = {1, 2, 5, 7, 10};
  std::vector<double> t_values = {0.3, 0.5, 0.7, 0.9, 1.0};
  std::vector<double> delta_high_values = {0.55, 0.60, 0.65, 0.70};
  std::vector<double> delta_low_values = {0.30, 0.35, 0.40, 0.45};
  std::vector<double> tau_values = {0.50, 0.70, 0.80, 0.90};

  size_t size() const;
  // Throws Error(kConfig) if any axis is empty.
  void Validate() const;
};

struct UpstreamParams {
  int k = 10;
  double sigma_min = 0.70;
  int n_agents = 5;
  double temperature = 0.7;
};

// Produces scored outcomes for one retrieval/ensemble setting; thresholds
// are applied by the calibrator.
using UpstreamRunner =
    std::function<std::vector<OutcomeRecord>(const UpstreamParams&)>;

struct CalibrationObjective {
  enum class Kind { kMinErrorUnderRejectionCap, kMaxF1 };
  Kind kind = Kind::kMinErrorUnderRejectionCap;
  double rejection_cap = 1.0;  // configurations above the cap are infeasible
};

struct CalibrationRow {
  UpstreamParams upstream;
  DecisionThresholds thresholds;
  Metrics metrics;
  double score = 0.0;  // lower is better (fpr + fnr, or -f1)
  bool feasible = true;
  size_t grid_index = 0;
};

// Exhaustive grid evaluation ranked by: feasible first, score, lower
// rejection rate, grid order. Throws Error(kConfig) for an empty grid.
std::vector<CalibrationRow> CalibrateThresholds(
    const UpstreamRunner& runner, const SweepGrid& grid,
    const CalibrationObjective& objective);

// ---- k-NN confidence margins ----------------------------------------------

inline constexpr double kDefaultMinConfidence = 0.52;

struct ConfidenceRow {
  Outcome outcome;
  size_t count = 0;
  std::optional<double> mean_confidence;
  std::optional<double> margin;  // mean_confidence - 0.50
  std::optional<double> min_confidence;
  std::optional<double> max_confidence;
};

struct ConfidenceReport {
  bool applicable = false;  // false when no record carries a k-NN vote
  std::vector<ConfidenceRow> rows;  // TP, TN, FP, FN of the k-NN prediction
  double c_min = kDefaultMinConfidence;
  double flagged_error_fraction = 0.0;    // errors with c < c_min
  double flagged_correct_fraction = 0.0;  // correct with c < c_min
};

ConfidenceReport ConfidenceMarginReport(
    const std::vector<OutcomeRecord>& records,
    double c_min = kDefaultMinConfidence);

// ---- Latency ------------------------------------------------------------------

struct LatencyRow {
  Stage stage;
  size_t samples = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double total_ms = 0.0;
  double share_percent = 0.0;
};

// One row per stage that appears in any record, in pipeline order.
std::vector<LatencyRow> LatencyReport(const std::vector<OutcomeRecord>& records);

// ---- Ensemble simulator --------------------------------------------------

struct SimulationScenario {
  double p_malicious = 0.5;
  double context_w = 1.0;
  int repetitions = 1000;
};

struct SimulationResult {
  SimulationScenario scenario;
  double mean_fes = 0.0;
  double mean_ecs = 0.0;
  size_t malicious = 0;
  size_t benign = 0;
  size_t uncertain = 0;
};

// Monte-Carlo over synthetic agents with a fixed vote probability. Each
// repetition draws n_agents votes keyed by (seed, scenario_index, rep).
SimulationResult SimulateScenario(const SimulationScenario& scenario,
                                  int n_agents, const DecisionThresholds& th,
                                  uint64_t seed, size_t scenario_index = 0);

// ---- Synthetic corpus ----------------------------------------------------

struct SyntheticCorpusConfig {
  size_t kb_size = 400;
  size_t test_size = 200;
  size_t validation_size = 0;
  int dim = 64;  // per-stream mock embedding dimension
  // 1.0: disjoint class vocabularies (orthogonal cluster means);
  // 0.0: identical vocabularies.
  double cluster_separation = 1.0;
  double ambiguous_fraction = 0.2;
  uint64_t seed = 7;
  int tokens_per_stream = 120;
  int vocab_size = 20;  // per class and stream

  void Validate() const;
};

struct SyntheticCorpus {
  // Every binary holds one decision-critical function plus a short stub
  // that the default DCF filter removes. Labels are the ground truth.
  std::vector<FunctionRecord> kb_records;
  std::vector<FunctionRecord> test_records;
  std::vector<FunctionRecord> validation_records;
  // Mock embeddings (corpus_seed = config seed) of the DCFs in kb_records.
  std::vector<KbEntry> kb_entries;
};

// Two token-vocabulary clusters in mock-embedding space. Ambiguous points
// (in both splits) mix tokens from both vocabularies half and half, land
// midway between the cluster means, and carry a coin-flip label.
SyntheticCorpus GenerateSyntheticCorpus(const SyntheticCorpusConfig& config);

// ---- Report files ----------------------------------------------------------

nlohmann::ordered_json ToJson(const Metrics& metrics);
nlohmann::ordered_json ToJson(const Diagnostics& diagnostics);
nlohmann::ordered_json ToJson(const ConfidenceReport& report);

void WriteTradeoffCsv(std::ostream& out, const std::vector<TradeoffRow>& rows);
void WriteDiagnosticsCsv(std::ostream& out, const Diagnostics& diagnostics);
void WriteConfidenceCsv(std::ostream& out, const ConfidenceReport& report);
void WriteLatencyCsv(std::ostream& out, const std::vector<LatencyRow>& rows);
void WriteCalibrationCsv(std::ostream& out,
                         const std::vector<CalibrationRow>& rows);
// Plot-ready FES/ECS scatter, one row per accepted or rejected record.
void WriteScatterCsv(std::ostream& out,
                     const std::vector<OutcomeRecord>& records);
void WriteSimulationCsv(std::ostream& out,
                        const std::vector<SimulationResult>& results);

}  // namespace binverdict

#endif  // BINVERDICT_EVALUATION_H_
