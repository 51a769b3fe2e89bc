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

#include "binverdict/evaluation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <tuple>
#include <utility>

#include "binverdict/embedding.h"
#include "binverdict/error.h"
#include "binverdict/hash.h"

namespace binverdict {
namespace {

constexpr Outcome kOutcomes[] = {Outcome::kTruePositive, Outcome::kTrueNegative,
                                 Outcome::kFalsePositive,
                                 Outcome::kFalseNegative};

constexpr Stage kStages[] = {Stage::kLiftParse, Stage::kEmbed, Stage::kRetrieve,
                             Stage::kEnsemble, Stage::kDecide};

double Ratio(size_t num, size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string Fixed(double value, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

std::string OptionalFixed(const std::optional<double>& value) {
  return value ? Fixed(*value) : std::string();
}

nlohmann::ordered_json OptionalJson(const std::optional<double>& value) {
  return value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json();
}

double Percentile(std::vector<double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  // Nearest-rank.
  size_t rank = static_cast<size_t>(std::ceil(q * sorted.size()));
  rank = std::clamp<size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

}  // namespace

const char* StageName(Stage stage) {
  switch (stage) {
    case Stage::kLiftParse:
      return "lift-parse";
    case Stage::kEmbed:
      return "embed";
    case Stage::kRetrieve:
      return "retrieve";
    case Stage::kEnsemble:
      return "ensemble";
    case Stage::kDecide:
      return "decide";
  }
  return "unknown";
}

const char* OutcomeName(Outcome outcome) {
  switch (outcome) {
    case Outcome::kTruePositive:
      return "TP";
    case Outcome::kTrueNegative:
      return "TN";
    case Outcome::kFalsePositive:
      return "FP";
    case Outcome::kFalseNegative:
      return "FN";
  }
  return "?";
}

std::optional<Outcome> ClassifyOutcome(Label truth, Verdict verdict) {
  if (verdict == Verdict::kUncertain) return std::nullopt;
  const bool predicted_malicious = verdict == Verdict::kMalicious;
  if (truth == Label::kMalicious) {
    return predicted_malicious ? Outcome::kTruePositive : Outcome::kFalseNegative;
  }
  return predicted_malicious ? Outcome::kFalsePositive : Outcome::kTrueNegative;
}

Metrics ComputeMetrics(const std::vector<OutcomeRecord>& records,
                       MetricScope scope) {
  Metrics m;
  m.total = records.size();
  for (const auto& r : records) {
    auto outcome = ClassifyOutcome(r.truth, r.tuple.verdict);
    if (!outcome) {
      ++m.rejected;
      if (scope == MetricScope::kAll) {
        (r.truth == Label::kMalicious ? m.fn : m.fp)++;
      }
      continue;
    }
    switch (*outcome) {
      case Outcome::kTruePositive:
        ++m.tp;
        break;
      case Outcome::kTrueNegative:
        ++m.tn;
        break;
      case Outcome::kFalsePositive:
        ++m.fp;
        break;
      case Outcome::kFalseNegative:
        ++m.fn;
        break;
    }
  }
  const size_t decided = m.tp + m.tn + m.fp + m.fn;
  m.accuracy = Ratio(m.tp + m.tn, decided);
  m.precision = Ratio(m.tp, m.tp + m.fp);
  m.recall = Ratio(m.tp, m.tp + m.fn);
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  m.fpr = Ratio(m.fp, m.fp + m.tn);
  m.fnr = Ratio(m.fn, m.fn + m.tp);
  m.rejection_rate = Ratio(m.rejected, m.total);
  return m;
}

Diagnostics DiagnosticsByOutcome(const std::vector<OutcomeRecord>& records) {
  struct Acc {
    size_t n = 0;
    double fes = 0.0;
    double ecs = 0.0;
  };
  std::map<Outcome, Acc> cells;
  Acc correct, wrong;
  for (const auto& r : records) {
    auto outcome = ClassifyOutcome(r.truth, r.tuple.verdict);
    if (!outcome) continue;
    Acc& cell = cells[*outcome];
    ++cell.n;
    cell.fes += r.tuple.fes;
    cell.ecs += r.tuple.ecs;
    Acc& group = (*outcome == Outcome::kTruePositive ||
                  *outcome == Outcome::kTrueNegative)
                     ? correct
                     : wrong;
    ++group.n;
    group.ecs += r.tuple.ecs;
  }
  Diagnostics d;
  for (Outcome o : kOutcomes) {
    DiagnosticRow row{o};
    auto it = cells.find(o);
    if (it != cells.end() && it->second.n > 0) {
      row.count = it->second.n;
      row.mean_fes = it->second.fes / it->second.n;
      row.mean_ecs = it->second.ecs / it->second.n;
    }
    d.rows.push_back(row);
  }
  if (correct.n > 0 && wrong.n > 0) {
    d.ecs_separation = wrong.ecs / wrong.n - correct.ecs / correct.n;
  }
  return d;
}

VerdictTuple Redecide(const VerdictTuple& tuple, const DecisionThresholds& th) {
  VerdictTuple out = tuple;
  if (tuple.reason == Reason::kNoEvidence ||
      tuple.reason == Reason::kQuorumFailed) {
    return out;
  }
  Decision d = Decide(tuple.fes, tuple.ecs, th);
  out.verdict = d.verdict;
  out.reason = d.reason;
  return out;
}

std::vector<TradeoffRow> RejectionTradeoff(
    const std::vector<OutcomeRecord>& records, std::vector<double> tau_values,
    const DecisionThresholds& base) {
  std::sort(tau_values.begin(), tau_values.end());
  std::vector<TradeoffRow> rows;
  std::vector<OutcomeRecord> redecided = records;
  for (double tau : tau_values) {
    DecisionThresholds th = base;
    th.tau_stable = tau;
    for (size_t i = 0; i < records.size(); ++i) {
      redecided[i].tuple = Redecide(records[i].tuple, th);
    }
    Metrics m = ComputeMetrics(redecided);
    rows.push_back({tau, m.fpr, m.fnr, m.rejection_rate, m.accuracy});
  }
  return rows;
}

size_t SweepGrid::size() const {
  return k_values.size() * sigma_values.size() * n_values.size() *
         t_values.size() * delta_high_values.size() *
         delta_low_values.size() * tau_values.size();
}

void SweepGrid::Validate() const {
  if (size() == 0) throw Error(ErrorKind::kConfig, "sweep grid is empty");
}

std::vector<CalibrationRow> CalibrateThresholds(
    const UpstreamRunner& runner, const SweepGrid& grid,
    const CalibrationObjective& objective) {
  grid.Validate();
  std::vector<CalibrationRow> rows;
  rows.reserve(grid.size());
  size_t grid_index = 0;
  std::vector<OutcomeRecord> redecided;
  for (int k : grid.k_values) {
    for (double sigma : grid.sigma_values) {
      for (int n : grid.n_values) {
        for (double t : grid.t_values) {
          const UpstreamParams upstream{k, sigma, n, t};
          const std::vector<OutcomeRecord> scored = runner(upstream);
          redecided = scored;
          for (double high : grid.delta_high_values) {
            for (double low : grid.delta_low_values) {
              for (double tau : grid.tau_values) {
                CalibrationRow row;
                row.upstream = upstream;
                row.thresholds = {high, low, tau};
                row.grid_index = grid_index++;
                if (!(low >= 0.0 && low < high && high <= 1.0 && tau > 0.0)) {
                  row.feasible = false;
                  row.score = std::numeric_limits<double>::infinity();
                  rows.push_back(row);
                  continue;
                }
                for (size_t i = 0; i < scored.size(); ++i) {
                  redecided[i].tuple = Redecide(scored[i].tuple, row.thresholds);
                }
                row.metrics = ComputeMetrics(redecided);
                if (objective.kind ==
                    CalibrationObjective::Kind::kMaxF1) {
                  row.score = -row.metrics.f1;
                } else {
                  row.score = row.metrics.fpr + row.metrics.fnr;
                }
                row.feasible =
                    row.metrics.rejection_rate <= objective.rejection_cap;
                rows.push_back(row);
              }
            }
          }
        }
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const CalibrationRow& a, const CalibrationRow& b) {
                     return std::make_tuple(!a.feasible, a.score,
                                            a.metrics.rejection_rate,
                                            a.grid_index) <
                            std::make_tuple(!b.feasible, b.score,
                                            b.metrics.rejection_rate,
                                            b.grid_index);
                   });
  return rows;
}

ConfidenceReport ConfidenceMarginReport(
    const std::vector<OutcomeRecord>& records, double c_min) {
  ConfidenceReport report;
  report.c_min = c_min;
  std::map<Outcome, std::vector<double>> cells;
  size_t errors = 0, correct = 0, flagged_errors = 0, flagged_correct = 0;
  for (const auto& r : records) {
    if (!r.knn) continue;
    report.applicable = true;
    Verdict predicted = r.knn->label == Label::kMalicious ? Verdict::kMalicious
                                                          : Verdict::kBenign;
    Outcome o = *ClassifyOutcome(r.truth, predicted);
    cells[o].push_back(r.knn->confidence);
    const bool is_correct =
        o == Outcome::kTruePositive || o == Outcome::kTrueNegative;
    const bool flagged = r.knn->confidence < c_min;
    if (is_correct) {
      ++correct;
      flagged_correct += flagged;
    } else {
      ++errors;
      flagged_errors += flagged;
    }
  }
  if (!report.applicable) return report;
  for (Outcome o : kOutcomes) {
    ConfidenceRow row{o};
    auto it = cells.find(o);
    if (it != cells.end() && !it->second.empty()) {
      const auto& v = it->second;
      row.count = v.size();
      row.mean_confidence = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      row.margin = *row.mean_confidence - 0.5;
      row.min_confidence = *std::min_element(v.begin(), v.end());
      row.max_confidence = *std::max_element(v.begin(), v.end());
    }
    report.rows.push_back(row);
  }
  report.flagged_error_fraction = Ratio(flagged_errors, errors);
  report.flagged_correct_fraction = Ratio(flagged_correct, correct);
  return report;
}

std::vector<LatencyRow> LatencyReport(
    const std::vector<OutcomeRecord>& records) {
  std::map<Stage, std::vector<double>> samples;
  for (const auto& r : records) {
    for (const auto& [stage, duration] : r.stage_latencies) {
      samples[stage].push_back(
          std::chrono::duration<double, std::milli>(duration).count());
    }
  }
  double grand_total = 0.0;
  std::vector<LatencyRow> rows;
  for (Stage stage : kStages) {
    auto it = samples.find(stage);
    if (it == samples.end()) continue;
    std::vector<double> v = it->second;
    std::sort(v.begin(), v.end());
    LatencyRow row{stage};
    row.samples = v.size();
    row.total_ms = std::accumulate(v.begin(), v.end(), 0.0);
    row.mean_ms = row.total_ms / v.size();
    row.p50_ms = Percentile(v, 0.50);
    row.p95_ms = Percentile(v, 0.95);
    grand_total += row.total_ms;
    rows.push_back(row);
  }
  for (auto& row : rows) {
    row.share_percent =
        grand_total > 0.0 ? 100.0 * row.total_ms / grand_total : 0.0;
  }
  return rows;
}

SimulationResult SimulateScenario(const SimulationScenario& scenario,
                                  int n_agents, const DecisionThresholds& th,
                                  uint64_t seed, size_t scenario_index) {
  if (n_agents < 1) throw Error(ErrorKind::kConfig, "n_agents must be >= 1");
  if (!(scenario.p_malicious >= 0.0 && scenario.p_malicious <= 1.0) ||
      !(scenario.context_w >= 0.0 && scenario.context_w <= 1.0) ||
      scenario.repetitions < 1) {
    throw Error(ErrorKind::kConfig,
                "scenario needs p_malicious and context_w in [0, 1] and "
                "repetitions >= 1");
  }
  SimulationResult result;
  result.scenario = scenario;
  const uint64_t scenario_key = CombineKeys(seed, scenario_index);
  double fes_sum = 0.0;
  double ecs_sum = 0.0;
  std::vector<AgentResponse> responses(n_agents);
  for (int rep = 0; rep < scenario.repetitions; ++rep) {
    const uint64_t key = CombineKeys(scenario_key, static_cast<uint64_t>(rep));
    for (int j = 0; j < n_agents; ++j) {
      responses[j] = SyntheticAgent(scenario.p_malicious, key, j);
      responses[j].vote = ParseVerdict(responses[j].raw_text);
    }
    VoteSet votes = VoteSet::FromResponses(responses);
    VerdictTuple t = EvaluateFunction(votes, scenario.context_w, true, th);
    fes_sum += t.fes;
    ecs_sum += t.ecs;
    switch (t.verdict) {
      case Verdict::kMalicious:
        ++result.malicious;
        break;
      case Verdict::kBenign:
        ++result.benign;
        break;
      case Verdict::kUncertain:
        ++result.uncertain;
        break;
    }
  }
  result.mean_fes = fes_sum / scenario.repetitions;
  result.mean_ecs = ecs_sum / scenario.repetitions;
  return result;
}

void SyntheticCorpusConfig::Validate() const {
  if (kb_size < 10 || test_size < 10 ||
      (validation_size > 0 && validation_size < 10)) {
    throw Error(ErrorKind::kConfig,
                "synthetic split sizes must be >= 10 (validation may be 0)");
  }
  if (!(ambiguous_fraction >= 0.0 && ambiguous_fraction <= 1.0)) {
    throw Error(ErrorKind::kConfig, "ambiguous_fraction must be in [0, 1]");
  }
  if (!(cluster_separation >= 0.0 && cluster_separation <= 1.0)) {
    throw Error(ErrorKind::kConfig, "cluster_separation must be in [0, 1]");
  }
  if (dim < 8) throw Error(ErrorKind::kConfig, "synthetic dim must be >= 8");
  if (tokens_per_stream < 10 || vocab_size < 2) {
    throw Error(ErrorKind::kConfig,
                "synthetic tokens_per_stream >= 10 and vocab_size >= 2");
  }
}

namespace {

struct Vocabulary {
  std::vector<std::string> malicious;
  std::vector<std::string> benign;
};

Vocabulary MakeVocabulary(const std::string& prefix, int size,
                          double separation) {
  const int shared =
      static_cast<int>(std::lround((1.0 - separation) * size));
  Vocabulary v;
  for (int i = 0; i < shared; ++i) {
    std::string token = prefix + "_s" + std::to_string(i);
    v.malicious.push_back(token);
    v.benign.push_back(token);
  }
  for (int i = shared; i < size; ++i) {
    v.malicious.push_back(prefix + "_m" + std::to_string(i));
    v.benign.push_back(prefix + "_b" + std::to_string(i));
  }
  return v;
}

enum class PointKind { kMalicious, kBenign, kAmbiguous };

// Token sequence for one stream. Ambiguous points alternate vocabularies.
std::vector<std::string> DrawTokens(const Vocabulary& vocab, PointKind kind,
                                    int count, KeyedRng& rng) {
  std::vector<std::string> tokens;
  tokens.reserve(count);
  for (int i = 0; i < count; ++i) {
    bool from_malicious = kind == PointKind::kMalicious ||
                          (kind == PointKind::kAmbiguous && i % 2 == 0);
    const auto& pool = from_malicious ? vocab.malicious : vocab.benign;
    tokens.push_back(pool[rng.Below(pool.size())]);
  }
  return tokens;
}

std::string AsmText(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    out += tokens[i];
    out += (i % 4 == 3 || i + 1 == tokens.size()) ? "\n" : " ";
  }
  return out;
}

std::string PseudoText(const std::vector<std::string>& tokens) {
  std::string out = "void fn_body(void) {\n";
  for (const auto& t : tokens) out += "  " + t + "();\n";
  out += "}\n";
  return out;
}

std::vector<FunctionRecord> MakeSplit(const std::string& prefix, size_t size,
                                      double ambiguous_fraction,
                                      const SyntheticCorpusConfig& config,
                                      const Vocabulary& asm_vocab,
                                      const Vocabulary& code_vocab,
                                      KeyedRng& rng) {
  const size_t n_ambiguous =
      static_cast<size_t>(std::llround(ambiguous_fraction * size));
  std::vector<PointKind> kinds;
  for (size_t i = 0; i < size; ++i) {
    if (i < n_ambiguous) {
      kinds.push_back(PointKind::kAmbiguous);
    } else {
      kinds.push_back((i - n_ambiguous) % 2 == 0 ? PointKind::kMalicious
                                                 : PointKind::kBenign);
    }
  }
  for (size_t i = kinds.size(); i > 1; --i) {
    std::swap(kinds[i - 1], kinds[rng.Below(i)]);
  }

  std::vector<FunctionRecord> records;
  for (size_t i = 0; i < size; ++i) {
    char binary_id[32];
    std::snprintf(binary_id, sizeof(binary_id), "%s-%05zu", prefix.c_str(), i);
    Label label;
    switch (kinds[i]) {
      case PointKind::kMalicious:
        label = Label::kMalicious;
        break;
      case PointKind::kBenign:
        label = Label::kBenign;
        break;
      default:
        label = rng.Uniform() < 0.5 ? Label::kMalicious : Label::kBenign;
        break;
    }

    FunctionRecord dcf;
    dcf.binary_id = binary_id;
    dcf.function_id = "fn_0001";
    auto asm_tokens =
        DrawTokens(asm_vocab, kinds[i], config.tokens_per_stream, rng);
    auto code_tokens =
        DrawTokens(code_vocab, kinds[i], config.tokens_per_stream, rng);
    dcf.asm_text = AsmText(asm_tokens);
    dcf.pseudo_text = PseudoText(code_tokens);
    dcf.instr_count = config.tokens_per_stream;
    const int64_t cc = 5 + static_cast<int64_t>(rng.Below(20));
    if (i % 3 == 0) {
      const int64_t nodes = 8 + static_cast<int64_t>(rng.Below(24));
      dcf.cfg_nodes = nodes;
      dcf.cfg_edges = nodes + cc - 2;
    } else {
      dcf.cyclomatic_complexity = cc;
    }
    dcf.label = label;
    records.push_back(std::move(dcf));

    FunctionRecord stub;
    stub.binary_id = binary_id;
    stub.function_id = "fn_0000";
    stub.asm_text = "push_frame\nret\n";
    stub.pseudo_text = "void stub(void) { return; }\n";
    stub.instr_count = 2;
    stub.cyclomatic_complexity = 1;
    stub.label = label;
    records.push_back(std::move(stub));
  }
  return records;
}

}  // namespace

SyntheticCorpus GenerateSyntheticCorpus(const SyntheticCorpusConfig& config) {
  config.Validate();
  KeyedRng rng(CombineKeys(config.seed, 0x73796e746865ULL));
  const Vocabulary asm_vocab =
      MakeVocabulary("op", config.vocab_size, config.cluster_separation);
  const Vocabulary code_vocab =
      MakeVocabulary("call", config.vocab_size, config.cluster_separation);

  SyntheticCorpus corpus;
  corpus.kb_records = MakeSplit("kb", config.kb_size, config.ambiguous_fraction,
                                config, asm_vocab, code_vocab, rng);
  corpus.test_records =
      MakeSplit("test", config.test_size, config.ambiguous_fraction, config,
                asm_vocab, code_vocab, rng);
  if (config.validation_size > 0) {
    corpus.validation_records =
        MakeSplit("val", config.validation_size, config.ambiguous_fraction,
                  config, asm_vocab, code_vocab, rng);
  }

  MockEmbeddingProvider provider(config.dim, config.seed);
  const auto dcfs = SelectTopM(
      FilterDcfs(corpus.kb_records, DcfFilterConfig{}).kept,
      DcfFilterConfig{}.top_m);
  for (const auto& record : dcfs) {
    KbEntry entry;
    entry.composite = EmbedRecord(record, provider);
    entry.label = record.label;
    entry.family = "synthetic";
    entry.snippet = MakeSnippet(record);
    corpus.kb_entries.push_back(std::move(entry));
  }
  return corpus;
}

nlohmann::ordered_json ToJson(const Metrics& m) {
  nlohmann::ordered_json j;
  j["tp"] = m.tp;
  j["tn"] = m.tn;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  j["rejected"] = m.rejected;
  j["total"] = m.total;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["fpr"] = m.fpr;
  j["fnr"] = m.fnr;
  j["rejection_rate"] = m.rejection_rate;
  return j;
}

nlohmann::ordered_json ToJson(const Diagnostics& d) {
  nlohmann::ordered_json j;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : d.rows) {
    nlohmann::ordered_json r;
    r["outcome"] = OutcomeName(row.outcome);
    r["count"] = row.count;
    r["present"] = row.mean_fes.has_value();
    r["mean_fes"] = OptionalJson(row.mean_fes);
    r["mean_ecs"] = OptionalJson(row.mean_ecs);
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  j["ecs_separation"] = OptionalJson(d.ecs_separation);
  return j;
}

nlohmann::ordered_json ToJson(const ConfidenceReport& report) {
  nlohmann::ordered_json j;
  j["applicable"] = report.applicable;
  j["c_min"] = report.c_min;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json r;
    r["outcome"] = OutcomeName(row.outcome);
    r["count"] = row.count;
    r["mean_confidence"] = OptionalJson(row.mean_confidence);
    r["margin"] = OptionalJson(row.margin);
    r["min"] = OptionalJson(row.min_confidence);
    r["max"] = OptionalJson(row.max_confidence);
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  j["flagged_error_fraction"] = report.flagged_error_fraction;
  j["flagged_correct_fraction"] = report.flagged_correct_fraction;
  return j;
}

void WriteTradeoffCsv(std::ostream& out, const std::vector<TradeoffRow>& rows) {
  out << "tau,fpr,fnr,rejection_rate,accuracy\n";
  for (const auto& r : rows) {
    out << Fixed(r.tau, 4) << ',' << Fixed(r.fpr) << ',' << Fixed(r.fnr) << ','
        << Fixed(r.rejection_rate) << ',' << Fixed(r.accuracy) << '\n';
  }
}

void WriteDiagnosticsCsv(std::ostream& out, const Diagnostics& d) {
  out << "outcome,count,mean_fes,mean_ecs\n";
  for (const auto& row : d.rows) {
    out << OutcomeName(row.outcome) << ',' << row.count << ','
        << OptionalFixed(row.mean_fes) << ',' << OptionalFixed(row.mean_ecs)
        << '\n';
  }
}

void WriteConfidenceCsv(std::ostream& out, const ConfidenceReport& report) {
  out << "outcome,count,mean_confidence,margin,min,max\n";
  for (const auto& row : report.rows) {
    out << OutcomeName(row.outcome) << ',' << row.count << ','
        << OptionalFixed(row.mean_confidence) << ','
        << OptionalFixed(row.margin) << ','
        << OptionalFixed(row.min_confidence) << ','
        << OptionalFixed(row.max_confidence) << '\n';
  }
}

void WriteLatencyCsv(std::ostream& out, const std::vector<LatencyRow>& rows) {
  out << "stage,samples,mean_ms,p50_ms,p95_ms,total_ms,share_percent\n";
  for (const auto& r : rows) {
    out << StageName(r.stage) << ',' << r.samples << ',' << Fixed(r.mean_ms, 4)
        << ',' << Fixed(r.p50_ms, 4) << ',' << Fixed(r.p95_ms, 4) << ','
        << Fixed(r.total_ms, 4) << ',' << Fixed(r.share_percent, 2) << '\n';
  }
}

void WriteCalibrationCsv(std::ostream& out,
                         const std::vector<CalibrationRow>& rows) {
  out << "rank,k,sigma_min,n_agents,temperature,delta_high,delta_low,"
         "tau_stable,feasible,score,fpr,fnr,f1,rejection_rate,accuracy\n";
  size_t rank = 1;
  for (const auto& r : rows) {
    out << rank++ << ',' << r.upstream.k << ','
        << Fixed(r.upstream.sigma_min, 2) << ',' << r.upstream.n_agents << ','
        << Fixed(r.upstream.temperature, 2) << ','
        << Fixed(r.thresholds.delta_high, 2) << ','
        << Fixed(r.thresholds.delta_low, 2) << ','
        << Fixed(r.thresholds.tau_stable, 2) << ',' << (r.feasible ? 1 : 0)
        << ',' << Fixed(r.score) << ',' << Fixed(r.metrics.fpr) << ','
        << Fixed(r.metrics.fnr) << ',' << Fixed(r.metrics.f1) << ','
        << Fixed(r.metrics.rejection_rate) << ',' << Fixed(r.metrics.accuracy)
        << '\n';
  }
}

void WriteScatterCsv(std::ostream& out,
                     const std::vector<OutcomeRecord>& records) {
  out << "binary_id,function_id,truth,verdict,reason,outcome,fes,ecs\n";
  for (const auto& r : records) {
    auto outcome = ClassifyOutcome(r.truth, r.tuple.verdict);
    out << r.binary_id << ',' << r.function_id << ',' << LabelName(r.truth)
        << ',' << VerdictName(r.tuple.verdict) << ','
        << ReasonName(r.tuple.reason) << ','
        << (outcome ? OutcomeName(*outcome) : "rejected") << ','
        << Fixed(r.tuple.fes) << ',' << Fixed(r.tuple.ecs) << '\n';
  }
}

void WriteSimulationCsv(std::ostream& out,
                        const std::vector<SimulationResult>& results) {
  out << "p_malicious,context_w,repetitions,mean_fes,mean_ecs,malicious,"
         "benign,uncertain\n";
  for (const auto& r : results) {
    out << Fixed(r.scenario.p_malicious, 4) << ','
        << Fixed(r.scenario.context_w, 4) << ',' << r.scenario.repetitions
        << ',' << Fixed(r.mean_fes) << ',' << Fixed(r.mean_ecs) << ','
        << r.malicious << ',' << r.benign << ',' << r.uncertain << '\n';
  }
}

}  // namespace binverdict
