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

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace binverdict {
namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;
using nlohmann::ordered_json;

std::chrono::nanoseconds Since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() -
                                                              start);
}

// Writes through a temp file so a failed run never leaves half a report.
void WriteFile(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) {
      throw Error(ErrorKind::kConfig, "cannot create directory " +
                                          p.parent_path().string() + ": " +
                                          ec.message());
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kConfig, "cannot write " + path);
    out << content;
    if (!out) throw Error(ErrorKind::kConfig, "write failed for " + path);
  }
  std::filesystem::rename(tmp, path);
}

std::string ReportPath(const PipelineConfig& config, const std::string& name) {
  return (std::filesystem::path(config.report_dir) / name).string();
}

std::string Dump(const ordered_json& j) { return j.dump(2) + "\n"; }

// ---- config reading -------------------------------------------------------

template <typename Fn>
void ForEachKey(const json& obj, const std::string& where, Fn&& fn) {
  if (!obj.is_object()) {
    throw Error(ErrorKind::kConfig, where + " must be an object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (!fn(key, value)) {
      throw Error(ErrorKind::kConfig,
                  "unknown config key '" + where + "." + key + "'");
    }
  }
}

template <typename T>
T Get(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kConfig, "config key '" + key + "' has wrong type");
  }
}

void ReadDcf(const json& j, DcfFilterConfig& c) {
  ForEachKey(j, "dcf", [&](const std::string& k, const json& v) {
    if (k == "min_instr") c.min_instr = Get<int64_t>(v, k);
    else if (k == "min_cc") c.min_cc = Get<int64_t>(v, k);
    else if (k == "top_m") c.top_m = Get<int64_t>(v, k);
    else return false;
    return true;
  });
}

void ReadEmbedding(const json& j, EmbeddingProviderConfig& c) {
  ForEachKey(j, "embedding", [&](const std::string& k, const json& v) {
    if (k == "mode") {
      const auto m = Get<std::string>(v, k);
      if (m == "mock") c.mode = ProviderMode::kMock;
      else if (m == "remote") c.mode = ProviderMode::kRemote;
      else throw Error(ErrorKind::kConfig, "embedding.mode must be mock|remote");
    } else if (k == "endpoint_url") {
      c.endpoint_url = Get<std::string>(v, k);
    } else if (k == "model_name") {
      c.model_name = Get<std::string>(v, k);
    } else if (k == "dim") {
      c.dim = Get<int>(v, k);
    } else if (k == "timeout_ms") {
      c.timeout = std::chrono::milliseconds(Get<int64_t>(v, k));
    } else if (k == "retries") {
      c.retries = Get<int>(v, k);
    } else if (k == "max_parallel") {
      c.max_parallel = Get<int>(v, k);
    } else if (k == "response_field") {
      c.response_field = Get<std::string>(v, k);
    } else {
      return false;
    }
    return true;
  });
}

void ReadRetrieval(const json& j, RetrievalParams& c) {
  ForEachKey(j, "retrieval", [&](const std::string& k, const json& v) {
    if (k == "k") c.k = Get<int>(v, k);
    else if (k == "sigma_min") c.sigma_min = Get<double>(v, k);
    else if (k == "balance") c.balance = Get<bool>(v, k);
    else return false;
    return true;
  });
}

void ReadEnsemble(const json& j, EnsembleConfig& c) {
  ForEachKey(j, "ensemble", [&](const std::string& k, const json& v) {
    if (k == "n_agents") {
      c.n_agents = Get<int>(v, k);
    } else if (k == "temperature") {
      c.temperature = Get<double>(v, k);
    } else if (k == "generator") {
      const auto m = Get<std::string>(v, k);
      if (m == "synthetic") c.generator = GeneratorMode::kSynthetic;
      else if (m == "remote") c.generator = GeneratorMode::kRemote;
      else throw Error(ErrorKind::kConfig,
                       "ensemble.generator must be synthetic|remote");
    } else if (k == "endpoint_url") {
      c.endpoint_url = Get<std::string>(v, k);
    } else if (k == "model_name") {
      c.model_name = Get<std::string>(v, k);
    } else if (k == "response_field") {
      c.response_field = Get<std::string>(v, k);
    } else if (k == "timeout_ms") {
      c.per_agent_timeout = std::chrono::milliseconds(Get<int64_t>(v, k));
    } else if (k == "retries") {
      c.retries = Get<int>(v, k);
    } else if (k == "max_parallel") {
      c.max_parallel = Get<int>(v, k);
    } else if (k == "prompt_budget") {
      c.prompt_budget = Get<size_t>(v, k);
    } else if (k == "synthetic_p_malicious") {
      if (v.is_null()) c.synthetic_p_malicious.reset();
      else c.synthetic_p_malicious = Get<double>(v, k);
    } else if (k == "synthetic_delay_us") {
      c.synthetic_delay = std::chrono::microseconds(Get<int64_t>(v, k));
    } else {
      return false;
    }
    return true;
  });
}

void ReadThresholds(const json& j, DecisionThresholds& c) {
  ForEachKey(j, "thresholds", [&](const std::string& k, const json& v) {
    if (k == "delta_high") c.delta_high = Get<double>(v, k);
    else if (k == "delta_low") c.delta_low = Get<double>(v, k);
    else if (k == "tau_stable") c.tau_stable = Get<double>(v, k);
    else return false;
    return true;
  });
}

json ReadJsonFile(const std::string& path, ErrorKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kind, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(kind, path + ": " + e.what());
  }
}

// ---- record loading -------------------------------------------------------

struct Loaded {
  std::vector<FunctionRecord> records;
  std::vector<LineIssue> errors;
  std::chrono::nanoseconds parse_time{0};
};

std::string IssueList(const std::vector<LineIssue>& issues, size_t limit = 20) {
  std::ostringstream out;
  for (size_t i = 0; i < issues.size() && i < limit; ++i) {
    out << "\n  line " << issues[i].line << ": " << issues[i].message;
  }
  if (issues.size() > limit) out << "\n  ... " << issues.size() - limit << " more";
  return out.str();
}

Loaded LoadRecords(const std::string& path, bool strict) {
  const auto start = Clock::now();
  ParseResult parsed = ParseFunctionRecordsFile(path);
  Loaded out;
  out.parse_time = Since(start);
  if (strict && !parsed.errors.empty()) {
    throw Error(ErrorKind::kData, path + ": " +
                                      std::to_string(parsed.errors.size()) +
                                      " malformed record(s)" +
                                      IssueList(parsed.errors));
  }
  if (parsed.records.empty()) {
    throw Error(ErrorKind::kData, path + ": no usable records" +
                                      IssueList(parsed.errors));
  }
  out.records = std::move(parsed.records);
  out.errors = std::move(parsed.errors);
  return out;
}

void RequireLabels(const std::vector<FunctionRecord>& records,
                   const std::string& path) {
  std::vector<std::string> unlabeled;
  for (const auto& r : records) {
    if (r.label == Label::kUnknown) {
      unlabeled.push_back(r.binary_id + "/" + r.function_id);
    }
  }
  if (unlabeled.empty()) return;
  std::string msg = path + ": records without a malicious/benign label:";
  for (const auto& id : unlabeled) msg += "\n  " + id;
  throw Error(ErrorKind::kData, msg);
}

void CheckIndexDim(const KbIndex& index, const EmbeddingProvider& provider) {
  if (index.dim() != 2 * provider.dim()) {
    throw Error(ErrorKind::kConfig,
                "index dimension " + std::to_string(index.dim()) +
                    " does not match embedding.dim " +
                    std::to_string(provider.dim()) + " x 2 streams");
  }
}

ordered_json ExclusionsJson(const std::vector<Exclusion>& excluded) {
  auto arr = ordered_json::array();
  for (const auto& e : excluded) {
    arr.push_back({{"binary_id", e.binary_id},
                   {"function_id", e.function_id},
                   {"reason", e.reason}});
  }
  return arr;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
// exception wins and is rethrown after every thread has joined.
template <typename Fn>
void ParallelFor(size_t n, int workers, Fn&& fn) {
  const size_t threads = std::min<size_t>(std::max(workers, 1), n);
  if (threads <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::unique_ptr<KbIndex> LoadIndexFor(const PipelineConfig& config,
                                      const EmbeddingProvider& provider) {
  if (config.mode == PipelineMode::kZeroShot) return nullptr;
  auto index = std::make_unique<KbIndex>(LoadIndex(config.kb_path));
  CheckIndexDim(*index, provider);
  return index;
}

}  // namespace

const char* PipelineModeName(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::kFull:
      return "full";
    case PipelineMode::kKnnOnly:
      return "knn_only";
    case PipelineMode::kZeroShot:
      return "zero_shot";
  }
  return "full";
}

std::optional<PipelineMode> ParsePipelineMode(std::string_view text) {
  if (text == "full") return PipelineMode::kFull;
  if (text == "knn_only") return PipelineMode::kKnnOnly;
  if (text == "zero_shot") return PipelineMode::kZeroShot;
  return std::nullopt;
}

void PipelineConfig::Validate() const {
  if (workers < 1) throw Error(ErrorKind::kConfig, "workers must be >= 1");
  if (snippet_cap == 0) throw Error(ErrorKind::kConfig, "snippet_cap must be > 0");
  dcf.Validate();
  EffectiveEmbedding().Validate();
  retrieval.Validate();
  if (mode != PipelineMode::kKnnOnly) EffectiveEnsemble().Validate();
  thresholds.Validate();
}

EmbeddingProviderConfig PipelineConfig::EffectiveEmbedding() const {
  EmbeddingProviderConfig c = embedding;
  c.corpus_seed = seed;
  return c;
}

EnsembleConfig PipelineConfig::EffectiveEnsemble() const {
  EnsembleConfig c = ensemble;
  c.seed = seed;
  c.prompt_template_id = std::string(mode == PipelineMode::kZeroShot
                                         ? kZeroShotTemplate
                                         : kGroundedTemplate);
  return c;
}

PipelineConfig PipelineConfigFromJson(const json& j, PipelineConfig base) {
  PipelineConfig c = std::move(base);
  ForEachKey(j, "config", [&](const std::string& k, const json& v) {
    if (k == "mode") {
      auto mode = ParsePipelineMode(Get<std::string>(v, k));
      if (!mode) {
        throw Error(ErrorKind::kConfig,
                    "mode must be full|knn_only|zero_shot");
      }
      c.mode = *mode;
    } else if (k == "seed") {
      c.seed = Get<uint64_t>(v, k);
    } else if (k == "workers") {
      c.workers = Get<int>(v, k);
    } else if (k == "kb_path") {
      c.kb_path = Get<std::string>(v, k);
    } else if (k == "report_dir") {
      c.report_dir = Get<std::string>(v, k);
    } else if (k == "created_at") {
      c.created_at = Get<int64_t>(v, k);
    } else if (k == "snippet_cap") {
      c.snippet_cap = Get<size_t>(v, k);
    } else if (k == "dcf") {
      ReadDcf(v, c.dcf);
    } else if (k == "embedding") {
      ReadEmbedding(v, c.embedding);
    } else if (k == "retrieval") {
      ReadRetrieval(v, c.retrieval);
    } else if (k == "ensemble") {
      ReadEnsemble(v, c.ensemble);
    } else if (k == "thresholds") {
      ReadThresholds(v, c.thresholds);
    } else {
      return false;
    }
    return true;
  });
  return c;
}

PipelineConfig LoadPipelineConfig(const std::string& path,
                                  PipelineConfig base) {
  return PipelineConfigFromJson(ReadJsonFile(path, ErrorKind::kConfig),
                                std::move(base));
}

ordered_json ToJson(const PipelineConfig& c) {
  ordered_json j;
  j["mode"] = PipelineModeName(c.mode);
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["kb_path"] = c.kb_path;
  j["report_dir"] = c.report_dir;
  j["created_at"] = c.created_at;
  j["snippet_cap"] = c.snippet_cap;
  j["dcf"] = {{"min_instr", c.dcf.min_instr},
              {"min_cc", c.dcf.min_cc},
              {"top_m", c.dcf.top_m}};
  j["embedding"] = {
      {"mode", c.embedding.mode == ProviderMode::kMock ? "mock" : "remote"},
      {"endpoint_url", c.embedding.endpoint_url},
      {"model_name", c.embedding.model_name},
      {"dim", c.embedding.dim},
      {"timeout_ms", c.embedding.timeout.count()},
      {"retries", c.embedding.retries},
      {"max_parallel", c.embedding.max_parallel},
      {"response_field", c.embedding.response_field}};
  j["retrieval"] = {{"k", c.retrieval.k},
                    {"sigma_min", c.retrieval.sigma_min},
                    {"balance", c.retrieval.balance}};
  ordered_json e = {
      {"n_agents", c.ensemble.n_agents},
      {"temperature", c.ensemble.temperature},
      {"generator", c.ensemble.generator == GeneratorMode::kSynthetic
                        ? "synthetic"
                        : "remote"},
      {"endpoint_url", c.ensemble.endpoint_url},
      {"model_name", c.ensemble.model_name},
      {"response_field", c.ensemble.response_field},
      {"timeout_ms", c.ensemble.per_agent_timeout.count()},
      {"retries", c.ensemble.retries},
      {"max_parallel", c.ensemble.max_parallel},
      {"prompt_budget", c.ensemble.prompt_budget}};
  e["synthetic_p_malicious"] =
      c.ensemble.synthetic_p_malicious
          ? ordered_json(*c.ensemble.synthetic_p_malicious)
          : ordered_json(nullptr);
  e["synthetic_delay_us"] = c.ensemble.synthetic_delay.count();
  j["ensemble"] = std::move(e);
  j["thresholds"] = {{"delta_high", c.thresholds.delta_high},
                     {"delta_low", c.thresholds.delta_low},
                     {"tau_stable", c.thresholds.tau_stable}};
  return j;
}

void ApplyEnvironment(PipelineConfig& config) {
  if (const char* url = std::getenv(kEmbedUrlEnv); url && *url) {
    config.embedding.endpoint_url = url;
  }
  if (const char* url = std::getenv(kGenerateUrlEnv); url && *url) {
    config.ensemble.endpoint_url = url;
  }
}

// ---- inference --------------------------------------------------------------

OutcomeRecord ClassifyFunction(const FunctionRecord& record,
                               const CompositeEmbedding& query,
                               const KbIndex* index, PipelineMode mode,
                               const RetrievalParams& retrieval,
                               const EnsembleConfig& ensemble,
                               const DecisionThresholds& thresholds,
                               Generator& generator) {
  OutcomeRecord out;
  out.binary_id = record.binary_id;
  out.function_id = record.function_id;
  out.truth = record.label;

  RetrievalSet rs;
  rs.binary_id = record.binary_id;
  rs.function_id = record.function_id;
  if (mode != PipelineMode::kZeroShot) {
    if (index == nullptr) {
      throw Error(ErrorKind::kConfig, "retrieval needs a knowledge base index");
    }
    const auto start = Clock::now();
    rs = Retrieve(*index, query, retrieval);
    out.stage_latencies[Stage::kRetrieve] = Since(start);
    if (!rs.neighbors.empty()) out.knn = KnnVote(rs);
  }

  VerdictTuple& t = out.tuple;
  if (mode == PipelineMode::kKnnOnly) {
    const auto start = Clock::now();
    if (rs.neighbors.empty()) {
      t.verdict = Verdict::kUncertain;
      t.reason = Reason::kNoEvidence;
    } else {
      // Scores are informational here; the label vote decides.
      const double share = EvidenceMaliciousShare(rs);
      t.context_w = ContextWeight(rs);
      t.p_hat = share;
      t.fes = share * t.context_w;
      t.ecs = BinaryEntropy(share);
      t.verdict = out.knn->label == Label::kMalicious ? Verdict::kMalicious
                                                       : Verdict::kBenign;
      t.reason = Reason::kConsensus;
    }
    out.stage_latencies[Stage::kDecide] = Since(start);
  } else if (mode == PipelineMode::kFull && rs.neighbors.empty()) {
    const auto start = Clock::now();
    t.verdict = Verdict::kUncertain;
    t.reason = Reason::kNoEvidence;
    out.stage_latencies[Stage::kDecide] = Since(start);
  } else {
    auto start = Clock::now();
    const VoteSet votes = RunEnsemble(record, rs, index, ensemble, generator);
    out.stage_latencies[Stage::kEnsemble] = Since(start);
    start = Clock::now();
    const double w =
        mode == PipelineMode::kZeroShot ? 1.0 : ContextWeight(rs);
    t = EvaluateFunction(votes, w, true, thresholds);
    out.stage_latencies[Stage::kDecide] = Since(start);
  }

  for (const auto& n : rs.neighbors) {
    const auto& c = index->entries()[n.entry].composite;
    t.evidence.neighbor_ids.push_back(c.binary_id + "/" + c.function_id);
    t.evidence.neighbor_similarities.push_back(n.similarity);
  }
  return out;
}

ClassifyOutput ClassifyRecords(const std::vector<FunctionRecord>& records,
                               const KbIndex* index,
                               const PipelineConfig& config,
                               EmbeddingProvider& provider,
                               Generator& generator,
                               std::chrono::nanoseconds parse_time) {
  config.Validate();
  if (index == nullptr && config.mode != PipelineMode::kZeroShot) {
    throw Error(ErrorKind::kConfig, "mode " +
                                        std::string(PipelineModeName(config.mode)) +
                                        " needs a knowledge base index");
  }
  if (index != nullptr) CheckIndexDim(*index, provider);
  const EnsembleConfig ensemble = config.EffectiveEnsemble();

  ClassifyOutput output;
  FilterResult filtered = FilterDcfs(records, config.dcf);
  output.excluded = filtered.excluded;
  std::vector<FunctionRecord> selected =
      SelectTopM(filtered.kept, config.dcf.top_m);
  {
    std::set<std::pair<std::string, std::string>> kept_ids;
    for (const auto& r : selected) kept_ids.emplace(r.binary_id, r.function_id);
    for (const auto& r : filtered.kept) {
      if (!kept_ids.count({r.binary_id, r.function_id})) {
        output.excluded.push_back({r.binary_id, r.function_id,
                                   "outside top " +
                                       std::to_string(config.dcf.top_m)});
      }
    }
  }

  // Binaries in order of first appearance, including ones left empty by
  // the filter.
  std::vector<std::string> binary_order;
  std::unordered_map<std::string, size_t> binary_slot;
  for (const auto& r : records) {
    if (binary_slot.emplace(r.binary_id, binary_order.size()).second) {
      binary_order.push_back(r.binary_id);
    }
  }
  std::vector<std::vector<const FunctionRecord*>> per_binary(binary_order.size());
  for (const auto& r : selected) per_binary[binary_slot[r.binary_id]].push_back(&r);

  const auto lift_share =
      selected.empty() ? std::chrono::nanoseconds(0)
                       : parse_time / static_cast<int64_t>(selected.size());

  std::vector<std::vector<OutcomeRecord>> results(binary_order.size());
  ParallelFor(binary_order.size(), config.workers, [&](size_t b) {
    for (const FunctionRecord* r : per_binary[b]) {
      const auto start = Clock::now();
      const CompositeEmbedding query = EmbedRecord(*r, provider);
      const auto embed_time = Since(start);
      OutcomeRecord outcome =
          ClassifyFunction(*r, query, index, config.mode, config.retrieval,
                           ensemble, config.thresholds, generator);
      outcome.stage_latencies[Stage::kEmbed] = embed_time;
      if (parse_time.count() > 0) {
        outcome.stage_latencies[Stage::kLiftParse] = lift_share;
      }
      results[b].push_back(std::move(outcome));
    }
  });

  for (size_t b = 0; b < binary_order.size(); ++b) {
    std::vector<FunctionVerdict> functions;
    for (auto& o : results[b]) {
      functions.push_back({o.function_id, o.tuple});
      output.outcomes.push_back(std::move(o));
    }
    output.binaries.push_back(
        AggregateBinary(binary_order[b], std::move(functions)));
  }
  return output;
}

ordered_json VerdictReport(const ClassifyOutput& output,
                           const PipelineConfig& config) {
  ordered_json j;
  j["mode"] = PipelineModeName(config.mode);
  j["seed"] = config.seed;
  j["thresholds"] = {{"delta_high", config.thresholds.delta_high},
                     {"delta_low", config.thresholds.delta_low},
                     {"tau_stable", config.thresholds.tau_stable}};
  auto binaries = ordered_json::array();
  for (const auto& b : output.binaries) binaries.push_back(ToJson(b));
  j["binaries"] = std::move(binaries);
  j["excluded"] = ExclusionsJson(output.excluded);
  return j;
}

// ---- commands ---------------------------------------------------------------

ordered_json ToJson(const BuildReport& r) {
  ordered_json j;
  j["parsed"] = r.parsed;
  j["warnings"] = r.warnings;
  j["dcf_kept"] = r.dcf_kept;
  j["selected"] = r.selected;
  j["indexed"] = r.indexed;
  j["malicious"] = r.malicious;
  j["benign"] = r.benign;
  j["dim"] = r.dim;
  j["excluded"] = ExclusionsJson(r.excluded);
  return j;
}

BuildReport CmdBuildKb(const PipelineConfig& config,
                       const std::string& corpus_path) {
  config.Validate();
  ParseResult parsed = ParseFunctionRecordsFile(corpus_path);
  if (!parsed.errors.empty()) {
    throw Error(ErrorKind::kData, corpus_path + ": " +
                                      std::to_string(parsed.errors.size()) +
                                      " malformed record(s)" +
                                      IssueList(parsed.errors));
  }
  if (parsed.records.empty()) {
    throw Error(ErrorKind::kData, corpus_path + ": corpus is empty");
  }
  RequireLabels(parsed.records, corpus_path);

  BuildReport report;
  report.parsed = parsed.records.size();
  report.warnings = parsed.warnings.size();
  FilterResult filtered = FilterDcfs(parsed.records, config.dcf);
  report.dcf_kept = filtered.kept.size();
  report.excluded = filtered.excluded;
  std::vector<FunctionRecord> selected =
      SelectTopM(filtered.kept, config.dcf.top_m);
  report.selected = selected.size();

  auto provider = MakeEmbeddingProvider(config.EffectiveEmbedding());
  std::vector<KbEntry> entries(selected.size());
  ParallelFor(selected.size(), config.workers, [&](size_t i) {
    KbEntry& e = entries[i];
    e.composite = EmbedRecord(selected[i], *provider);
    e.label = selected[i].label;
    e.snippet = MakeSnippet(selected[i], config.snippet_cap);
  });

  BuildMeta meta;
  meta.corpus_seed = config.seed;
  meta.created_at = config.created_at;
  KbIndex index = BuildIndex(std::move(entries), meta, config.snippet_cap);
  report.indexed = index.size();
  report.malicious = index.meta().malicious_count;
  report.benign = index.meta().benign_count;
  report.dim = index.dim();

  SaveIndex(index, config.kb_path);
  WriteFile(ReportPath(config, "build_report.json"), Dump(ToJson(report)));
  return report;
}

ClassifyOutput CmdClassify(const PipelineConfig& config,
                           const std::string& input_path) {
  config.Validate();
  Loaded loaded = LoadRecords(input_path, false);
  auto provider = MakeEmbeddingProvider(config.EffectiveEmbedding());
  auto generator = MakeGenerator(config.EffectiveEnsemble());
  auto index = LoadIndexFor(config, *provider);
  ClassifyOutput output = ClassifyRecords(loaded.records, index.get(), config,
                                          *provider, *generator,
                                          loaded.parse_time);
  ordered_json report = VerdictReport(output, config);
  auto errors = ordered_json::array();
  for (const auto& e : loaded.errors) {
    errors.push_back({{"line", e.line}, {"message", e.message}});
  }
  report["parse_errors"] = std::move(errors);
  WriteFile(ReportPath(config, "verdicts.json"), Dump(report));
  std::ostringstream latency;
  WriteLatencyCsv(latency, LatencyReport(output.outcomes));
  WriteFile(ReportPath(config, "latency.csv"), latency.str());
  return output;
}

ClassifyOutput CmdEvaluate(const PipelineConfig& config,
                           const std::string& labeled_path) {
  config.Validate();
  Loaded loaded = LoadRecords(labeled_path, true);
  RequireLabels(loaded.records, labeled_path);
  auto provider = MakeEmbeddingProvider(config.EffectiveEmbedding());
  auto generator = MakeGenerator(config.EffectiveEnsemble());
  auto index = LoadIndexFor(config, *provider);
  ClassifyOutput output = ClassifyRecords(loaded.records, index.get(), config,
                                          *provider, *generator,
                                          loaded.parse_time);

  const Diagnostics diagnostics = DiagnosticsByOutcome(output.outcomes);
  const ConfidenceReport confidence = ConfidenceMarginReport(output.outcomes);
  ordered_json metrics;
  metrics["mode"] = PipelineModeName(config.mode);
  metrics["functions"] = output.outcomes.size();
  metrics["accepted_only"] =
      ToJson(ComputeMetrics(output.outcomes, MetricScope::kAcceptedOnly));
  metrics["all"] = ToJson(ComputeMetrics(output.outcomes, MetricScope::kAll));
  metrics["diagnostics"] = ToJson(diagnostics);
  metrics["confidence"] = ToJson(confidence);

  WriteFile(ReportPath(config, "verdicts.json"),
            Dump(VerdictReport(output, config)));
  WriteFile(ReportPath(config, "metrics.json"), Dump(metrics));
  std::ostringstream diag_csv, scatter_csv, conf_csv, latency_csv;
  WriteDiagnosticsCsv(diag_csv, diagnostics);
  WriteFile(ReportPath(config, "diagnostics.csv"), diag_csv.str());
  WriteScatterCsv(scatter_csv, output.outcomes);
  WriteFile(ReportPath(config, "scatter.csv"), scatter_csv.str());
  WriteConfidenceCsv(conf_csv, confidence);
  WriteFile(ReportPath(config, "confidence.csv"), conf_csv.str());
  // k-NN verdicts do not go through the entropy gate, so no tau table.
  if (config.mode != PipelineMode::kKnnOnly) {
    std::ostringstream tradeoff_csv;
    WriteTradeoffCsv(tradeoff_csv,
                     RejectionTradeoff(output.outcomes,
                                       {0.5, 0.6, 0.7, 0.8, 0.9, 0.95},
                                       config.thresholds));
    WriteFile(ReportPath(config, "tradeoff.csv"), tradeoff_csv.str());
  }
  WriteLatencyCsv(latency_csv, LatencyReport(output.outcomes));
  WriteFile(ReportPath(config, "latency.csv"), latency_csv.str());
  return output;
}

SweepGrid LoadSweepGrid(const std::string& path) {
  const json j = ReadJsonFile(path, ErrorKind::kConfig);
  SweepGrid grid;
  ForEachKey(j, "grid", [&](const std::string& k, const json& v) {
    if (k == "k") grid.k_values = Get<std::vector<int>>(v, k);
    else if (k == "sigma_min") grid.sigma_values = Get<std::vector<double>>(v, k);
    else if (k == "n_agents") grid.n_values = Get<std::vector<int>>(v, k);
    else if (k == "temperature") grid.t_values = Get<std::vector<double>>(v, k);
    else if (k == "delta_high") grid.delta_high_values = Get<std::vector<double>>(v, k);
    else if (k == "delta_low") grid.delta_low_values = Get<std::vector<double>>(v, k);
    else if (k == "tau_stable") grid.tau_values = Get<std::vector<double>>(v, k);
    else return false;
    return true;
  });
  grid.Validate();
  return grid;
}

std::vector<CalibrationRow> CmdCalibrate(const PipelineConfig& config,
                                         const std::string& validation_path,
                                         const SweepGrid& grid,
                                         const CalibrationObjective& objective) {
  config.Validate();
  grid.Validate();
  if (config.mode == PipelineMode::kKnnOnly) {
    throw Error(ErrorKind::kConfig,
                "calibration needs the ensemble (mode full or zero_shot)");
  }
  Loaded loaded = LoadRecords(validation_path, true);
  RequireLabels(loaded.records, validation_path);
  auto provider = MakeEmbeddingProvider(config.EffectiveEmbedding());
  auto generator = MakeGenerator(config.EffectiveEnsemble());
  auto index = LoadIndexFor(config, *provider);

  if (index) {
    std::set<std::string> kb_binaries;
    for (const auto& e : index->entries()) {
      kb_binaries.insert(e.composite.binary_id);
    }
    std::set<std::string> shared;
    for (const auto& r : loaded.records) {
      if (kb_binaries.count(r.binary_id)) shared.insert(r.binary_id);
    }
    if (!shared.empty()) {
      std::string msg =
          "validation set shares binaries with the knowledge base:";
      for (const auto& id : shared) msg += "\n  " + id;
      throw Error(ErrorKind::kData, msg);
    }
  }

  const std::vector<FunctionRecord> selected = SelectTopM(
      FilterDcfs(loaded.records, config.dcf).kept, config.dcf.top_m);
  std::vector<CompositeEmbedding> queries(selected.size());
  ParallelFor(selected.size(), config.workers, [&](size_t i) {
    queries[i] = EmbedRecord(selected[i], *provider);
  });

  const EnsembleConfig base_ensemble = config.EffectiveEnsemble();
  UpstreamRunner runner = [&](const UpstreamParams& p) {
    RetrievalParams retrieval = config.retrieval;
    retrieval.k = p.k;
    retrieval.sigma_min = p.sigma_min;
    EnsembleConfig ensemble = base_ensemble;
    ensemble.n_agents = p.n_agents;
    ensemble.temperature = p.temperature;
    std::vector<OutcomeRecord> out(selected.size());
    ParallelFor(selected.size(), config.workers, [&](size_t i) {
      out[i] = ClassifyFunction(selected[i], queries[i], index.get(),
                                config.mode, retrieval, ensemble,
                                config.thresholds, *generator);
    });
    return out;
  };
  std::vector<CalibrationRow> rows =
      CalibrateThresholds(runner, grid, objective);

  std::ostringstream csv;
  WriteCalibrationCsv(csv, rows);
  WriteFile(ReportPath(config, "calibration.csv"), csv.str());
  const CalibrationRow& best = rows.front();
  ordered_json chosen;
  chosen["retrieval"] = {{"k", best.upstream.k},
                         {"sigma_min", best.upstream.sigma_min}};
  chosen["ensemble"] = {{"n_agents", best.upstream.n_agents},
                        {"temperature", best.upstream.temperature}};
  chosen["thresholds"] = {{"delta_high", best.thresholds.delta_high},
                          {"delta_low", best.thresholds.delta_low},
                          {"tau_stable", best.thresholds.tau_stable}};
  WriteFile(ReportPath(config, "chosen_config.json"), Dump(chosen));
  return rows;
}

std::vector<SimulationResult> CmdSimulate(const PipelineConfig& config,
                                          const std::string& scenario_path) {
  config.thresholds.Validate();
  const json j = ReadJsonFile(scenario_path, ErrorKind::kConfig);
  int n_agents = config.ensemble.n_agents;
  std::vector<SimulationScenario> scenarios;
  ForEachKey(j, "scenario_file", [&](const std::string& k, const json& v) {
    if (k == "n_agents") {
      n_agents = Get<int>(v, k);
    } else if (k == "scenarios") {
      if (!v.is_array()) {
        throw Error(ErrorKind::kConfig, "scenarios must be an array");
      }
      for (const auto& s : v) {
        SimulationScenario scn;
        ForEachKey(s, "scenarios[]", [&](const std::string& sk, const json& sv) {
          if (sk == "p_malicious") scn.p_malicious = Get<double>(sv, sk);
          else if (sk == "context_w") scn.context_w = Get<double>(sv, sk);
          else if (sk == "repetitions") scn.repetitions = Get<int>(sv, sk);
          else return false;
          return true;
        });
        scenarios.push_back(scn);
      }
    } else {
      return false;
    }
    return true;
  });
  if (n_agents < 1) throw Error(ErrorKind::kConfig, "n_agents must be >= 1");

  std::vector<SimulationResult> results;
  for (size_t i = 0; i < scenarios.size(); ++i) {
    results.push_back(SimulateScenario(scenarios[i], n_agents,
                                       config.thresholds, config.seed, i));
  }
  std::ostringstream csv;
  WriteSimulationCsv(csv, results);
  WriteFile(ReportPath(config, "simulation.csv"), csv.str());
  ordered_json report;
  report["n_agents"] = n_agents;
  report["seed"] = config.seed;
  auto arr = ordered_json::array();
  for (const auto& r : results) {
    arr.push_back({{"p_malicious", r.scenario.p_malicious},
                   {"context_w", r.scenario.context_w},
                   {"repetitions", r.scenario.repetitions},
                   {"mean_fes", r.mean_fes},
                   {"mean_ecs", r.mean_ecs},
                   {"malicious", r.malicious},
                   {"benign", r.benign},
                   {"uncertain", r.uncertain}});
  }
  report["scenarios"] = std::move(arr);
  WriteFile(ReportPath(config, "simulation.json"), Dump(report));
  return results;
}

size_t CmdExportEmbeddings(const PipelineConfig& config,
                           const std::string& corpus_path,
                           const std::string& out_path) {
  config.EffectiveEmbedding().Validate();
  Loaded loaded = LoadRecords(corpus_path, true);
  auto provider = MakeEmbeddingProvider(config.EffectiveEmbedding());
  std::vector<EmbeddingRow> rows(loaded.records.size());
  ParallelFor(rows.size(), config.workers, [&](size_t i) {
    const FunctionRecord& r = loaded.records[i];
    rows[i] = {r.binary_id, r.function_id, r.label,
               EmbedRecord(r, *provider).vector};
  });
  std::ostringstream csv;
  WriteEmbeddingCsv(csv, rows);
  WriteFile(out_path.empty() ? ReportPath(config, "embeddings.csv") : out_path,
            csv.str());
  return rows.size();
}

void CmdGenerateSynthetic(const SyntheticCorpusConfig& synthetic,
                          const std::string& out_dir) {
  const SyntheticCorpus corpus = GenerateSyntheticCorpus(synthetic);
  auto dump = [&](const std::vector<FunctionRecord>& records,
                  const std::string& name) {
    std::ostringstream out;
    for (const auto& r : records) WriteFunctionRecord(out, r);
    WriteFile((std::filesystem::path(out_dir) / name).string(), out.str());
  };
  dump(corpus.kb_records, "kb.jsonl");
  dump(corpus.test_records, "test.jsonl");
  if (!corpus.validation_records.empty()) {
    dump(corpus.validation_records, "validation.jsonl");
  }
}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kTransport:
      return 4;
    case ErrorKind::kData:
    case ErrorKind::kContract:
    case ErrorKind::kIntegrity:
    case ErrorKind::kVersion:
    case ErrorKind::kNoEvidence:
      return 3;
  }
  return 1;
}

}  // namespace binverdict
