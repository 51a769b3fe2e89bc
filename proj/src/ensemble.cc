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

#include "binverdict/ensemble.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <thread>
#include <utility>

#include "binverdict/error.h"
#include "binverdict/hash.h"
#include "binverdict/http_json.h"

namespace binverdict {
namespace {

constexpr std::string_view kGroundedPreamble =
    "You are a malware analyst. Decide whether the TARGET function is "
    "malicious or benign. Base the decision only on the verified reference "
    "functions listed under EVIDENCE; each carries its analyst-confirmed "
    "label and its similarity to the target.\n\n";

constexpr std::string_view kZeroShotPreamble =
    "You are a malware analyst. Decide whether the TARGET function is "
    "malicious or benign.\n\n";

constexpr std::string_view kNoEvidence =
    "### EVIDENCE\n(no verified reference passed the similarity "
    "threshold)\n\n";

constexpr std::string_view kOutputSection =
    "### OUTPUT\nExplain your reasoning briefly, then end with exactly one "
    "final line, either\nVERDICT: MALICIOUS\nor\nVERDICT: BENIGN\n";

std::string TruncateUtf8(std::string_view text, size_t max_bytes) {
  if (text.size() <= max_bytes) return std::string(text);
  size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) {
    --cut;
  }
  return std::string(text.substr(0, cut));
}

// Fits `text` into `allowance` bytes, appending the truncation marker when
// anything was cut and there is room for it.
std::string FitText(std::string_view text, size_t allowance) {
  if (text.size() <= allowance) return std::string(text);
  if (allowance < kTruncationMarker.size()) return TruncateUtf8(text, allowance);
  std::string out =
      TruncateUtf8(text, allowance - kTruncationMarker.size());
  out.append(kTruncationMarker);
  return out;
}

// Water-filling split of `budget` bytes over texts: short texts keep their
// full length, the rest share what remains equally.
std::vector<size_t> Allowances(const std::vector<std::string_view>& texts,
                               size_t budget) {
  std::vector<size_t> order(texts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return texts[a].size() < texts[b].size();
  });
  std::vector<size_t> allowance(texts.size(), 0);
  size_t remaining = budget;
  for (size_t pos = 0; pos < order.size(); ++pos) {
    size_t share = remaining / (order.size() - pos);
    size_t give = std::min(texts[order[pos]].size(), share);
    allowance[order[pos]] = give;
    remaining -= give;
  }
  return allowance;
}

const char* UpperLabel(Label label) {
  return label == Label::kMalicious ? "MALICIOUS" : "BENIGN";
}

}  // namespace

const char* VoteName(Vote vote) {
  switch (vote) {
    case Vote::kMalicious:
      return "malicious";
    case Vote::kBenign:
      return "benign";
    case Vote::kAbstain:
      return "abstain";
  }
  return "abstain";
}

void EnsembleConfig::Validate() const {
  if (n_agents < 1) throw Error(ErrorKind::kConfig, "n_agents must be >= 1");
  if (!(temperature >= 0.0)) {
    throw Error(ErrorKind::kConfig, "temperature must be >= 0");
  }
  if (generator == GeneratorMode::kRemote && endpoint_url.empty()) {
    throw Error(ErrorKind::kConfig, "remote generator needs endpoint_url");
  }
  if (prompt_template_id != kGroundedTemplate &&
      prompt_template_id != kZeroShotTemplate) {
    throw Error(ErrorKind::kConfig,
                "unknown prompt template '" + prompt_template_id + "'");
  }
  if (max_parallel < 1) {
    throw Error(ErrorKind::kConfig, "max_parallel must be >= 1");
  }
  if (retries < 0) throw Error(ErrorKind::kConfig, "retries must be >= 0");
  if (synthetic_p_malicious &&
      !(*synthetic_p_malicious >= 0.0 && *synthetic_p_malicious <= 1.0)) {
    throw Error(ErrorKind::kConfig, "synthetic p_malicious must be in [0, 1]");
  }
}

VoteSet VoteSet::FromResponses(std::vector<AgentResponse> responses) {
  std::sort(responses.begin(), responses.end(),
            [](const AgentResponse& a, const AgentResponse& b) {
              return a.agent_index < b.agent_index;
            });
  VoteSet set;
  int abstained = 0;
  for (const auto& r : responses) {
    if (r.vote == Vote::kAbstain) {
      ++abstained;
      continue;
    }
    ++set.counted_votes;
    if (r.vote == Vote::kMalicious) ++set.malicious_votes;
  }
  set.quorum_failed = 2 * abstained > static_cast<int>(responses.size());
  set.responses = std::move(responses);
  return set;
}

std::string BuildPrompt(const FunctionRecord& record, const RetrievalSet& rs,
                        const KbIndex* index, std::string_view template_id,
                        size_t budget) {
  bool grounded;
  if (template_id == kGroundedTemplate) {
    grounded = true;
  } else if (template_id == kZeroShotTemplate) {
    grounded = false;
  } else {
    throw Error(ErrorKind::kConfig,
                "unknown prompt template '" + std::string(template_id) + "'");
  }
  if (grounded && !rs.neighbors.empty() && index == nullptr) {
    throw Error(ErrorKind::kContract, "evidence given without its index");
  }

  // Fixed scaffolding around the variable texts.
  std::vector<std::string> headers;
  std::vector<std::string_view> texts;
  headers.push_back(std::string(grounded ? kGroundedPreamble
                                         : kZeroShotPreamble) +
                    "### TARGET binary=" + record.binary_id +
                    " function=" + record.function_id + "\n[ASSEMBLY]\n");
  texts.push_back(record.asm_text);
  headers.push_back("\n[PSEUDO-C]\n");
  texts.push_back(record.pseudo_text);

  std::string trailer;
  if (grounded) {
    for (size_t i = 0; i < rs.neighbors.size(); ++i) {
      const Neighbor& n = rs.neighbors[i];
      const KbEntry& entry = index->entries().at(n.entry);
      char sim[32];
      std::snprintf(sim, sizeof(sim), "%.4f", n.similarity);
      headers.push_back("\n\n### EVIDENCE " + std::to_string(i + 1) +
                        " label=" + UpperLabel(n.label) + " similarity=" + sim +
                        " source=" + entry.composite.binary_id + "/" +
                        entry.composite.function_id + "\n");
      texts.push_back(entry.snippet);
    }
    trailer = rs.neighbors.empty() ? "\n\n" + std::string(kNoEvidence)
                                   : std::string("\n\n");
  } else {
    trailer = "\n\n";
  }
  trailer.append(kOutputSection);

  size_t fixed = trailer.size();
  for (const auto& h : headers) fixed += h.size();
  if (fixed > budget) {
    throw Error(ErrorKind::kConfig,
                "prompt budget " + std::to_string(budget) +
                    " is smaller than the fixed prompt sections (" +
                    std::to_string(fixed) + " bytes)");
  }
  auto allowance = Allowances(texts, budget - fixed);

  std::string prompt;
  prompt.reserve(budget);
  for (size_t i = 0; i < headers.size(); ++i) {
    prompt.append(headers[i]);
    prompt.append(FitText(texts[i], allowance[i]));
  }
  prompt.append(trailer);
  return prompt;
}

Vote ParseVerdict(std::string_view raw_text) {
  std::string lower(raw_text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  constexpr std::string_view kKey = "verdict:";
  size_t at = lower.rfind(kKey);
  if (at == std::string::npos) return Vote::kAbstain;
  size_t pos = at + kKey.size();
  while (pos < lower.size() &&
         (std::isspace(static_cast<unsigned char>(lower[pos])) ||
          lower[pos] == '*' || lower[pos] == '"' || lower[pos] == '\'' ||
          lower[pos] == '`')) {
    ++pos;
  }
  size_t end = pos;
  while (end < lower.size() &&
         std::isalpha(static_cast<unsigned char>(lower[end]))) {
    ++end;
  }
  std::string_view word(lower.data() + pos, end - pos);
  if (word == "malicious" || word == "suspicious") return Vote::kMalicious;
  if (word == "benign") return Vote::kBenign;
  return Vote::kAbstain;
}

RemoteGenerator::RemoteGenerator(EnsembleConfig config)
    : config_(std::move(config)) {
  config_.Validate();
}

std::string RemoteGenerator::Generate(const GenerationRequest& request) {
  nlohmann::json body = {
      {"model", config_.model_name},
      {"prompt", std::string(request.prompt)},
      {"stream", false},
      {"options", {{"temperature", request.temperature}}},
  };
  nlohmann::json response = PostJson(config_.endpoint_url, body,
                                     config_.per_agent_timeout, config_.retries);
  const nlohmann::json* field = FindJsonPath(response, config_.response_field);
  if (field == nullptr || !field->is_string()) {
    throw Error(ErrorKind::kContract, "generation response has no string at '" +
                                          config_.response_field + "'");
  }
  return field->get<std::string>();
}

SyntheticGenerator::SyntheticGenerator(std::optional<double> fixed_p_malicious,
                                       std::chrono::microseconds delay)
    : fixed_p_(fixed_p_malicious), delay_(delay) {}

std::string SyntheticGenerator::Generate(const GenerationRequest& request) {
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  double p = fixed_p_.value_or(TemperedProbability(
      request.evidence_malicious_share, request.temperature));
  return SyntheticAgent(p, request.sample_key, request.agent_index).raw_text;
}

std::unique_ptr<Generator> MakeGenerator(const EnsembleConfig& config) {
  config.Validate();
  if (config.generator == GeneratorMode::kRemote) {
    return std::make_unique<RemoteGenerator>(config);
  }
  return std::make_unique<SyntheticGenerator>(config.synthetic_p_malicious,
                                              config.synthetic_delay);
}

AgentResponse SyntheticAgent(double p_malicious, uint64_t seed,
                             int agent_index) {
  KeyedRng rng(CombineKeys(seed, static_cast<uint64_t>(agent_index)));
  const double draw = rng.Uniform();
  AgentResponse response;
  response.agent_index = agent_index;
  response.vote = draw < p_malicious ? Vote::kMalicious : Vote::kBenign;
  char text[160];
  std::snprintf(text, sizeof(text),
                "Agent %d weighed the evidence (p_malicious=%.3f, draw=%.4f).\n"
                "VERDICT: %s\n",
                agent_index, p_malicious, draw,
                response.vote == Vote::kMalicious ? "MALICIOUS" : "BENIGN");
  response.raw_text = text;
  return response;
}

double EvidenceMaliciousShare(const RetrievalSet& rs) {
  double malicious = 0.0;
  double total = 0.0;
  for (const auto& n : rs.neighbors) {
    total += n.similarity;
    if (n.label == Label::kMalicious) malicious += n.similarity;
  }
  return total > 0.0 ? malicious / total : 0.5;
}

double TemperedProbability(double share, double temperature) {
  share = std::clamp(share, 0.0, 1.0);
  if (temperature <= 0.0) {
    return share > 0.5 ? 1.0 : (share < 0.5 ? 0.0 : 0.5);
  }
  if (share == 0.0 || share == 1.0) return share;
  // Logistic form of s^(1/T) / (s^(1/T) + (1-s)^(1/T)).
  const double logit = (std::log(share) - std::log1p(-share)) / temperature;
  return 1.0 / (1.0 + std::exp(-logit));
}

uint64_t SampleKey(uint64_t seed, std::string_view binary_id,
                   std::string_view function_id) {
  return CombineKeys(CombineKeys(seed, Fnv1a64(binary_id)),
                     Fnv1a64(function_id));
}

VoteSet RunAgents(std::string_view prompt, const RetrievalSet& rs,
                  const EnsembleConfig& config, Generator& generator,
                  uint64_t sample_key) {
  config.Validate();
  const double share = EvidenceMaliciousShare(rs);
  std::vector<AgentResponse> responses(config.n_agents);

  auto run_one = [&](int agent) {
    AgentResponse& out = responses[agent];
    out.agent_index = agent;
    GenerationRequest request;
    request.prompt = prompt;
    request.agent_index = agent;
    request.temperature = config.temperature;
    request.sample_key = sample_key;
    request.evidence_malicious_share = share;
    const auto start = std::chrono::steady_clock::now();
    try {
      out.raw_text = generator.Generate(request);
      out.vote = ParseVerdict(out.raw_text);
    } catch (const std::exception& e) {
      out.vote = Vote::kAbstain;
      out.failure = e.what();
    }
    out.latency = std::chrono::steady_clock::now() - start;
  };

  const int workers = std::min(config.max_parallel, config.n_agents);
  if (workers <= 1) {
    for (int agent = 0; agent < config.n_agents; ++agent) run_one(agent);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (int agent = next++; agent < config.n_agents; agent = next++) {
          run_one(agent);
        }
      });
    }
    for (auto& t : threads) t.join();
  }
  return VoteSet::FromResponses(std::move(responses));
}

VoteSet RunEnsemble(const FunctionRecord& record, const RetrievalSet& rs,
                    const KbIndex* index, const EnsembleConfig& config,
                    Generator& generator) {
  const std::string prompt = BuildPrompt(record, rs, index,
                                         config.prompt_template_id,
                                         config.prompt_budget);
  return RunAgents(prompt, rs, config, generator,
                   SampleKey(config.seed, record.binary_id,
                             record.function_id));
}

}  // namespace binverdict
