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

// Homogeneous agent ensemble: N independent samples of one prompt, each
// parsed into a vote.

#ifndef BINVERDICT_ENSEMBLE_H_
#define BINVERDICT_ENSEMBLE_H_

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "binverdict/corpus.h"
#include "binverdict/knowledge_base.h"

namespace binverdict {

enum class Vote { kMalicious, kBenign, kAbstain };

const char* VoteName(Vote vote);

enum class GeneratorMode { kRemote, kSynthetic };

inline constexpr std::string_view kGroundedTemplate = "grounded-v1";
inline constexpr std::string_view kZeroShotTemplate = "zero-shot-v1";

struct EnsembleConfig {
  int n_agents = 5;
  double temperature = 0.7;
  GeneratorMode generator = GeneratorMode::kSynthetic;
  std::string endpoint_url;
  std::string model_name = "gemma3:27b";
  std::string prompt_template_id = std::string(kGroundedTemplate);
  std::string response_field = "response";
  uint64_t seed = 0;  // synthetic mode only
  std::chrono::milliseconds per_agent_timeout{120000};
  int retries = 0;
  int max_parallel = 1;
  size_t prompt_budget = 16384;  // bytes

  // Synthetic mode: fixed vote probability. When unset, agents derive it
  // from the similarity-weighted malicious share of the evidence, sharpened
  // by the temperature.
  std::optional<double> synthetic_p_malicious;
  // Synthetic mode: simulated per-agent generation time.
  std::chrono::microseconds synthetic_delay{0};

  void Validate() const;
};

struct AgentResponse {
  int agent_index = 0;
  std::string raw_text;
  Vote vote = Vote::kAbstain;
  std::chrono::nanoseconds latency{0};
  std::string failure;  // transport/timeout reason when the agent failed
};

struct VoteSet {
  std::vector<AgentResponse> responses;  // ordered by agent_index
  int counted_votes = 0;                 // non-abstaining agents
  int malicious_votes = 0;
  bool quorum_failed = false;            // abstentions > N/2

  // Aggregates in agent order regardless of completion order.
  static VoteSet FromResponses(std::vector<AgentResponse> responses);

  double p_hat() const {
    return counted_votes == 0
               ? 0.0
               : static_cast<double>(malicious_votes) / counted_votes;
  }
};

// Deterministic prompt: target streams, one evidence block per neighbour in
// similarity order, and the required trailing verdict line. The total size
// never exceeds `budget` bytes; truncated sections carry kTruncationMarker.
// `index` may be null only when `rs` is empty. Throws Error(kConfig) for an
// unknown template or a budget too small for the fixed sections.
inline constexpr std::string_view kTruncationMarker = "[...truncated]";

std::string BuildPrompt(const FunctionRecord& record, const RetrievalSet& rs,
                        const KbIndex* index, std::string_view template_id,
                        size_t budget);

// Last case-insensitive "VERDICT:" wins; SUSPICIOUS counts as malicious.
// Anything else is an abstention.
Vote ParseVerdict(std::string_view raw_text);

struct GenerationRequest {
  std::string_view prompt;
  int agent_index = 0;
  double temperature = 0.0;
  // Synthetic mode inputs; ignored by remote backends.
  uint64_t sample_key = 0;
  double evidence_malicious_share = 0.5;
};

class Generator {
 public:
  virtual ~Generator() = default;

  // Completion text. Throws TransportError (or Error) on failure.
  virtual std::string Generate(const GenerationRequest& request) = 0;
};

// POSTs {"model","prompt","stream":false,"options":{"temperature"}} and reads
// the completion from `response_field`.
class RemoteGenerator : public Generator {
 public:
  explicit RemoteGenerator(EnsembleConfig config);

  std::string Generate(const GenerationRequest& request) override;

 private:
  EnsembleConfig config_;
};

class SyntheticGenerator : public Generator {
 public:
  SyntheticGenerator(std::optional<double> fixed_p_malicious,
                     std::chrono::microseconds delay);

  std::string Generate(const GenerationRequest& request) override;

 private:
  std::optional<double> fixed_p_;
  std::chrono::microseconds delay_;
};

std::unique_ptr<Generator> MakeGenerator(const EnsembleConfig& config);

// Offline agent: votes malicious iff a uniform draw keyed by
// (seed, agent_index) falls below p_malicious. The text ends in a
// parseable verdict line.
AgentResponse SyntheticAgent(double p_malicious, uint64_t seed,
                             int agent_index);

// Similarity-weighted malicious share of the evidence; 0.5 when empty.
double EvidenceMaliciousShare(const RetrievalSet& rs);

// Two-outcome softmax of log(share) / T. T == 0 is the argmax.
double TemperedProbability(double share, double temperature);

// Per-function key for synthetic sampling.
uint64_t SampleKey(uint64_t seed, std::string_view binary_id,
                   std::string_view function_id);

// Runs n_agents independent generate+parse cycles over one prompt. Agent
// failures become abstentions; the ensemble itself never throws for them.
VoteSet RunAgents(std::string_view prompt, const RetrievalSet& rs,
                  const EnsembleConfig& config, Generator& generator,
                  uint64_t sample_key);

// BuildPrompt + RunAgents for one function.
VoteSet RunEnsemble(const FunctionRecord& record, const RetrievalSet& rs,
                    const KbIndex* index, const EnsembleConfig& config,
                    Generator& generator);

}  // namespace binverdict

#endif  // BINVERDICT_ENSEMBLE_H_
