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

// Evidence strength (FES), evidence conflict (ECS) and the tri-state
// decision policy, plus the binary-level roll-up.

#ifndef BINVERDICT_VERDICT_H_
#define BINVERDICT_VERDICT_H_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "binverdict/ensemble.h"
#include "json.hpp"

namespace binverdict {

enum class Verdict { kMalicious, kBenign, kUncertain };

enum class Reason {
  kConsensus,
  kEntropyReject,
  kGrayZone,
  kNoEvidence,
  kQuorumFailed,
};

const char* VerdictName(Verdict verdict);
const char* ReasonName(Reason reason);

struct DecisionThresholds {
  double delta_high = 0.60;
  double delta_low = 0.40;
  double tau_stable = 0.80;

  // 0 <= delta_low < delta_high <= 1 and 0 < tau_stable. tau_stable may
  // exceed 1 to switch entropy rejection off entirely.
  void Validate() const;
};

// Evidence behind one verdict, carried into reports.
struct EvidenceChain {
  std::vector<std::string> neighbor_ids;  // "binary_id/function_id"
  std::vector<double> neighbor_similarities;
  std::vector<Vote> agent_votes;
};

struct VerdictTuple {
  Verdict verdict = Verdict::kUncertain;
  double fes = 0.0;
  double ecs = 0.0;
  double p_hat = 0.0;
  double context_w = 0.0;
  Reason reason = Reason::kNoEvidence;
  EvidenceChain evidence;
};

struct Decision {
  Verdict verdict;
  Reason reason;

  bool operator==(const Decision&) const = default;
};

// Binary entropy in bits; 0 at p in {0, 1}.
double BinaryEntropy(double p);

// (malicious / counted) * context_w, or 0 with no counted votes.
double Fes(const VoteSet& votes, double context_w);

// Entropy of the malicious-vote fraction. Throws Error(kNoEvidence) when no
// vote was counted.
double Ecs(const VoteSet& votes);
double EcsFromCounts(int malicious_votes, int counted_votes);

// ECS >= tau_stable rejects first; then FES > delta_high is malicious,
// FES < delta_low is benign, anything between is a gray-zone rejection.
Decision Decide(double fes, double ecs, const DecisionThresholds& th);

// Full per-function evaluation. Quorum failure and missing evidence force
// an uncertain verdict whatever the scores say.
VerdictTuple EvaluateFunction(const VoteSet& votes, double context_w,
                              bool has_evidence, const DecisionThresholds& th);

struct FunctionVerdict {
  std::string function_id;
  VerdictTuple tuple;
};

struct BinaryVerdict {
  std::string binary_id;
  Verdict verdict = Verdict::kUncertain;
  std::vector<FunctionVerdict> per_function;
  double max_fes = 0.0;
  double max_ecs = 0.0;
  // Set to kNoEvidence when no function survived filtering.
  std::optional<Reason> reason;
};

// Any malicious function makes the binary malicious; otherwise any uncertain
// function makes it uncertain; otherwise benign. Empty input is
// uncertain/no_evidence.
BinaryVerdict AggregateBinary(std::string binary_id,
                              std::vector<FunctionVerdict> per_function);

nlohmann::ordered_json ToJson(const VerdictTuple& tuple);
nlohmann::ordered_json ToJson(const BinaryVerdict& verdict);

}  // namespace binverdict

#endif  // BINVERDICT_VERDICT_H_
