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

#include "binverdict/verdict.h"

#include <algorithm>
#include <cmath>

#include "binverdict/error.h"

namespace binverdict {

const char* VerdictName(Verdict verdict) {
  switch (verdict) {
    case Verdict::kMalicious:
      return "malicious";
    case Verdict::kBenign:
      return "benign";
    case Verdict::kUncertain:
      return "uncertain";
  }
  return "uncertain";
}

const char* ReasonName(Reason reason) {
  switch (reason) {
    case Reason::kConsensus:
      return "consensus";
    case Reason::kEntropyReject:
      return "entropy_reject";
    case Reason::kGrayZone:
      return "gray_zone";
    case Reason::kNoEvidence:
      return "no_evidence";
    case Reason::kQuorumFailed:
      return "quorum_failed";
  }
  return "no_evidence";
}

void DecisionThresholds::Validate() const {
  if (!(delta_low >= 0.0 && delta_low < delta_high && delta_high <= 1.0)) {
    throw Error(ErrorKind::kConfig,
                "thresholds need 0 <= delta_low < delta_high <= 1");
  }
  if (!(tau_stable > 0.0)) {
    throw Error(ErrorKind::kConfig, "tau_stable must be > 0");
  }
}

double BinaryEntropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

double Fes(const VoteSet& votes, double context_w) {
  if (votes.counted_votes == 0) return 0.0;
  return votes.p_hat() * context_w;
}

double EcsFromCounts(int malicious_votes, int counted_votes) {
  if (counted_votes <= 0) {
    throw Error(ErrorKind::kNoEvidence, "ECS undefined without counted votes");
  }
  if (malicious_votes == 0 || malicious_votes == counted_votes) return 0.0;
  // Both shares straight from the counts, so k and n-k give the same bits.
  const double p = static_cast<double>(malicious_votes) / counted_votes;
  const double q =
      static_cast<double>(counted_votes - malicious_votes) / counted_votes;
  return std::min(1.0, -(p * std::log2(p) + q * std::log2(q)));
}

double Ecs(const VoteSet& votes) {
  return EcsFromCounts(votes.malicious_votes, votes.counted_votes);
}

Decision Decide(double fes, double ecs, const DecisionThresholds& th) {
  if (ecs >= th.tau_stable) return {Verdict::kUncertain, Reason::kEntropyReject};
  if (fes > th.delta_high) return {Verdict::kMalicious, Reason::kConsensus};
  if (fes < th.delta_low) return {Verdict::kBenign, Reason::kConsensus};
  return {Verdict::kUncertain, Reason::kGrayZone};
}

VerdictTuple EvaluateFunction(const VoteSet& votes, double context_w,
                              bool has_evidence,
                              const DecisionThresholds& th) {
  VerdictTuple t;
  t.context_w = context_w;
  t.p_hat = votes.p_hat();
  t.fes = Fes(votes, context_w);
  t.ecs = votes.counted_votes > 0 ? Ecs(votes) : 0.0;
  for (const auto& r : votes.responses) t.evidence.agent_votes.push_back(r.vote);

  if (votes.quorum_failed || votes.counted_votes == 0) {
    t.verdict = Verdict::kUncertain;
    t.reason = Reason::kQuorumFailed;
  } else if (!has_evidence) {
    t.verdict = Verdict::kUncertain;
    t.reason = Reason::kNoEvidence;
  } else {
    Decision d = Decide(t.fes, t.ecs, th);
    t.verdict = d.verdict;
    t.reason = d.reason;
  }
  return t;
}

BinaryVerdict AggregateBinary(std::string binary_id,
                              std::vector<FunctionVerdict> per_function) {
  BinaryVerdict out;
  out.binary_id = std::move(binary_id);
  if (per_function.empty()) {
    out.reason = Reason::kNoEvidence;
    return out;
  }
  bool any_malicious = false;
  bool any_uncertain = false;
  for (const auto& f : per_function) {
    any_malicious |= f.tuple.verdict == Verdict::kMalicious;
    any_uncertain |= f.tuple.verdict == Verdict::kUncertain;
    out.max_fes = std::max(out.max_fes, f.tuple.fes);
    out.max_ecs = std::max(out.max_ecs, f.tuple.ecs);
  }
  out.verdict = any_malicious   ? Verdict::kMalicious
                : any_uncertain ? Verdict::kUncertain
                                : Verdict::kBenign;
  out.per_function = std::move(per_function);
  return out;
}

nlohmann::ordered_json ToJson(const VerdictTuple& tuple) {
  nlohmann::ordered_json j;
  j["verdict"] = VerdictName(tuple.verdict);
  j["fes"] = tuple.fes;
  j["ecs"] = tuple.ecs;
  j["p_hat"] = tuple.p_hat;
  j["context_w"] = tuple.context_w;
  j["reason"] = ReasonName(tuple.reason);
  auto votes = nlohmann::ordered_json::array();
  for (Vote v : tuple.evidence.agent_votes) votes.push_back(VoteName(v));
  j["agent_votes"] = std::move(votes);
  j["neighbor_ids"] = tuple.evidence.neighbor_ids;
  j["neighbor_similarities"] = tuple.evidence.neighbor_similarities;
  return j;
}

nlohmann::ordered_json ToJson(const BinaryVerdict& verdict) {
  nlohmann::ordered_json j;
  j["binary_id"] = verdict.binary_id;
  j["verdict"] = VerdictName(verdict.verdict);
  if (verdict.reason) j["reason"] = ReasonName(*verdict.reason);
  j["max_fes"] = verdict.max_fes;
  j["max_ecs"] = verdict.max_ecs;
  auto functions = nlohmann::ordered_json::array();
  for (const auto& f : verdict.per_function) {
    nlohmann::ordered_json fj;
    fj["function_id"] = f.function_id;
    const nlohmann::ordered_json tuple = ToJson(f.tuple);
    for (const auto& [key, value] : tuple.items()) fj[key] = value;
    functions.push_back(std::move(fj));
  }
  j["functions"] = std::move(functions);
  return j;
}

}  // namespace binverdict
