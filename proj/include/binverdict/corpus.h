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

// Function-level records exported by external lifters, and the complexity
// filter that reduces them to decision-critical functions (DCFs).

#ifndef BINVERDICT_CORPUS_H_
#define BINVERDICT_CORPUS_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace binverdict {

enum class Label { kMalicious, kBenign, kUnknown };

const char* LabelName(Label label);
std::optional<Label> ParseLabel(std::string_view text);

struct FunctionRecord {
  std::string binary_id;
  std::string function_id;
  std::string asm_text;
  std::string pseudo_text;
  int64_t instr_count = 0;
  std::optional<int64_t> cyclomatic_complexity;
  std::optional<int64_t> cfg_nodes;
  std::optional<int64_t> cfg_edges;
  Label label = Label::kUnknown;

  bool operator==(const FunctionRecord&) const = default;
};

struct LineIssue {
  size_t line = 0;  // 1-based
  std::string message;
};

struct ParseResult {
  std::vector<FunctionRecord> records;
  std::vector<LineIssue> errors;
  std::vector<LineIssue> warnings;  // unknown fields
};

// Parses JSONL lifter output. Blank lines are skipped. A line that fails to
// parse or violates a record invariant is reported in `errors` and dropped;
// a repeated (binary_id, function_id) pair is rejected in favour of the first.
ParseResult ParseFunctionRecords(std::istream& in);
ParseResult ParseFunctionRecordsFile(const std::string& path);

// One JSON object per line, fields in a fixed order.
void WriteFunctionRecord(std::ostream& out, const FunctionRecord& record);

// McCabe complexity E - N + 2P, floored at 1. Throws Error(kData) when
// nodes == 0, components < 1 or edges < 0.
int64_t CyclomaticComplexity(int64_t nodes, int64_t edges,
                             int64_t components = 1);

// Lifter-supplied complexity wins; otherwise it is derived from the CFG
// counts (single component). nullopt when neither is usable.
std::optional<int64_t> ResolveComplexity(const FunctionRecord& record);

struct DcfFilterConfig {
  int64_t min_instr = 10;
  int64_t min_cc = 5;
  int64_t top_m = 5;

  // Throws Error(kConfig) unless every field is strictly positive.
  void Validate() const;
};

struct Exclusion {
  std::string binary_id;
  std::string function_id;
  std::string reason;
};

struct FilterResult {
  std::vector<FunctionRecord> kept;
  std::vector<Exclusion> excluded;
};

// Keeps records with instr_count >= min_instr and complexity >= min_cc,
// preserving order. Both bounds are inclusive.
FilterResult FilterDcfs(const std::vector<FunctionRecord>& records,
                        const DcfFilterConfig& config);

// Per binary, keeps the `m` most complex functions. Ordering is complexity
// desc, then instr_count desc, then function_id asc. Binaries appear in
// order of first occurrence. Throws Error(kConfig) for m <= 0.
std::vector<FunctionRecord> SelectTopM(
    const std::vector<FunctionRecord>& records, int64_t m);

// Strict weak ordering used by SelectTopM ("a ranks before b").
bool RanksBefore(const FunctionRecord& a, const FunctionRecord& b);

}  // namespace binverdict

#endif  // BINVERDICT_CORPUS_H_
