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

#include "binverdict/corpus.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>
#include <utility>

#include "binverdict/error.h"
#include "json.hpp"

namespace binverdict {
namespace {

using Json = nlohmann::json;

const std::set<std::string, std::less<>>& KnownFields() {
  static const std::set<std::string, std::less<>> fields = {
      "binary_id",   "function_id",           "asm_text",
      "pseudo_text", "instr_count",           "cyclomatic_complexity",
      "cfg_nodes",   "cfg_edges",             "label"};
  return fields;
}

// Thrown internally while decoding a single line.
struct LineError {
  std::string message;
};

std::string RequireString(const Json& obj, const char* key, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw LineError{std::string("missing field '") + key + "'"};
    return {};
  }
  if (!it->is_string()) {
    throw LineError{std::string("field '") + key + "' must be a string"};
  }
  return it->get<std::string>();
}

std::optional<int64_t> OptionalCount(const Json& obj, const char* key,
                                     int64_t min_value) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) {
    throw LineError{std::string("field '") + key + "' must be an integer"};
  }
  int64_t value = it->get<int64_t>();
  if (value < min_value) {
    throw LineError{std::string("field '") + key + "' must be >= " +
                    std::to_string(min_value)};
  }
  return value;
}

FunctionRecord DecodeRecord(const Json& obj,
                            std::vector<std::string>& unknown_fields) {
  if (!obj.is_object()) throw LineError{"line is not a JSON object"};
  for (const auto& item : obj.items()) {
    if (!KnownFields().contains(item.key())) {
      unknown_fields.push_back(item.key());
    }
  }

  FunctionRecord record;
  record.binary_id = RequireString(obj, "binary_id", true);
  record.function_id = RequireString(obj, "function_id", true);
  if (record.binary_id.empty()) throw LineError{"binary_id is empty"};
  if (record.function_id.empty()) throw LineError{"function_id is empty"};
  record.asm_text = RequireString(obj, "asm_text", false);
  record.pseudo_text = RequireString(obj, "pseudo_text", false);
  if (record.asm_text.empty() && record.pseudo_text.empty()) {
    throw LineError{"both asm_text and pseudo_text are empty"};
  }

  auto instr = OptionalCount(obj, "instr_count", 0);
  if (!instr) throw LineError{"missing field 'instr_count'"};
  record.instr_count = *instr;
  record.cyclomatic_complexity = OptionalCount(obj, "cyclomatic_complexity", 1);
  record.cfg_nodes = OptionalCount(obj, "cfg_nodes", 0);
  record.cfg_edges = OptionalCount(obj, "cfg_edges", 0);
  if (!record.cyclomatic_complexity &&
      !(record.cfg_nodes && record.cfg_edges)) {
    throw LineError{
        "cyclomatic_complexity absent and cfg_nodes/cfg_edges incomplete"};
  }

  std::string label = RequireString(obj, "label", false);
  if (!label.empty()) {
    auto parsed = ParseLabel(label);
    if (!parsed) throw LineError{"unknown label '" + label + "'"};
    record.label = *parsed;
  }
  return record;
}

}  // namespace

const char* LabelName(Label label) {
  switch (label) {
    case Label::kMalicious:
      return "malicious";
    case Label::kBenign:
      return "benign";
    case Label::kUnknown:
      return "unknown";
  }
  return "unknown";
}

std::optional<Label> ParseLabel(std::string_view text) {
  if (text == "malicious") return Label::kMalicious;
  if (text == "benign") return Label::kBenign;
  if (text == "unknown") return Label::kUnknown;
  return std::nullopt;
}

ParseResult ParseFunctionRecords(std::istream& in) {
  ParseResult result;
  // (binary_id, function_id) -> first line.
  std::map<std::pair<std::string, std::string>, size_t> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    Json obj = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded()) {
      result.errors.push_back({line_no, "malformed JSON"});
      continue;
    }
    std::vector<std::string> unknown;
    FunctionRecord record;
    try {
      record = DecodeRecord(obj, unknown);
    } catch (const LineError& e) {
      result.errors.push_back({line_no, e.message});
      continue;
    } catch (const Json::exception& e) {
      result.errors.push_back({line_no, e.what()});
      continue;
    }
    auto [it, inserted] =
        seen.emplace(std::make_pair(record.binary_id, record.function_id),
                     line_no);
    if (!inserted) {
      result.errors.push_back(
          {line_no, "duplicate (binary_id, function_id) first seen on line " +
                        std::to_string(it->second)});
      continue;
    }
    for (const auto& field : unknown) {
      result.warnings.push_back({line_no, "unknown field '" + field + "'"});
    }
    result.records.push_back(std::move(record));
  }
  return result;
}

ParseResult ParseFunctionRecordsFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kData, "cannot open " + path);
  return ParseFunctionRecords(in);
}

void WriteFunctionRecord(std::ostream& out, const FunctionRecord& record) {
  nlohmann::ordered_json obj;
  obj["binary_id"] = record.binary_id;
  obj["function_id"] = record.function_id;
  obj["asm_text"] = record.asm_text;
  obj["pseudo_text"] = record.pseudo_text;
  obj["instr_count"] = record.instr_count;
  if (record.cyclomatic_complexity) {
    obj["cyclomatic_complexity"] = *record.cyclomatic_complexity;
  }
  if (record.cfg_nodes) obj["cfg_nodes"] = *record.cfg_nodes;
  if (record.cfg_edges) obj["cfg_edges"] = *record.cfg_edges;
  obj["label"] = LabelName(record.label);
  out << obj.dump() << '\n';
}

int64_t CyclomaticComplexity(int64_t nodes, int64_t edges,
                             int64_t components) {
  if (nodes <= 0) throw Error(ErrorKind::kData, "invalid graph: no nodes");
  if (components < 1) {
    throw Error(ErrorKind::kData, "invalid graph: components < 1");
  }
  if (edges < 0) throw Error(ErrorKind::kData, "invalid graph: edges < 0");
  return std::max<int64_t>(1, edges - nodes + 2 * components);
}

std::optional<int64_t> ResolveComplexity(const FunctionRecord& record) {
  if (record.cyclomatic_complexity) return record.cyclomatic_complexity;
  if (!record.cfg_nodes || !record.cfg_edges || *record.cfg_nodes <= 0) {
    return std::nullopt;
  }
  return CyclomaticComplexity(*record.cfg_nodes, *record.cfg_edges);
}

void DcfFilterConfig::Validate() const {
  if (min_instr <= 0 || min_cc <= 0 || top_m <= 0) {
    throw Error(ErrorKind::kConfig,
                "DCF filter: min_instr, min_cc and top_m must be positive");
  }
}

FilterResult FilterDcfs(const std::vector<FunctionRecord>& records,
                        const DcfFilterConfig& config) {
  config.Validate();
  FilterResult result;
  for (const auto& record : records) {
    auto cc = ResolveComplexity(record);
    std::string reason;
    if (!cc) {
      reason = "unresolvable cyclomatic complexity";
    } else if (record.instr_count < config.min_instr) {
      reason = "instr_count " + std::to_string(record.instr_count) +
               " < min_instr " + std::to_string(config.min_instr);
    } else if (*cc < config.min_cc) {
      reason = "cyclomatic complexity " + std::to_string(*cc) + " < min_cc " +
               std::to_string(config.min_cc);
    }
    if (reason.empty()) {
      result.kept.push_back(record);
    } else {
      result.excluded.push_back(
          {record.binary_id, record.function_id, std::move(reason)});
    }
  }
  return result;
}

bool RanksBefore(const FunctionRecord& a, const FunctionRecord& b) {
  int64_t cc_a = ResolveComplexity(a).value_or(0);
  int64_t cc_b = ResolveComplexity(b).value_or(0);
  if (cc_a != cc_b) return cc_a > cc_b;
  if (a.instr_count != b.instr_count) return a.instr_count > b.instr_count;
  return a.function_id < b.function_id;
}

std::vector<FunctionRecord> SelectTopM(
    const std::vector<FunctionRecord>& records, int64_t m) {
  if (m <= 0) throw Error(ErrorKind::kConfig, "top_m must be positive");

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const FunctionRecord*>> groups;
  for (const auto& record : records) {
    auto [it, inserted] = groups.try_emplace(record.binary_id);
    if (inserted) order.push_back(record.binary_id);
    it->second.push_back(&record);
  }

  std::vector<FunctionRecord> selected;
  for (const auto& binary_id : order) {
    auto& group = groups[binary_id];
    size_t keep = std::min<size_t>(group.size(), static_cast<size_t>(m));
    std::partial_sort(group.begin(), group.begin() + keep, group.end(),
                      [](const FunctionRecord* a, const FunctionRecord* b) {
                        return RanksBefore(*a, *b);
                      });
    for (size_t i = 0; i < keep; ++i) selected.push_back(*group[i]);
  }
  return selected;
}

}  // namespace binverdict
