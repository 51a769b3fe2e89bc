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

// Vector knowledge base of verified functions: exact cosine k-NN retrieval
// with an optional per-label balance, the k-NN vote used by the fast path,
// and the on-disk index container.

#ifndef BINVERDICT_KNOWLEDGE_BASE_H_
#define BINVERDICT_KNOWLEDGE_BASE_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "binverdict/corpus.h"
#include "binverdict/embedding.h"

namespace binverdict {

inline constexpr size_t kDefaultSnippetCap = 512;

struct KbEntry {
  CompositeEmbedding composite;  // carries binary_id / function_id
  Label label = Label::kUnknown;
  std::string family;
  std::string snippet;
};

// Prompt snippet for a record: pseudo-code if present, else assembly,
// truncated to at most `cap` bytes on a UTF-8 boundary.
std::string MakeSnippet(const FunctionRecord& record,
                        size_t cap = kDefaultSnippetCap);

struct BuildMeta {
  uint64_t corpus_seed = 0;
  int64_t created_at = 0;  // seconds since epoch, supplied by the caller
  uint64_t malicious_count = 0;
  uint64_t benign_count = 0;

  bool operator==(const BuildMeta&) const = default;
};

// Immutable after construction; safe for concurrent reads.
class KbIndex {
 public:
  const std::vector<KbEntry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  int dim() const { return dim_; }
  const BuildMeta& meta() const { return meta_; }

 private:
  friend KbIndex BuildIndex(std::vector<KbEntry>, const BuildMeta&, size_t);

  std::vector<KbEntry> entries_;
  int dim_ = 0;
  BuildMeta meta_;
};

// Validates and freezes `entries`. Label counts in `meta` are recomputed.
// Throws Error(kData) for an empty input, unverified labels, over-long
// snippets, or mixed dimensions (the message lists offending entries).
KbIndex BuildIndex(std::vector<KbEntry> entries, const BuildMeta& meta = {},
                   size_t snippet_cap = kDefaultSnippetCap);

struct RetrievalParams {
  int k = 10;
  double sigma_min = 0.70;
  bool balance = true;

  void Validate() const;
};

struct Neighbor {
  size_t entry = 0;  // index into KbIndex::entries()
  double similarity = 0.0;
  Label label = Label::kUnknown;
};

struct RetrievalSet {
  std::vector<Neighbor> neighbors;  // similarity desc, ties by entry index
  std::string binary_id;
  std::string function_id;
  double sigma_min = 0.0;
  bool balanced = false;
};

// Top-k neighbours with similarity >= sigma_min. In balanced mode the top
// ceil(k/2) malicious and floor(k/2) benign are chosen independently, with
// no backfill when one label runs short. An empty result is not an error.
RetrievalSet Retrieve(const KbIndex& index, const CompositeEmbedding& query,
                      const RetrievalParams& params);

// Mean neighbour similarity; 0 for an empty set.
double ContextWeight(const RetrievalSet& rs);

struct KnnVoteResult {
  Label label = Label::kUnknown;
  double confidence = 0.0;  // winning share of summed similarity
  bool tie = false;
};

// Similarity-weighted label vote. An exact tie goes to malicious with
// confidence 0.5. Throws Error(kNoEvidence) for an empty set.
KnnVoteResult KnnVote(const RetrievalSet& rs);

// Binary container: header (magic, version, dim, counts), entry block,
// CRC-32 footer. All integers and floats little-endian.
inline constexpr uint32_t kIndexFormatVersion = 1;

std::string SerializeIndex(const KbIndex& index);
// Throws Error(kVersion) on a version mismatch and Error(kIntegrity) on any
// truncation, bad magic or checksum failure.
KbIndex DeserializeIndex(std::string_view bytes);

// Writes atomically (temp file + rename) so a failed save leaves no partial
// index behind.
void SaveIndex(const KbIndex& index, const std::string& path);
KbIndex LoadIndex(const std::string& path);

struct EmbeddingRow {
  std::string binary_id;
  std::string function_id;
  Label label = Label::kUnknown;
  std::vector<float> vector;
};

// CSV with header binary_id,function_id,label,v0..v{dim-1}.
void WriteEmbeddingCsv(std::ostream& out, const std::vector<EmbeddingRow>& rows);

}  // namespace binverdict

#endif  // BINVERDICT_KNOWLEDGE_BASE_H_
