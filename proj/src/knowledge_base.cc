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

#include "binverdict/knowledge_base.h"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>

#include "binverdict/error.h"

namespace binverdict {
namespace {

constexpr char kHeaderMagic[4] = {'B', 'V', 'K', 'B'};
constexpr char kFooterMagic[4] = {'B', 'V', 'K', 'E'};

// Similarity desc, then entry index asc.
bool Better(const Neighbor& a, const Neighbor& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.entry < b.entry;
}

// std::priority_queue puts the greatest element on top; ordering by Better
// makes that the worst kept neighbour.
struct WorseFirst {
  bool operator()(const Neighbor& a, const Neighbor& b) const {
    return Better(a, b);
  }
};

// Keeps the best `limit` qualifying neighbours with the given label (or any
// label when `label` is kUnknown).
std::vector<Neighbor> TopWithLabel(const std::vector<Neighbor>& scored,
                                   Label label, size_t limit) {
  std::priority_queue<Neighbor, std::vector<Neighbor>, WorseFirst> heap;
  if (limit == 0) return {};
  for (const auto& n : scored) {
    if (label != Label::kUnknown && n.label != label) continue;
    if (heap.size() < limit) {
      heap.push(n);
    } else if (Better(n, heap.top())) {
      heap.pop();
      heap.push(n);
    }
  }
  std::vector<Neighbor> out;
  out.reserve(heap.size());
  while (!heap.empty()) {
    out.push_back(heap.top());
    heap.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

class Writer {
 public:
  void U8(uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void U32(uint32_t v) {
    for (int i = 0; i < 4; ++i) U8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void U64(uint64_t v) {
    for (int i = 0; i < 8; ++i) U8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void F32(float v) { U32(std::bit_cast<uint32_t>(v)); }
  void Raw(std::string_view s) { bytes_.append(s); }
  void Str(std::string_view s) {
    U32(static_cast<uint32_t>(s.size()));
    Raw(s);
  }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  uint8_t U8() {
    Need(1);
    return static_cast<uint8_t>(bytes_[pos_++]);
  }
  uint32_t U32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(U8()) << (8 * i);
    return v;
  }
  uint64_t U64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(U8()) << (8 * i);
    return v;
  }
  float F32() { return std::bit_cast<float>(U32()); }
  std::string_view Raw(size_t n) {
    Need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string Str() { return std::string(Raw(U32())); }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void Need(size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorKind::kIntegrity, "index file truncated");
    }
  }

  std::string_view bytes_;
  size_t pos_ = 0;
};

uint32_t Crc32(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size()));
  return static_cast<uint32_t>(crc);
}

std::string CsvField(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(s);
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string MakeSnippet(const FunctionRecord& record, size_t cap) {
  const std::string& source =
      record.pseudo_text.empty() ? record.asm_text : record.pseudo_text;
  if (source.size() <= cap) return source;
  size_t cut = cap;
  // Back off to a UTF-8 lead byte.
  while (cut > 0 && (static_cast<unsigned char>(source[cut]) & 0xC0) == 0x80) {
    --cut;
  }
  return source.substr(0, cut);
}

KbIndex BuildIndex(std::vector<KbEntry> entries, const BuildMeta& meta,
                   size_t snippet_cap) {
  if (entries.empty()) {
    throw Error(ErrorKind::kData, "cannot build an index from zero entries");
  }
  const int dim = entries.front().composite.dim();
  if (dim == 0) throw Error(ErrorKind::kData, "entry with empty vector");

  std::string offending;
  KbIndex index;
  index.meta_ = meta;
  index.meta_.malicious_count = 0;
  index.meta_.benign_count = 0;
  for (const auto& entry : entries) {
    const std::string id =
        entry.composite.binary_id + "/" + entry.composite.function_id;
    if (entry.composite.dim() != dim) {
      offending += " " + id + "(dim " +
                   std::to_string(entry.composite.dim()) + ")";
      continue;
    }
    if (entry.label == Label::kMalicious) {
      ++index.meta_.malicious_count;
    } else if (entry.label == Label::kBenign) {
      ++index.meta_.benign_count;
    } else {
      throw Error(ErrorKind::kData, "entry " + id + " has no verified label");
    }
    if (entry.snippet.size() > snippet_cap) {
      throw Error(ErrorKind::kData, "entry " + id + " snippet exceeds cap");
    }
  }
  if (!offending.empty()) {
    throw Error(ErrorKind::kData, "dimension mismatch against " +
                                      std::to_string(dim) + ":" + offending);
  }
  index.entries_ = std::move(entries);
  index.dim_ = dim;
  return index;
}

void RetrievalParams::Validate() const {
  if (k < 1) throw Error(ErrorKind::kConfig, "retrieval k must be >= 1");
  if (!(sigma_min >= 0.0 && sigma_min <= 1.0)) {
    throw Error(ErrorKind::kConfig, "sigma_min must be in [0, 1]");
  }
}

RetrievalSet Retrieve(const KbIndex& index, const CompositeEmbedding& query,
                      const RetrievalParams& params) {
  params.Validate();
  if (query.dim() != index.dim()) {
    throw Error(ErrorKind::kContract,
                "query dim " + std::to_string(query.dim()) +
                    " does not match index dim " +
                    std::to_string(index.dim()));
  }

  std::vector<Neighbor> scored;
  const auto& entries = index.entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    double sim = CosineSimilarity(query.vector, entries[i].composite.vector);
    if (sim >= params.sigma_min) scored.push_back({i, sim, entries[i].label});
  }

  RetrievalSet rs;
  rs.binary_id = query.binary_id;
  rs.function_id = query.function_id;
  rs.sigma_min = params.sigma_min;
  rs.balanced = params.balance;
  const size_t k = static_cast<size_t>(params.k);
  if (!params.balance) {
    rs.neighbors = TopWithLabel(scored, Label::kUnknown, k);
    return rs;
  }
  auto malicious = TopWithLabel(scored, Label::kMalicious, (k + 1) / 2);
  auto benign = TopWithLabel(scored, Label::kBenign, k / 2);
  rs.neighbors.reserve(malicious.size() + benign.size());
  std::merge(malicious.begin(), malicious.end(), benign.begin(), benign.end(),
             std::back_inserter(rs.neighbors), Better);
  return rs;
}

double ContextWeight(const RetrievalSet& rs) {
  if (rs.neighbors.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& n : rs.neighbors) sum += n.similarity;
  return sum / static_cast<double>(rs.neighbors.size());
}

KnnVoteResult KnnVote(const RetrievalSet& rs) {
  if (rs.neighbors.empty()) {
    throw Error(ErrorKind::kNoEvidence, "k-NN vote over an empty neighbour set");
  }
  double malicious = 0.0;
  double benign = 0.0;
  for (const auto& n : rs.neighbors) {
    (n.label == Label::kMalicious ? malicious : benign) += n.similarity;
  }
  const double total = malicious + benign;
  KnnVoteResult result;
  if (malicious == benign) {
    result.label = Label::kMalicious;
    result.confidence = 0.5;
    result.tie = true;
  } else if (malicious > benign) {
    result.label = Label::kMalicious;
    result.confidence = malicious / total;
  } else {
    result.label = Label::kBenign;
    result.confidence = benign / total;
  }
  return result;
}

std::string SerializeIndex(const KbIndex& index) {
  Writer w;
  w.Raw(std::string_view(kHeaderMagic, 4));
  w.U32(kIndexFormatVersion);
  w.U32(static_cast<uint32_t>(index.dim()));
  w.U64(index.size());
  w.U64(index.meta().malicious_count);
  w.U64(index.meta().benign_count);
  w.U64(index.meta().corpus_seed);
  w.U64(static_cast<uint64_t>(index.meta().created_at));
  for (const auto& entry : index.entries()) {
    w.U8(entry.label == Label::kMalicious ? 1 : 0);
    w.Str(entry.composite.binary_id);
    w.Str(entry.composite.function_id);
    w.Str(entry.family);
    w.Str(entry.snippet);
    for (float x : entry.composite.vector) w.F32(x);
  }
  w.U32(Crc32(w.bytes()));
  w.Raw(std::string_view(kFooterMagic, 4));
  return std::move(w.bytes());
}

KbIndex DeserializeIndex(std::string_view bytes) {
  Reader header(bytes);
  if (header.Raw(4) != std::string_view(kHeaderMagic, 4)) {
    throw Error(ErrorKind::kIntegrity, "not an index file (bad magic)");
  }
  const uint32_t version = header.U32();
  if (version != kIndexFormatVersion) {
    throw Error(ErrorKind::kVersion,
                "index format version " + std::to_string(version) +
                    ", this build reads version " +
                    std::to_string(kIndexFormatVersion));
  }
  if (bytes.size() < 8 + 4 + 4 ||
      bytes.substr(bytes.size() - 4) != std::string_view(kFooterMagic, 4)) {
    throw Error(ErrorKind::kIntegrity, "index file truncated (no footer)");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader footer(bytes.substr(bytes.size() - 8, 4));
  if (footer.U32() != Crc32(body)) {
    throw Error(ErrorKind::kIntegrity, "index checksum mismatch");
  }

  Reader r(body);
  r.Raw(8);
  const uint32_t dim = r.U32();
  const uint64_t count = r.U64();
  BuildMeta meta;
  const uint64_t malicious = r.U64();
  const uint64_t benign = r.U64();
  meta.corpus_seed = r.U64();
  meta.created_at = static_cast<int64_t>(r.U64());
  if (dim == 0 || count == 0) {
    throw Error(ErrorKind::kIntegrity, "index header has zero dim or entries");
  }

  std::vector<KbEntry> entries;
  for (uint64_t i = 0; i < count; ++i) {
    KbEntry entry;
    entry.label = r.U8() == 1 ? Label::kMalicious : Label::kBenign;
    entry.composite.binary_id = r.Str();
    entry.composite.function_id = r.Str();
    entry.family = r.Str();
    entry.snippet = r.Str();
    entry.composite.vector.resize(dim);
    for (auto& x : entry.composite.vector) x = r.F32();
    entries.push_back(std::move(entry));
  }
  if (r.remaining() != 0) {
    throw Error(ErrorKind::kIntegrity, "trailing bytes after entry block");
  }
  KbIndex index =
      BuildIndex(std::move(entries), meta, std::numeric_limits<size_t>::max());
  if (index.meta().malicious_count != malicious ||
      index.meta().benign_count != benign) {
    throw Error(ErrorKind::kIntegrity, "header label counts do not match");
  }
  return index;
}

void SaveIndex(const KbIndex& index, const std::string& path) {
  const std::string bytes = SerializeIndex(index);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kData, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kData, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::kData, "cannot move index into place at " + path);
  }
}

KbIndex LoadIndex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kData, "cannot open index " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return DeserializeIndex(bytes);
}

void WriteEmbeddingCsv(std::ostream& out,
                       const std::vector<EmbeddingRow>& rows) {
  size_t dim = rows.empty() ? 0 : rows.front().vector.size();
  out << "binary_id,function_id,label";
  for (size_t i = 0; i < dim; ++i) out << ",v" << i;
  out << '\n';
  char buf[32];
  for (const auto& row : rows) {
    if (row.vector.size() != dim) {
      throw Error(ErrorKind::kContract, "mixed embedding dims in export");
    }
    out << CsvField(row.binary_id) << ',' << CsvField(row.function_id) << ','
        << LabelName(row.label);
    for (float x : row.vector) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(x));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace binverdict
