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

#include "binverdict/embedding.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <utility>

#include "binverdict/error.h"
#include "binverdict/hash.h"
#include "binverdict/http_json.h"

namespace binverdict {
namespace {

constexpr uint64_t kAsmStreamKey = 0x61736d5f73747265ULL;
constexpr uint64_t kCodeStreamKey = 0x636f64655f737472ULL;

bool IsTokenChar(unsigned char c) { return std::isalnum(c) || c == '_'; }

// Splits on anything that is not [A-Za-z0-9_], lowercasing. Falls back to the
// whole text as a single token when it has no token characters at all.
template <typename Fn>
void ForEachToken(std::string_view text, Fn&& fn) {
  std::string token;
  bool any = false;
  for (unsigned char c : text) {
    if (IsTokenChar(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else if (!token.empty()) {
      fn(token);
      any = true;
      token.clear();
    }
  }
  if (!token.empty()) {
    fn(token);
    any = true;
  }
  if (!any && !text.empty()) fn(text);
}

double Norm(std::span<const float> v) {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * x;
  return std::sqrt(sum);
}

void CheckFinite(const std::vector<float>& v) {
  for (float x : v) {
    if (!std::isfinite(x)) {
      throw Error(ErrorKind::kContract, "embedding has non-finite component");
    }
  }
}

StreamEmbedding EmbedOne(std::string_view text, Stream stream,
                         EmbeddingProvider& provider) {
  StreamEmbedding out;
  out.stream = stream;
  if (text.empty()) {
    out.vector.assign(provider.dim(), 0.0f);
    out.degraded = true;
    return out;
  }
  out.vector = provider.Embed(text, stream);
  if (out.dim() != provider.dim()) {
    throw Error(ErrorKind::kContract,
                std::string(StreamName(stream)) + " embedding has dim " +
                    std::to_string(out.dim()) + ", provider configured for " +
                    std::to_string(provider.dim()));
  }
  CheckFinite(out.vector);
  return out;
}

}  // namespace

const char* StreamName(Stream stream) {
  return stream == Stream::kAsm ? "asm" : "code";
}

void EmbeddingProviderConfig::Validate() const {
  if (dim < 8) throw Error(ErrorKind::kConfig, "embedding dim must be >= 8");
  if (mode == ProviderMode::kRemote && endpoint_url.empty()) {
    throw Error(ErrorKind::kConfig, "remote embedding needs endpoint_url");
  }
  if (retries < 0) throw Error(ErrorKind::kConfig, "retries must be >= 0");
  if (max_parallel < 1 || max_parallel > 1024) {
    throw Error(ErrorKind::kConfig, "max_parallel must be in [1, 1024]");
  }
}

StreamEmbedding MockEmbed(std::string_view text, Stream stream, int dim,
                          uint64_t corpus_seed) {
  if (dim < 8) throw Error(ErrorKind::kContract, "mock embedding dim < 8");
  const uint64_t stream_key =
      stream == Stream::kAsm ? kAsmStreamKey : kCodeStreamKey;
  const uint64_t base = CombineKeys(stream_key, corpus_seed);

  std::vector<double> acc(dim, 0.0);
  ForEachToken(text, [&](std::string_view token) {
    KeyedRng rng(CombineKeys(base, Fnv1a64(token)));
    for (double& x : acc) x += 2.0 * rng.Uniform() - 1.0;
  });

  double norm = 0.0;
  for (double x : acc) norm += x * x;
  norm = std::sqrt(norm);

  StreamEmbedding out;
  out.stream = stream;
  out.vector.resize(dim);
  if (norm == 0.0) {
    // Only reachable for empty text.
    out.degraded = true;
    return out;
  }
  for (int i = 0; i < dim; ++i) {
    out.vector[i] = static_cast<float>(acc[i] / norm);
  }
  return out;
}

MockEmbeddingProvider::MockEmbeddingProvider(int dim, uint64_t corpus_seed)
    : dim_(dim), corpus_seed_(corpus_seed) {
  if (dim < 8) throw Error(ErrorKind::kConfig, "embedding dim must be >= 8");
}

std::vector<float> MockEmbeddingProvider::Embed(std::string_view text,
                                                Stream stream) {
  return MockEmbed(text, stream, dim_, corpus_seed_).vector;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(
    EmbeddingProviderConfig config)
    : config_(std::move(config)), in_flight_(config_.max_parallel) {
  config_.Validate();
}

std::vector<float> RemoteEmbeddingProvider::Embed(std::string_view text,
                                                  Stream /*stream*/) {
  nlohmann::json body = {{"model", config_.model_name},
                         {"input", std::string(text)}};
  in_flight_.acquire();
  nlohmann::json response;
  try {
    response = PostJson(config_.endpoint_url, body, config_.timeout,
                        config_.retries);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();

  const nlohmann::json* field = FindJsonPath(response, config_.response_field);
  if (field == nullptr || !field->is_array()) {
    throw Error(ErrorKind::kContract, "embedding response has no array at '" +
                                          config_.response_field + "'");
  }
  std::vector<float> out;
  out.reserve(field->size());
  for (const auto& x : *field) {
    if (!x.is_number()) {
      throw Error(ErrorKind::kContract, "embedding array is not numeric");
    }
    out.push_back(x.get<float>());
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> MakeEmbeddingProvider(
    const EmbeddingProviderConfig& config) {
  config.Validate();
  if (config.mode == ProviderMode::kRemote) {
    return std::make_unique<RemoteEmbeddingProvider>(config);
  }
  return std::make_unique<MockEmbeddingProvider>(config.dim,
                                                 config.corpus_seed);
}

StreamPair EmbedStreams(const FunctionRecord& record,
                        EmbeddingProvider& provider) {
  if (record.asm_text.empty() && record.pseudo_text.empty()) {
    throw Error(ErrorKind::kNoEvidence, "record " + record.binary_id + "/" +
                                            record.function_id +
                                            " has no stream text");
  }
  StreamPair pair;
  pair.asm_embedding = EmbedOne(record.asm_text, Stream::kAsm, provider);
  pair.code_embedding = EmbedOne(record.pseudo_text, Stream::kCode, provider);
  return pair;
}

CompositeEmbedding ComposeQuery(const StreamEmbedding& e_asm,
                                const StreamEmbedding& e_dec) {
  const double norm_asm = Norm(e_asm.vector);
  const double norm_dec = Norm(e_dec.vector);
  if (norm_asm == 0.0 && norm_dec == 0.0) {
    throw Error(ErrorKind::kNoEvidence, "both embedding streams are zero");
  }

  std::vector<double> joined;
  joined.reserve(e_asm.vector.size() + e_dec.vector.size());
  for (float x : e_asm.vector) {
    joined.push_back(norm_asm == 0.0 ? 0.0 : x / norm_asm);
  }
  for (float x : e_dec.vector) {
    joined.push_back(norm_dec == 0.0 ? 0.0 : x / norm_dec);
  }
  double total = 0.0;
  for (double x : joined) total += x * x;
  total = std::sqrt(total);

  CompositeEmbedding out;
  out.vector.reserve(joined.size());
  for (double x : joined) out.vector.push_back(static_cast<float>(x / total));
  return out;
}

CompositeEmbedding EmbedRecord(const FunctionRecord& record,
                               EmbeddingProvider& provider) {
  StreamPair pair = EmbedStreams(record, provider);
  CompositeEmbedding out = ComposeQuery(pair.asm_embedding, pair.code_embedding);
  out.binary_id = record.binary_id;
  out.function_id = record.function_id;
  return out;
}

double CosineSimilarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kContract,
                "cosine similarity of vectors with lengths " +
                    std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  }
  double dot = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    norm_a += static_cast<double>(a[i]) * a[i];
    norm_b += static_cast<double>(b[i]) * b[i];
  }
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(norm_a) * std::sqrt(norm_b)), -1.0, 1.0);
}

}  // namespace binverdict
