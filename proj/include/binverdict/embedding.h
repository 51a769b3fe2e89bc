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

// Per-stream embeddings (assembly and pseudo-code) and the composite query
// vector built from them.

#ifndef BINVERDICT_EMBEDDING_H_
#define BINVERDICT_EMBEDDING_H_

#include <chrono>
#include <cstdint>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "binverdict/corpus.h"

namespace binverdict {

enum class Stream { kAsm, kCode };

const char* StreamName(Stream stream);

struct StreamEmbedding {
  std::vector<float> vector;
  Stream stream = Stream::kAsm;
  // Set when the source text was empty and `vector` is all zeros.
  bool degraded = false;

  int dim() const { return static_cast<int>(vector.size()); }
};

struct CompositeEmbedding {
  std::vector<float> vector;  // asm block then code block, unit L2 norm
  std::string binary_id;
  std::string function_id;

  int dim() const { return static_cast<int>(vector.size()); }
};

enum class ProviderMode { kRemote, kMock };

struct EmbeddingProviderConfig {
  ProviderMode mode = ProviderMode::kMock;
  std::string endpoint_url;
  std::string model_name = "mock-token-hash";
  int dim = 64;  // per stream
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
  int max_parallel = 4;
  std::string response_field = "embedding";
  uint64_t corpus_seed = 0;  // mock mode only

  void Validate() const;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  // Raw (not necessarily normalized) embedding of non-empty `text`.
  virtual std::vector<float> Embed(std::string_view text, Stream stream) = 0;
  virtual int dim() const = 0;
};

// Offline provider backed by MockEmbed.
class MockEmbeddingProvider : public EmbeddingProvider {
 public:
  MockEmbeddingProvider(int dim, uint64_t corpus_seed);

  std::vector<float> Embed(std::string_view text, Stream stream) override;
  int dim() const override { return dim_; }

 private:
  int dim_;
  uint64_t corpus_seed_;
};

// POSTs {"model": ..., "input": ...} to the configured endpoint and reads a
// numeric array from `response_field`. At most `max_parallel` requests are in
// flight at once across threads sharing the provider.
class RemoteEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(EmbeddingProviderConfig config);

  std::vector<float> Embed(std::string_view text, Stream stream) override;
  int dim() const override { return config_.dim; }

 private:
  EmbeddingProviderConfig config_;
  std::counting_semaphore<1024> in_flight_;
};

std::unique_ptr<EmbeddingProvider> MakeEmbeddingProvider(
    const EmbeddingProviderConfig& config);

struct StreamPair {
  StreamEmbedding asm_embedding;
  StreamEmbedding code_embedding;

  bool degraded() const {
    return asm_embedding.degraded || code_embedding.degraded;
  }
};

// Embeds both streams of `record`. An empty stream becomes a zero vector
// flagged as degraded. Throws Error(kContract) if the provider returns a
// vector of the wrong dimension or with non-finite components.
StreamPair EmbedStreams(const FunctionRecord& record,
                        EmbeddingProvider& provider);

// Normalizes each non-zero stream, concatenates (asm first) and renormalizes.
// Throws Error(kNoEvidence) when both streams are zero.
CompositeEmbedding ComposeQuery(const StreamEmbedding& e_asm,
                                const StreamEmbedding& e_dec);

// Convenience: EmbedStreams + ComposeQuery, with source ids filled in.
CompositeEmbedding EmbedRecord(const FunctionRecord& record,
                               EmbeddingProvider& provider);

// dot(a, b) / (|a| |b|), or 0 when either side is the zero vector.
// Throws Error(kContract) on length mismatch.
double CosineSimilarity(std::span<const float> a, std::span<const float> b);

// Deterministic bag-of-token-hashes embedding. Each token contributes a
// pseudo-random direction keyed by (token, stream, corpus_seed); the sum is
// L2-normalized. Texts sharing most tokens land close together. dim >= 8.
StreamEmbedding MockEmbed(std::string_view text, Stream stream, int dim,
                          uint64_t corpus_seed);

}  // namespace binverdict

#endif  // BINVERDICT_EMBEDDING_H_
