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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "binverdict/error.h"
#include "binverdict/http_json.h"
#include "json.hpp"
#include "stub_server.h"

namespace binverdict {
namespace {

double Norm(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

FunctionRecord Record(std::string asm_text, std::string pseudo) {
  FunctionRecord r;
  r.binary_id = "b";
  r.function_id = "f";
  r.asm_text = std::move(asm_text);
  r.pseudo_text = std::move(pseudo);
  r.instr_count = 10;
  r.cyclomatic_complexity = 5;
  return r;
}

TEST(CosineTest, Examples) {
  const std::vector<float> a = {1, 2, 3}, b = {4, 5, 6};
  // dot 32, norms sqrt(14) and sqrt(77)
  EXPECT_NEAR(CosineSimilarity(a, b), 32.0 / std::sqrt(14.0 * 77.0), 1e-6);
  EXPECT_NEAR(CosineSimilarity(a, b), 0.974632, 1e-6);
  EXPECT_NEAR(CosineSimilarity(a, a), 1.0, 1e-12);
  const std::vector<float> x = {1, 0}, y = {0, 1};
  EXPECT_EQ(CosineSimilarity(x, y), 0.0);
  const std::vector<float> zero = {0, 0};
  EXPECT_EQ(CosineSimilarity(x, zero), 0.0);
}

TEST(CosineTest, LengthMismatchIsContractError) {
  const std::vector<float> a = {1, 2}, b = {1, 2, 3};
  try {
    CosineSimilarity(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(CosineTest, AlwaysInRange) {
  std::mt19937 rng(3);
  std::normal_distribution<float> g;
  for (int t = 0; t < 200; ++t) {
    std::vector<float> a(16), b(16);
    for (size_t i = 0; i < a.size(); ++i) {
      a[i] = g(rng);
      b[i] = t % 2 ? -a[i] : g(rng);
    }
    const double c = CosineSimilarity(a, b);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(ComposeTest, SymmetricUnitAxes) {
  StreamEmbedding a{{1.0f, 0.0f}, Stream::kAsm, false};
  StreamEmbedding d{{1.0f, 0.0f}, Stream::kCode, false};
  auto c = ComposeQuery(a, d);
  ASSERT_EQ(c.vector.size(), 4u);
  const double h = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(c.vector[0], h, 1e-7);
  EXPECT_NEAR(c.vector[1], 0.0, 1e-7);
  EXPECT_NEAR(c.vector[2], h, 1e-7);
  EXPECT_NEAR(c.vector[3], 0.0, 1e-7);
}

TEST(ComposeTest, SingleStreamFallback) {
  StreamEmbedding a{{0.6f, 0.8f}, Stream::kAsm, false};
  StreamEmbedding d{{0.0f, 0.0f}, Stream::kCode, true};
  auto c = ComposeQuery(a, d);
  EXPECT_NEAR(c.vector[0], 0.6, 1e-7);
  EXPECT_NEAR(c.vector[1], 0.8, 1e-7);
  EXPECT_EQ(c.vector[2], 0.0f);
  EXPECT_EQ(c.vector[3], 0.0f);
  EXPECT_NEAR(Norm(c.vector), 1.0, 1e-6);
}

TEST(ComposeTest, BothZeroIsNoEvidence) {
  StreamEmbedding a{{0.0f, 0.0f}, Stream::kAsm, true};
  try {
    ComposeQuery(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoEvidence);
  }
}

TEST(ComposeTest, RandomPairsHaveUnitNorm) {
  std::mt19937 rng(11);
  std::normal_distribution<float> g(0.0f, 3.0f);
  for (int t = 0; t < 1000; ++t) {
    StreamEmbedding a{std::vector<float>(32), Stream::kAsm, false};
    StreamEmbedding d{std::vector<float>(32), Stream::kCode, false};
    for (auto& v : a.vector) v = g(rng);
    for (auto& v : d.vector) v = g(rng) * 0.01f;
    EXPECT_NEAR(Norm(ComposeQuery(a, d).vector), 1.0, 1e-6);
  }
}

TEST(MockEmbedTest, DeterministicAndNormalized) {
  auto a = MockEmbed("push rbp; mov rbp, rsp; call decrypt", Stream::kAsm, 64, 9);
  auto b = MockEmbed("push rbp; mov rbp, rsp; call decrypt", Stream::kAsm, 64, 9);
  EXPECT_EQ(a.vector, b.vector);
  EXPECT_NEAR(Norm(a.vector), 1.0, 1e-6);
  EXPECT_FALSE(a.degraded);
  auto other_seed = MockEmbed("push rbp; mov rbp, rsp; call decrypt",
                              Stream::kAsm, 64, 10);
  EXPECT_NE(a.vector, other_seed.vector);
  auto other_stream = MockEmbed("push rbp; mov rbp, rsp; call decrypt",
                                Stream::kCode, 64, 9);
  EXPECT_NE(a.vector, other_stream.vector);
}

TEST(MockEmbedTest, SharedTokensCloserThanDisjoint) {
  std::string base, shared, disjoint;
  for (int i = 0; i < 20; ++i) base += "tok" + std::to_string(i) + " ";
  for (int i = 0; i < 18; ++i) shared += "tok" + std::to_string(i) + " ";
  shared += "zz1 zz2";
  for (int i = 0; i < 20; ++i) disjoint += "other" + std::to_string(i) + " ";
  auto e = [](const std::string& t) {
    return MockEmbed(t, Stream::kAsm, 64, 1).vector;
  };
  const double near = CosineSimilarity(e(base), e(shared));
  const double far = CosineSimilarity(e(base), e(disjoint));
  EXPECT_GT(near, far);
  EXPECT_GT(near, 0.8);
}

TEST(MockEmbedTest, DifferentTextsBelowOne) {
  MockEmbeddingProvider p(64, 0);
  EXPECT_LT(CosineSimilarity(p.Embed("xor eax, eax", Stream::kAsm),
                             p.Embed("call VirtualAlloc", Stream::kAsm)),
            1.0);
}

TEST(EmbedStreamsTest, EmptyAsmIsDegradedZero) {
  MockEmbeddingProvider p(16, 0);
  auto pair = EmbedStreams(Record("", "int f(void) { return 0; }"), p);
  EXPECT_TRUE(pair.asm_embedding.degraded);
  EXPECT_EQ(pair.asm_embedding.vector, std::vector<float>(16, 0.0f));
  EXPECT_FALSE(pair.code_embedding.degraded);
  EXPECT_TRUE(pair.degraded());
  auto c = EmbedRecord(Record("", "int f(void) { return 0; }"), p);
  EXPECT_EQ(c.dim(), 32);
  EXPECT_NEAR(Norm(c.vector), 1.0, 1e-6);
}

TEST(EmbedStreamsTest, SameRecordTwiceIsIdentical) {
  MockEmbeddingProvider p(32, 5);
  auto r = Record("mov eax, ebx", "a = b;");
  EXPECT_EQ(EmbedRecord(r, p).vector, EmbedRecord(r, p).vector);
}

class WrongDimProvider : public EmbeddingProvider {
 public:
  std::vector<float> Embed(std::string_view, Stream) override {
    return std::vector<float>(7, 0.5f);
  }
  int dim() const override { return 8; }
};

class NanProvider : public EmbeddingProvider {
 public:
  std::vector<float> Embed(std::string_view, Stream) override {
    std::vector<float> v(8, 0.1f);
    v[3] = std::nanf("");
    return v;
  }
  int dim() const override { return 8; }
};

TEST(EmbedStreamsTest, ProviderContractViolations) {
  WrongDimProvider wrong;
  NanProvider nan;
  for (EmbeddingProvider* p : {static_cast<EmbeddingProvider*>(&wrong),
                               static_cast<EmbeddingProvider*>(&nan)}) {
    try {
      EmbedStreams(Record("a", "b"), *p);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kContract);
    }
  }
}

TEST(ConfigTest, Validation) {
  EmbeddingProviderConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.dim = 4;
  EXPECT_THROW(c.Validate(), Error);
  c.dim = 64;
  c.mode = ProviderMode::kRemote;
  EXPECT_THROW(c.Validate(), Error);
  c.endpoint_url = "http://127.0.0.1:1/api/embeddings";
  EXPECT_NO_THROW(c.Validate());
}

TEST(RemoteEmbeddingTest, SendsModelAndInputAndReadsField) {
  testing::StubServer server("/api/embed", [](const std::string& body, size_t) {
    auto j = nlohmann::json::parse(body);
    std::vector<double> v(8, 0.0);
    v[j["input"].get<std::string>().size() % 8] = 2.0;
    return testing::StubReply{200, nlohmann::json{{"data", {{{"embedding", v}}}}}.dump()};
  });
  EmbeddingProviderConfig c;
  c.mode = ProviderMode::kRemote;
  c.endpoint_url = server.Url("/api/embed");
  c.model_name = "nomic";
  c.dim = 8;
  c.response_field = "data.0.embedding";
  auto provider = MakeEmbeddingProvider(c);
  auto v = provider->Embed("abc", Stream::kAsm);
  ASSERT_EQ(v.size(), 8u);
  EXPECT_EQ(v[3], 2.0f);
  auto bodies = server.bodies();
  ASSERT_EQ(bodies.size(), 1u);
  auto sent = nlohmann::json::parse(bodies[0]);
  EXPECT_EQ(sent["model"], "nomic");
  EXPECT_EQ(sent["input"], "abc");
}

TEST(RemoteEmbeddingTest, RetriesThenSucceeds) {
  testing::StubServer server("/e", [](const std::string&, size_t n) {
    if (n < 3) return testing::StubReply{503, "{}"};
    return testing::StubReply{200, R"({"embedding":[1,0,0,0,0,0,0,0]})"};
  });
  EmbeddingProviderConfig c;
  c.mode = ProviderMode::kRemote;
  c.endpoint_url = server.Url("/e");
  c.dim = 8;
  c.retries = 2;
  RemoteEmbeddingProvider p(c);
  EXPECT_EQ(p.Embed("x", Stream::kCode)[0], 1.0f);
  EXPECT_EQ(server.bodies().size(), 3u);
}

TEST(RemoteEmbeddingTest, DeadEndpointIsTransportErrorWithAttempts) {
  EmbeddingProviderConfig c;
  c.mode = ProviderMode::kRemote;
  c.endpoint_url = testing::DeadUrl("/e");
  c.dim = 8;
  c.retries = 2;
  c.timeout = std::chrono::milliseconds(500);
  RemoteEmbeddingProvider p(c);
  try {
    p.Embed("x", Stream::kAsm);
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.attempts(), 3);
    EXPECT_EQ(e.kind(), ErrorKind::kTransport);
  }
}

TEST(RemoteEmbeddingTest, WrongDimensionFromServerIsContractError) {
  testing::StubServer server("/e", [](const std::string&, size_t) {
    return testing::StubReply{200, R"({"embedding":[1,2,3]})"};
  });
  EmbeddingProviderConfig c;
  c.mode = ProviderMode::kRemote;
  c.endpoint_url = server.Url("/e");
  c.dim = 8;
  RemoteEmbeddingProvider p(c);
  try {
    EmbedStreams(Record("a", "b"), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(HttpJsonTest, EndpointParsingAndPaths) {
  auto ep = ParseEndpoint("http://localhost:11434/api/generate");
  EXPECT_EQ(ep.base, "http://localhost:11434");
  EXPECT_EQ(ep.path, "/api/generate");
  EXPECT_THROW(ParseEndpoint("ftp://x/y"), Error);
  auto j = nlohmann::json::parse(R"({"a":[{"b":1}]})");
  ASSERT_NE(FindJsonPath(j, "a.0.b"), nullptr);
  EXPECT_EQ(*FindJsonPath(j, "a.0.b"), 1);
  EXPECT_EQ(FindJsonPath(j, "a.1.b"), nullptr);
}

}  // namespace
}  // namespace binverdict
