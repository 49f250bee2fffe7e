// Copyright 2026 the capsearch authors
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
#include "capsearch/embedding.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "capsearch/error.hpp"
#include "capsearch/hashing.hpp"
#include "support/oracles.hpp"

namespace capsearch {
namespace {

ErrorCode error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kInvalidArgument;
}

double norm(const EmbeddingVector& v) {
  double s = 0;
  for (double x : v.values()) s += x * x;
  return std::sqrt(s);
}

TEST(Normalize, ThreeFourFive) {
  const std::vector<double> raw{3, 4};
  const auto v = normalize(raw);
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
}

TEST(Normalize, ZeroVector) {
  EXPECT_EQ(error_of([] { normalize(std::vector<double>{0, 0, 0}); }), ErrorCode::kZeroVector);
  EXPECT_EQ(error_of([] { normalize(std::vector<double>{1e-13, 0}); }), ErrorCode::kZeroVector);
  EXPECT_EQ(error_of([] { normalize(std::vector<double>{NAN, 1}); }), ErrorCode::kInvalidArgument);
}

TEST(Normalize, UnitVectorIsFixedPoint) {
  const std::vector<double> raw{1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)};
  const auto once = normalize(raw);
  const auto twice = normalize(once.values());
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(once[i], raw[i], 1e-12);
    EXPECT_NEAR(twice[i], once[i], 1e-12);
  }
}

TEST(CosineSim, Examples) {
  const std::vector<double> x{1, 0}, y{0, 1}, d{1 / std::sqrt(2.0), 1 / std::sqrt(2.0)};
  EXPECT_EQ(cosine_sim(x, x), 1.0);
  EXPECT_EQ(cosine_sim(x, y), 0.0);
  EXPECT_NEAR(cosine_sim(d, x), 1 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(cosine_sim(d, x), 0.70710678, 5e-9);  // the same value to 8 decimals
}

TEST(CosineSim, DimensionMismatch) {
  const std::vector<double> a{1, 0}, b{1, 0, 0};
  EXPECT_EQ(error_of([&] { cosine_sim(a, b); }), ErrorCode::kDimensionMismatch);
}

TEST(CosineSim, SymmetricBoundedScaleInvariant) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t dim = 1 + trial % 64;
    std::vector<double> a(dim), b(dim);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    const auto na = normalize(a), nb = normalize(b);
    EXPECT_EQ(cosine_sim(na, nb), cosine_sim(nb, na));
    EXPECT_NEAR(cosine_sim(na, na), 1.0, 1e-9);
    EXPECT_LE(std::fabs(cosine_sim(na, nb)), 1.0);
    EXPECT_NEAR(std::fabs(norm(na) - 1.0), 0.0, 1e-6);

    std::vector<double> scaled = a;
    const double s = scale(rng);
    for (auto& x : scaled) x *= s;
    EXPECT_NEAR(cosine_sim(normalize(scaled), nb), cosine_sim(na, nb), 1e-12);
  }
}

TEST(LocalHash, OrderInvariantBagOfTokens) {
  EXPECT_EQ(local_hash_embed("a a b", 256), local_hash_embed("b a a", 256));
}

TEST(LocalHash, DisjointBucketsAreOrthogonal) {
  const std::string a = "harbor boats", b = "runway planes";
  // Precondition checked by direct hashing: no shared bucket at dim 256.
  std::set<std::uint64_t> buckets_a, buckets_b;
  for (const auto& t : testing::reference_tokens(a)) buckets_a.insert(testing::reference_fnv1a64(t) % 256);
  for (const auto& t : testing::reference_tokens(b)) buckets_b.insert(testing::reference_fnv1a64(t) % 256);
  for (auto bucket : buckets_a) ASSERT_FALSE(buckets_b.count(bucket));
  EXPECT_EQ(cosine_sim(local_hash_embed(a, 256), local_hash_embed(b, 256)), 0.0);
}

TEST(LocalHash, RepetitionIsScaling) {
  EXPECT_NEAR(cosine_sim(local_hash_embed("x y", 256), local_hash_embed("x y x y", 256)), 1.0, 1e-12);
}

TEST(LocalHash, Errors) {
  EXPECT_EQ(error_of([] { local_hash_embed("...", 256); }), ErrorCode::kEmptyText);
  EXPECT_EQ(error_of([] { local_hash_embed("ok", 8); }), ErrorCode::kInvalidArgument);
}

TEST(LocalHash, MatchesTokenCountOracle) {
  const std::vector<std::string> texts = {
      "A dense residential area with red roofs.",
      "Red roofs, residential houses and a road next to a park.",
      "Two planes on the runway near the terminal.",
      "runway runway planes",
      "A harbor with many boats surrounded by water.",
      "Boats in a harbor; water around the pier.",
      "x",
  };
  for (std::size_t dim : {16u, 64u, 256u}) {
    for (const auto& a : texts) {
      for (const auto& b : texts) {
        EXPECT_NEAR(cosine_sim(local_hash_embed(a, dim), local_hash_embed(b, dim)),
                    testing::bag_cosine(a, b, dim), 1e-12)
            << a << " | " << b << " @" << dim;
      }
    }
  }
}

TEST(LocalHash, FnvMatchesReference) {
  for (const char* s : {"", "a", "harbor", "storage tanks", "\xc3\xa9"}) {
    EXPECT_EQ(fnv1a64(s), testing::reference_fnv1a64(s));
  }
}

TEST(EmbedText, DeterministicAndUnitNorm) {
  LocalHashBackend backend;
  const auto a = embed_text(backend, "harbor with boats");
  const auto b = embed_text(backend, "harbor with boats");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.dim(), kDefaultLocalDim);
  EXPECT_NEAR(norm(a), 1.0, 1e-6);
  EXPECT_EQ(a, local_hash_embed("harbor with boats", kDefaultLocalDim));
}

TEST(EmbedText, RejectsBlank) {
  LocalHashBackend backend;
  EXPECT_EQ(error_of([&] { embed_text(backend, "   "); }), ErrorCode::kEmptyText);
}

TEST(EmbedBatch, MatchesSingleCalls) {
  LocalHashBackend backend(64);
  const std::vector<std::string> texts{"runway", "harbor boats", "runway"};
  const auto batch = embed_batch(backend, texts);
  ASSERT_EQ(batch.size(), 3u);
  for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(batch[i], embed_text(backend, texts[i]));
  EXPECT_EQ(batch[0], batch[2]);
  EXPECT_TRUE(embed_batch(backend, std::vector<std::string>{}).empty());
}

TEST(EmbedBatch, ReportsIndexOfBlankText) {
  LocalHashBackend backend;
  const std::vector<std::string> texts{"ok", "fine", " "};
  try {
    embed_batch(backend, texts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyText);
    EXPECT_EQ(e.item_index(), 2u);
  }
}

class WrongDimBackend final : public EmbeddingBackend {
 public:
  const BackendDescriptor& descriptor() const override { return desc_; }
  std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) override {
    return std::vector<std::vector<double>>(texts.size(), std::vector<double>(3, 1.0));
  }

 private:
  BackendDescriptor desc_{"wrong", 4, true};
};

TEST(EmbedBatch, EnforcesBackendDimension) {
  WrongDimBackend backend;
  EXPECT_EQ(error_of([&] { embed_text(backend, "x"); }), ErrorCode::kDimensionMismatch);
}

}  // namespace
}  // namespace capsearch
