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
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capsearch {

// Unit-norm vector with finite components. Only normalize() creates one.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  friend EmbeddingVector normalize(std::span<const double> raw);
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {}

  std::vector<double> values_;
};

// raw / ||raw||. Throws ZeroVector below 1e-12, InvalidArgument on
// non-finite input.
EmbeddingVector normalize(std::span<const double> raw);

// Full a.b / (|a||b|), clamped to [-1, 1]. Throws DimensionMismatch.
double cosine_sim(std::span<const double> a, std::span<const double> b);
double cosine_sim(const EmbeddingVector& a, const EmbeddingVector& b);

struct BackendDescriptor {
  std::string backend_id;
  std::size_t dim = 0;
  bool deterministic = false;
};

// Text encoder contract. Implementations return one raw vector per input in
// input order; callers go through embed_text / embed_batch, which enforce
// non-empty input, dimension and normalisation. Implementations must be
// callable from several threads.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  virtual std::vector<std::vector<double>> embed_raw(
      std::span<const std::string> texts) = 0;
};

EmbeddingVector embed_text(EmbeddingBackend& backend, std::string_view text);
std::vector<EmbeddingVector> embed_batch(EmbeddingBackend& backend,
                                         std::span<const std::string> texts);

inline constexpr std::size_t kDefaultLocalDim = 256;
inline constexpr std::size_t kMinLocalDim = 16;
inline constexpr std::string_view kLocalBackendId = "local-hash-v1";

// Feature-hashed bag of tokens: every token from text::tokenize lands in
// bucket fnv1a64(token) % dim, counts are normalised. Throws EmptyText when
// the text has no tokens, InvalidArgument when dim < 16.
EmbeddingVector local_hash_embed(std::string_view text, std::size_t dim);

class LocalHashBackend final : public EmbeddingBackend {
 public:
  explicit LocalHashBackend(std::size_t dim = kDefaultLocalDim);
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  std::vector<std::vector<double>> embed_raw(
      std::span<const std::string> texts) override;

 private:
  BackendDescriptor descriptor_;
};

}  // namespace capsearch
