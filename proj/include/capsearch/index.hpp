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

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "capsearch/corpus.hpp"
#include "capsearch/embedding.hpp"

namespace capsearch {

struct ScoredVariant {
  double score = 0.0;
  int variant_id = 1;
};

// Max over per-variant similarities, sims[v - 1] for variant v. Exact ties
// go to the lowest variant id.
ScoredVariant max_over_variants(std::span<const double> sims);

struct RankedHit {
  std::string image_id;
  std::size_t ordinal = 0;
  double score = 0.0;
  int best_variant_id = 1;

  bool operator==(const RankedHit&) const = default;
};

// Scores non-increasing, ties by ascending ordinal, one hit per image.
using RankedResult = std::vector<RankedHit>;

// Caption-level hit, used by the caption-pool I2T protocol.
struct VariantHit {
  std::size_t ordinal = 0;
  int variant_id = 1;
  double score = 0.0;

  bool operator==(const VariantHit&) const = default;
};

// Immutable exact-search index. Each image owns a contiguous block of
// 5 x dim floats (variant 1 first); similarity arithmetic is in double.
class VectorIndex {
 public:
  // vectors holds image_ids.size() * 5 * dim floats in block order.
  static VectorIndex from_vectors(std::string backend_id, std::size_t dim,
                                  std::vector<std::string> image_ids,
                                  std::vector<float> vectors);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  std::size_t entry_count() const { return ids_.size() * kVariantsPerImage; }
  bool empty() const { return ids_.empty(); }
  const std::string& backend_id() const { return backend_id_; }
  const std::string& image_id(std::size_t ordinal) const { return ids_.at(ordinal); }
  const std::vector<std::string>& image_ids() const { return ids_; }
  // Ordinal of image_id, or size() when absent.
  std::size_t find(std::string_view image_id) const;

  std::span<const float> variant_vector(std::size_t ordinal, int variant_id) const;
  std::span<const float> raw_vectors() const { return data_; }

  // Provenance written next to the binary file (corpus hash, backend, ...).
  const nlohmann::json& provenance() const { return provenance_; }
  void set_provenance(nlohmann::json p) { provenance_ = std::move(p); }

  // Throws DimensionMismatch.
  ScoredVariant score_image(const EmbeddingVector& query, std::size_t ordinal) const;

  // Top-min(k, N) images. threads > 1 splits scoring; the result does not
  // depend on it. Throws DimensionMismatch, EmptyIndex, InvalidArgument (k == 0).
  RankedResult search(const EmbeddingVector& query, std::size_t k,
                      std::size_t threads = 1) const;

  // Top-min(k, 5N) individual caption vectors, ties by (ordinal, variant).
  std::vector<VariantHit> search_variants(const EmbeddingVector& query, std::size_t k) const;

 private:
  void check_query(const EmbeddingVector& query, std::size_t k) const;
  ScoredVariant score_block(std::span<const double> query, double query_norm,
                            std::size_t ordinal) const;
  double similarity(std::span<const double> query, double query_norm,
                    std::size_t entry) const;

  std::string backend_id_;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::vector<double> norms_;  // per entry, from the stored floats
  std::unordered_map<std::string, std::size_t> ordinal_by_id_;
  nlohmann::json provenance_;
};

// Embeds every caption variant in corpus order. Throws EmptyCorpus and
// propagates backend errors.
VectorIndex build_index(const Corpus& corpus, EmbeddingBackend& backend,
                        std::size_t permits = 1);

inline constexpr std::uint16_t kIndexFormatVersion = 1;

std::vector<std::uint8_t> serialize_index(const VectorIndex& index);
// Throws CorruptIndex (magic, version, checksum, truncation) or
// DimensionMismatch (header disagrees with the body).
VectorIndex deserialize_index(std::span<const std::uint8_t> bytes);

// Binary file plus "<path>.meta.json" when provenance is set.
void save_index(const VectorIndex& index, const std::filesystem::path& path);
VectorIndex load_index(const std::filesystem::path& path);

}  // namespace capsearch
