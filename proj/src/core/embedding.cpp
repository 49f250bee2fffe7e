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

#include <algorithm>
#include <cmath>

#include "capsearch/error.hpp"
#include "capsearch/hashing.hpp"
#include "capsearch/text.hpp"

namespace capsearch {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

std::vector<double> bucket_counts(std::string_view text, std::size_t dim) {
  std::vector<double> counts(dim, 0.0);
  for (const auto& token : text::tokenize(text)) {
    counts[fnv1a64(token) % dim] += 1.0;
  }
  return counts;
}

}  // namespace

EmbeddingVector normalize(std::span<const double> raw) {
  if (raw.empty()) throw Error(ErrorCode::kZeroVector, "empty vector");
  for (double x : raw) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::kInvalidArgument, "vector has non-finite components");
    }
  }
  const double norm = std::sqrt(dot(raw, raw));
  if (norm < 1e-12) throw Error(ErrorCode::kZeroVector, "vector norm below 1e-12");
  std::vector<double> values(raw.begin(), raw.end());
  for (double& x : values) x /= norm;
  return EmbeddingVector(std::move(values));
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "dimension mismatch: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  const double denom = std::sqrt(dot(a, a)) * std::sqrt(dot(b, b));
  if (denom == 0.0) return 0.0;
  return std::clamp(dot(a, b) / denom, -1.0, 1.0);
}

double cosine_sim(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_sim(a.values(), b.values());
}

EmbeddingVector embed_text(EmbeddingBackend& backend, std::string_view text) {
  const std::string owned(text);
  auto out = embed_batch(backend, std::span<const std::string>(&owned, 1));
  return std::move(out.front());
}

std::vector<EmbeddingVector> embed_batch(EmbeddingBackend& backend,
                                         std::span<const std::string> texts) {
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (text::is_blank(texts[i])) {
      throw Error(ErrorCode::kEmptyText, "text is empty after trimming").with_index(i);
    }
  }
  if (texts.empty()) return {};

  auto raw = backend.embed_raw(texts);
  const auto& desc = backend.descriptor();
  if (raw.size() != texts.size()) {
    throw Error(ErrorCode::kBackendFailure,
                desc.backend_id + " returned " + std::to_string(raw.size()) +
                    " vectors for " + std::to_string(texts.size()) + " texts");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].size() != desc.dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  desc.backend_id + " returned dim " + std::to_string(raw[i].size()) +
                      ", expected " + std::to_string(desc.dim))
          .with_index(i);
    }
    try {
      out.push_back(normalize(raw[i]));
    } catch (Error& e) {
      throw e.with_index(i);
    }
  }
  return out;
}

EmbeddingVector local_hash_embed(std::string_view text, std::size_t dim) {
  if (dim < kMinLocalDim) {
    throw Error(ErrorCode::kInvalidArgument, "local backend needs dim >= 16");
  }
  auto counts = bucket_counts(text, dim);
  if (std::all_of(counts.begin(), counts.end(), [](double c) { return c == 0.0; })) {
    throw Error(ErrorCode::kEmptyText, "text has no tokens");
  }
  return normalize(counts);
}

LocalHashBackend::LocalHashBackend(std::size_t dim)
    : descriptor_{std::string(kLocalBackendId), dim, true} {
  if (dim < kMinLocalDim) {
    throw Error(ErrorCode::kInvalidArgument, "local backend needs dim >= 16");
  }
}

std::vector<std::vector<double>> LocalHashBackend::embed_raw(
    std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto counts = bucket_counts(texts[i], descriptor_.dim);
    if (std::all_of(counts.begin(), counts.end(), [](double c) { return c == 0.0; })) {
      throw Error(ErrorCode::kEmptyText, "text has no tokens").with_index(i);
    }
    out.push_back(std::move(counts));
  }
  return out;
}

}  // namespace capsearch
