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
#include <filesystem>
#include <optional>
#include <string>

#include "capsearch/backends.hpp"
#include "capsearch/embedding.hpp"
#include "capsearch/index.hpp"

namespace capsearch {

enum class QueryMode { kText, kImage };

struct Query {
  QueryMode mode = QueryMode::kText;
  std::string payload;  // query text, or image path
  std::size_t k = 10;
};

struct StageTimings {
  double caption_ms = 0.0;
  double embed_ms = 0.0;
  double search_ms = 0.0;
};

struct RetrievalOutcome {
  Query query;
  std::optional<std::string> generated_query_text;  // image mode only
  RankedResult results;
  StageTimings timing;
};

// Embed the text and search. Throws EmptyText, BackendMismatch when the
// backend id differs from the index's, plus backend and index errors.
RetrievalOutcome t2i_retrieve(const VectorIndex& index, EmbeddingBackend& backend,
                              const std::string& text, std::size_t k);

// Caption the image, then exactly t2i_retrieve on the caption. The captioner
// decides whether it needs the file (a remote one reads it; fixtures do not).
RetrievalOutcome i2t_retrieve(const VectorIndex& index, EmbeddingBackend& backend,
                              CaptionerBackend& captioner,
                              const std::filesystem::path& image_path, std::size_t k);

void check_backend_matches(const VectorIndex& index, const EmbeddingBackend& backend);

nlohmann::json to_json(const RetrievalOutcome& outcome);

}  // namespace capsearch
