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
#include "capsearch/retrieval.hpp"

#include <chrono>

#include "capsearch/error.hpp"
#include "capsearch/text.hpp"

namespace capsearch {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void search_into(RetrievalOutcome& outcome, const VectorIndex& index,
                 EmbeddingBackend& backend, const std::string& text, std::size_t k) {
  if (text::is_blank(text)) throw Error(ErrorCode::kEmptyText, "query text is empty");
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  check_backend_matches(index, backend);

  auto t0 = Clock::now();
  const EmbeddingVector query = embed_text(backend, text);
  outcome.timing.embed_ms = elapsed_ms(t0);

  t0 = Clock::now();
  outcome.results = index.search(query, k);
  outcome.timing.search_ms = elapsed_ms(t0);
}

}  // namespace

void check_backend_matches(const VectorIndex& index, const EmbeddingBackend& backend) {
  const auto& desc = backend.descriptor();
  if (desc.backend_id != index.backend_id()) {
    throw Error(ErrorCode::kBackendMismatch, "query backend '" + desc.backend_id +
                                                 "' differs from index backend '" +
                                                 index.backend_id() + "'");
  }
  // Same id at another width is still a different embedding space.
  if (desc.dim != index.dim()) {
    throw Error(ErrorCode::kBackendMismatch,
                "backend dim " + std::to_string(desc.dim) + " != index dim " +
                    std::to_string(index.dim()));
  }
}

RetrievalOutcome t2i_retrieve(const VectorIndex& index, EmbeddingBackend& backend,
                              const std::string& text, std::size_t k) {
  RetrievalOutcome outcome;
  outcome.query = {QueryMode::kText, text, k};
  search_into(outcome, index, backend, text, k);
  return outcome;
}

RetrievalOutcome i2t_retrieve(const VectorIndex& index, EmbeddingBackend& backend,
                              CaptionerBackend& captioner,
                              const std::filesystem::path& image_path, std::size_t k) {
  RetrievalOutcome outcome;
  outcome.query = {QueryMode::kImage, image_path.string(), k};
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  check_backend_matches(index, backend);

  const auto t0 = Clock::now();
  std::string caption = captioner.caption(image_path);
  outcome.timing.caption_ms = elapsed_ms(t0);
  if (text::is_blank(caption)) throw Error(ErrorCode::kEmptyCaption, "captioner returned no text");
  outcome.generated_query_text = caption;

  search_into(outcome, index, backend, caption, k);
  return outcome;
}

nlohmann::json to_json(const RetrievalOutcome& outcome) {
  nlohmann::json results = nlohmann::json::array();
  for (std::size_t i = 0; i < outcome.results.size(); ++i) {
    const auto& hit = outcome.results[i];
    results.push_back({{"rank", i + 1},
                       {"image_id", hit.image_id},
                       {"score", hit.score},
                       {"best_variant_id", hit.best_variant_id}});
  }
  nlohmann::json j = {
      {"mode", outcome.query.mode == QueryMode::kText ? "t2i" : "i2t"},
      {"query", outcome.query.payload},
      {"k", outcome.query.k},
      {"generated_query_text", outcome.generated_query_text
                                   ? nlohmann::json(*outcome.generated_query_text)
                                   : nlohmann::json(nullptr)},
      {"results", std::move(results)},
      {"timing_ms",
       {{"caption", outcome.timing.caption_ms},
        {"embed", outcome.timing.embed_ms},
        {"search", outcome.timing.search_ms}}}};
  return j;
}

}  // namespace capsearch
