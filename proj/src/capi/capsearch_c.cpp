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
#include "capsearch/capsearch.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <memory>
#include <new>
#include <string>

#include "capsearch/backends.hpp"
#include "capsearch/corpus.hpp"
#include "capsearch/embedding.hpp"
#include "capsearch/error.hpp"
#include "capsearch/evalharness.hpp"
#include "capsearch/hashing.hpp"
#include "capsearch/index.hpp"
#include "capsearch/retrieval.hpp"

using capsearch::Error;
using capsearch::ErrorCode;
using nlohmann::json;

struct cs_corpus {
  capsearch::Corpus corpus;
};

struct cs_backend {
  std::unique_ptr<capsearch::EmbeddingBackend> impl;
};

struct cs_captioner {
  std::unique_ptr<capsearch::CaptionerBackend> impl;
  std::string prompt;  // empty for fixtures
};

struct cs_index {
  capsearch::VectorIndex index;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_error_json;

cs_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return CS_ERR_INVALID_ARGUMENT;
    case ErrorCode::kFileNotFound: return CS_ERR_FILE_NOT_FOUND;
    case ErrorCode::kIo: return CS_ERR_IO;
    case ErrorCode::kMalformedRecord: return CS_ERR_MALFORMED_RECORD;
    case ErrorCode::kDuplicateImageId: return CS_ERR_DUPLICATE_IMAGE_ID;
    case ErrorCode::kEmptyText: return CS_ERR_EMPTY_TEXT;
    case ErrorCode::kZeroVector: return CS_ERR_ZERO_VECTOR;
    case ErrorCode::kDimensionMismatch: return CS_ERR_DIMENSION_MISMATCH;
    case ErrorCode::kBackendFailure: return CS_ERR_BACKEND_FAILURE;
    case ErrorCode::kAuthError: return CS_ERR_AUTH;
    case ErrorCode::kRateLimited: return CS_ERR_RATE_LIMITED;
    case ErrorCode::kServiceError: return CS_ERR_SERVICE;
    case ErrorCode::kTimeout: return CS_ERR_TIMEOUT;
    case ErrorCode::kEmptyCaption: return CS_ERR_EMPTY_CAPTION;
    case ErrorCode::kUnknownImage: return CS_ERR_UNKNOWN_IMAGE;
    case ErrorCode::kEmptyCorpus: return CS_ERR_EMPTY_CORPUS;
    case ErrorCode::kEmptyIndex: return CS_ERR_EMPTY_INDEX;
    case ErrorCode::kCorruptIndex: return CS_ERR_CORRUPT_INDEX;
    case ErrorCode::kBackendMismatch: return CS_ERR_BACKEND_MISMATCH;
    case ErrorCode::kMissingCaptioner: return CS_ERR_MISSING_CAPTIONER;
    case ErrorCode::kInconsistentGroundTruth: return CS_ERR_INCONSISTENT_GROUND_TRUTH;
  }
  return CS_ERR_INTERNAL;
}

void set_error(std::string_view name, const std::string& message, const Error* e = nullptr) {
  g_last_error = message;
  json j = {{"error", name}, {"message", message}};
  if (e && e->line()) j["line"] = *e->line();
  if (e && e->item_index()) j["index"] = *e->item_index();
  g_last_error_json = j.dump();
}

template <class F>
cs_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    g_last_error_json.clear();
    return CS_OK;
  } catch (const Error& e) {
    set_error(capsearch::error_code_name(e.code()), e.what(), &e);
    return to_status(e.code());
  } catch (const json::exception& e) {
    set_error("InvalidArgument", std::string("JSON: ") + e.what());
    return CS_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    set_error("Internal", "out of memory");
    return CS_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    set_error("IoError", e.what());
    return CS_ERR_IO;
  } catch (const std::exception& e) {
    set_error("Internal", e.what());
    return CS_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

capsearch::ClientHooks stderr_hooks() {
  capsearch::ClientHooks hooks;
  hooks.log = [](std::string_view line) { std::cerr << "[capsearch] " << line << '\n'; };
  return hooks;
}

std::optional<std::filesystem::path> optional_path(const char* p) {
  if (p == nullptr || *p == '\0') return std::nullopt;
  return std::filesystem::path(p);
}

}  // namespace

extern "C" {

const char* cs_version(void) { return CAPSEARCH_VERSION; }

const char* cs_status_name(cs_status status) {
  switch (status) {
    case CS_OK: return "Ok";
    case CS_ERR_INVALID_ARGUMENT: return "InvalidArgument";
    case CS_ERR_FILE_NOT_FOUND: return "FileNotFound";
    case CS_ERR_IO: return "IoError";
    case CS_ERR_MALFORMED_RECORD: return "MalformedRecord";
    case CS_ERR_DUPLICATE_IMAGE_ID: return "DuplicateImageId";
    case CS_ERR_EMPTY_TEXT: return "EmptyText";
    case CS_ERR_ZERO_VECTOR: return "ZeroVector";
    case CS_ERR_DIMENSION_MISMATCH: return "DimensionMismatch";
    case CS_ERR_BACKEND_FAILURE: return "BackendFailure";
    case CS_ERR_AUTH: return "AuthError";
    case CS_ERR_RATE_LIMITED: return "RateLimited";
    case CS_ERR_SERVICE: return "ServiceError";
    case CS_ERR_TIMEOUT: return "Timeout";
    case CS_ERR_EMPTY_CAPTION: return "EmptyCaption";
    case CS_ERR_UNKNOWN_IMAGE: return "UnknownImage";
    case CS_ERR_EMPTY_CORPUS: return "EmptyCorpus";
    case CS_ERR_EMPTY_INDEX: return "EmptyIndex";
    case CS_ERR_CORRUPT_INDEX: return "CorruptIndex";
    case CS_ERR_BACKEND_MISMATCH: return "BackendMismatch";
    case CS_ERR_MISSING_CAPTIONER: return "MissingCaptioner";
    case CS_ERR_INCONSISTENT_GROUND_TRUTH: return "InconsistentGroundTruth";
    case CS_ERR_INTERNAL: return "Internal";
  }
  return "Unknown";
}

const char* cs_last_error(void) { return g_last_error.c_str(); }
const char* cs_last_error_json(void) { return g_last_error_json.c_str(); }
void cs_string_free(char* s) { std::free(s); }

cs_status cs_corpus_parse(const char* path, int strict, cs_corpus** out,
                          char** diagnostics_json) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto parsed = capsearch::parse_corpus(path, strict != 0);
    json diags = json::array();
    for (const auto& d : parsed.diagnostics) diags.push_back({{"line", d.line}, {"reason", d.reason}});
    auto handle = std::make_unique<cs_corpus>();
    handle->corpus = std::move(parsed.corpus);
    emit(diagnostics_json, diags.dump());
    *out = handle.release();
  });
}

cs_status cs_corpus_dedup(cs_corpus* corpus, size_t* removed) {
  return guarded([&] {
    require(corpus, "corpus");
    auto result = capsearch::dedup_corpus(corpus->corpus);
    corpus->corpus = std::move(result.corpus);
    if (removed) *removed = result.removed;
  });
}

size_t cs_corpus_size(const cs_corpus* corpus) { return corpus ? corpus->corpus.size() : 0; }

cs_status cs_corpus_write(const cs_corpus* corpus, const char* path) {
  return guarded([&] {
    require(corpus, "corpus");
    require(path, "path");
    capsearch::write_corpus(corpus->corpus, path);
  });
}

cs_status cs_corpus_stats_compute(const cs_corpus* corpus, cs_corpus_stats* out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    const auto s = capsearch::compute_stats(corpus->corpus);
    *out = {s.total_images,
            s.total_caption_sets,
            s.vocabulary_size,
            s.total_sentences,
            s.avg_sentences_per_caption,
            s.avg_caption_length_words,
            s.avg_relations_per_image,
            s.avg_entities_per_image};
  });
}

cs_status cs_corpus_fingerprint(const cs_corpus* corpus, char** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    *out = dup_string(capsearch::corpus_fingerprint(corpus->corpus));
  });
}

void cs_corpus_free(cs_corpus* corpus) { delete corpus; }

cs_status cs_validate_caption_set_json(const char* caption_set_json, char** violations_json) {
  return guarded([&] {
    require(caption_set_json, "caption_set_json");
    require(violations_json, "violations_json");
    const json j = json::parse(caption_set_json);
    capsearch::CaptionSet set;
    set.image_id = j.value("image_id", "");
    for (const auto& c : j.at("captions")) {
      capsearch::CaptionVariant v;
      v.variant_id = c.at("variant_id").get<int>();
      v.kind = capsearch::parse_variant_kind(c.value("kind", "other"))
                   .value_or(capsearch::VariantKind::kOther);
      v.text = c.at("text").get<std::string>();
      set.variants.push_back(std::move(v));
    }
    json out = json::array();
    for (const auto& v : capsearch::validate_caption_set(set)) out.push_back(v.describe());
    *violations_json = dup_string(out.dump());
  });
}

cs_status cs_backend_local_new(size_t dim, cs_backend** out) {
  return guarded([&] {
    require(out, "out");
    auto handle = std::make_unique<cs_backend>();
    handle->impl = std::make_unique<capsearch::LocalHashBackend>(dim);
    *out = handle.release();
  });
}

cs_status cs_backend_remote_new(const char* service_config_json, const char* cache_dir,
                                cs_backend** out) {
  return guarded([&] {
    require(service_config_json, "service_config_json");
    require(out, "out");
    auto config = capsearch::RemoteServiceConfig::from_json(json::parse(service_config_json));
    auto handle = std::make_unique<cs_backend>();
    handle->impl = std::make_unique<capsearch::RemoteEmbeddingBackend>(
        std::move(config), optional_path(cache_dir), stderr_hooks());
    *out = handle.release();
  });
}

const char* cs_backend_id(const cs_backend* backend) {
  return backend ? backend->impl->descriptor().backend_id.c_str() : "";
}

size_t cs_backend_dim(const cs_backend* backend) {
  return backend ? backend->impl->descriptor().dim : 0;
}

cs_status cs_backend_embed(cs_backend* backend, const char* text, double* out, size_t out_len) {
  return guarded([&] {
    require(backend, "backend");
    require(text, "text");
    require(out, "out");
    const auto v = capsearch::embed_text(*backend->impl, text);
    if (out_len < v.dim()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "output buffer holds " + std::to_string(out_len) + " of " +
                      std::to_string(v.dim()) + " components");
    }
    std::copy(v.values().begin(), v.values().end(), out);
  });
}

void cs_backend_free(cs_backend* backend) { delete backend; }

cs_status cs_cosine_sim(const double* a, const double* b, size_t dim, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = capsearch::cosine_sim(std::span<const double>(a, dim), std::span<const double>(b, dim));
  });
}

cs_status cs_captioner_fixture_new(const char* table_json, cs_captioner** out) {
  return guarded([&] {
    require(table_json, "table_json");
    require(out, "out");
    auto table = json::parse(table_json).get<std::map<std::string, std::string>>();
    auto handle = std::make_unique<cs_captioner>();
    handle->impl = capsearch::fixture_captioner(std::move(table));
    *out = handle.release();
  });
}

cs_status cs_captioner_remote_new(const char* service_config_json, const char* prompt,
                                  const char* cache_dir, cs_captioner** out) {
  return guarded([&] {
    require(service_config_json, "service_config_json");
    require(out, "out");
    auto config = capsearch::RemoteServiceConfig::from_json(json::parse(service_config_json));
    std::string p = (prompt && *prompt) ? prompt : std::string(capsearch::kDefaultCaptionPrompt);
    auto handle = std::make_unique<cs_captioner>();
    handle->prompt = p;
    handle->impl = std::make_unique<capsearch::RemoteCaptioner>(
        std::move(config), std::move(p), optional_path(cache_dir), stderr_hooks());
    *out = handle.release();
  });
}

cs_status cs_captioner_caption(cs_captioner* captioner, const char* image_path, char** out) {
  return guarded([&] {
    require(captioner, "captioner");
    require(image_path, "image_path");
    require(out, "out");
    *out = dup_string(captioner->impl->caption(image_path));
  });
}

void cs_captioner_free(cs_captioner* captioner) { delete captioner; }

cs_status cs_index_build(const cs_corpus* corpus, cs_backend* backend, size_t permits,
                         cs_index** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(backend, "backend");
    require(out, "out");
    auto handle = std::make_unique<cs_index>();
    handle->index = capsearch::build_index(corpus->corpus, *backend->impl, permits);
    *out = handle.release();
  });
}

cs_status cs_index_save(const cs_index* index, const char* path) {
  return guarded([&] {
    require(index, "index");
    require(path, "path");
    capsearch::save_index(index->index, path);
  });
}

cs_status cs_index_load(const char* path, cs_index** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto handle = std::make_unique<cs_index>();
    handle->index = capsearch::load_index(path);
    *out = handle.release();
  });
}

size_t cs_index_size(const cs_index* index) { return index ? index->index.size() : 0; }
size_t cs_index_dim(const cs_index* index) { return index ? index->index.dim() : 0; }
const char* cs_index_backend_id(const cs_index* index) {
  return index ? index->index.backend_id().c_str() : "";
}

cs_status cs_index_search(const cs_index* index, const double* query, size_t dim, size_t k,
                          cs_hit* hits, size_t* n_hits) {
  return guarded([&] {
    require(index, "index");
    require(query, "query");
    require(hits, "hits");
    require(n_hits, "n_hits");
    const auto q = capsearch::normalize(std::span<const double>(query, dim));
    const auto result = index->index.search(q, k);
    for (std::size_t i = 0; i < result.size(); ++i) {
      hits[i] = {index->index.image_id(result[i].ordinal).c_str(), result[i].score,
                 result[i].best_variant_id};
    }
    *n_hits = result.size();
  });
}

void cs_index_free(cs_index* index) { delete index; }

cs_status cs_query_t2i(const cs_index* index, cs_backend* backend, const char* text, size_t k,
                       char** outcome_json) {
  return guarded([&] {
    require(index, "index");
    require(backend, "backend");
    require(text, "text");
    require(outcome_json, "outcome_json");
    const auto outcome = capsearch::t2i_retrieve(index->index, *backend->impl, text, k);
    *outcome_json = dup_string(capsearch::to_json(outcome).dump());
  });
}

cs_status cs_query_i2t(const cs_index* index, cs_backend* backend, cs_captioner* captioner,
                       const char* image_path, size_t k, char** outcome_json) {
  return guarded([&] {
    require(index, "index");
    require(backend, "backend");
    require(captioner, "captioner");
    require(image_path, "image_path");
    require(outcome_json, "outcome_json");
    const auto outcome = capsearch::i2t_retrieve(index->index, *backend->impl,
                                                 *captioner->impl, image_path, k);
    *outcome_json = dup_string(capsearch::to_json(outcome).dump());
  });
}

cs_status cs_mean_recall(const double* recalls, size_t n, double* out) {
  return guarded([&] {
    require(recalls, "recalls");
    require(out, "out");
    *out = capsearch::mean_recall(std::span<const double>(recalls, n));
  });
}

cs_status cs_eval_run(const cs_index* index, cs_backend* backend, cs_captioner* captioner,
                      const char* ground_truth_path, const cs_eval_options* options,
                      char** report_json, char** table_text, char** trace_jsonl) {
  return guarded([&] {
    require(index, "index");
    require(backend, "backend");
    require(ground_truth_path, "ground_truth_path");
    capsearch::BenchmarkOptions opts;
    if (options != nullptr) {
      if (options->ks != nullptr && options->ks_len > 0) {
        opts.ks.assign(options->ks, options->ks + options->ks_len);
      }
      if (options->directions & CS_DIRECTION_T2I) opts.directions.push_back(capsearch::Direction::kT2I);
      if (options->directions & CS_DIRECTION_I2T) opts.directions.push_back(capsearch::Direction::kI2T);
      if (options->protocol == CS_PROTOCOL_CAPTION) {
        opts.protocol = capsearch::I2TProtocol::kCaptionLevel;
      } else if (options->protocol != CS_PROTOCOL_IMAGE) {
        throw Error(ErrorCode::kInvalidArgument, "unknown protocol");
      }
      opts.permits = options->permits == 0 ? 1 : options->permits;
    }
    if (captioner != nullptr && !captioner->prompt.empty()) {
      opts.prompt_sha256 = capsearch::sha256_hex(captioner->prompt);
    }
    const auto gt = capsearch::parse_ground_truth(ground_truth_path);
    const auto run = capsearch::run_benchmark(index->index, *backend->impl,
                                              captioner ? captioner->impl.get() : nullptr, gt, opts);
    std::string traces;
    for (const auto& t : run.traces) traces += capsearch::to_json(t).dump() + "\n";
    // Allocate everything before handing out ownership.
    std::unique_ptr<char, decltype(&std::free)> report(
        report_json ? dup_string(capsearch::to_json(run.report).dump(2)) : nullptr, &std::free);
    std::unique_ptr<char, decltype(&std::free)> table(
        table_text ? dup_string(capsearch::render_table(run.report)) : nullptr, &std::free);
    std::unique_ptr<char, decltype(&std::free)> trace(
        trace_jsonl ? dup_string(traces) : nullptr, &std::free);
    if (report_json) *report_json = report.release();
    if (table_text) *table_text = table.release();
    if (trace_jsonl) *trace_jsonl = trace.release();
  });
}

}  // extern "C"
