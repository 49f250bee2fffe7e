/*
 * Copyright 2026 the capsearch authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C interface to the capsearch text-to-text retrieval engine.
 *
 * Every fallible call returns a cs_status. On failure the calling thread's
 * last-error slot holds a message (cs_last_error) and a JSON form
 * (cs_last_error_json). Strings handed out through char** parameters are
 * heap-allocated and released with cs_string_free. Handles are released with
 * their matching *_free function; passing NULL to a *_free is a no-op.
 *
 * Indexes and corpora are immutable once built and may be shared between
 * threads. Backends and captioners are safe to call concurrently.
 */
#ifndef CAPSEARCH_CAPSEARCH_H_
#define CAPSEARCH_CAPSEARCH_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef CAPSEARCH_BUILDING_LIBRARY
#    define CS_API __declspec(dllexport)
#  else
#    define CS_API __declspec(dllimport)
#  endif
#else
#  define CS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cs_status {
  CS_OK = 0,
  CS_ERR_INVALID_ARGUMENT = 1,
  CS_ERR_FILE_NOT_FOUND = 2,
  CS_ERR_IO = 3,
  CS_ERR_MALFORMED_RECORD = 4,
  CS_ERR_DUPLICATE_IMAGE_ID = 5,
  CS_ERR_EMPTY_TEXT = 6,
  CS_ERR_ZERO_VECTOR = 7,
  CS_ERR_DIMENSION_MISMATCH = 8,
  CS_ERR_BACKEND_FAILURE = 9,
  CS_ERR_AUTH = 10,
  CS_ERR_RATE_LIMITED = 11,
  CS_ERR_SERVICE = 12,
  CS_ERR_TIMEOUT = 13,
  CS_ERR_EMPTY_CAPTION = 14,
  CS_ERR_UNKNOWN_IMAGE = 15,
  CS_ERR_EMPTY_CORPUS = 16,
  CS_ERR_EMPTY_INDEX = 17,
  CS_ERR_CORRUPT_INDEX = 18,
  CS_ERR_BACKEND_MISMATCH = 19,
  CS_ERR_MISSING_CAPTIONER = 20,
  CS_ERR_INCONSISTENT_GROUND_TRUTH = 21,
  CS_ERR_INTERNAL = 99
} cs_status;

typedef struct cs_corpus cs_corpus;
typedef struct cs_backend cs_backend;
typedef struct cs_captioner cs_captioner;
typedef struct cs_index cs_index;

CS_API const char* cs_version(void);
CS_API const char* cs_status_name(cs_status status);
CS_API const char* cs_last_error(void);
/* {"error": name, "message": text, "line"?: n, "index"?: i} */
CS_API const char* cs_last_error_json(void);
CS_API void cs_string_free(char* s);

/* ---- corpus ---------------------------------------------------------- */

typedef struct cs_corpus_stats {
  uint64_t total_images;
  uint64_t total_caption_sets;
  uint64_t vocabulary_size;
  uint64_t total_sentences;
  double avg_sentences_per_caption;
  double avg_caption_length_words;
  double avg_relations_per_image;
  double avg_entities_per_image;
} cs_corpus_stats;

/* diagnostics_json (nullable) receives [{"line": n, "reason": s}, ...] for
 * records dropped in lenient mode. */
CS_API cs_status cs_corpus_parse(const char* path, int strict, cs_corpus** out,
                                 char** diagnostics_json);
/* Content de-duplication in place; first occurrence wins. */
CS_API cs_status cs_corpus_dedup(cs_corpus* corpus, size_t* removed);
CS_API size_t cs_corpus_size(const cs_corpus* corpus);
CS_API cs_status cs_corpus_write(const cs_corpus* corpus, const char* path);
CS_API cs_status cs_corpus_stats_compute(const cs_corpus* corpus, cs_corpus_stats* out);
CS_API cs_status cs_corpus_fingerprint(const cs_corpus* corpus, char** out);
CS_API void cs_corpus_free(cs_corpus* corpus);

/* Violations of one {"image_id", "captions": [...]} object, as a JSON array
 * of strings such as "EmptyText(variant=3)". */
CS_API cs_status cs_validate_caption_set_json(const char* caption_set_json,
                                              char** violations_json);

/* ---- embedding backends ---------------------------------------------- */

CS_API cs_status cs_backend_local_new(size_t dim, cs_backend** out);
/* service_config_json: RemoteServiceConfig fields; cache_dir may be NULL. */
CS_API cs_status cs_backend_remote_new(const char* service_config_json,
                                       const char* cache_dir, cs_backend** out);
CS_API const char* cs_backend_id(const cs_backend* backend);
CS_API size_t cs_backend_dim(const cs_backend* backend);
/* Writes the normalised embedding into out[0..dim). */
CS_API cs_status cs_backend_embed(cs_backend* backend, const char* text, double* out,
                                  size_t out_len);
CS_API void cs_backend_free(cs_backend* backend);

CS_API cs_status cs_cosine_sim(const double* a, const double* b, size_t dim, double* out);

/* ---- captioners ------------------------------------------------------ */

/* table_json: {"image_id": "caption", ...} */
CS_API cs_status cs_captioner_fixture_new(const char* table_json, cs_captioner** out);
/* prompt and cache_dir may be NULL (bundled prompt, no cache). */
CS_API cs_status cs_captioner_remote_new(const char* service_config_json, const char* prompt,
                                         const char* cache_dir, cs_captioner** out);
CS_API cs_status cs_captioner_caption(cs_captioner* captioner, const char* image_path,
                                      char** out);
CS_API void cs_captioner_free(cs_captioner* captioner);

/* ---- index ----------------------------------------------------------- */

typedef struct cs_hit {
  const char* image_id; /* owned by the index */
  double score;
  int best_variant_id;
} cs_hit;

CS_API cs_status cs_index_build(const cs_corpus* corpus, cs_backend* backend, size_t permits,
                                cs_index** out);
CS_API cs_status cs_index_save(const cs_index* index, const char* path);
CS_API cs_status cs_index_load(const char* path, cs_index** out);
CS_API size_t cs_index_size(const cs_index* index);
CS_API size_t cs_index_dim(const cs_index* index);
CS_API const char* cs_index_backend_id(const cs_index* index);
/* query need not be normalised. hits has room for k entries; *n_hits gets
 * min(k, images). */
CS_API cs_status cs_index_search(const cs_index* index, const double* query, size_t dim,
                                 size_t k, cs_hit* hits, size_t* n_hits);
CS_API void cs_index_free(cs_index* index);

/* ---- retrieval ------------------------------------------------------- */

/* outcome_json: {"mode", "query", "k", "generated_query_text", "results":
 * [{"rank", "image_id", "score", "best_variant_id"}], "timing_ms"} */
CS_API cs_status cs_query_t2i(const cs_index* index, cs_backend* backend, const char* text,
                              size_t k, char** outcome_json);
CS_API cs_status cs_query_i2t(const cs_index* index, cs_backend* backend,
                              cs_captioner* captioner, const char* image_path, size_t k,
                              char** outcome_json);

/* ---- evaluation ------------------------------------------------------ */

#define CS_DIRECTION_T2I 1
#define CS_DIRECTION_I2T 2

#define CS_PROTOCOL_IMAGE 0
#define CS_PROTOCOL_CAPTION 1

typedef struct cs_eval_options {
  const size_t* ks; /* NULL: {1, 5, 10} */
  size_t ks_len;
  int directions;   /* bitmask of CS_DIRECTION_*; 0: all in the ground truth */
  int protocol;     /* CS_PROTOCOL_* for I2T */
  size_t permits;   /* parallel queries, >= 1 */
} cs_eval_options;

CS_API cs_status cs_mean_recall(const double* recalls, size_t n, double* out);

/* captioner may be NULL when no I2T query is selected. Any of the three
 * outputs may be NULL. trace_jsonl holds one record per query. */
CS_API cs_status cs_eval_run(const cs_index* index, cs_backend* backend,
                             cs_captioner* captioner, const char* ground_truth_path,
                             const cs_eval_options* options, char** report_json,
                             char** table_text, char** trace_jsonl);

#ifdef __cplusplus
}
#endif

#endif /* CAPSEARCH_CAPSEARCH_H_ */
