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
#include <string_view>
#include <vector>

namespace capsearch {

inline constexpr int kVariantsPerImage = 5;

enum class Split { kTrain, kVal, kTest };

enum class VariantKind { kSummary, kFeatureList, kDetailed, kOther };

// Source benchmark of an image. RSITMD and RSICD are recognised
// case-insensitively; anything else keeps its name verbatim.
struct SourceDataset {
  enum class Kind { kRsitmd, kRsicd, kOther };
  Kind kind = Kind::kOther;
  std::string other_name;

  static SourceDataset parse(std::string_view name);
  std::string name() const;
  bool operator==(const SourceDataset&) const = default;
};

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view s);
std::string_view to_string(VariantKind kind);
std::optional<VariantKind> parse_variant_kind(std::string_view s);

struct ImageRecord {
  std::string image_id;
  SourceDataset source_dataset;
  Split split = Split::kTest;
  std::optional<std::string> image_path;
  nlohmann::json meta;  // null when absent

  bool operator==(const ImageRecord&) const = default;
};

struct CaptionVariant {
  int variant_id = 0;
  VariantKind kind = VariantKind::kOther;
  std::string text;

  bool operator==(const CaptionVariant&) const = default;
};

struct CaptionSet {
  std::string image_id;
  std::vector<CaptionVariant> variants;

  // Variant with the given id, or nullptr.
  const CaptionVariant* find(int variant_id) const;
  bool operator==(const CaptionSet&) const = default;
};

struct CorpusEntry {
  ImageRecord image;
  CaptionSet captions;

  bool operator==(const CorpusEntry&) const = default;
};

struct Corpus {
  std::vector<CorpusEntry> records;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  bool operator==(const Corpus&) const = default;
};

// One broken CaptionSet rule.
struct Violation {
  enum class Rule {
    kWrongVariantCount,
    kVariantIdOutOfRange,
    kEmptyText,
    kDuplicateVariantId,
    kMissingVariantId,
  };
  Rule rule;
  int value = 0;  // variant id, or the observed count for kWrongVariantCount

  std::string describe() const;
  bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_caption_set(const CaptionSet& set);

// Dropped line in lenient mode.
struct Diagnostic {
  std::size_t line = 0;
  std::string reason;
};

struct ParseResult {
  Corpus corpus;
  std::vector<Diagnostic> diagnostics;
};

// Line-delimited JSON corpus reader. Strict mode throws MalformedRecord or
// DuplicateImageId on the first bad record; lenient mode drops it and logs
// a Diagnostic. A line holding only {"corpus_meta": {...}} sets metadata.
ParseResult parse_corpus(const std::filesystem::path& path, bool strict);
ParseResult parse_corpus_text(std::string_view contents, bool strict);

// Inverse of parse_corpus; output re-parses to an equal Corpus.
std::string serialize_corpus(const Corpus& corpus);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

// SHA-256 of the five whitespace-normalised texts in variant order,
// separated by 0x1F.
std::string content_fingerprint(const CaptionSet& set);

// SHA-256 of the serialised corpus; identifies a corpus in provenance blocks.
std::string corpus_fingerprint(const Corpus& corpus);

struct DedupResult {
  Corpus corpus;
  std::size_t removed = 0;
};

// Keeps the first record of every content-fingerprint class, input order.
DedupResult dedup_corpus(const Corpus& corpus);

struct CorpusStats {
  std::size_t total_images = 0;
  std::size_t total_caption_sets = 0;
  std::size_t vocabulary_size = 0;
  std::size_t total_sentences = 0;
  double avg_sentences_per_caption = 0.0;
  double avg_caption_length_words = 0.0;
  double avg_relations_per_image = 0.0;
  double avg_entities_per_image = 0.0;
};

CorpusStats compute_stats(const Corpus& corpus);

// Heuristics behind the relation/entity averages (lexicon version 1).
// Entities: distinct gazetteer terms across an image's captions.
// Relations: occurrences of spatial-preposition phrases across its captions.
std::size_t count_entities(const CaptionSet& set);
std::size_t count_relations(const CaptionSet& set);
inline constexpr std::string_view kLexiconVersion = "rs-lexicon-v1";

}  // namespace capsearch
