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
#include "capsearch/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "capsearch/error.hpp"
#include "capsearch/hashing.hpp"
#include "capsearch/text.hpp"

namespace capsearch {
namespace {

using nlohmann::json;

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  }
  return out;
}

[[noreturn]] void malformed(const std::string& reason) {
  throw Error(ErrorCode::kMalformedRecord, reason);
}

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool is_safe_relative_path(std::string_view p) {
  if (p.empty() || p.front() == '/' || p.front() == '\\') return false;
  if (p.size() >= 2 && p[1] == ':') return false;  // drive letter
  for (const auto& part : std::filesystem::path(std::string(p))) {
    if (part == "..") return false;
  }
  return true;
}

bool has_whitespace(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  });
}

CorpusEntry parse_record(const json& obj) {
  CorpusEntry entry;
  ImageRecord& image = entry.image;

  image.image_id = require_string(obj, "image_id");
  if (image.image_id.empty() || has_whitespace(image.image_id)) {
    malformed("image_id must be a non-empty token without whitespace");
  }
  image.source_dataset = SourceDataset::parse(require_string(obj, "dataset"));
  if (image.source_dataset.kind == SourceDataset::Kind::kOther &&
      text::is_blank(image.source_dataset.other_name)) {
    malformed("dataset must be non-empty");
  }
  const std::string split = require_string(obj, "split");
  auto parsed_split = parse_split(split);
  if (!parsed_split) malformed("unknown split '" + split + "'");
  image.split = *parsed_split;

  if (auto it = obj.find("image_path"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) malformed("field 'image_path' must be a string");
    auto path = it->get<std::string>();
    if (!is_safe_relative_path(path)) {
      malformed("image_path must be relative without '..' components");
    }
    image.image_path = std::move(path);
  }
  if (auto it = obj.find("meta"); it != obj.end() && !it->is_null()) {
    if (!it->is_object()) malformed("field 'meta' must be an object");
    image.meta = *it;
  }

  const json& captions = require(obj, "captions");
  if (!captions.is_array()) malformed("field 'captions' must be an array");
  entry.captions.image_id = image.image_id;
  for (const json& c : captions) {
    if (!c.is_object()) malformed("caption entries must be objects");
    CaptionVariant variant;
    const json& id = require(c, "variant_id");
    if (!id.is_number_integer()) malformed("variant_id must be an integer");
    variant.variant_id = static_cast<int>(
        std::clamp<std::int64_t>(id.get<std::int64_t>(), -1, 1000));
    const std::string kind = require_string(c, "kind");
    auto parsed_kind = parse_variant_kind(kind);
    if (!parsed_kind) malformed("unknown caption kind '" + kind + "'");
    variant.kind = *parsed_kind;
    variant.text = require_string(c, "text");
    entry.captions.variants.push_back(std::move(variant));
  }

  auto violations = validate_caption_set(entry.captions);
  if (!violations.empty()) {
    std::string reason = "invalid caption set:";
    for (const auto& v : violations) reason += " " + v.describe();
    malformed(reason);
  }
  return entry;
}

json record_to_json(const CorpusEntry& entry) {
  json obj;
  obj["image_id"] = entry.image.image_id;
  obj["dataset"] = entry.image.source_dataset.name();
  obj["split"] = std::string(to_string(entry.image.split));
  if (entry.image.image_path) obj["image_path"] = *entry.image.image_path;
  json captions = json::array();
  for (const auto& v : entry.captions.variants) {
    captions.push_back({{"variant_id", v.variant_id},
                        {"kind", std::string(to_string(v.kind))},
                        {"text", v.text}});
  }
  obj["captions"] = std::move(captions);
  if (!entry.image.meta.is_null()) obj["meta"] = entry.image.meta;
  return obj;
}

// Remote-sensing gazetteer. Multi-word terms are matched as token sequences.
constexpr std::array kGazetteer = {
    "airplane", "airplanes", "airport", "apron", "bare land", "baseball field",
    "basketball court", "beach", "boat", "boats", "bridge", "bridges",
    "building", "buildings", "car", "cars", "center", "church", "commercial area",
    "crop", "crops", "dam", "desert", "farmland", "field", "fields", "forest",
    "grass", "grassland", "greenery", "harbor", "highway", "house", "houses",
    "industrial area", "intersection", "island", "lake", "lawn", "meadow",
    "mountain", "mountains", "park", "parking lot", "playground", "plane",
    "planes", "pond", "pool", "port", "railway", "railway station", "residential area",
    "river", "road", "roads", "roof", "roofs", "runway", "runways", "school",
    "ship", "ships", "shore", "square", "stadium", "storage tank",
    "storage tanks", "swimming pool", "tennis court", "terminal", "track",
    "tree", "trees", "truck", "trucks", "vegetation", "viaduct", "village",
    "water", "wetland",
};

constexpr std::array kRelationLexicon = {
    "above", "across", "adjacent to", "along", "alongside", "around",
    "behind", "below", "beneath", "beside", "between", "bordered by",
    "close to", "east of", "in front of", "inside", "left of", "near",
    "next to", "north of", "on top of", "opposite", "parallel to",
    "right of", "south of", "surrounded by", "under", "west of",
};

template <std::size_t N>
std::vector<std::vector<std::string>> tokenized_lexicon(
    const std::array<const char*, N>& terms) {
  std::vector<std::vector<std::string>> out;
  out.reserve(N);
  for (const char* t : terms) out.push_back(text::tokenize(t));
  return out;
}

const std::vector<std::vector<std::string>>& gazetteer() {
  static const auto terms = tokenized_lexicon(kGazetteer);
  return terms;
}

const std::vector<std::vector<std::string>>& relation_lexicon() {
  static const auto terms = tokenized_lexicon(kRelationLexicon);
  return terms;
}

bool matches_at(const std::vector<std::string>& tokens, std::size_t pos,
                const std::vector<std::string>& phrase) {
  if (pos + phrase.size() > tokens.size()) return false;
  return std::equal(phrase.begin(), phrase.end(), tokens.begin() + pos);
}

}  // namespace

SourceDataset SourceDataset::parse(std::string_view name) {
  const std::string lower = lower_ascii(name);
  if (lower == "rsitmd") return {Kind::kRsitmd, {}};
  if (lower == "rsicd") return {Kind::kRsicd, {}};
  return {Kind::kOther, std::string(name)};
}

std::string SourceDataset::name() const {
  switch (kind) {
    case Kind::kRsitmd: return "RSITMD";
    case Kind::kRsicd: return "RSICD";
    case Kind::kOther: return other_name;
  }
  return other_name;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "test";
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  return std::nullopt;
}

std::string_view to_string(VariantKind kind) {
  switch (kind) {
    case VariantKind::kSummary: return "summary";
    case VariantKind::kFeatureList: return "feature_list";
    case VariantKind::kDetailed: return "detailed";
    case VariantKind::kOther: return "other";
  }
  return "other";
}

std::optional<VariantKind> parse_variant_kind(std::string_view s) {
  if (s == "summary") return VariantKind::kSummary;
  if (s == "feature_list") return VariantKind::kFeatureList;
  if (s == "detailed") return VariantKind::kDetailed;
  if (s == "other") return VariantKind::kOther;
  return std::nullopt;
}

const CaptionVariant* CaptionSet::find(int variant_id) const {
  for (const auto& v : variants) {
    if (v.variant_id == variant_id) return &v;
  }
  return nullptr;
}

std::string Violation::describe() const {
  switch (rule) {
    case Rule::kWrongVariantCount:
      return "WrongVariantCount(" + std::to_string(value) + ")";
    case Rule::kVariantIdOutOfRange:
      return "VariantIdOutOfRange(" + std::to_string(value) + ")";
    case Rule::kEmptyText:
      return "EmptyText(variant=" + std::to_string(value) + ")";
    case Rule::kDuplicateVariantId:
      return "DuplicateVariantId(" + std::to_string(value) + ")";
    case Rule::kMissingVariantId:
      return "MissingVariantId(" + std::to_string(value) + ")";
  }
  return "Unknown";
}

std::vector<Violation> validate_caption_set(const CaptionSet& set) {
  using Rule = Violation::Rule;
  std::vector<Violation> out;
  if (set.variants.size() != kVariantsPerImage) {
    out.push_back({Rule::kWrongVariantCount, static_cast<int>(set.variants.size())});
  }
  std::array<int, kVariantsPerImage + 1> seen{};
  for (const auto& v : set.variants) {
    if (v.variant_id < 1 || v.variant_id > kVariantsPerImage) {
      out.push_back({Rule::kVariantIdOutOfRange, v.variant_id});
    } else {
      ++seen[static_cast<std::size_t>(v.variant_id)];
    }
    if (text::is_blank(v.text)) out.push_back({Rule::kEmptyText, v.variant_id});
  }
  for (int id = 1; id <= kVariantsPerImage; ++id) {
    if (seen[static_cast<std::size_t>(id)] > 1) out.push_back({Rule::kDuplicateVariantId, id});
  }
  for (int id = 1; id <= kVariantsPerImage; ++id) {
    if (seen[static_cast<std::size_t>(id)] == 0) out.push_back({Rule::kMissingVariantId, id});
  }
  return out;
}

ParseResult parse_corpus(const std::filesystem::path& path, bool strict) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kFileNotFound, "corpus file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open corpus file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_corpus_text(buffer.str(), strict);
}

ParseResult parse_corpus_text(std::string_view contents, bool strict) {
  ParseResult result;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    const std::size_t eol = std::min(contents.find('\n', pos), contents.size());
    const std::string_view line = contents.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (text::is_blank(line)) {
      if (eol == contents.size()) break;
      continue;
    }

    try {
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        malformed(std::string("invalid JSON: ") + e.what());
      }
      if (!obj.is_object()) malformed("record must be a JSON object");
      if (obj.contains("corpus_meta") && !obj.contains("image_id")) {
        if (!obj["corpus_meta"].is_object()) malformed("corpus_meta must be an object");
        result.corpus.metadata = obj["corpus_meta"];
        continue;
      }
      CorpusEntry entry = parse_record(obj);
      if (!ids.insert(entry.image.image_id).second) {
        throw Error(ErrorCode::kDuplicateImageId,
                    "duplicate image_id '" + entry.image.image_id + "'");
      }
      result.corpus.records.push_back(std::move(entry));
    } catch (Error& e) {
      e.with_line(line_no);
      if (strict) {
        throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what())
            .with_line(line_no);
      }
      result.diagnostics.push_back({line_no, e.what()});
    }
  }
  return result;
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  if (!corpus.metadata.is_null() && !corpus.metadata.empty()) {
    out += json{{"corpus_meta", corpus.metadata}}.dump();
    out += '\n';
  }
  for (const auto& entry : corpus.records) {
    out += record_to_json(entry).dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write corpus file: " + path.string());
  out << serialize_corpus(corpus);
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::string content_fingerprint(const CaptionSet& set) {
  std::vector<const CaptionVariant*> ordered;
  for (const auto& v : set.variants) ordered.push_back(&v);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](auto* a, auto* b) { return a->variant_id < b->variant_id; });
  std::string joined;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (i > 0) joined.push_back('\x1f');
    joined += text::normalize_whitespace(ordered[i]->text);
  }
  return sha256_hex(joined);
}

std::string corpus_fingerprint(const Corpus& corpus) {
  return sha256_hex(serialize_corpus(corpus));
}

DedupResult dedup_corpus(const Corpus& corpus) {
  DedupResult result;
  result.corpus.metadata = corpus.metadata;
  std::unordered_set<std::string> seen;
  for (const auto& entry : corpus.records) {
    if (seen.insert(content_fingerprint(entry.captions)).second) {
      result.corpus.records.push_back(entry);
    } else {
      ++result.removed;
    }
  }
  return result;
}

std::size_t count_entities(const CaptionSet& set) {
  std::set<std::size_t> found;
  const auto& terms = gazetteer();
  for (const auto& v : set.variants) {
    const auto tokens = text::tokenize(v.text);
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
      for (std::size_t t = 0; t < terms.size(); ++t) {
        if (matches_at(tokens, pos, terms[t])) found.insert(t);
      }
    }
  }
  return found.size();
}

std::size_t count_relations(const CaptionSet& set) {
  std::size_t count = 0;
  const auto& phrases = relation_lexicon();
  for (const auto& v : set.variants) {
    const auto tokens = text::tokenize(v.text);
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
      for (const auto& phrase : phrases) {
        if (matches_at(tokens, pos, phrase)) ++count;
      }
    }
  }
  return count;
}

CorpusStats compute_stats(const Corpus& corpus) {
  CorpusStats stats;
  if (corpus.empty()) return stats;

  std::unordered_set<std::string> vocabulary;
  std::size_t total_words = 0;
  std::size_t relations = 0;
  std::size_t entities = 0;
  for (const auto& entry : corpus.records) {
    for (const auto& v : entry.captions.variants) {
      auto tokens = text::tokenize(v.text);
      total_words += tokens.size();
      for (auto& t : tokens) vocabulary.insert(std::move(t));
      stats.total_sentences += text::split_sentences(v.text).size();
    }
    relations += count_relations(entry.captions);
    entities += count_entities(entry.captions);
  }

  stats.total_images = corpus.size();
  stats.total_caption_sets = kVariantsPerImage * corpus.size();
  stats.vocabulary_size = vocabulary.size();
  const auto captions = static_cast<double>(stats.total_caption_sets);
  const auto images = static_cast<double>(stats.total_images);
  stats.avg_sentences_per_caption = static_cast<double>(stats.total_sentences) / captions;
  stats.avg_caption_length_words = static_cast<double>(total_words) / captions;
  stats.avg_relations_per_image = static_cast<double>(relations) / images;
  stats.avg_entities_per_image = static_cast<double>(entities) / images;
  return stats;
}

}  // namespace capsearch
