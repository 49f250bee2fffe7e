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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "capsearch/error.hpp"
#include "support/synthetic.hpp"

namespace capsearch {
namespace {

using nlohmann::json;

json record(const std::string& id, std::vector<std::pair<int, std::string>> captions) {
  json caps = json::array();
  for (auto& [vid, text] : captions) caps.push_back({{"variant_id", vid}, {"kind", "other"}, {"text", text}});
  return {{"image_id", id}, {"dataset", "RSITMD"}, {"split", "test"}, {"captions", caps}};
}

json good_record(const std::string& id, const std::string& stem = "caption") {
  return record(id, {{1, stem + " one"}, {2, stem + " two"}, {3, stem + " three"},
                     {4, stem + " four"}, {5, stem + " five"}});
}

ErrorCode strict_error(const std::string& contents) {
  try {
    parse_corpus_text(contents, true);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for: " << contents;
  return ErrorCode::kInvalidArgument;
}

CaptionSet set_with_ids(std::vector<int> ids) {
  CaptionSet set{"x", {}};
  for (int id : ids) set.variants.push_back({id, VariantKind::kOther, "text " + std::to_string(id)});
  return set;
}

TEST(ParseCorpus, TwoWellFormedRecords) {
  const auto text = good_record("a").dump() + "\n" + good_record("b").dump() + "\n";
  const auto result = parse_corpus_text(text, true);
  EXPECT_EQ(result.corpus.size(), 2u);
  EXPECT_TRUE(result.diagnostics.empty());
  EXPECT_EQ(result.corpus.records[1].image.image_id, "b");
  EXPECT_EQ(result.corpus.records[0].image.source_dataset.kind, SourceDataset::Kind::kRsitmd);
}

TEST(ParseCorpus, LenientDropsFourVariantRecord) {
  auto bad = record("b", {{1, "a"}, {2, "b"}, {3, "c"}, {4, "d"}});
  const auto text = good_record("a").dump() + "\n" + bad.dump() + "\n";
  const auto result = parse_corpus_text(text, false);
  EXPECT_EQ(result.corpus.size(), 1u);
  ASSERT_EQ(result.diagnostics.size(), 1u);
  EXPECT_EQ(result.diagnostics[0].line, 2u);
  EXPECT_NE(result.diagnostics[0].reason.find("MissingVariantId(5)"), std::string::npos);
}

TEST(ParseCorpus, StrictRejectsDuplicateImageId) {
  const auto text = good_record("a").dump() + "\n" + good_record("a", "other").dump() + "\n";
  EXPECT_EQ(strict_error(text), ErrorCode::kDuplicateImageId);
  // lenient keeps the first and reports the second
  const auto lenient = parse_corpus_text(text, false);
  EXPECT_EQ(lenient.corpus.size(), 1u);
  EXPECT_EQ(lenient.diagnostics.size(), 1u);
}

TEST(ParseCorpus, StrictErrorCarriesLineNumber) {
  const auto text = good_record("a").dump() + "\n\n{not json\n";
  try {
    parse_corpus_text(text, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedRecord);
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseCorpus, StrictRejectsEachMalformedShape) {
  auto with = [](json r, const char* key, json value) {
    r[key] = std::move(value);
    return r.dump();
  };
  const json g = good_record("a");
  EXPECT_EQ(strict_error(with(g, "split", "holdout")), ErrorCode::kMalformedRecord);
  EXPECT_EQ(strict_error(with(g, "image_id", "")), ErrorCode::kMalformedRecord);
  EXPECT_EQ(strict_error(with(g, "image_id", "two words")), ErrorCode::kMalformedRecord);
  EXPECT_EQ(strict_error(with(g, "image_path", "../escape.png")), ErrorCode::kMalformedRecord);
  EXPECT_EQ(strict_error(with(g, "image_path", "/abs/img.png")), ErrorCode::kMalformedRecord);
  EXPECT_EQ(strict_error(with(g, "captions", "nope")), ErrorCode::kMalformedRecord);
  EXPECT_EQ(strict_error(with(g, "meta", 5)), ErrorCode::kMalformedRecord);
  EXPECT_EQ(strict_error("[1,2,3]"), ErrorCode::kMalformedRecord);
  json no_dataset = g;
  no_dataset.erase("dataset");
  EXPECT_EQ(strict_error(no_dataset.dump()), ErrorCode::kMalformedRecord);
  json bad_kind = g;
  bad_kind["captions"][0]["kind"] = "haiku";
  EXPECT_EQ(strict_error(bad_kind.dump()), ErrorCode::kMalformedRecord);
  EXPECT_EQ(strict_error(record("a", {{1, "a"}, {2, "b"}, {3, "  "}, {4, "d"}, {5, "e"}}).dump()),
            ErrorCode::kMalformedRecord);
}

TEST(ParseCorpus, MissingFile) {
  try {
    parse_corpus("/nonexistent/corpus.jsonl", true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFileNotFound);
  }
}

TEST(ParseCorpus, CorpusMetaLine) {
  const auto text = json{{"corpus_meta", {{"model", "gen"}, {"prompt_version", "3"}}}}.dump() + "\n" +
                    good_record("a").dump() + "\n";
  const auto result = parse_corpus_text(text, true);
  EXPECT_EQ(result.corpus.metadata["model"], "gen");
  EXPECT_EQ(result.corpus.size(), 1u);
}

TEST(ParseCorpus, SerializeRoundTripProperty) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Corpus corpus = testing::synthetic_corpus(seed * 3, seed);
    corpus.records.front().image.meta = {{"audited", seed % 2 == 0}};
    corpus.records.front().image.source_dataset = SourceDataset::parse("UCM");
    const auto first = parse_corpus_text(serialize_corpus(corpus), true).corpus;
    EXPECT_EQ(first, corpus);
    const auto second = parse_corpus_text(serialize_corpus(first), true).corpus;
    EXPECT_EQ(second, first);
  }
}

TEST(ParseCorpus, StrictOutputAlwaysValidates) {
  const auto corpus = testing::synthetic_corpus(40, 9);
  const auto parsed = parse_corpus_text(serialize_corpus(corpus), true).corpus;
  for (const auto& e : parsed.records) EXPECT_TRUE(validate_caption_set(e.captions).empty());
}

TEST(ParseCorpus, ReadsFromDisk) {
  const auto path = std::filesystem::temp_directory_path() / "capsearch_corpus_test.jsonl";
  const auto corpus = testing::synthetic_corpus(5, 2);
  write_corpus(corpus, path);
  EXPECT_EQ(parse_corpus(path, true).corpus, corpus);
  std::filesystem::remove(path);
}

TEST(ValidateCaptionSet, CleanSet) { EXPECT_TRUE(validate_caption_set(set_with_ids({1, 2, 3, 4, 5})).empty()); }

TEST(ValidateCaptionSet, EmptyTextNamesVariant) {
  auto set = set_with_ids({1, 2, 3, 4, 5});
  set.variants[2].text = " \t";
  const auto v = validate_caption_set(set);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], (Violation{Violation::Rule::kEmptyText, 3}));
  EXPECT_EQ(v[0].describe(), "EmptyText(variant=3)");
}

TEST(ValidateCaptionSet, DuplicateAndMissingIds) {
  const auto v = validate_caption_set(set_with_ids({1, 1, 2, 3, 4}));
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0], (Violation{Violation::Rule::kDuplicateVariantId, 1}));
  EXPECT_EQ(v[1], (Violation{Violation::Rule::kMissingVariantId, 5}));
}

TEST(ValidateCaptionSet, CountAndRange) {
  const auto v = validate_caption_set(set_with_ids({1, 2, 3, 4, 5, 6}));
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0], (Violation{Violation::Rule::kWrongVariantCount, 6}));
  EXPECT_EQ(v[1], (Violation{Violation::Rule::kVariantIdOutOfRange, 6}));
}

TEST(Dedup, IdenticalTextsUnderDifferentIds) {
  const auto text = good_record("a").dump() + "\n" + good_record("b").dump() + "\n";
  const auto corpus = parse_corpus_text(text, true).corpus;
  const auto result = dedup_corpus(corpus);
  EXPECT_EQ(result.removed, 1u);
  ASSERT_EQ(result.corpus.size(), 1u);
  EXPECT_EQ(result.corpus.records[0].image.image_id, "a");
}

TEST(Dedup, OneCharacterDifferenceSurvives) {
  auto a = good_record("a");
  auto b = good_record("b");
  b["captions"][4]["text"] = "caption fivf";
  const auto corpus = parse_corpus_text(a.dump() + "\n" + b.dump() + "\n", true).corpus;
  const auto result = dedup_corpus(corpus);
  EXPECT_EQ(result.removed, 0u);
  EXPECT_EQ(result.corpus.size(), 2u);
}

TEST(Dedup, EmptyCorpus) {
  const auto result = dedup_corpus(Corpus{});
  EXPECT_EQ(result.removed, 0u);
  EXPECT_TRUE(result.corpus.empty());
}

TEST(Dedup, FingerprintIgnoresWhitespaceAndFileOrder) {
  auto a = testing::synthetic_corpus(1, 4).records[0].captions;
  auto b = a;
  b.variants[0].text = "  " + b.variants[0].text + "\n";
  std::swap(b.variants[1], b.variants[3]);
  EXPECT_EQ(content_fingerprint(a), content_fingerprint(b));
}

TEST(Dedup, IdempotentAndOrderPreserving) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto corpus = testing::synthetic_corpus(30, seed);
    // clone a few records under fresh ids
    for (std::size_t i = 0; i < 30; i += 7) {
      auto copy = corpus.records[i];
      copy.image.image_id += "_dup";
      copy.captions.image_id = copy.image.image_id;
      corpus.records.push_back(copy);
    }
    const auto once = dedup_corpus(corpus);
    EXPECT_EQ(once.removed, 5u);
    const auto twice = dedup_corpus(once.corpus);
    EXPECT_EQ(twice.removed, 0u);
    EXPECT_EQ(twice.corpus, once.corpus);
    for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(once.corpus.records[i], corpus.records[i]);
  }
}

TEST(Stats, HandCountedSingleImage) {
  // "A road. Two cars." x5: tokens {a, road, two, cars}, 2 sentences each.
  CaptionSet set{"x", {}};
  for (int v = 1; v <= 5; ++v) set.variants.push_back({v, VariantKind::kOther, "A road. Two cars."});
  Corpus corpus;
  corpus.records.push_back({{"x", SourceDataset::parse("RSICD"), Split::kTest, std::nullopt, {}}, set});
  const auto s = compute_stats(corpus);
  EXPECT_EQ(s.total_images, 1u);
  EXPECT_EQ(s.total_caption_sets, 5u);
  EXPECT_EQ(s.total_sentences, 10u);
  EXPECT_DOUBLE_EQ(s.avg_sentences_per_caption, 2.0);
  EXPECT_DOUBLE_EQ(s.avg_caption_length_words, 4.0);
  EXPECT_EQ(s.vocabulary_size, 4u);
  EXPECT_DOUBLE_EQ(s.avg_entities_per_image, 2.0);  // "road", "cars"
  EXPECT_DOUBLE_EQ(s.avg_relations_per_image, 0.0);
}

TEST(Stats, EmptyCorpusAllZero) {
  const auto s = compute_stats(Corpus{});
  EXPECT_EQ(s.total_images, 0u);
  EXPECT_EQ(s.total_caption_sets, 0u);
  EXPECT_EQ(s.vocabulary_size, 0u);
  EXPECT_EQ(s.total_sentences, 0u);
  EXPECT_EQ(s.avg_sentences_per_caption, 0.0);
  EXPECT_EQ(s.avg_caption_length_words, 0.0);
  EXPECT_EQ(s.avg_relations_per_image, 0.0);
  EXPECT_EQ(s.avg_entities_per_image, 0.0);
}

TEST(Stats, CaptionSetsAreFivePerImage) {
  for (std::size_t n : {1u, 4u, 17u, 250u}) {
    const auto s = compute_stats(testing::synthetic_corpus(n, n));
    EXPECT_EQ(s.total_caption_sets, 5 * s.total_images);
    EXPECT_TRUE(std::isfinite(s.avg_caption_length_words));
    EXPECT_GE(s.avg_relations_per_image, 0.0);
  }
}

TEST(Stats, ReportedImageCountGivesReportedCaptionSets) {
  // 17,764 images must report 88,820 caption sets.
  CaptionSet set{"", {}};
  for (int v = 1; v <= 5; ++v) set.variants.push_back({v, VariantKind::kOther, "x"});
  Corpus corpus;
  corpus.records.resize(17764, {{"", SourceDataset{}, Split::kTest, std::nullopt, {}}, set});
  EXPECT_EQ(compute_stats(corpus).total_caption_sets, 88820u);
}

TEST(Heuristics, RelationsAndEntities) {
  CaptionSet set{"x", {}};
  set.variants.push_back({1, VariantKind::kSummary, "Planes parked next to the terminal."});
  set.variants.push_back({2, VariantKind::kFeatureList, "runway left of apron; trees surrounded by grass"});
  set.variants.push_back({3, VariantKind::kDetailed, "A parking lot lies near the terminal, above a road."});
  set.variants.push_back({4, VariantKind::kOther, "terminal"});
  set.variants.push_back({5, VariantKind::kOther, "nothing relevant"});
  // relations: next to, left of, surrounded by, near, above
  EXPECT_EQ(count_relations(set), 5u);
  // entities: planes, terminal, runway, apron, trees, grass, parking lot, road
  EXPECT_EQ(count_entities(set), 8u);
}

}  // namespace
}  // namespace capsearch
