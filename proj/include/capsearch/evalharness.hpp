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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capsearch/backends.hpp"
#include "capsearch/index.hpp"

namespace capsearch {

enum class Direction { kT2I, kI2T };

std::string_view to_string(Direction d);
std::optional<Direction> parse_direction(std::string_view s);

// Image-level ranks images by max-over-variants score. Caption-level ranks
// every stored caption and counts a hit when any caption of the target
// image is in the top k.
enum class I2TProtocol { kImageLevel, kCaptionLevel };

std::string_view to_string(I2TProtocol p);
std::optional<I2TProtocol> parse_protocol(std::string_view s);

struct GroundTruthQuery {
  std::string query_id;
  Direction direction = Direction::kT2I;
  std::string text;        // T2I
  std::string image_path;  // I2T
  std::string target_image_id;
};

struct GroundTruth {
  std::vector<GroundTruthQuery> queries;
};

// Line-delimited {query_id, direction, text | image_path, target_image_id}.
// Throws FileNotFound, MalformedRecord (with line), InconsistentGroundTruth
// for repeated query ids.
GroundTruth parse_ground_truth(const std::filesystem::path& path);
GroundTruth parse_ground_truth_text(std::string_view contents);
std::string serialize_ground_truth(const GroundTruth& gt);

// 1 iff target is among the first min(k, |results|) hits.
int recall_at_k(const RankedResult& results, std::string_view target, std::size_t k);

// Two decimals, half away from zero.
double round2(double value);

// Arithmetic mean of recall percentages, rounded with round2. Throws
// InvalidArgument for values outside [0, 100] or an empty list.
double mean_recall(std::span<const double> recalls);

struct DirectionRecall {
  Direction direction = Direction::kT2I;
  std::size_t query_count = 0;
  std::map<std::size_t, double> recall_percent;  // k -> percent, 2 decimals
};

struct EvalReport {
  std::vector<DirectionRecall> directions;  // I2T first, then T2I
  double mean_recall = 0.0;
  std::size_t query_count = 0;
  nlohmann::json fingerprint;

  const DirectionRecall* find(Direction d) const;
};

struct QueryTrace {
  std::string query_id;
  Direction direction = Direction::kT2I;
  std::string query;
  std::optional<std::string> generated_query_text;
  std::string target_image_id;
  std::size_t target_rank = 0;  // 1-based within the top max(ks); 0 = miss
  std::vector<std::string> top_ids;
  double elapsed_ms = 0.0;
};

struct BenchmarkOptions {
  std::vector<std::size_t> ks{1, 5, 10};
  I2TProtocol protocol = I2TProtocol::kImageLevel;
  std::size_t permits = 1;
  std::vector<Direction> directions;  // empty: every direction present in gt
  std::string prompt_sha256;          // captioner prompt, for the fingerprint
};

struct BenchmarkRun {
  EvalReport report;
  std::vector<QueryTrace> traces;  // ground-truth order
};

// Runs every selected query through the retrieval flows with k = max(ks).
// Throws MissingCaptioner, InconsistentGroundTruth(query_id), and whatever
// the retrieval flows raise.
BenchmarkRun run_benchmark(const VectorIndex& index, EmbeddingBackend& backend,
                           CaptionerBackend* captioner, const GroundTruth& gt,
                           const BenchmarkOptions& options);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const QueryTrace& trace);

// Aligned text table with the image_to_text / text_to_image / mR layout.
std::string render_table(const EvalReport& report, std::string_view method = "capsearch");

}  // namespace capsearch
