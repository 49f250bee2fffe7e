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
#include "capsearch/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "capsearch/error.hpp"
#include "capsearch/retrieval.hpp"
#include "capsearch/text.hpp"

namespace capsearch {
namespace {

using nlohmann::json;

std::string format2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width, bool right_align) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right_align ? fill + s : s + fill;
}

QueryTrace run_query(const VectorIndex& index, EmbeddingBackend& backend,
                     CaptionerBackend* captioner, const GroundTruthQuery& q,
                     std::size_t max_k, I2TProtocol protocol) {
  const auto t0 = std::chrono::steady_clock::now();
  QueryTrace trace;
  trace.query_id = q.query_id;
  trace.direction = q.direction;
  trace.target_image_id = q.target_image_id;

  if (q.direction == Direction::kT2I) {
    trace.query = q.text;
    const auto outcome = t2i_retrieve(index, backend, q.text, max_k);
    for (const auto& hit : outcome.results) trace.top_ids.push_back(hit.image_id);
  } else if (protocol == I2TProtocol::kImageLevel) {
    trace.query = q.image_path;
    const auto outcome = i2t_retrieve(index, backend, *captioner, q.image_path, max_k);
    trace.generated_query_text = outcome.generated_query_text;
    for (const auto& hit : outcome.results) trace.top_ids.push_back(hit.image_id);
  } else {
    trace.query = q.image_path;
    check_backend_matches(index, backend);
    const std::string caption = captioner->caption(q.image_path);
    if (text::is_blank(caption)) throw Error(ErrorCode::kEmptyCaption, "captioner returned no text");
    trace.generated_query_text = caption;
    const auto hits = index.search_variants(embed_text(backend, caption), max_k);
    for (const auto& hit : hits) trace.top_ids.push_back(index.image_id(hit.ordinal));
  }

  const auto it = std::find(trace.top_ids.begin(), trace.top_ids.end(), q.target_image_id);
  trace.target_rank = it == trace.top_ids.end()
                          ? 0
                          : static_cast<std::size_t>(it - trace.top_ids.begin()) + 1;
  trace.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return trace;
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::kT2I ? "t2i" : "i2t"; }

std::optional<Direction> parse_direction(std::string_view s) {
  if (s == "t2i" || s == "T2I") return Direction::kT2I;
  if (s == "i2t" || s == "I2T") return Direction::kI2T;
  return std::nullopt;
}

std::string_view to_string(I2TProtocol p) {
  return p == I2TProtocol::kImageLevel ? "image" : "caption";
}

std::optional<I2TProtocol> parse_protocol(std::string_view s) {
  if (s == "image") return I2TProtocol::kImageLevel;
  if (s == "caption") return I2TProtocol::kCaptionLevel;
  return std::nullopt;
}

GroundTruth parse_ground_truth(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kFileNotFound, "ground-truth file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ground_truth_text(buf.str());
}

GroundTruth parse_ground_truth_text(std::string_view contents) {
  GroundTruth gt;
  std::unordered_set<std::string> ids;
  std::istringstream in{std::string(contents)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::kMalformedRecord,
                   "ground truth line " + std::to_string(line_no) + ": " + why)
          .with_line(line_no);
    };
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw fail("record must be an object");
    GroundTruthQuery q;
    try {
      q.query_id = obj.at("query_id").get<std::string>();
      const auto dir = parse_direction(obj.at("direction").get<std::string>());
      if (!dir) throw fail("direction must be t2i or i2t");
      q.direction = *dir;
      q.target_image_id = obj.at("target_image_id").get<std::string>();
      if (q.direction == Direction::kT2I) {
        q.text = obj.at("text").get<std::string>();
      } else {
        q.image_path = obj.at("image_path").get<std::string>();
      }
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    if (q.query_id.empty()) throw fail("query_id is empty");
    if (!ids.insert(q.query_id).second) {
      throw Error(ErrorCode::kInconsistentGroundTruth, "duplicate query_id '" + q.query_id + "'")
          .with_line(line_no);
    }
    gt.queries.push_back(std::move(q));
  }
  return gt;
}

std::string serialize_ground_truth(const GroundTruth& gt) {
  std::string out;
  for (const auto& q : gt.queries) {
    json obj = {{"query_id", q.query_id}, {"direction", std::string(to_string(q.direction))}};
    if (q.direction == Direction::kT2I) {
      obj["text"] = q.text;
    } else {
      obj["image_path"] = q.image_path;
    }
    obj["target_image_id"] = q.target_image_id;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

int recall_at_k(const RankedResult& results, std::string_view target, std::size_t k) {
  const std::size_t n = std::min(k, results.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (results[i].image_id == target) return 1;
  }
  return 0;
}

double round2(double value) {
  // The nudge absorbs representation error such as 42.624999999 for 42.625.
  const double scaled = value * 100.0;
  const double nudged = scaled + std::copysign(1e-9 * std::max(1.0, std::fabs(scaled)), scaled);
  return std::round(nudged) / 100.0;
}

double mean_recall(std::span<const double> recalls) {
  if (recalls.empty()) throw Error(ErrorCode::kInvalidArgument, "no recall values");
  for (double r : recalls) {
    if (!(r >= 0.0 && r <= 100.0)) {
      throw Error(ErrorCode::kInvalidArgument, "recall outside [0, 100]");
    }
  }
  const double sum = std::accumulate(recalls.begin(), recalls.end(), 0.0);
  return round2(sum / static_cast<double>(recalls.size()));
}

const DirectionRecall* EvalReport::find(Direction d) const {
  for (const auto& dr : directions) {
    if (dr.direction == d) return &dr;
  }
  return nullptr;
}

BenchmarkRun run_benchmark(const VectorIndex& index, EmbeddingBackend& backend,
                           CaptionerBackend* captioner, const GroundTruth& gt,
                           const BenchmarkOptions& options) {
  if (options.ks.empty()) throw Error(ErrorCode::kInvalidArgument, "ks is empty");
  for (std::size_t k : options.ks) {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "every k must be >= 1");
  }
  std::vector<std::size_t> ks = options.ks;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  const std::size_t max_k = ks.back();

  std::set<Direction> wanted(options.directions.begin(), options.directions.end());
  std::vector<const GroundTruthQuery*> selected;
  std::unordered_set<std::string> ids;
  for (const auto& q : gt.queries) {
    if (!wanted.empty() && !wanted.count(q.direction)) continue;
    if (!ids.insert(q.query_id).second) {
      throw Error(ErrorCode::kInconsistentGroundTruth, "duplicate query_id '" + q.query_id + "'");
    }
    if (index.find(q.target_image_id) == index.size()) {
      throw Error(ErrorCode::kInconsistentGroundTruth,
                  "query '" + q.query_id + "' targets unknown image '" + q.target_image_id + "'");
    }
    const bool has_payload =
        q.direction == Direction::kT2I ? !text::is_blank(q.text) : !q.image_path.empty();
    if (!has_payload) {
      throw Error(ErrorCode::kInconsistentGroundTruth, "query '" + q.query_id + "' has no payload");
    }
    if (q.direction == Direction::kI2T && captioner == nullptr) {
      throw Error(ErrorCode::kMissingCaptioner, "I2T queries need a captioner");
    }
    selected.push_back(&q);
  }
  check_backend_matches(index, backend);

  BenchmarkRun run;
  run.traces.resize(selected.size());
  std::vector<std::exception_ptr> failures(selected.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < selected.size(); i = next++) {
      try {
        run.traces[i] = run_query(index, backend, captioner, *selected[i], max_k, options.protocol);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.permits, 1, std::max<std::size_t>(1, selected.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  std::vector<double> all_recalls;
  for (Direction d : {Direction::kI2T, Direction::kT2I}) {
    DirectionRecall dr;
    dr.direction = d;
    std::map<std::size_t, std::size_t> hits;
    for (const auto& trace : run.traces) {
      if (trace.direction != d) continue;
      ++dr.query_count;
      for (std::size_t k : ks) {
        if (trace.target_rank != 0 && trace.target_rank <= k) ++hits[k];
      }
    }
    if (dr.query_count == 0) continue;
    for (std::size_t k : ks) {
      dr.recall_percent[k] =
          round2(100.0 * static_cast<double>(hits[k]) / static_cast<double>(dr.query_count));
      all_recalls.push_back(dr.recall_percent[k]);
    }
    run.report.query_count += dr.query_count;
    run.report.directions.push_back(std::move(dr));
  }
  run.report.mean_recall = all_recalls.empty() ? 0.0 : mean_recall(all_recalls);

  const auto& prov = index.provenance();
  run.report.fingerprint = {
      {"corpus_sha256", prov.is_object() ? prov.value("corpus_sha256", "") : ""},
      {"backend_id", backend.descriptor().backend_id},
      {"dim", backend.descriptor().dim},
      {"captioner", captioner ? captioner->captioner_id() : ""},
      {"prompt_sha256", options.prompt_sha256},
      {"protocol", std::string(to_string(options.protocol))},
      {"ks", ks},
      {"tool_version", CAPSEARCH_VERSION}};
  return run;
}

json to_json(const EvalReport& report) {
  json dirs = json::object();
  for (const auto& dr : report.directions) {
    json recalls = json::object();
    for (const auto& [k, v] : dr.recall_percent) recalls["recall@" + std::to_string(k)] = v;
    dirs[std::string(to_string(dr.direction))] = {{"queries", dr.query_count},
                                                  {"recall", recalls}};
  }
  return {{"directions", dirs},
          {"mR", report.mean_recall},
          {"query_count", report.query_count},
          {"fingerprint", report.fingerprint}};
}

json to_json(const QueryTrace& trace) {
  return {{"query_id", trace.query_id},
          {"direction", std::string(to_string(trace.direction))},
          {"query", trace.query},
          {"generated_query_text", trace.generated_query_text ? json(*trace.generated_query_text)
                                                              : json(nullptr)},
          {"target_image_id", trace.target_image_id},
          {"target_rank", trace.target_rank == 0 ? json(nullptr) : json(trace.target_rank)},
          {"top_ids", trace.top_ids},
          {"elapsed_ms", trace.elapsed_ms}};
}

std::string render_table(const EvalReport& report, std::string_view method) {
  std::set<std::size_t> ks;
  for (const auto& dr : report.directions) {
    for (const auto& [k, v] : dr.recall_percent) ks.insert(k);
  }
  const std::size_t col = 10;
  const std::size_t method_w = std::max<std::size_t>(8, method.size() + 2);
  const std::size_t group_w = col * ks.size();

  std::string out;
  out += pad("Method", method_w, false) + "| " + pad("image_to_text", group_w, false) + " | " +
         pad("text_to_image", group_w, false) + " | mR\n";
  std::string sub = pad("", method_w, false) + "| ";
  for (int g = 0; g < 2; ++g) {
    for (std::size_t k : ks) sub += pad("recall@" + std::to_string(k), col, true);
    sub += " | ";
  }
  sub.erase(sub.find_last_not_of(' ') + 1);
  out += sub + "\n";
  out += std::string(out.find('\n'), '-') + "\n";

  std::string row = pad(std::string(method), method_w, false) + "| ";
  for (Direction d : {Direction::kI2T, Direction::kT2I}) {
    const DirectionRecall* dr = report.find(d);
    for (std::size_t k : ks) {
      std::string cell = "-";
      if (dr) {
        auto it = dr->recall_percent.find(k);
        if (it != dr->recall_percent.end()) cell = format2(it->second);
      }
      row += pad(cell, col, true);
    }
    row += " | ";
  }
  row += format2(report.mean_recall);
  out += row + "\n";
  return out;
}

}  // namespace capsearch
