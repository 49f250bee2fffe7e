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
// capsearch: ingest, stats, index, query and eval over the C API.
//
// Settings come from one JSON file (--config); any flag given on the command
// line wins over the file, and the file wins over built-in defaults.
//
// Exit codes: 0 success, 2 missing prerequisite / invalid input / strict
// violation, 3 embedding or captioning service failure after retries.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "capsearch/capsearch.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;
constexpr int kExitInternal = 1;

// Carries an exit code out of a subcommand with the JSON already printed.
struct Exit {
  int code;
};

int exit_code_for(cs_status s) {
  switch (s) {
    case CS_OK: return kExitOk;
    case CS_ERR_BACKEND_FAILURE:
    case CS_ERR_AUTH:
    case CS_ERR_RATE_LIMITED:
    case CS_ERR_SERVICE:
    case CS_ERR_TIMEOUT:
    case CS_ERR_EMPTY_CAPTION:
      return kExitBackend;
    case CS_ERR_INTERNAL: return kExitInternal;
    default: return kExitUsage;
  }
}

[[noreturn]] void fail(const std::string& error, const std::string& message, int code = kExitUsage) {
  std::cerr << json{{"error", error}, {"message", message}}.dump() << "\n";
  throw Exit{code};
}

void check(cs_status s) {
  if (s == CS_OK) return;
  std::cerr << cs_last_error_json() << "\n";
  throw Exit{exit_code_for(s)};
}

// Owns a char* handed out by the library.
struct CString {
  char* p = nullptr;
  ~CString() { cs_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};
using Corpus = Handle<cs_corpus, cs_corpus_free>;
using Backend = Handle<cs_backend, cs_backend_free>;
using Captioner = Handle<cs_captioner, cs_captioner_free>;
using Index = Handle<cs_index, cs_index_free>;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("FileNotFound", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  if (!out) fail("IoError", "cannot write " + path.string());
}

// Flag values as parsed; unset flags stay empty.
struct Flags {
  std::string config;
  std::string workdir;
  std::string backend;
  std::size_t dim = 0;
  std::string cache_dir;
  std::size_t permits = 0;
  std::string captioner;
  std::string captions;

  std::string corpus;
  bool strict = false;
  std::string input;
  std::string output;

  std::string mode;
  std::size_t k = 0;
  bool as_json = false;
  std::string payload;

  std::string direction;
  std::string ground_truth;
  std::vector<std::size_t> ks;
  std::string protocol;
};

class Settings {
 public:
  Settings(const Flags& flags, const CLI::App& app) : flags_(flags), app_(app) {
    if (!flags.config.empty()) {
      try {
        config_ = json::parse(read_file(flags.config));
      } catch (const json::exception& e) {
        fail("InvalidArgument", "config " + flags.config + ": " + e.what());
      }
      if (!config_.is_object()) fail("InvalidArgument", "config must be a JSON object");
    } else {
      config_ = json::object();
    }
  }

  // flag > config > default
  template <typename T>
  T get(const std::string& flag, const std::string& key, const T& flag_value, const T& fallback) const {
    if (given(flag)) return flag_value;
    if (config_.contains(key) && !config_[key].is_null()) {
      try {
        return config_[key].get<T>();
      } catch (const json::exception&) {
        fail("InvalidArgument", "config key '" + key + "' has the wrong type");
      }
    }
    return fallback;
  }

  const json& config() const { return config_; }

  fs::path workdir() const { return get<std::string>("--workdir", "workdir", flags_.workdir, "artifacts"); }
  fs::path normalized_corpus() const { return workdir() / "corpus.jsonl"; }
  fs::path index_path() const { return workdir() / "index.bin"; }
  std::size_t permits() const { return get<std::size_t>("--permits", "permits", flags_.permits, 1); }
  std::string cache_dir() const { return get<std::string>("--cache-dir", "cache_dir", flags_.cache_dir, ""); }

 private:
  bool given(const std::string& flag) const {
    for (const CLI::App* a = &app_; a; ) {
      if (auto* opt = a->get_option_no_throw(flag); opt && opt->count() > 0) return true;
      const CLI::App* next = nullptr;
      for (const auto* sub : a->get_subcommands()) next = sub;
      a = next;
    }
    return false;
  }

  const Flags& flags_;
  const CLI::App& app_;
  json config_;
};

void open_backend(const Settings& s, const Flags& f, Backend& out) {
  const auto kind = s.get<std::string>("--backend", "backend", f.backend, "local");
  if (kind == "local") {
    check(cs_backend_local_new(s.get<std::size_t>("--dim", "dim", f.dim, 256), &out.p));
  } else if (kind == "remote") {
    if (!s.config().contains("embedding_service")) {
      fail("InvalidArgument", "backend 'remote' needs an embedding_service block in the config");
    }
    json service = s.config()["embedding_service"];
    if (!service.contains("permits")) service["permits"] = s.permits();
    const auto cache = s.cache_dir();
    check(cs_backend_remote_new(service.dump().c_str(), cache.empty() ? nullptr : cache.c_str(), &out.p));
  } else {
    fail("InvalidArgument", "unknown backend '" + kind + "'");
  }
}

// Leaves out.p null when no captioner is configured.
void open_captioner(const Settings& s, const Flags& f, Captioner& out) {
  const auto captions = s.get<std::string>("--captions", "captions", f.captions, "");
  const bool has_service = s.config().contains("captioner_service");
  auto kind = s.get<std::string>("--captioner", "captioner", f.captioner, "");
  if (kind.empty()) kind = !captions.empty() ? "fixture" : has_service ? "remote" : "none";
  if (kind == "none") return;
  if (kind == "fixture") {
    if (captions.empty()) fail("MissingCaptioner", "fixture captioner needs a captions file");
    check(cs_captioner_fixture_new(read_file(captions).c_str(), &out.p));
  } else if (kind == "remote") {
    if (!has_service) fail("InvalidArgument", "captioner 'remote' needs a captioner_service block in the config");
    const auto prompt = s.get<std::string>("", "prompt", "", "");
    const auto cache = s.cache_dir();
    check(cs_captioner_remote_new(s.config()["captioner_service"].dump().c_str(),
                                  prompt.empty() ? nullptr : prompt.c_str(),
                                  cache.empty() ? nullptr : cache.c_str(), &out.p));
  } else {
    fail("InvalidArgument", "unknown captioner '" + kind + "'");
  }
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) fail("MissingPrerequisite", what + " not found: " + path.string());
}

void load_index(const Settings& s, const Flags& f, Index& out) {
  const fs::path path = f.input.empty() ? s.index_path() : fs::path(f.input);
  require_file(path, "index");
  check(cs_index_load(path.c_str(), &out.p));
}

void cmd_ingest(const Settings& s, const Flags& f) {
  const auto input = s.get<std::string>("--corpus", "corpus", f.corpus, "");
  if (input.empty()) fail("MissingPrerequisite", "no corpus given (--corpus or config 'corpus')");
  require_file(input, "corpus");
  const bool strict = s.get<bool>("--strict", "strict", f.strict, false);

  Corpus corpus;
  CString diags;
  check(cs_corpus_parse(input.c_str(), strict ? 1 : 0, &corpus.p, &diags.p));
  std::size_t removed = 0;
  check(cs_corpus_dedup(corpus.p, &removed));
  const fs::path out = f.output.empty() ? s.normalized_corpus() : fs::path(f.output);
  fs::create_directories(out.has_parent_path() ? out.parent_path() : fs::path("."));
  check(cs_corpus_write(corpus.p, out.c_str()));
  CString fp;
  check(cs_corpus_fingerprint(corpus.p, &fp.p));

  const json dropped = json::parse(diags.str());
  const json summary = {{"input", input},
                        {"output", out.string()},
                        {"records", cs_corpus_size(corpus.p)},
                        {"dropped", dropped},
                        {"duplicates_removed", removed},
                        {"corpus_sha256", fp.str()},
                        {"tool_version", cs_version()}};
  write_file(out.string() + ".diagnostics.json", summary.dump(2) + "\n");
  std::printf("%zu records; %zu dropped; %zu duplicates removed\n", cs_corpus_size(corpus.p), dropped.size(),
              removed);
  for (const auto& d : dropped) {
    std::fprintf(stderr, "line %d: %s\n", d["line"].get<int>(), d["reason"].get<std::string>().c_str());
  }
}

void cmd_stats(const Settings& s, const Flags& f) {
  const fs::path path = f.input.empty() ? s.normalized_corpus() : fs::path(f.input);
  require_file(path, "corpus");
  Corpus corpus;
  check(cs_corpus_parse(path.c_str(), 1, &corpus.p, nullptr));
  cs_corpus_stats st{};
  check(cs_corpus_stats_compute(corpus.p, &st));
  const double ratio =
      st.total_images ? static_cast<double>(st.total_caption_sets) / static_cast<double>(st.total_images) : 0.0;
  std::printf("Total Images: %llu\n", static_cast<unsigned long long>(st.total_images));
  std::printf("Total Caption Sets: %llu\n", static_cast<unsigned long long>(st.total_caption_sets));
  std::printf("Caption Sets per Image: %.2f\n", ratio);
  std::printf("Vocabulary Size (Unique Words): %llu\n", static_cast<unsigned long long>(st.vocabulary_size));
  std::printf("Avg. Relations per Image: %.2f\n", st.avg_relations_per_image);
  std::printf("Avg. Entities per Image: %.2f\n", st.avg_entities_per_image);
  std::printf("Total Caption Sentences: %llu\n", static_cast<unsigned long long>(st.total_sentences));
  std::printf("Avg. Sentences per Caption: %.2f\n", st.avg_sentences_per_caption);
  std::printf("Avg. Caption Length (words): %.2f\n", st.avg_caption_length_words);
}

void cmd_index(const Settings& s, const Flags& f) {
  const fs::path input = f.input.empty() ? s.normalized_corpus() : fs::path(f.input);
  require_file(input, "corpus");
  Corpus corpus;
  check(cs_corpus_parse(input.c_str(), 1, &corpus.p, nullptr));
  Backend backend;
  open_backend(s, f, backend);
  Index index;
  check(cs_index_build(corpus.p, backend.p, s.permits(), &index.p));
  const fs::path out = f.output.empty() ? s.index_path() : fs::path(f.output);
  check(cs_index_save(index.p, out.c_str()));
  std::printf("indexed %zu images (%zu vectors, dim %zu, backend %s) -> %s\n", cs_index_size(index.p),
              cs_index_size(index.p) * 5, cs_index_dim(index.p), cs_index_backend_id(index.p), out.c_str());
}

void cmd_query(const Settings& s, const Flags& f) {
  const auto k = s.get<std::size_t>("--k", "k", f.k, 10);
  Index index;
  load_index(s, f, index);
  Backend backend;
  open_backend(s, f, backend);
  CString outcome;
  if (f.mode == "t2i") {
    check(cs_query_t2i(index.p, backend.p, f.payload.c_str(), k, &outcome.p));
  } else {
    Captioner captioner;
    open_captioner(s, f, captioner);
    if (!captioner.p) fail("MissingCaptioner", "image queries need a captioner (--captions or config)");
    check(cs_query_i2t(index.p, backend.p, captioner.p, f.payload.c_str(), k, &outcome.p));
  }
  const json j = json::parse(outcome.str());
  if (f.as_json) {
    std::printf("%s\n", j.dump().c_str());
    return;
  }
  if (!j["generated_query_text"].is_null()) {
    std::fprintf(stderr, "caption: %s\n", j["generated_query_text"].get<std::string>().c_str());
  }
  for (const auto& r : j["results"]) {
    std::printf("%d\t%s\t%.6f\tv%d\n", r["rank"].get<int>(), r["image_id"].get<std::string>().c_str(),
                r["score"].get<double>(), r["best_variant_id"].get<int>());
  }
}

void cmd_eval(const Settings& s, const Flags& f) {
  const auto direction = s.get<std::string>("--direction", "direction", f.direction, "both");
  const auto gt = s.get<std::string>("--ground-truth", "ground_truth", f.ground_truth, "");
  const auto ks = s.get<std::vector<std::size_t>>("--ks", "ks", f.ks, {1, 5, 10});
  const auto protocol = s.get<std::string>("--protocol", "protocol", f.protocol, "image");

  Index index;
  load_index(s, f, index);
  if (gt.empty()) fail("MissingPrerequisite", "no ground truth given (--ground-truth or config 'ground_truth')");
  require_file(gt, "ground truth");
  if (protocol != "image" && protocol != "caption") fail("InvalidArgument", "unknown protocol '" + protocol + "'");

  Backend backend;
  open_backend(s, f, backend);
  Captioner captioner;
  if (direction != "t2i") open_captioner(s, f, captioner);

  cs_eval_options opts{};
  opts.ks = ks.data();
  opts.ks_len = ks.size();
  opts.directions = direction == "t2i" ? CS_DIRECTION_T2I : direction == "i2t" ? CS_DIRECTION_I2T : 0;
  opts.protocol = protocol == "caption" ? CS_PROTOCOL_CAPTION : CS_PROTOCOL_IMAGE;
  opts.permits = s.permits();

  CString report, table, trace;
  check(cs_eval_run(index.p, backend.p, captioner.p, gt.c_str(), &opts, &report.p, &table.p, &trace.p));
  const fs::path out = f.output.empty() ? s.workdir() : fs::path(f.output);
  write_file(out / "report.json", json::parse(report.str()).dump(2) + "\n");
  write_file(out / "table.txt", table.str());
  write_file(out / "trace.jsonl", trace.str());
  std::fputs(table.str().c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capsearch: caption-based image retrieval"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cs_version()));
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--workdir", f.workdir, "artifact directory (default: artifacts)");
    sub->add_option("--backend", f.backend, "embedding backend")->check(CLI::IsMember({"local", "remote"}));
    sub->add_option("--dim", f.dim, "local backend dimension (default: 256)");
    sub->add_option("--cache-dir", f.cache_dir, "disk cache for remote calls");
    sub->add_option("--permits", f.permits, "parallelism bound (default: 1)")->check(CLI::PositiveNumber);
  };

  auto* ingest = app.add_subcommand("ingest", "parse, validate and de-duplicate a corpus");
  common(ingest);
  ingest->add_option("--corpus", f.corpus, "input corpus (JSON lines)");
  ingest->add_flag("--strict", f.strict, "reject the whole file on the first bad record");
  ingest->add_option("--output", f.output, "normalized corpus path (default: <workdir>/corpus.jsonl)");

  auto* stats = app.add_subcommand("stats", "print corpus statistics");
  common(stats);
  stats->add_option("--input", f.input, "corpus (default: <workdir>/corpus.jsonl)");

  auto* index = app.add_subcommand("index", "embed every caption variant and write the index");
  common(index);
  index->add_option("--input", f.input, "corpus (default: <workdir>/corpus.jsonl)");
  index->add_option("--output", f.output, "index path (default: <workdir>/index.bin)");

  auto* query = app.add_subcommand("query", "run one text or image query");
  common(query);
  query->add_option("--mode", f.mode, "t2i or i2t")->required()->check(CLI::IsMember({"t2i", "i2t"}));
  query->add_option("--k", f.k, "results to return (default: 10)")->check(CLI::PositiveNumber);
  query->add_option("--index", f.input, "index path (default: <workdir>/index.bin)");
  query->add_option("--captioner", f.captioner, "fixture, remote or none")
      ->check(CLI::IsMember({"fixture", "remote", "none"}));
  query->add_option("--captions", f.captions, "fixture captions (JSON object id -> caption)");
  query->add_flag("--json", f.as_json, "print the outcome as JSON");
  query->add_option("payload", f.payload, "query text (t2i) or image path (i2t)")->required();

  auto* eval = app.add_subcommand("eval", "score a ground-truth file");
  common(eval);
  eval->add_option("--direction", f.direction, "t2i, i2t or both (default: both)")
      ->check(CLI::IsMember({"t2i", "i2t", "both"}));
  eval->add_option("--ground-truth", f.ground_truth, "ground-truth queries (JSON lines)");
  eval->add_option("--index", f.input, "index path (default: <workdir>/index.bin)");
  eval->add_option("--ks", f.ks, "recall cut-offs (default: 1 5 10)")->delimiter(',');
  eval->add_option("--protocol", f.protocol, "I2T protocol: image or caption (default: image)")
      ->check(CLI::IsMember({"image", "caption"}));
  eval->add_option("--captioner", f.captioner, "fixture, remote or none")
      ->check(CLI::IsMember({"fixture", "remote", "none"}));
  eval->add_option("--captions", f.captions, "fixture captions (JSON object id -> caption)");
  eval->add_option("--output", f.output, "directory for report.json, table.txt, trace.jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    Settings settings(f, app);
    if (*ingest) cmd_ingest(settings, f);
    else if (*stats) cmd_stats(settings, f);
    else if (*index) cmd_index(settings, f);
    else if (*query) cmd_query(settings, f);
    else if (*eval) cmd_eval(settings, f);
  } catch (const Exit& e) {
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}
