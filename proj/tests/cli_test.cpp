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
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kCli = CAPSEARCH_CLI_PATH;
const std::string kData = CAPSEARCH_TEST_DATA_DIR;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("capsearch_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args, const std::string& env = "") {
    const auto err_path = dir_ / "stderr.txt";
    const std::string cmd = env + " " + quote(kCli) + " " + args + " 2>" + quote(err_path.string());
    CliResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_path);
    return r;
  }

  std::string work() const { return "--workdir " + quote((dir_ / "art").string()); }
  std::string corpus() const { return quote(kData + "/fixture_corpus.jsonl"); }

  fs::path dir_;
};

TEST_F(CliTest, IngestValidFile) {
  const auto r = run("ingest " + work() + " --corpus " + corpus());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("6 records; 0 dropped; 0 duplicates removed"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "art" / "corpus.jsonl"));
  const auto diag = json::parse(slurp(dir_ / "art" / "corpus.jsonl.diagnostics.json"));
  EXPECT_EQ(diag["records"], 6);
  EXPECT_EQ(diag["corpus_sha256"].get<std::string>().size(), 64u);
}

TEST_F(CliTest, IngestLenientDropsMalformedLine) {
  const auto r = run("ingest " + work() + " --corpus " + quote(kData + "/fixture_corpus_malformed.jsonl"));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1 dropped"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("line 4"), std::string::npos) << r.err;
}

TEST_F(CliTest, IngestStrictRejects) {
  const auto r = run("ingest --strict " + work() + " --corpus " + quote(kData + "/fixture_corpus_malformed.jsonl"));
  EXPECT_EQ(r.code, 2);
  const auto err = json::parse(r.err);
  EXPECT_EQ(err["error"], "MalformedRecord");
  EXPECT_EQ(err["line"], 4);
  EXPECT_FALSE(fs::exists(dir_ / "art" / "corpus.jsonl"));
}

TEST_F(CliTest, IngestRemovesDuplicates) {
  const auto text = slurp(kData + "/fixture_corpus.jsonl");
  // same content under a new id
  auto line = text.substr(text.find('\n') + 1);
  line = line.substr(0, line.find('\n'));
  const auto pos = line.find("rsitmd_airport_12");
  line.replace(pos, 17, "rsitmd_airport_99");
  std::ofstream(dir_ / "dup.jsonl") << text << line << "\n";
  const auto r = run("ingest " + work() + " --corpus " + quote((dir_ / "dup.jsonl").string()));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("6 records; 0 dropped; 1 duplicates removed"), std::string::npos) << r.out;
}

TEST_F(CliTest, IngestIsIdempotent) {
  ASSERT_EQ(run("ingest " + work() + " --corpus " + corpus()).code, 0);
  const auto first = slurp(dir_ / "art" / "corpus.jsonl");
  const auto again = "ingest " + work() + " --corpus " + quote((dir_ / "art" / "corpus.jsonl").string()) +
                     " --output " + quote((dir_ / "second.jsonl").string());
  ASSERT_EQ(run(again).code, 0);
  EXPECT_EQ(slurp(dir_ / "second.jsonl"), first);
}

TEST_F(CliTest, StatsLayout) {
  ASSERT_EQ(run("ingest " + work() + " --corpus " + corpus()).code, 0);
  const auto r = run("stats " + work());
  EXPECT_EQ(r.code, 0) << r.err;
  const char* rows[] = {"Total Images: 6",
                        "Total Caption Sets: 30",
                        "Caption Sets per Image: 5.00",
                        "Vocabulary Size (Unique Words):",
                        "Avg. Relations per Image:",
                        "Avg. Entities per Image:",
                        "Total Caption Sentences:",
                        "Avg. Sentences per Caption:",
                        "Avg. Caption Length (words):"};
  std::size_t at = 0;
  for (const char* row : rows) {
    const auto found = r.out.find(row, at);
    ASSERT_NE(found, std::string::npos) << row << "\n" << r.out;
    at = found;
  }
}

TEST_F(CliTest, StatsFourImagesAndEmpty) {
  const auto text = slurp(kData + "/fixture_corpus.jsonl");
  std::istringstream in(text);
  std::string line, four;
  for (int i = 0; i < 5 && std::getline(in, line); ++i) four += line + "\n";
  std::ofstream(dir_ / "four.jsonl") << four;
  auto r = run("stats --input " + quote((dir_ / "four.jsonl").string()));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Total Caption Sets: 20\n"), std::string::npos) << r.out;

  std::ofstream(dir_ / "empty.jsonl") << "";
  r = run("stats --input " + quote((dir_ / "empty.jsonl").string()));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Total Images: 0\n"), std::string::npos);
  EXPECT_NE(r.out.find("Caption Sets per Image: 0.00\n"), std::string::npos);
  EXPECT_NE(r.out.find("Avg. Caption Length (words): 0.00\n"), std::string::npos);
}

TEST_F(CliTest, StatsMissingCorpus) {
  const auto r = run("stats " + work());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["error"], "MissingPrerequisite");
}

TEST_F(CliTest, FullChainOnFixture) {
  ASSERT_EQ(run("ingest " + work() + " --corpus " + corpus()).code, 0);
  auto r = run("index " + work() + " --permits 2");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("indexed 6 images (30 vectors, dim 256, backend local-hash-v1)"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "art" / "index.bin.meta.json"));

  r = run("query --mode t2i --k 5 " + work() + " " + quote("boats moored along a pier"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 5u);
  EXPECT_EQ(r.out.rfind("1\trsitmd_harbor_03\t", 0), 0u) << r.out;

  const std::string caps = "--captions " + quote(kData + "/fixture_captions.json");
  r = run("query --mode i2t --json " + caps + " " + work() + " images/rsitmd_bridge_21.jpg");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto outcome = json::parse(r.out);
  EXPECT_EQ(outcome["results"][0]["image_id"], "rsitmd_bridge_21");
  EXPECT_FALSE(outcome["generated_query_text"].is_null());

  r = run("eval --direction both " + caps + " --ground-truth " + quote(kData + "/fixture_gt.jsonl") + " " + work());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = json::parse(slurp(dir_ / "art" / "report.json"));
  EXPECT_EQ(report["mR"], 100.0);
  EXPECT_NE(r.out.find("100.00"), std::string::npos);
  EXPECT_EQ(slurp(dir_ / "art" / "table.txt"), r.out);
  EXPECT_EQ(count_lines(slurp(dir_ / "art" / "trace.jsonl")), 36u);

  // same inputs, same artifacts
  const auto index_bytes = slurp(dir_ / "art" / "index.bin");
  const auto report_bytes = slurp(dir_ / "art" / "report.json");
  ASSERT_EQ(run("index " + work()).code, 0);
  ASSERT_EQ(run("eval " + caps + " --ground-truth " + quote(kData + "/fixture_gt.jsonl") + " " + work()).code, 0);
  EXPECT_EQ(slurp(dir_ / "art" / "index.bin"), index_bytes);
  EXPECT_EQ(slurp(dir_ / "art" / "report.json"), report_bytes);
}

TEST_F(CliTest, EvalSingleDirection) {
  ASSERT_EQ(run("ingest " + work() + " --corpus " + corpus()).code, 0);
  ASSERT_EQ(run("index " + work()).code, 0);
  const auto r = run("eval --direction t2i --ks 1,3 --ground-truth " + quote(kData + "/fixture_gt.jsonl") + " " + work());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = json::parse(slurp(dir_ / "art" / "report.json"));
  EXPECT_FALSE(report["directions"].contains("i2t"));
  EXPECT_EQ(report["directions"]["t2i"]["recall"]["recall@3"], 100.0);
  // i2t without a captioner
  const auto missing = run("eval --direction i2t --ground-truth " + quote(kData + "/fixture_gt.jsonl") + " " + work());
  EXPECT_EQ(missing.code, 2);
  EXPECT_EQ(json::parse(missing.err)["error"], "MissingCaptioner");
}

TEST_F(CliTest, EvalWithoutIndex) {
  const auto r = run("eval --ground-truth " + quote(kData + "/fixture_gt.jsonl") + " " + work());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["error"], "MissingPrerequisite");
}

TEST_F(CliTest, QueryWithoutIndex) {
  EXPECT_EQ(run("query --mode t2i " + work() + " runway").code, 2);
}

TEST_F(CliTest, ConfigAndFlagPrecedence) {
  const json cfg = {{"workdir", (dir_ / "art").string()},
                    {"corpus", kData + "/fixture_corpus.jsonl"},
                    {"dim", 64},
                    {"k", 2}};
  std::ofstream(dir_ / "cfg.json") << cfg.dump();
  const std::string c = "--config " + quote((dir_ / "cfg.json").string());
  ASSERT_EQ(run("ingest " + c).code, 0);
  auto r = run("index " + c);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("dim 64"), std::string::npos) << r.out;
  // the config dim of 64 loses to the flag
  r = run("index " + c + " --dim 32 --output " + quote((dir_ / "d32.idx").string()));
  EXPECT_NE(r.out.find("dim 32"), std::string::npos) << r.out;

  r = run("query --mode t2i " + c + " runway");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 2u);
  r = run("query --mode t2i --k 4 " + c + " runway");
  EXPECT_EQ(count_lines(r.out), 4u);
  // query with a backend that does not match the index
  r = run("query --mode t2i --dim 128 " + c + " runway");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["error"], "BackendMismatch");
}

TEST_F(CliTest, RemoteBackendFailureExitsThree) {
  ASSERT_EQ(run("ingest " + work() + " --corpus " + corpus()).code, 0);
  // nothing listens on port 9; connection failures are retried, then reported
  const json cfg = {{"backend", "remote"},
                    {"embedding_service",
                     {{"base_url", "http://127.0.0.1:9/v1"},
                      {"model_name", "m"},
                      {"api_key_env", "CAPSEARCH_CLI_TEST_KEY"},
                      {"dim", 8},
                      {"max_retries", 1},
                      {"backoff_base", 0.01},
                      {"timeout", 1}}}};
  std::ofstream(dir_ / "remote.json") << cfg.dump();
  const auto r = run("index --config " + quote((dir_ / "remote.json").string()) + " " + work(),
                     "CAPSEARCH_CLI_TEST_KEY=sk-cli-secret");
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_EQ(r.err.find("sk-cli-secret"), std::string::npos);
  // without the variable the credential is missing: an auth failure
  EXPECT_EQ(run("index --config " + quote((dir_ / "remote.json").string()) + " " + work()).code, 3);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("query --mode sideways x").code, 2);
  EXPECT_EQ(run("--version").code, 0);
}

}  // namespace
