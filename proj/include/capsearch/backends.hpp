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

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capsearch/embedding.hpp"

namespace capsearch {

// Endpoint description for an embeddings or captioning service. The key
// itself is never stored: api_key_env names the variable that holds it.
struct RemoteServiceConfig {
  std::string base_url;
  std::string model_name;
  std::string api_key_env = "CAPSEARCH_API_KEY";
  std::size_t max_batch = 128;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double backoff_base_seconds = 0.5;
  double backoff_factor = 2.0;
  std::size_t permits = 1;  // concurrent in-flight requests

  // Embeddings schema. dim is required for embedding backends.
  std::size_t dim = 0;
  std::string embeddings_path = "/embeddings";
  std::string input_field = "input";
  std::string data_field = "data";
  std::string embedding_field = "embedding";

  // Captioning (chat-completions schema).
  std::string caption_path = "/chat/completions";
  double temperature = 0.0;
  int max_tokens = 300;

  void validate() const;
  static RemoteServiceConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline constexpr std::string_view kDefaultCaptionPrompt =
    "Describe this remote sensing image in one paragraph. Name the main "
    "objects, their counts and colours, and where they are relative to each "
    "other.";

// Content-addressed payload store: <root>/<backend_id>/<hash[0:2]>/<hash>.
// Writes go to a temporary file first and are renamed into place, so
// concurrent writers of one key are harmless.
class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path root);

  std::optional<std::string> get(std::string_view backend_id,
                                 std::string_view key_hash) const;
  void put(std::string_view backend_id, std::string_view key_hash,
           std::string_view payload) const;
  std::filesystem::path path_for(std::string_view backend_id,
                                 std::string_view key_hash) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::multimap<std::string, std::string>;

// Blocking POST of a JSON body. Throws Timeout or ServiceError (status 0)
// when no response arrives.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& body,
                                 const HttpHeaders& headers) = 0;
};

// cpp-httplib client for base_url (http or https, optional path prefix).
std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   double timeout_seconds);

using LogSink = std::function<void(std::string_view)>;
using Sleeper = std::function<void(std::chrono::duration<double>)>;

struct ClientHooks {
  LogSink log;      // null: silent
  Sleeper sleep;    // null: std::this_thread::sleep_for
  std::shared_ptr<HttpTransport> transport;  // null: make_http_transport
};

class RemoteEmbeddingBackend final : public EmbeddingBackend {
 public:
  RemoteEmbeddingBackend(RemoteServiceConfig config,
                         std::optional<std::filesystem::path> cache_dir,
                         ClientHooks hooks = {});

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  std::vector<std::vector<double>> embed_raw(
      std::span<const std::string> texts) override;

  // HTTP requests issued so far, retries included.
  std::size_t request_count() const { return requests_.load(); }

 private:
  std::vector<std::vector<double>> request_chunk(std::span<const std::string> texts);

  RemoteServiceConfig config_;
  BackendDescriptor descriptor_;
  std::optional<DiskCache> cache_;
  ClientHooks hooks_;
  std::atomic<std::size_t> requests_{0};
};

// remote_embed: embeddings for texts through the remote service, normalised.
std::vector<EmbeddingVector> remote_embed(RemoteEmbeddingBackend& backend,
                                          std::span<const std::string> texts);

// Image -> query text.
class CaptionerBackend {
 public:
  virtual ~CaptionerBackend() = default;
  virtual std::string captioner_id() const = 0;
  virtual std::string caption(const std::filesystem::path& image) = 0;
};

class RemoteCaptioner final : public CaptionerBackend {
 public:
  RemoteCaptioner(RemoteServiceConfig config, std::string prompt,
                  std::optional<std::filesystem::path> cache_dir,
                  ClientHooks hooks = {});

  std::string captioner_id() const override;
  std::string caption(const std::filesystem::path& image) override;
  const std::string& prompt() const { return prompt_; }
  std::size_t request_count() const { return requests_.load(); }

 private:
  RemoteServiceConfig config_;
  std::string prompt_;
  std::optional<DiskCache> cache_;
  ClientHooks hooks_;
  std::atomic<std::size_t> requests_{0};
};

// Canned captions keyed by image id. A query path matches a key either
// verbatim or through its file stem ("imgs/img7.jpg" -> "img7").
class FixtureCaptioner final : public CaptionerBackend {
 public:
  explicit FixtureCaptioner(std::map<std::string, std::string> table);

  std::string captioner_id() const override { return "fixture"; }
  std::string caption(const std::filesystem::path& image) override;

 private:
  std::map<std::string, std::string> table_;
};

std::unique_ptr<CaptionerBackend> fixture_captioner(std::map<std::string, std::string> table);

}  // namespace capsearch
