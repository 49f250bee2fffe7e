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
#include "capsearch/backends.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "capsearch/error.hpp"
#include "capsearch/hashing.hpp"
#include "capsearch/text.hpp"

namespace capsearch {
namespace {

using nlohmann::json;

std::string sanitize_component(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '_';
    if (!ok) c = '_';
  }
  return out;
}

std::string redact(std::string message, const std::string& secret) {
  if (secret.empty()) return message;
  std::size_t pos = 0;
  while ((pos = message.find(secret, pos)) != std::string::npos) {
    message.replace(pos, secret.size(), "<redacted>");
    pos += 10;
  }
  return message;
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

std::string read_api_key(const RemoteServiceConfig& config) {
  const char* value = std::getenv(config.api_key_env.c_str());
  if (value == nullptr || *value == '\0') {
    throw Error(ErrorCode::kAuthError,
                "credential variable " + config.api_key_env + " is not set");
  }
  return value;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kFileNotFound, "file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Jitter in [0, 0.25) derived from the request itself; no entropy consumed.
double deterministic_jitter(std::string_view body, int attempt) {
  const std::uint64_t h =
      fnv1a64(body) ^ (static_cast<std::uint64_t>(attempt + 1) * kFnvPrime);
  return 0.25 * static_cast<double>(h % 10007) / 10007.0;
}

struct RequestContext {
  const RemoteServiceConfig& config;
  const ClientHooks& hooks;
  std::atomic<std::size_t>& requests;
  HttpTransport& transport;
  std::string api_key;
};

void log_line(const ClientHooks& hooks, const std::string& key, const std::string& line) {
  if (hooks.log) hooks.log(redact(line, key));
}

// POST with exponential backoff on 429, 5xx, timeouts and transport errors.
// 401/403 and other 4xx fail immediately.
HttpResponse post_with_retries(RequestContext& ctx, const std::string& path,
                               const std::string& body) {
  const HttpHeaders headers{{"Authorization", "Bearer " + ctx.api_key},
                            {"Content-Type", "application/json"}};
  const int attempts = ctx.config.max_retries + 1;
  for (int attempt = 0;; ++attempt) {
    const std::string tag = "POST " + path + " attempt " + std::to_string(attempt + 1) +
                            "/" + std::to_string(attempts) + " -> ";
    ErrorCode failure = ErrorCode::kServiceError;
    std::string detail;
    std::optional<HttpResponse> res;
    ++ctx.requests;
    try {
      res = ctx.transport.post_json(path, body, headers);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTimeout && e.code() != ErrorCode::kServiceError) throw;
      failure = e.code();
      detail = e.what();
      log_line(ctx.hooks, ctx.api_key, tag + detail);
    }
    if (res) {
      log_line(ctx.hooks, ctx.api_key, tag + std::to_string(res->status));
      if (res->status >= 200 && res->status < 300) return std::move(*res);
      const std::string status_detail =
          "status " + std::to_string(res->status) + ": " + excerpt(res->body);
      if (res->status == 401 || res->status == 403) {
        throw Error(ErrorCode::kAuthError,
                    redact("authentication rejected, " + status_detail, ctx.api_key));
      }
      if (res->status == 429) {
        failure = ErrorCode::kRateLimited;
        detail = "rate limited after " + std::to_string(attempt + 1) + " attempts";
      } else if (res->status >= 500) {
        detail = "service error, " + status_detail;
      } else {
        throw Error(ErrorCode::kServiceError,
                    redact("service error, " + status_detail, ctx.api_key));
      }
    }
    if (attempt + 1 >= attempts) {
      throw Error(failure, redact(detail, ctx.api_key));
    }
    const double delay = ctx.config.backoff_base_seconds *
                         std::pow(ctx.config.backoff_factor, attempt) *
                         (1.0 + deterministic_jitter(body, attempt));
    log_line(ctx.hooks, ctx.api_key, "retrying in " + std::to_string(delay) + " s");
    if (ctx.hooks.sleep) {
      ctx.hooks.sleep(std::chrono::duration<double>(delay));
    } else {
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
  }
}

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(const std::string& base_url, double timeout_seconds) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "base_url needs a scheme: " + base_url);
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    origin_ = base_url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    const auto whole = std::chrono::duration<double>(timeout_seconds);
    timeout_ = std::chrono::duration_cast<std::chrono::microseconds>(whole);
  }

  HttpResponse post_json(const std::string& path, const std::string& body,
                         const HttpHeaders& headers) override {
    // One client per request keeps the transport usable from many threads.
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h(headers.begin(), headers.end());
    h.erase("Content-Type");
    auto res = client.Post(prefix_ + path, h, body, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
        throw Error(ErrorCode::kTimeout, "request timed out: " + httplib::to_string(err));
      }
      throw Error(ErrorCode::kServiceError, "transport error: " + httplib::to_string(err));
    }
    return {res->status, res->body};
  }

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::microseconds timeout_{};
};

std::shared_ptr<HttpTransport> transport_for(const ClientHooks& hooks,
                                             const RemoteServiceConfig& config) {
  if (hooks.transport) return hooks.transport;
  return make_http_transport(config.base_url, config.timeout_seconds);
}

}  // namespace

void RemoteServiceConfig::validate() const {
  if (base_url.empty()) throw Error(ErrorCode::kInvalidArgument, "base_url is required");
  if (model_name.empty()) throw Error(ErrorCode::kInvalidArgument, "model_name is required");
  if (api_key_env.empty()) throw Error(ErrorCode::kInvalidArgument, "api_key_env is required");
  if (max_batch < 1) throw Error(ErrorCode::kInvalidArgument, "max_batch must be >= 1");
  if (!(timeout_seconds > 0)) throw Error(ErrorCode::kInvalidArgument, "timeout must be > 0");
  if (max_retries < 0) throw Error(ErrorCode::kInvalidArgument, "max_retries must be >= 0");
  if (permits < 1) throw Error(ErrorCode::kInvalidArgument, "permits must be >= 1");
}

RemoteServiceConfig RemoteServiceConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "service config must be an object");
  if (j.contains("api_key")) {
    throw Error(ErrorCode::kInvalidArgument,
                "service config must not hold the key; set api_key_env instead");
  }
  RemoteServiceConfig c;
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.model_name = j.value("model_name", c.model_name);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.max_batch = j.value("max_batch", c.max_batch);
    c.timeout_seconds = j.value("timeout", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_base_seconds = j.value("backoff_base", c.backoff_base_seconds);
    c.backoff_factor = j.value("backoff_factor", c.backoff_factor);
    c.permits = j.value("permits", c.permits);
    c.dim = j.value("dim", c.dim);
    c.embeddings_path = j.value("embeddings_path", c.embeddings_path);
    c.input_field = j.value("input_field", c.input_field);
    c.data_field = j.value("data_field", c.data_field);
    c.embedding_field = j.value("embedding_field", c.embedding_field);
    c.caption_path = j.value("caption_path", c.caption_path);
    c.temperature = j.value("temperature", c.temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad service config: ") + e.what());
  }
  c.validate();
  return c;
}

json RemoteServiceConfig::to_json() const {
  return {{"base_url", base_url},
          {"model_name", model_name},
          {"api_key_env", api_key_env},
          {"max_batch", max_batch},
          {"timeout", timeout_seconds},
          {"max_retries", max_retries},
          {"backoff_base", backoff_base_seconds},
          {"backoff_factor", backoff_factor},
          {"permits", permits},
          {"dim", dim},
          {"embeddings_path", embeddings_path},
          {"input_field", input_field},
          {"data_field", data_field},
          {"embedding_field", embedding_field},
          {"caption_path", caption_path},
          {"temperature", temperature},
          {"max_tokens", max_tokens}};
}

DiskCache::DiskCache(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path DiskCache::path_for(std::string_view backend_id,
                                          std::string_view key_hash) const {
  return root_ / sanitize_component(backend_id) / std::string(key_hash.substr(0, 2)) /
         std::string(key_hash);
}

std::optional<std::string> DiskCache::get(std::string_view backend_id,
                                          std::string_view key_hash) const {
  const auto path = path_for(backend_id, key_hash);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void DiskCache::put(std::string_view backend_id, std::string_view key_hash,
                    std::string_view payload) const {
  static std::atomic<std::uint64_t> counter{0};
  const auto path = path_for(backend_id, key_hash);
  std::filesystem::create_directories(path.parent_path());
  const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(tid) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write cache file " + tmp.string());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error(ErrorCode::kIo, "cache write failed " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   double timeout_seconds) {
  return std::make_shared<HttplibTransport>(base_url, timeout_seconds);
}

RemoteEmbeddingBackend::RemoteEmbeddingBackend(
    RemoteServiceConfig config, std::optional<std::filesystem::path> cache_dir,
    ClientHooks hooks)
    : config_(std::move(config)), hooks_(std::move(hooks)) {
  config_.validate();
  if (config_.dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "remote embedding backend needs dim");
  }
  descriptor_ = {"remote:" + config_.model_name, config_.dim, true};
  if (cache_dir) cache_.emplace(*cache_dir);
  hooks_.transport = transport_for(hooks_, config_);
}

std::vector<std::vector<double>> RemoteEmbeddingBackend::request_chunk(
    std::span<const std::string> texts) {
  RequestContext ctx{config_, hooks_, requests_, *hooks_.transport, read_api_key(config_)};
  json request;
  request["model"] = config_.model_name;
  request[config_.input_field] = json(std::vector<std::string>(texts.begin(), texts.end()));
  const HttpResponse res = post_with_retries(ctx, config_.embeddings_path, request.dump());

  json body;
  try {
    body = json::parse(res.body);
  } catch (const json::exception&) {
    throw Error(ErrorCode::kServiceError, "embedding response is not JSON: " + excerpt(res.body));
  }
  const auto data_it = body.find(config_.data_field);
  if (data_it == body.end() || !data_it->is_array() || data_it->size() != texts.size()) {
    throw Error(ErrorCode::kServiceError,
                "embedding response lacks " + std::to_string(texts.size()) + " '" +
                    config_.data_field + "' items");
  }
  std::vector<std::vector<double>> out(texts.size());
  std::vector<bool> filled(texts.size(), false);
  for (std::size_t pos = 0; pos < data_it->size(); ++pos) {
    const json& item = (*data_it)[pos];
    const std::size_t idx = item.value("index", pos);
    const auto emb = item.find(config_.embedding_field);
    if (idx >= texts.size() || filled[idx] || emb == item.end() || !emb->is_array()) {
      throw Error(ErrorCode::kServiceError, "malformed embedding item at position " +
                                                std::to_string(pos));
    }
    if (emb->size() != config_.dim) {
      throw Error(ErrorCode::kServiceError,
                  "service returned dim " + std::to_string(emb->size()) + ", configured " +
                      std::to_string(config_.dim));
    }
    out[idx] = emb->get<std::vector<double>>();
    filled[idx] = true;
  }
  return out;
}

std::vector<std::vector<double>> RemoteEmbeddingBackend::embed_raw(
    std::span<const std::string> texts) {
  // Unique texts in first-seen order; repeated texts share one slot.
  std::vector<std::string> unique;
  std::vector<std::size_t> first_position;
  std::vector<std::size_t> slot_of(texts.size());
  std::unordered_map<std::string_view, std::size_t> slot_by_text;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto [it, inserted] = slot_by_text.try_emplace(texts[i], unique.size());
    if (inserted) {
      unique.push_back(texts[i]);
      first_position.push_back(i);
    }
    slot_of[i] = it->second;
  }

  std::vector<std::vector<double>> vectors(unique.size());
  std::vector<std::string> keys(unique.size());
  std::vector<std::size_t> misses;
  for (std::size_t s = 0; s < unique.size(); ++s) {
    keys[s] = sha256_hex(unique[s]);
    std::optional<std::string> hit;
    if (cache_) hit = cache_->get(descriptor_.backend_id, keys[s]);
    if (hit) {
      try {
        vectors[s] = json::parse(*hit).get<std::vector<double>>();
      } catch (const json::exception&) {
        hit.reset();
      }
    }
    if (!hit || vectors[s].size() != descriptor_.dim) misses.push_back(s);
  }

  const std::size_t chunk_count = (misses.size() + config_.max_batch - 1) / config_.max_batch;
  std::vector<std::exception_ptr> failures(chunk_count);
  std::atomic<std::size_t> next_chunk{0};
  auto worker = [&] {
    for (std::size_t c = next_chunk++; c < chunk_count; c = next_chunk++) {
      const std::size_t begin = c * config_.max_batch;
      const std::size_t end = std::min(misses.size(), begin + config_.max_batch);
      std::vector<std::string> batch;
      for (std::size_t m = begin; m < end; ++m) batch.push_back(unique[misses[m]]);
      try {
        auto got = request_chunk(batch);
        for (std::size_t m = begin; m < end; ++m) {
          const std::size_t s = misses[m];
          vectors[s] = std::move(got[m - begin]);
          if (cache_) cache_->put(descriptor_.backend_id, keys[s], json(vectors[s]).dump());
        }
      } catch (...) {
        failures[c] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(config_.permits, chunk_count);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t c = 0; c < chunk_count; ++c) {
    if (!failures[c]) continue;
    const std::size_t at = first_position[misses[c * config_.max_batch]];
    try {
      std::rethrow_exception(failures[c]);
    } catch (Error& e) {
      throw e.with_index(at);
    }
  }

  std::vector<std::vector<double>> out(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) out[i] = vectors[slot_of[i]];
  return out;
}

std::vector<EmbeddingVector> remote_embed(RemoteEmbeddingBackend& backend,
                                          std::span<const std::string> texts) {
  return embed_batch(backend, texts);
}

RemoteCaptioner::RemoteCaptioner(RemoteServiceConfig config, std::string prompt,
                                 std::optional<std::filesystem::path> cache_dir,
                                 ClientHooks hooks)
    : config_(std::move(config)), prompt_(std::move(prompt)), hooks_(std::move(hooks)) {
  config_.validate();
  if (text::is_blank(prompt_)) throw Error(ErrorCode::kInvalidArgument, "prompt is empty");
  if (cache_dir) cache_.emplace(*cache_dir);
  hooks_.transport = transport_for(hooks_, config_);
}

std::string RemoteCaptioner::captioner_id() const { return "caption:" + config_.model_name; }

std::string RemoteCaptioner::caption(const std::filesystem::path& image) {
  const std::string bytes = read_file_bytes(image);
  const std::string key = sha256_hex(sha256_hex(bytes) + ":" + sha256_hex(prompt_));
  if (cache_) {
    if (auto hit = cache_->get(captioner_id(), key)) return *hit;
  }

  std::string mime = "image/png";
  auto ext = image.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".jpg" || ext == ".jpeg") mime = "image/jpeg";
  else if (ext == ".tif" || ext == ".tiff") mime = "image/tiff";

  json request = {
      {"model", config_.model_name},
      {"temperature", config_.temperature},
      {"max_tokens", config_.max_tokens},
      {"messages",
       json::array({{{"role", "user"},
                     {"content",
                      json::array({{{"type", "text"}, {"text", prompt_}},
                                   {{"type", "image_url"},
                                    {"image_url",
                                     {{"url", "data:" + mime + ";base64," +
                                                  base64_encode(bytes)}}}}})}}})}};
  RequestContext ctx{config_, hooks_, requests_, *hooks_.transport, read_api_key(config_)};
  const HttpResponse res = post_with_retries(ctx, config_.caption_path, request.dump());

  std::string caption;
  try {
    const json body = json::parse(res.body);
    caption = body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kServiceError, "caption response malformed: " + excerpt(res.body));
  }
  caption = std::string(text::trim(caption));
  if (caption.empty()) throw Error(ErrorCode::kEmptyCaption, "service returned an empty caption");
  if (cache_) cache_->put(captioner_id(), key, caption);
  return caption;
}

FixtureCaptioner::FixtureCaptioner(std::map<std::string, std::string> table)
    : table_(std::move(table)) {
  if (table_.empty()) throw Error(ErrorCode::kInvalidArgument, "fixture table is empty");
}

std::string FixtureCaptioner::caption(const std::filesystem::path& image) {
  auto it = table_.find(image.string());
  if (it == table_.end()) it = table_.find(image.stem().string());
  if (it == table_.end()) {
    throw Error(ErrorCode::kUnknownImage, "no fixture caption for '" + image.string() + "'");
  }
  std::string caption(text::trim(it->second));
  if (caption.empty()) throw Error(ErrorCode::kEmptyCaption, "fixture caption is empty");
  return caption;
}

std::unique_ptr<CaptionerBackend> fixture_captioner(std::map<std::string, std::string> table) {
  return std::make_unique<FixtureCaptioner>(std::move(table));
}

}  // namespace capsearch
