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
#include "capsearch/index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "capsearch/error.hpp"
#include "capsearch/hashing.hpp"

namespace capsearch {
namespace {

constexpr char kMagic[4] = {'T', 'R', 'S', 'I'};
constexpr std::size_t kMaxDim = 1u << 20;

struct Candidate {
  double score;
  std::size_t ordinal;
  int variant_id;
};

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.ordinal != b.ordinal) return a.ordinal < b.ordinal;
  return a.variant_id < b.variant_id;
}

double l2_norm(std::span<const float> v) {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sum);
}

double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

class ByteWriter {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Error(ErrorCode::kCorruptIndex, "index file is truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".meta.json";
  return p;
}

}  // namespace

ScoredVariant max_over_variants(std::span<const double> sims) {
  ScoredVariant best{sims.empty() ? 0.0 : sims[0], 1};
  for (std::size_t v = 1; v < sims.size(); ++v) {
    if (sims[v] > best.score) best = {sims[v], static_cast<int>(v + 1)};
  }
  return best;
}

VectorIndex VectorIndex::from_vectors(std::string backend_id, std::size_t dim,
                                      std::vector<std::string> image_ids,
                                      std::vector<float> vectors) {
  if (dim == 0) throw Error(ErrorCode::kDimensionMismatch, "index dim must be positive");
  if (vectors.size() != image_ids.size() * kVariantsPerImage * dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "vector payload does not match 5 x dim floats per image");
  }
  VectorIndex index;
  index.backend_id_ = std::move(backend_id);
  index.dim_ = dim;
  index.ids_ = std::move(image_ids);
  index.data_ = std::move(vectors);
  index.norms_.resize(index.entry_count());
  for (std::size_t e = 0; e < index.entry_count(); ++e) {
    index.norms_[e] = l2_norm(std::span<const float>(index.data_).subspan(e * dim, dim));
  }
  for (std::size_t i = 0; i < index.ids_.size(); ++i) {
    if (!index.ordinal_by_id_.emplace(index.ids_[i], i).second) {
      throw Error(ErrorCode::kDuplicateImageId, "duplicate image_id '" + index.ids_[i] + "'");
    }
  }
  return index;
}

std::size_t VectorIndex::find(std::string_view image_id) const {
  auto it = ordinal_by_id_.find(std::string(image_id));
  return it == ordinal_by_id_.end() ? size() : it->second;
}

std::span<const float> VectorIndex::variant_vector(std::size_t ordinal, int variant_id) const {
  if (ordinal >= size() || variant_id < 1 || variant_id > kVariantsPerImage) {
    throw Error(ErrorCode::kInvalidArgument, "no such index entry");
  }
  const std::size_t entry = ordinal * kVariantsPerImage + static_cast<std::size_t>(variant_id - 1);
  return std::span<const float>(data_).subspan(entry * dim_, dim_);
}

double VectorIndex::similarity(std::span<const double> query, double query_norm,
                               std::size_t entry) const {
  const float* v = data_.data() + entry * dim_;
  double dot = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) dot += query[i] * static_cast<double>(v[i]);
  const double denom = query_norm * norms_[entry];
  if (denom == 0.0) return 0.0;
  return std::clamp(dot / denom, -1.0, 1.0);
}

ScoredVariant VectorIndex::score_block(std::span<const double> query, double query_norm,
                                       std::size_t ordinal) const {
  double sims[kVariantsPerImage];
  for (int v = 0; v < kVariantsPerImage; ++v) {
    sims[v] = similarity(query, query_norm, ordinal * kVariantsPerImage + static_cast<std::size_t>(v));
  }
  return max_over_variants(sims);
}

ScoredVariant VectorIndex::score_image(const EmbeddingVector& query, std::size_t ordinal) const {
  if (query.dim() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query dim " + std::to_string(query.dim()) + " != index dim " + std::to_string(dim_));
  }
  if (ordinal >= size()) throw Error(ErrorCode::kInvalidArgument, "ordinal out of range");
  return score_block(query.values(), l2_norm(query.values()), ordinal);
}

void VectorIndex::check_query(const EmbeddingVector& query, std::size_t k) const {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (empty()) throw Error(ErrorCode::kEmptyIndex, "index has no images");
  if (query.dim() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query dim " + std::to_string(query.dim()) + " != index dim " + std::to_string(dim_));
  }
}

RankedResult VectorIndex::search(const EmbeddingVector& query, std::size_t k,
                                 std::size_t threads) const {
  check_query(query, k);
  const auto q = query.values();
  const double q_norm = l2_norm(q);
  std::vector<Candidate> candidates(size());

  auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const ScoredVariant s = score_block(q, q_norm, c);
      candidates[c] = {s.score, c, s.variant_id};
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, size() / 256));
  if (threads == 1) {
    score_range(0, size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t step = (size() + threads - 1) / threads;
    for (std::size_t begin = 0; begin < size(); begin += step) {
      pool.emplace_back(score_range, begin, std::min(size(), begin + step));
    }
  }

  const std::size_t top = std::min(k, size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(top),
                    candidates.end(), ranks_before);
  RankedResult result;
  result.reserve(top);
  for (std::size_t i = 0; i < top; ++i) {
    const auto& c = candidates[i];
    result.push_back({ids_[c.ordinal], c.ordinal, c.score, c.variant_id});
  }
  return result;
}

std::vector<VariantHit> VectorIndex::search_variants(const EmbeddingVector& query,
                                                     std::size_t k) const {
  check_query(query, k);
  const auto q = query.values();
  const double q_norm = l2_norm(q);
  std::vector<Candidate> candidates;
  candidates.reserve(entry_count());
  for (std::size_t e = 0; e < entry_count(); ++e) {
    candidates.push_back({similarity(q, q_norm, e), e / kVariantsPerImage,
                          static_cast<int>(e % kVariantsPerImage) + 1});
  }
  const std::size_t top = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(top),
                    candidates.end(), ranks_before);
  std::vector<VariantHit> hits;
  hits.reserve(top);
  for (std::size_t i = 0; i < top; ++i) {
    hits.push_back({candidates[i].ordinal, candidates[i].variant_id, candidates[i].score});
  }
  return hits;
}

VectorIndex build_index(const Corpus& corpus, EmbeddingBackend& backend, std::size_t permits) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "corpus has no images");
  const std::size_t dim = backend.descriptor().dim;

  std::vector<std::string> ids;
  std::vector<std::string> texts;
  ids.reserve(corpus.size());
  texts.reserve(corpus.size() * kVariantsPerImage);
  for (const auto& entry : corpus.records) {
    ids.push_back(entry.image.image_id);
    for (int v = 1; v <= kVariantsPerImage; ++v) {
      const CaptionVariant* variant = entry.captions.find(v);
      if (variant == nullptr) {
        throw Error(ErrorCode::kMalformedRecord,
                    "image '" + entry.image.image_id + "' lacks variant " + std::to_string(v));
      }
      texts.push_back(variant->text);
    }
  }

  // Embedding runs in slices so independent slices can proceed in parallel;
  // results are committed by position, so corpus order is preserved.
  std::vector<float> data(texts.size() * dim);
  auto embed_slice = [&](std::size_t begin, std::size_t end) {
    auto vectors = embed_batch(backend, std::span<const std::string>(texts).subspan(begin, end - begin));
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      const auto values = vectors[i].values();
      std::transform(values.begin(), values.end(), data.begin() + static_cast<std::ptrdiff_t>((begin + i) * dim),
                     [](double x) { return static_cast<float>(x); });
    }
  };
  permits = std::clamp<std::size_t>(permits, 1, texts.size());
  if (permits == 1) {
    embed_slice(0, texts.size());
  } else {
    const std::size_t step = (texts.size() + permits - 1) / permits;
    std::vector<std::exception_ptr> failures;
    std::vector<std::size_t> starts;
    for (std::size_t b = 0; b < texts.size(); b += step) starts.push_back(b);
    failures.resize(starts.size());
    {
      std::vector<std::jthread> pool;
      for (std::size_t s = 0; s < starts.size(); ++s) {
        pool.emplace_back([&, s] {
          const std::size_t begin = starts[s];
          try {
            embed_slice(begin, std::min(texts.size(), begin + step));
          } catch (...) {
            failures[s] = std::current_exception();
          }
        });
      }
    }
    for (std::size_t s = 0; s < starts.size(); ++s) {
      if (!failures[s]) continue;
      try {
        std::rethrow_exception(failures[s]);
      } catch (Error& e) {
        if (e.item_index()) e.with_index(*e.item_index() + starts[s]);
        throw;
      }
    }
  }

  auto index = VectorIndex::from_vectors(backend.descriptor().backend_id, dim, std::move(ids),
                                         std::move(data));
  index.set_provenance({{"corpus_sha256", corpus_fingerprint(corpus)},
                        {"backend_id", backend.descriptor().backend_id},
                        {"dim", dim},
                        {"images", index.size()},
                        {"tool_version", CAPSEARCH_VERSION}});
  return index;
}

std::vector<std::uint8_t> serialize_index(const VectorIndex& index) {
  ByteWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.u16(kIndexFormatVersion);
  w.u32(static_cast<std::uint32_t>(index.dim()));
  w.u32(static_cast<std::uint32_t>(index.size()));
  w.str(index.backend_id());
  const auto data = index.raw_vectors();
  const std::size_t block = kVariantsPerImage * index.dim();
  w.bytes.reserve(w.bytes.size() + data.size() * 4 + index.size() * 16 + 4);
  for (std::size_t i = 0; i < index.size(); ++i) {
    w.str(index.image_id(i));
    for (std::size_t j = 0; j < block; ++j) w.f32(data[i * block + j]);
  }
  w.u32(crc32(w.bytes));
  return std::move(w.bytes);
}

VectorIndex deserialize_index(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw Error(ErrorCode::kCorruptIndex, "bad magic bytes");
  }
  // magic + version + dim + count + backend length + crc
  if (bytes.size() < 4 + 2 + 4 + 4 + 4 + 4) {
    throw Error(ErrorCode::kCorruptIndex, "index file is truncated");
  }
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader crc_reader(bytes.last(4));
  if (crc32(body) != crc_reader.u32()) {
    throw Error(ErrorCode::kCorruptIndex, "checksum mismatch");
  }

  ByteReader r(body);
  r.u32();  // magic
  const std::uint16_t version = r.u16();
  if (version != kIndexFormatVersion) {
    throw Error(ErrorCode::kCorruptIndex, "unsupported index version " + std::to_string(version));
  }
  const std::uint32_t dim = r.u32();
  const std::uint32_t count = r.u32();
  if (dim == 0 || dim > kMaxDim) {
    throw Error(ErrorCode::kDimensionMismatch, "header declares dim " + std::to_string(dim));
  }
  std::string backend_id = r.str();
  const std::size_t block = kVariantsPerImage * static_cast<std::size_t>(dim);
  // Every image needs at least its id length and its vectors.
  if (static_cast<std::size_t>(count) * (4 + block * 4) > r.remaining()) {
    throw Error(ErrorCode::kDimensionMismatch, "header image count and dim exceed the body");
  }
  std::vector<std::string> ids;
  std::vector<float> data;
  ids.reserve(count);
  data.reserve(count * block);
  // The checksum held, so running out of bytes here means the header's
  // dim or count does not describe the body.
  try {
    for (std::uint32_t i = 0; i < count; ++i) {
      ids.push_back(r.str());
      for (std::size_t j = 0; j < block; ++j) data.push_back(r.f32());
    }
  } catch (const Error&) {
    throw Error(ErrorCode::kDimensionMismatch, "header dim and count disagree with the body");
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "trailing bytes after declared images");
  }
  return VectorIndex::from_vectors(std::move(backend_id), dim, std::move(ids), std::move(data));
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = serialize_index(index);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write index " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "index write failed " + path.string());
  }
  if (!index.provenance().is_null()) {
    std::ofstream meta(sidecar_path(path), std::ios::trunc);
    meta << index.provenance().dump(2) << '\n';
  }
}

VectorIndex load_index(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kFileNotFound, "index file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  auto index = deserialize_index(bytes);
  std::ifstream meta(sidecar_path(path));
  if (meta) {
    try {
      index.set_provenance(nlohmann::json::parse(meta));
    } catch (const nlohmann::json::exception&) {
      // unreadable sidecar: provenance stays empty
    }
  }
  return index;
}

}  // namespace capsearch
