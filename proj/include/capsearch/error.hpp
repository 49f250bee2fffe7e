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

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace capsearch {

enum class ErrorCode {
  kInvalidArgument,
  kFileNotFound,
  kIo,
  kMalformedRecord,
  kDuplicateImageId,
  kEmptyText,
  kZeroVector,
  kDimensionMismatch,
  kBackendFailure,
  kAuthError,
  kRateLimited,
  kServiceError,
  kTimeout,
  kEmptyCaption,
  kUnknownImage,
  kEmptyCorpus,
  kEmptyIndex,
  kCorruptIndex,
  kBackendMismatch,
  kMissingCaptioner,
  kInconsistentGroundTruth,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the core library. The C API maps `code()` onto
// its status enum; `item_index()` carries the failing position for batch
// operations, `line()` the 1-based line for record parsers.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  std::optional<std::size_t> item_index() const noexcept { return index_; }
  Error& with_index(std::size_t index) {
    index_ = index;
    return *this;
  }

  std::optional<std::size_t> line() const noexcept { return line_; }
  Error& with_line(std::size_t line) {
    line_ = line;
    return *this;
  }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
  std::optional<std::size_t> line_;
};

}  // namespace capsearch
