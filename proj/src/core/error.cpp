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
#include "capsearch/error.hpp"

namespace capsearch {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kFileNotFound: return "FileNotFound";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kDuplicateImageId: return "DuplicateImageId";
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kBackendFailure: return "BackendFailure";
    case ErrorCode::kAuthError: return "AuthError";
    case ErrorCode::kRateLimited: return "RateLimited";
    case ErrorCode::kServiceError: return "ServiceError";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kEmptyCaption: return "EmptyCaption";
    case ErrorCode::kUnknownImage: return "UnknownImage";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kEmptyIndex: return "EmptyIndex";
    case ErrorCode::kCorruptIndex: return "CorruptIndex";
    case ErrorCode::kBackendMismatch: return "BackendMismatch";
    case ErrorCode::kMissingCaptioner: return "MissingCaptioner";
    case ErrorCode::kInconsistentGroundTruth: return "InconsistentGroundTruth";
  }
  return "Unknown";
}

}  // namespace capsearch
