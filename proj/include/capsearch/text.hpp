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

#include <string>
#include <string_view>
#include <vector>

namespace capsearch::text {

// Token characters are ASCII letters, ASCII digits and every byte >= 0x80
// (so UTF-8 sequences stay inside their word). Everything else separates.
// ASCII letters are lowercased; empty tokens never appear.
std::vector<std::string> tokenize(std::string_view text);

// Sentences end at '.', '!' or '?' followed by whitespace or end of text.
// Segments without any token are not counted.
std::vector<std::string_view> split_sentences(std::string_view text);

std::string_view trim(std::string_view s);

// Trim and collapse every whitespace run to a single space.
std::string normalize_whitespace(std::string_view s);

bool is_blank(std::string_view s);

}  // namespace capsearch::text
