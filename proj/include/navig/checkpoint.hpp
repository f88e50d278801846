// Copyright 2026 The Navigability Authors
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

#ifndef NAVIG_CHECKPOINT_HPP
#define NAVIG_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "navig/autodiff.hpp"

namespace navig {

inline constexpr char kCheckpointMagic[8] = {'N', 'A', 'V', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little endian): magic[8], u32 version, u32 flags (bit 0: optimizer
/// state), i64 step, u32 tensor count, then per tensor u32 name length, name,
/// u32 rows, u32 cols, f32 values [, f32 m, f32 v]; trailing u64 FNV-1a of all
/// preceding bytes.
std::string encode_checkpoint(const ad::ParamStore<float>& store, bool with_optimizer);
ad::ParamStore<float> decode_checkpoint(const std::string& bytes, bool* has_optimizer = nullptr);

void save_checkpoint(const std::filesystem::path& path, const ad::ParamStore<float>& store, bool with_optimizer);
ad::ParamStore<float> read_checkpoint(const std::filesystem::path& path, bool* has_optimizer = nullptr);

/// Copies every tensor of the file into the same-named parameter of `store`;
/// names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, ad::ParamStore<float>& store);

}  // namespace navig

#endif  // NAVIG_CHECKPOINT_HPP
